#pragma once

#include <stdexcept>
#include <string>

namespace aniclip {

/// Broad failure category; the CLI maps these onto process exit codes.
enum class ErrorKind {
  Config,    // invalid configuration or arguments
  Parse,     // malformed input document
  Rig,       // rigging / triangulation / binding failures
  Numeric,   // non-finite values, singular systems
  Provider,  // guidance provider failures
  Io,
  State,     // stale caches, mismatched passes, corrupt checkpoints
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Thrown by the SVG reader; `offset` is a byte offset into the path data
/// (or the document) where parsing failed.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(ErrorKind::Parse, what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace aniclip
