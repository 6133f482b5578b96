#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "aniclip/document.hpp"
#include "aniclip/error.hpp"
#include "aniclip/render.hpp"

namespace aniclip {

/// 8-bit RGB, row-major.
inline std::vector<std::uint8_t> to_rgb8(const FrameBuffer& f) {
  std::vector<std::uint8_t> out(f.pixels.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<std::uint8_t>(std::lround(std::clamp(f.pixels[i], 0.0, 1.0) * 255.0));
  return out;
}

// PNG ------------------------------------------------------------------------

namespace png_detail {

struct File {
  std::FILE* f = nullptr;
  File(const std::filesystem::path& p, const char* mode) : f(std::fopen(p.string().c_str(), mode)) {}
  ~File() {
    if (f) std::fclose(f);
  }
};

[[noreturn]] inline void on_error(png_structp png, png_const_charp msg) {
  auto* where = static_cast<std::string*>(png_get_error_ptr(png));
  *where = msg;
  png_longjmp(png, 1);
}
inline void on_warning(png_structp, png_const_charp) {}

}  // namespace png_detail

/// Writes 8-bit RGB (channels = 3) or RGBA (channels = 4) rows.
inline void write_png(const std::filesystem::path& path, std::span<const std::uint8_t> data, int width, int height,
                      int channels) {
  if (data.size() != static_cast<std::size_t>(channels) * width * height)
    fail(ErrorKind::State, "PNG writer: buffer size does not match the image shape");
  png_detail::File file(path, "wb");
  if (!file.f) fail(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_detail::on_error, png_detail::on_warning);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    fail(ErrorKind::Io, "libpng initialization failed");
  }
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y)
    rows[y] = const_cast<png_bytep>(data.data() + static_cast<std::size_t>(channels) * width * y);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorKind::Io, "writing " + path.string() + ": " + err);
  }
  png_init_io(png, file.f);
  png_set_IHDR(png, info, width, height, 8, channels == 4 ? PNG_COLOR_TYPE_RGBA : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

inline void write_png(const std::filesystem::path& path, const FrameBuffer& frame) {
  write_png(path, to_rgb8(frame), frame.width, frame.height, 3);
}

inline void write_png(const std::filesystem::path& path, const RasterImage& img) {
  std::vector<std::uint8_t> data(img.pixels.size());
  for (std::size_t i = 0; i < data.size(); ++i)
    data[i] = static_cast<std::uint8_t>(std::lround(std::clamp(img.pixels[i], 0.0, 1.0) * 255.0));
  write_png(path, data, img.width, img.height, 4);
}

/// Any PNG colour type, returned as straight-alpha RGBA in [0, 1].
inline RasterImage read_png(const std::filesystem::path& path) {
  png_detail::File file(path, "rb");
  if (!file.f) fail(ErrorKind::Io, "cannot open " + path.string());
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, file.f) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    fail(ErrorKind::Parse, path.string() + " is not a PNG file");
  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_detail::on_error, png_detail::on_warning);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    fail(ErrorKind::Io, "libpng initialization failed");
  }
  std::vector<std::uint8_t> data;
  std::vector<png_bytep> rows;
  png_uint_32 w = 0, h = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorKind::Parse, "reading " + path.string() + ": " + err);
  }
  png_init_io(png, file.f);
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  w = png_get_image_width(png, info);
  h = png_get_image_height(png, info);
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_gray_to_rgb(png);
  png_set_add_alpha(png, 0xff, PNG_FILLER_AFTER);
  png_set_interlace_handling(png);
  png_read_update_info(png, info);
  data.resize(static_cast<std::size_t>(4) * w * h);
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = data.data() + static_cast<std::size_t>(4) * w * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  RasterImage img(static_cast<int>(w), static_cast<int>(h));
  for (std::size_t i = 0; i < data.size(); ++i) img.pixels[i] = data[i] / 255.0;
  return img;
}

// GIF ------------------------------------------------------------------------

struct GifOptions {
  double frame_delay = 1.0 / 12.0;  // seconds
  bool loop = true;
};

namespace gif_detail {

/// Fixed 3-3-2 bit palette.
inline std::uint8_t palette_index(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  const int ri = (r * 7 + 127) / 255, gi = (g * 7 + 127) / 255, bi = (b * 3 + 127) / 255;
  return static_cast<std::uint8_t>(ri << 5 | gi << 2 | bi);
}

inline std::array<std::uint8_t, 3> palette_color(int i) {
  return {static_cast<std::uint8_t>(((i >> 5) & 7) * 255 / 7), static_cast<std::uint8_t>(((i >> 2) & 7) * 255 / 7),
          static_cast<std::uint8_t>((i & 3) * 255 / 3)};
}

class BitWriter {
 public:
  void put(unsigned code, int width) {
    acc_ |= static_cast<std::uint32_t>(code) << nbits_;
    nbits_ += width;
    while (nbits_ >= 8) {
      bytes_.push_back(static_cast<std::uint8_t>(acc_ & 0xff));
      acc_ >>= 8;
      nbits_ -= 8;
    }
  }
  std::vector<std::uint8_t> finish() {
    if (nbits_ > 0) bytes_.push_back(static_cast<std::uint8_t>(acc_ & 0xff));
    acc_ = 0;
    nbits_ = 0;
    return std::move(bytes_);
  }

 private:
  std::vector<std::uint8_t> bytes_;
  std::uint32_t acc_ = 0;
  int nbits_ = 0;
};

/// Variable-width LZW with 8-bit roots, as used by GIF image data.
inline std::vector<std::uint8_t> lzw_encode(std::span<const std::uint8_t> indices) {
  constexpr unsigned kClear = 256, kEnd = 257;
  BitWriter out;
  std::map<std::pair<unsigned, std::uint8_t>, unsigned> dict;
  unsigned next = 258;
  int width = 9;
  out.put(kClear, width);
  if (indices.empty()) {
    out.put(kEnd, width);
    return out.finish();
  }
  unsigned prefix = indices[0];
  for (std::size_t i = 1; i < indices.size(); ++i) {
    const std::uint8_t k = indices[i];
    if (auto it = dict.find({prefix, k}); it != dict.end()) {
      prefix = it->second;
      continue;
    }
    out.put(prefix, width);
    if (next < 4096) {
      dict[{prefix, k}] = next++;
      if (next > (1u << width) && width < 12) ++width;
    } else {
      out.put(kClear, width);
      dict.clear();
      next = 258;
      width = 9;
    }
    prefix = k;
  }
  out.put(prefix, width);
  out.put(kEnd, width);
  return out.finish();
}

inline std::vector<std::uint8_t> lzw_decode(std::span<const std::uint8_t> data, int min_code_size, std::size_t expected) {
  const unsigned clear = 1u << min_code_size, end = clear + 1;
  std::vector<std::vector<std::uint8_t>> table;
  auto reset = [&] {
    table.assign(clear + 2, {});
    for (unsigned i = 0; i < clear; ++i) table[i] = {static_cast<std::uint8_t>(i)};
  };
  reset();
  int width = min_code_size + 1;
  std::vector<std::uint8_t> out;
  out.reserve(expected);
  std::uint32_t acc = 0;
  int nbits = 0;
  std::size_t pos = 0;
  int prev = -1;
  while (true) {
    while (nbits < width) {
      if (pos >= data.size()) fail(ErrorKind::Parse, "GIF image data ended without an end code");
      acc |= static_cast<std::uint32_t>(data[pos++]) << nbits;
      nbits += 8;
    }
    const unsigned code = acc & ((1u << width) - 1);
    acc >>= width;
    nbits -= width;
    if (code == clear) {
      reset();
      width = min_code_size + 1;
      prev = -1;
      continue;
    }
    if (code == end) break;
    std::vector<std::uint8_t> entry;
    if (code < table.size() && !(code > end && table[code].empty())) {
      entry = table[code];
    } else if (code == table.size() && prev >= 0) {
      entry = table[prev];
      entry.push_back(table[prev][0]);
    } else {
      fail(ErrorKind::Parse, "invalid GIF LZW code " + std::to_string(code));
    }
    out.insert(out.end(), entry.begin(), entry.end());
    if (prev >= 0 && table.size() < 4096) {
      auto added = table[prev];
      added.push_back(entry[0]);
      table.push_back(std::move(added));
      if (table.size() == (1u << width) && width < 12) ++width;
    }
    prev = static_cast<int>(code);
  }
  return out;
}

inline void put16(std::vector<std::uint8_t>& b, unsigned v) {
  b.push_back(static_cast<std::uint8_t>(v & 0xff));
  b.push_back(static_cast<std::uint8_t>(v >> 8 & 0xff));
}

}  // namespace gif_detail

/// Animated GIF89a with a global 3-3-2 palette.
inline std::vector<std::uint8_t> encode_gif(std::span<const FrameBuffer> frames, const GifOptions& opt = {}) {
  using namespace gif_detail;
  if (frames.empty()) fail(ErrorKind::Config, "GIF export needs at least one frame");
  const int w = frames[0].width, h = frames[0].height;
  if (w <= 0 || h <= 0 || w > 65535 || h > 65535) fail(ErrorKind::Config, "GIF frame size out of range");
  for (const auto& f : frames)
    if (f.width != w || f.height != h) fail(ErrorKind::Config, "GIF frames must share one size");
  if (!(opt.frame_delay >= 0)) fail(ErrorKind::Config, "GIF frame delay must be non-negative");
  const unsigned delay = static_cast<unsigned>(std::lround(opt.frame_delay * 100.0));

  std::vector<std::uint8_t> b{'G', 'I', 'F', '8', '9', 'a'};
  put16(b, w);
  put16(b, h);
  b.push_back(0xF7);  // global table, 8-bit colour resolution, 256 entries
  b.push_back(0);
  b.push_back(0);
  for (int i = 0; i < 256; ++i)
    for (std::uint8_t c : palette_color(i)) b.push_back(c);
  if (opt.loop) {
    const std::uint8_t app[] = {0x21, 0xFF, 0x0B, 'N', 'E', 'T', 'S', 'C', 'A', 'P', 'E', '2', '.', '0', 0x03, 0x01, 0x00, 0x00, 0x00};
    b.insert(b.end(), std::begin(app), std::end(app));
  }
  for (const auto& f : frames) {
    const auto rgb = to_rgb8(f);
    std::vector<std::uint8_t> idx(static_cast<std::size_t>(w) * h);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = palette_index(rgb[3 * i], rgb[3 * i + 1], rgb[3 * i + 2]);
    b.insert(b.end(), {0x21, 0xF9, 0x04, 0x00});
    put16(b, delay);
    b.insert(b.end(), {0x00, 0x00});
    b.push_back(0x2C);
    put16(b, 0);
    put16(b, 0);
    put16(b, w);
    put16(b, h);
    b.push_back(0);
    b.push_back(8);
    const auto data = lzw_encode(idx);
    for (std::size_t i = 0; i < data.size(); i += 255) {
      const std::size_t n = std::min<std::size_t>(255, data.size() - i);
      b.push_back(static_cast<std::uint8_t>(n));
      b.insert(b.end(), data.begin() + static_cast<std::ptrdiff_t>(i), data.begin() + static_cast<std::ptrdiff_t>(i + n));
    }
    b.push_back(0);
  }
  b.push_back(0x3B);
  return b;
}

struct DecodedGif {
  int width = 0, height = 0;
  bool loops = false;
  std::vector<std::vector<std::uint8_t>> frames;  // RGB8
  std::vector<unsigned> delays;                   // centiseconds
};

/// Reader for the subset encode_gif() produces (full-canvas frames, global or
/// local colour table, no interlacing).
inline DecodedGif decode_gif(std::span<const std::uint8_t> b) {
  using namespace gif_detail;
  std::size_t p = 0;
  auto need = [&](std::size_t n) {
    if (p + n > b.size()) fail(ErrorKind::Parse, "truncated GIF at byte " + std::to_string(p));
  };
  auto u16 = [&] {
    need(2);
    const unsigned v = b[p] | b[p + 1] << 8;
    p += 2;
    return v;
  };
  need(13);
  if (std::string(b.begin(), b.begin() + 6) != "GIF89a" && std::string(b.begin(), b.begin() + 6) != "GIF87a")
    fail(ErrorKind::Parse, "not a GIF file");
  p = 6;
  DecodedGif g;
  g.width = static_cast<int>(u16());
  g.height = static_cast<int>(u16());
  const std::uint8_t flags = b[p];
  p += 3;
  std::vector<std::uint8_t> global;
  if (flags & 0x80) {
    const std::size_t n = 3u << ((flags & 7) + 1);
    need(n);
    global.assign(b.begin() + static_cast<std::ptrdiff_t>(p), b.begin() + static_cast<std::ptrdiff_t>(p + n));
    p += n;
  }
  unsigned delay = 0;
  auto sub_blocks = [&] {
    std::vector<std::uint8_t> out;
    while (true) {
      need(1);
      const std::size_t n = b[p++];
      if (n == 0) break;
      need(n);
      out.insert(out.end(), b.begin() + static_cast<std::ptrdiff_t>(p), b.begin() + static_cast<std::ptrdiff_t>(p + n));
      p += n;
    }
    return out;
  };
  while (true) {
    need(1);
    const std::uint8_t tag = b[p++];
    if (tag == 0x3B) break;
    if (tag == 0x21) {
      need(1);
      const std::uint8_t label = b[p++];
      const auto body = sub_blocks();
      if (label == 0xF9 && body.size() >= 4) delay = body[1] | body[2] << 8;
      if (label == 0xFF && body.size() >= 11 && std::string(body.begin(), body.begin() + 11) == "NETSCAPE2.0") g.loops = true;
      continue;
    }
    if (tag != 0x2C) fail(ErrorKind::Parse, "unexpected GIF block 0x" + std::to_string(tag));
    u16();
    u16();
    const unsigned fw = u16(), fh = u16();
    need(1);
    const std::uint8_t lf = b[p++];
    if (lf & 0x40) fail(ErrorKind::Parse, "interlaced GIF frames are not supported");
    std::vector<std::uint8_t> table = global;
    if (lf & 0x80) {
      const std::size_t n = 3u << ((lf & 7) + 1);
      need(n);
      table.assign(b.begin() + static_cast<std::ptrdiff_t>(p), b.begin() + static_cast<std::ptrdiff_t>(p + n));
      p += n;
    }
    if (fw != static_cast<unsigned>(g.width) || fh != static_cast<unsigned>(g.height))
      fail(ErrorKind::Parse, "partial GIF frames are not supported");
    need(1);
    const int min_code = b[p++];
    const auto data = sub_blocks();
    const auto idx = lzw_decode(data, min_code, static_cast<std::size_t>(fw) * fh);
    if (idx.size() < static_cast<std::size_t>(fw) * fh) fail(ErrorKind::Parse, "GIF frame has too few pixels");
    std::vector<std::uint8_t> rgb(static_cast<std::size_t>(3) * fw * fh);
    for (std::size_t i = 0; i < static_cast<std::size_t>(fw) * fh; ++i) {
      if (3u * idx[i] + 2 >= table.size()) fail(ErrorKind::Parse, "GIF colour index outside the table");
      for (int c = 0; c < 3; ++c) rgb[3 * i + c] = table[3 * idx[i] + c];
    }
    g.frames.push_back(std::move(rgb));
    g.delays.push_back(delay);
  }
  return g;
}

inline void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::Io, "write failed: " + path.string());
}

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_gif(const std::filesystem::path& path, std::span<const FrameBuffer> frames, const GifOptions& opt = {}) {
  write_bytes(path, encode_gif(frames, opt));
}

/// Writes frame_000.png ... and animation.gif into `dir`; returns the paths.
inline std::vector<std::filesystem::path> export_frames(std::span<const FrameBuffer> frames,
                                                        const std::filesystem::path& dir, const GifOptions& opt = {}) {
  if (frames.empty()) fail(ErrorKind::Config, "nothing to export");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> written;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%03zu.png", t);
    write_png(dir / name, frames[t]);
    written.push_back(dir / name);
  }
  write_gif(dir / "animation.gif", frames, opt);
  written.push_back(dir / "animation.gif");
  return written;
}

}  // namespace aniclip
