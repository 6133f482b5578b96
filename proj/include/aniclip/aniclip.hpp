#pragma once

#include "aniclip/error.hpp"
#include "aniclip/geometry.hpp"
#include "aniclip/document.hpp"
#include "aniclip/svg.hpp"
#include "aniclip/contour.hpp"
#include "aniclip/skeleton.hpp"
#include "aniclip/triangulate.hpp"
#include "aniclip/binding.hpp"
#include "aniclip/arap.hpp"
#include "aniclip/trajectory.hpp"
#include "aniclip/render.hpp"
#include "aniclip/image_io.hpp"
#include "aniclip/guidance.hpp"
#include "aniclip/remote.hpp"
#include "aniclip/rig.hpp"
#include "aniclip/animator.hpp"
#include "aniclip/optimize.hpp"
#include "aniclip/metrics.hpp"
#include "aniclip/config.hpp"
#include "aniclip/artifacts.hpp"
