#pragma once

// Umbrella header for the separable nonlinear least-squares toolkit.

#include "sepfit/types.hpp"
#include "sepfit/model.hpp"
#include "sepfit/registry.hpp"
#include "sepfit/rng.hpp"
#include "sepfit/linear_solver.hpp"
#include "sepfit/shortcut.hpp"
#include "sepfit/optimizer.hpp"
#include "sepfit/covariance.hpp"
#include "sepfit/multifile.hpp"
#include "sepfit/bench.hpp"
#include "sepfit/io.hpp"

namespace sepfit {
inline constexpr const char* kVersion = "1.0.0";
}
