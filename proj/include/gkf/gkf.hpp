#pragma once

#include "gkf/analytic_filter.hpp"
#include "gkf/experiment.hpp"
#include "gkf/gradient_filter.hpp"
#include "gkf/io.hpp"
#include "gkf/model.hpp"
#include "gkf/numerics.hpp"
#include "gkf/random.hpp"
#include "gkf/selftest.hpp"

namespace gkf {
inline constexpr const char* version = "0.1.0";
}
