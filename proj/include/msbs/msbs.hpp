#pragma once

#include "msbs/csv.hpp"
#include "msbs/data_design.hpp"
#include "msbs/error.hpp"
#include "msbs/inference.hpp"
#include "msbs/likelihood.hpp"
#include "msbs/priors.hpp"
#include "msbs/random.hpp"
#include "msbs/samplers.hpp"
#include "msbs/simulation.hpp"

namespace msbs {

inline constexpr const char* version = "1.0.0";

}  // namespace msbs
