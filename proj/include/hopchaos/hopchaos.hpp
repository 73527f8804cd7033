#pragma once

#include "hopchaos/disorder.hpp"
#include "hopchaos/gibbs_exact.hpp"
#include "hopchaos/hs_mixture.hpp"
#include "hopchaos/marginal_stats.hpp"
#include "hopchaos/parallel.hpp"
#include "hopchaos/quadform.hpp"
#include "hopchaos/report.hpp"
#include "hopchaos/rng.hpp"
#include "hopchaos/scalar.hpp"
#include "hopchaos/sweep.hpp"
