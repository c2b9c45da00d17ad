#pragma once

#include "ensloss/calibration.hpp"
#include "ensloss/ensemble_returns.hpp"
#include "ensloss/error.hpp"
#include "ensloss/io.hpp"
#include "ensloss/montecarlo.hpp"
#include "ensloss/numerics/adaptive.hpp"
#include "ensloss/numerics/eigen.hpp"
#include "ensloss/numerics/quadrature.hpp"
#include "ensloss/numerics/roots.hpp"
#include "ensloss/numerics/special.hpp"
#include "ensloss/portfolio_loss.hpp"
