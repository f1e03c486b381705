#pragma once

#include "sglpanel/errors.hpp"
#include "sglpanel/dictionary.hpp"
#include "sglpanel/design.hpp"
#include "sglpanel/solver.hpp"
#include "sglpanel/moments.hpp"
#include "sglpanel/estimators.hpp"
#include "sglpanel/inference.hpp"
#include "sglpanel/simulate.hpp"
#include "sglpanel/io.hpp"
#include "sglpanel/config.hpp"
