#pragma once

#include "mwm/builtins.hpp"
#include "mwm/core.hpp"
#include "mwm/expression.hpp"
#include "mwm/inference.hpp"
#include "mwm/measure.hpp"
#include "mwm/oracle.hpp"
#include "mwm/report.hpp"
#include "mwm/scenario.hpp"
