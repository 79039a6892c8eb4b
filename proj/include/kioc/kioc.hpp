#pragma once

#include "kioc/common.hpp"
#include "kioc/demo_gen.hpp"
#include "kioc/dynamics.hpp"
#include "kioc/harness.hpp"
#include "kioc/ioc.hpp"
#include "kioc/koopman.hpp"
#include "kioc/observables.hpp"
#include "kioc/report.hpp"
#include "kioc/trajectory_io.hpp"
