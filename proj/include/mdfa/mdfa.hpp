#pragma once

#include "mdfa/asymptotics.hpp"
#include "mdfa/estimator.hpp"
#include "mdfa/io.hpp"
#include "mdfa/linalg.hpp"
#include "mdfa/model.hpp"
#include "mdfa/population.hpp"
#include "mdfa/random.hpp"
#include "mdfa/report.hpp"
#include "mdfa/simulation.hpp"
#include "mdfa/threadpool.hpp"
#include "mdfa/types.hpp"
