#pragma once

#include "egflow/ac0.hpp"
#include "egflow/anderson.hpp"
#include "egflow/assembly.hpp"
#include "egflow/bench.hpp"
#include "egflow/common.hpp"
#include "egflow/fem.hpp"
#include "egflow/io.hpp"
#include "egflow/linear_solver.hpp"
#include "egflow/manufactured.hpp"
#include "egflow/mesh.hpp"
#include "egflow/problem.hpp"
#include "egflow/run.hpp"
#include "egflow/solvers.hpp"
