#pragma once

#include "prstokes/assembly.hpp"
#include "prstokes/errors.hpp"
#include "prstokes/experiments.hpp"
#include "prstokes/geometry.hpp"
#include "prstokes/mesh.hpp"
#include "prstokes/nfunction.hpp"
#include "prstokes/quadrature.hpp"
#include "prstokes/smoother.hpp"
#include "prstokes/solver.hpp"
#include "prstokes/spaces.hpp"
