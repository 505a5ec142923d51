#pragma once

#include "freeway/cell_vector.hpp"
#include "freeway/constants.hpp"
#include "freeway/controllers.hpp"
#include "freeway/demand.hpp"
#include "freeway/errors.hpp"
#include "freeway/lyapunov.hpp"
#include "freeway/model.hpp"
#include "freeway/properties.hpp"
#include "freeway/scenario.hpp"
#include "freeway/simulation.hpp"
