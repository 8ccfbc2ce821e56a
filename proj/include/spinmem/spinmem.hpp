#pragma once

#include "spinmem/analytics.hpp"
#include "spinmem/constants.hpp"
#include "spinmem/control.hpp"
#include "spinmem/fitting.hpp"
#include "spinmem/io.hpp"
#include "spinmem/linalg.hpp"
#include "spinmem/noise.hpp"
#include "spinmem/optim.hpp"
#include "spinmem/parallel.hpp"
#include "spinmem/pulse_shape.hpp"
#include "spinmem/rng.hpp"
#include "spinmem/sequences.hpp"
#include "spinmem/spin_model.hpp"
