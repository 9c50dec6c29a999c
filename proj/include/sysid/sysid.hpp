#pragma once

#include <sysid/algebra.hpp>
#include <sysid/coefficients.hpp>
#include <sysid/core.hpp>
#include <sysid/ho_kalman.hpp>
#include <sysid/lds.hpp>
#include <sysid/lowerbound.hpp>
#include <sysid/markov.hpp>
#include <sysid/parallel.hpp>
#include <sysid/pipeline.hpp>
#include <sysid/random.hpp>
#include <sysid/stabilizer.hpp>
