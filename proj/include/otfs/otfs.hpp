#pragma once

#include "channel.hpp"
#include "coding.hpp"
#include "detectors.hpp"
#include "fft.hpp"
#include "harness.hpp"
#include "io.hpp"
#include "modem.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "state_evolution.hpp"
#include "turbo.hpp"
#include "types.hpp"
