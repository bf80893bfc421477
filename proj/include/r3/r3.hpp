// Umbrella header.
#pragma once

#include "r3/action.hpp"
#include "r3/harness.hpp"
#include "r3/llm.hpp"
#include "r3/memory.hpp"
#include "r3/nn.hpp"
#include "r3/regulator.hpp"
#include "r3/rng.hpp"
#include "r3/ruminator.hpp"
#include "r3/runner.hpp"
#include "r3/scorer.hpp"
#include "r3/world.hpp"
