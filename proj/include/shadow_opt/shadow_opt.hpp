#pragma once

#include "dynamics.hpp"
#include "error.hpp"
#include "harness.hpp"
#include "landscape.hpp"
#include "linalg.hpp"
#include "shadowing.hpp"
