#pragma once

#include "posi/constants.hpp"
#include "posi/design.hpp"
#include "posi/design_io.hpp"
#include "posi/error.hpp"
#include "posi/inference.hpp"
#include "posi/numerics/distributions.hpp"
#include "posi/numerics/rng.hpp"
#include "posi/numerics/root.hpp"
#include "posi/numerics/special.hpp"
#include "posi/numerics/sphere.hpp"
#include "posi/parallel.hpp"
#include "posi/selectors.hpp"
#include "posi/simharness.hpp"
