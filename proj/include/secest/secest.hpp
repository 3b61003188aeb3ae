// Umbrella header.
#pragma once

#include "secest/combinatorics.hpp"
#include "secest/errors.hpp"
#include "secest/estimators.hpp"
#include "secest/experiment.hpp"
#include "secest/geometry.hpp"
#include "secest/harness.hpp"
#include "secest/inconsistency.hpp"
#include "secest/io.hpp"
#include "secest/model.hpp"
#include "secest/rates.hpp"
