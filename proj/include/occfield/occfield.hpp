// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "occfield/config.hpp"
#include "occfield/errors.hpp"
#include "occfield/evalio.hpp"
#include "occfield/field.hpp"
#include "occfield/geometry.hpp"
#include "occfield/gradients.hpp"
#include "occfield/losses.hpp"
#include "occfield/raypool.hpp"
#include "occfield/renderer.hpp"
#include "occfield/rng.hpp"
#include "occfield/synthworld.hpp"
#include "occfield/trainer.hpp"
