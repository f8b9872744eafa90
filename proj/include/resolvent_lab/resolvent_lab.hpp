#pragma once

#include "resolvent_lab/rng.hpp"
#include "resolvent_lab/parallel.hpp"
#include "resolvent_lab/quadrature.hpp"
#include "resolvent_lab/model.hpp"
#include "resolvent_lab/level_curves.hpp"
#include "resolvent_lab/sampling.hpp"
#include "resolvent_lab/process.hpp"
#include "resolvent_lab/resolvent_mc.hpp"
#include "resolvent_lab/resolvent_grid.hpp"
#include "resolvent_lab/verify.hpp"
#include "resolvent_lab/config.hpp"
#include "resolvent_lab/io.hpp"
#include "resolvent_lab/cli.hpp"
