#pragma once

#include "kappasim/campaign.hpp"
#include "kappasim/errors.hpp"
#include "kappasim/io.hpp"
#include "kappasim/optics.hpp"
#include "kappasim/rng.hpp"
#include "kappasim/sorkin.hpp"
#include "kappasim/sources.hpp"
#include "kappasim/spad.hpp"
#include "kappasim/stats.hpp"
#include "kappasim/version.hpp"
