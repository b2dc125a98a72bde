#pragma once

#include "rsma/amc.hpp"
#include "rsma/channel.hpp"
#include "rsma/cli.hpp"
#include "rsma/modem.hpp"
#include "rsma/polar.hpp"
#include "rsma/precoder.hpp"
#include "rsma/rng.hpp"
#include "rsma/sim.hpp"
#include "rsma/transceiver.hpp"
