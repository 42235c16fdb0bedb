#pragma once

// Umbrella header: the whole library.

#include "minigrid/ajo.hpp"
#include "minigrid/ajo_codec.hpp"
#include "minigrid/base64.hpp"
#include "minigrid/broker.hpp"
#include "minigrid/client.hpp"
#include "minigrid/config.hpp"
#include "minigrid/engine.hpp"
#include "minigrid/errors.hpp"
#include "minigrid/framing.hpp"
#include "minigrid/gateway.hpp"
#include "minigrid/net.hpp"
#include "minigrid/outcome.hpp"
#include "minigrid/plan.hpp"
#include "minigrid/protocol.hpp"
#include "minigrid/subprocess.hpp"
#include "minigrid/tsi.hpp"
#include "minigrid/uspace.hpp"
#include "minigrid/vsite.hpp"
