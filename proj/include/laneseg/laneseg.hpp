#pragma once

#include "laneseg/adam.hpp"
#include "laneseg/checkpoint.hpp"
#include "laneseg/cli.hpp"
#include "laneseg/client.hpp"
#include "laneseg/config.hpp"
#include "laneseg/datapipe.hpp"
#include "laneseg/errors.hpp"
#include "laneseg/image.hpp"
#include "laneseg/init.hpp"
#include "laneseg/layers.hpp"
#include "laneseg/loss.hpp"
#include "laneseg/metrics.hpp"
#include "laneseg/network.hpp"
#include "laneseg/rng.hpp"
#include "laneseg/server.hpp"
#include "laneseg/socket.hpp"
#include "laneseg/tensor.hpp"
#include "laneseg/train.hpp"
#include "laneseg/wire.hpp"
