#pragma once

#include "cocgan/checkpoint.hpp"
#include "cocgan/cli.hpp"
#include "cocgan/cocblocks.hpp"
#include "cocgan/config.hpp"
#include "cocgan/data.hpp"
#include "cocgan/error.hpp"
#include "cocgan/gradcheck.hpp"
#include "cocgan/image_io.hpp"
#include "cocgan/losses.hpp"
#include "cocgan/metrics.hpp"
#include "cocgan/models.hpp"
#include "cocgan/module.hpp"
#include "cocgan/ops.hpp"
#include "cocgan/optim.hpp"
#include "cocgan/pointset.hpp"
#include "cocgan/random.hpp"
#include "cocgan/tensor.hpp"
#include "cocgan/training.hpp"
