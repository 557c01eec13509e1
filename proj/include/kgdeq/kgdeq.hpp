#pragma once

// Umbrella header: the whole library.

#include "kgdeq/bundle.hpp"
#include "kgdeq/checkpoint.hpp"
#include "kgdeq/common.hpp"
#include "kgdeq/distance.hpp"
#include "kgdeq/encoder.hpp"
#include "kgdeq/eval.hpp"
#include "kgdeq/fd2.hpp"
#include "kgdeq/graph.hpp"
#include "kgdeq/io.hpp"
#include "kgdeq/matrix.hpp"
#include "kgdeq/mc.hpp"
#include "kgdeq/positional.hpp"
#include "kgdeq/rng.hpp"
#include "kgdeq/sampling.hpp"
#include "kgdeq/split.hpp"
#include "kgdeq/training.hpp"
#include "kgdeq/uqer.hpp"
#include "kgdeq/verify.hpp"
