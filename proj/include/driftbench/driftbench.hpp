#pragma once

#include "driftbench/active.hpp"
#include "driftbench/dataset.hpp"
#include "driftbench/dataset_io.hpp"
#include "driftbench/dedup.hpp"
#include "driftbench/errors.hpp"
#include "driftbench/gradcheck.hpp"
#include "driftbench/hpo.hpp"
#include "driftbench/losses.hpp"
#include "driftbench/metrics.hpp"
#include "driftbench/models.hpp"
#include "driftbench/nn.hpp"
#include "driftbench/rng.hpp"
#include "driftbench/search_space.hpp"
#include "driftbench/synth.hpp"
#include "driftbench/tensor.hpp"
#include "driftbench/util.hpp"

namespace driftbench {

inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace driftbench
