#pragma once

// Serial reference for the meta-gradient. Every quantity is recorded on a
// scalar tape: the inner score sum is differentiated symbolically
// (reverse-over-reverse) so the outer gradient flows through it. Slow, kept
// to check the batched kernels in meta.hpp.

#include <span>

#include "norml/diffgraph.hpp"
#include "norml/meta.hpp"

namespace norml::reference {

// theta_i built on the tape, for inspection.
PolicyParams adapted_for_batch(const MetaParams& params, Variant variant, const TaskBatch& batch);

MetaGradient task_gradient(const MetaParams& params, Variant variant, const TaskBatch& batch, const PpoConfig& ppo);

MetaGradient meta_gradient(const MetaParams& params, Variant variant, std::span<const TaskBatch> tasks,
                           const PpoConfig& ppo);

}  // namespace norml::reference
