#pragma once

#include "dhcnet/nn.hpp"
#include "dhcnet/rng.hpp"
#include "dhcnet/tensor.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace dhcnet {

inline constexpr int kNumStages = 4;

struct BackboneConfig {
  int input_size = 64;
  std::vector<int> stage_channels = {16, 32, 64, 128};
  int blocks_per_stage = 2;
  int num_classes = 20;
  std::uint64_t seed = 0;

  void validate() const;
  // Each stage halves the spatial extent.
  int total_stride() const { return 1 << kNumStages; }
  int feature_size() const { return input_size / total_stride(); }
};

// Plain stride-2 conv/relu pyramid with a lightweight linear head per
// stage. Stages 1..4 halve the spatial extent; heads are used only in
// training except for the final one, which is the recognition head.
struct StagedBackbone {
  struct ConvBlock {
    Tensor weight;  // out x in x 3 x 3
    Tensor bias;    // out
    int stride;
  };
  struct Head {
    Tensor weight;  // channels x num_classes
    Tensor bias;    // num_classes
  };

  BackboneConfig config;
  std::vector<std::vector<ConvBlock>> stages;  // [kNumStages][blocks_per_stage]
  std::vector<Head> heads;                     // one per stage

  // Instrumentation: evaluate() must only ever run full forwards and the
  // final head.
  struct Counters {
    long full_forwards = 0;
    long truncated_forwards = 0;  // last_stage < L only
    long head_calls[kNumStages] = {0, 0, 0, 0};
    void reset() { *this = Counters{}; }
  };
  mutable Counters counters;

  static StagedBackbone init(const BackboneConfig& config);

  // Deterministic enumeration order shared by optimizer and checkpoint.
  std::vector<std::pair<std::string, Tensor*>> named_params();
  std::vector<std::pair<std::string, const Tensor*>> named_params() const;
  long param_count() const;
};

// A backbone bound to a tape for one training step. Binding with a null
// tape gives a detached (inference / frozen) view; parameters are
// attached as leaves exactly once, so gradients accumulate across all
// forwards recorded on the same tape.
class BoundBackbone {
 public:
  BoundBackbone(const StagedBackbone& model, Tape* tape);

  Tensor forward_full(const Tensor& x) const;
  Tensor forward_truncated(const Tensor& x, int last_stage) const;
  // Runs stages first..last (1-based, inclusive) on a feature map that
  // stage first-1 produced.
  Tensor forward_stages(const Tensor& x, int first_stage, int last_stage) const;
  // logits = linear(global_avg_pool(feature)) through the head of the
  // given 1-based stage.
  Tensor head_logits(int stage_index, const Tensor& feature) const;

  // Attached parameter leaves, aligned with StagedBackbone::named_params.
  const std::vector<Tensor>& params() const { return params_; }
  const StagedBackbone& model() const { return *model_; }

 private:
  const StagedBackbone* model_;
  std::vector<Tensor> params_;
  // indices into params_ per stage: blocks then head
  std::vector<std::vector<int>> block_idx_;  // [stage][block] -> weight idx (bias = +1)
  std::vector<int> head_idx_;                // [stage] -> weight idx (bias = +1)
};

}  // namespace dhcnet
