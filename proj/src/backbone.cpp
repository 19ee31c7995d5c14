#include "dhcnet/backbone.hpp"

#include <cmath>
#include <stdexcept>

namespace dhcnet {

void BackboneConfig::validate() const {
  if (static_cast<int>(stage_channels.size()) != kNumStages)
    throw std::invalid_argument("BackboneConfig: exactly " +
                                std::to_string(kNumStages) +
                                " stage channel counts required");
  for (int c : stage_channels)
    if (c < 1) throw std::invalid_argument("BackboneConfig: channels < 1");
  if (blocks_per_stage < 1)
    throw std::invalid_argument("BackboneConfig: blocks_per_stage < 1");
  if (num_classes < 2)
    throw std::invalid_argument("BackboneConfig: num_classes < 2");
  if (input_size % total_stride() != 0)
    throw std::invalid_argument("BackboneConfig: input_size " +
                                std::to_string(input_size) +
                                " not divisible by " +
                                std::to_string(total_stride()));
}

namespace {
// Uniform with the relu-aware fan-in bound; keeps the activation scale
// roughly constant through the stages so deep stacks don't fade out.
Tensor uniform_init(const Shape& shape, int fan_in, Rng& rng) {
  double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  Tensor t = Tensor::zeros(shape);
  for (int i = 0; i < t.size(); ++i) t.values[i] = rng.uniform(-limit, limit);
  return t;
}
}  // namespace

StagedBackbone StagedBackbone::init(const BackboneConfig& config) {
  config.validate();
  Rng rng(config.seed);
  StagedBackbone m;
  m.config = config;
  int in_ch = 3;
  for (int s = 0; s < kNumStages; ++s) {
    int out_ch = config.stage_channels[s];
    std::vector<ConvBlock> blocks;
    for (int b = 0; b < config.blocks_per_stage; ++b) {
      int ic = b == 0 ? in_ch : out_ch;
      ConvBlock blk;
      blk.weight = uniform_init({out_ch, ic, 3, 3}, ic * 9, rng);
      blk.bias = Tensor::zeros({out_ch});
      blk.stride = b == 0 ? 2 : 1;
      blocks.push_back(std::move(blk));
    }
    m.stages.push_back(std::move(blocks));
    Head h;
    h.weight = uniform_init({out_ch, config.num_classes}, out_ch, rng);
    h.bias = Tensor::zeros({config.num_classes});
    m.heads.push_back(std::move(h));
    in_ch = out_ch;
  }
  return m;
}

std::vector<std::pair<std::string, Tensor*>> StagedBackbone::named_params() {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (int s = 0; s < kNumStages; ++s) {
    for (int b = 0; b < static_cast<int>(stages[s].size()); ++b) {
      std::string base =
          "stage" + std::to_string(s + 1) + ".block" + std::to_string(b + 1);
      out.emplace_back(base + ".weight", &stages[s][b].weight);
      out.emplace_back(base + ".bias", &stages[s][b].bias);
    }
    std::string base = "head" + std::to_string(s + 1);
    out.emplace_back(base + ".weight", &heads[s].weight);
    out.emplace_back(base + ".bias", &heads[s].bias);
  }
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> StagedBackbone::named_params()
    const {
  auto mut = const_cast<StagedBackbone*>(this)->named_params();
  std::vector<std::pair<std::string, const Tensor*>> out;
  out.reserve(mut.size());
  for (auto& [n, t] : mut) out.emplace_back(n, t);
  return out;
}

long StagedBackbone::param_count() const {
  long n = 0;
  for (auto& [name, t] : named_params()) n += t->size();
  return n;
}

BoundBackbone::BoundBackbone(const StagedBackbone& model, Tape* tape)
    : model_(&model) {
  auto named = model.named_params();
  params_.reserve(named.size());
  int idx = 0;
  block_idx_.resize(kNumStages);
  head_idx_.resize(kNumStages);
  for (int s = 0; s < kNumStages; ++s) {
    for (std::size_t b = 0; b < model.stages[s].size(); ++b) {
      block_idx_[s].push_back(idx);
      idx += 2;
    }
    head_idx_[s] = idx;
    idx += 2;
  }
  for (auto& [name, t] : named)
    params_.push_back(tape ? make_leaf(*tape, *t) : t->detached());
}

Tensor BoundBackbone::forward_stages(const Tensor& x, int first_stage,
                                     int last_stage) const {
  if (first_stage < 1 || last_stage > kNumStages || first_stage > last_stage)
    throw std::invalid_argument("forward_stages: stage range [" +
                                std::to_string(first_stage) + "," +
                                std::to_string(last_stage) + "] out of [1," +
                                std::to_string(kNumStages) + "]");
  Tensor h = x;
  for (int s = first_stage - 1; s < last_stage; ++s) {
    for (std::size_t b = 0; b < model_->stages[s].size(); ++b) {
      ConvParams p;
      p.weight = params_[block_idx_[s][b]];
      p.bias = params_[block_idx_[s][b] + 1];
      p.stride = model_->stages[s][b].stride;
      p.padding = 1;
      h = relu(conv2d(h, p));
    }
  }
  return h;
}

Tensor BoundBackbone::forward_full(const Tensor& x) const {
  ++model_->counters.full_forwards;
  return forward_stages(x, 1, kNumStages);
}

Tensor BoundBackbone::forward_truncated(const Tensor& x, int last_stage) const {
  if (last_stage < 1 || last_stage > kNumStages)
    throw std::invalid_argument("forward_truncated: last_stage " +
                                std::to_string(last_stage) + " out of [1," +
                                std::to_string(kNumStages) + "]");
  if (last_stage < kNumStages)
    ++model_->counters.truncated_forwards;
  else
    ++model_->counters.full_forwards;
  return forward_stages(x, 1, last_stage);
}

Tensor BoundBackbone::head_logits(int stage_index, const Tensor& feature) const {
  if (stage_index < 1 || stage_index > kNumStages)
    throw std::invalid_argument("head_logits: bad stage index");
  if (feature.rank() != 4)
    throw std::invalid_argument("head_logits: feature must be NCHW");
  int want = model_->config.stage_channels[stage_index - 1];
  if (feature.shape[1] != want)
    throw std::invalid_argument(
        "head_logits: feature width " + std::to_string(feature.shape[1]) +
        " does not match stage " + std::to_string(stage_index) + " width " +
        std::to_string(want));
  ++model_->counters.head_calls[stage_index - 1];
  Tensor pooled = global_avg_pool(feature);  // N x C
  const Tensor& w = params_[head_idx_[stage_index - 1]];
  const Tensor& b = params_[head_idx_[stage_index - 1] + 1];
  return add(matmul(pooled, w), b);
}

}  // namespace dhcnet
