#pragma once

#include "dhcnet/tensor.hpp"

#include <utility>
#include <vector>

namespace dhcnet {

struct LossWeights {
  double alpha = 2.0;
  double beta = 1.0;
  double gamma = 0.6;
};

enum class OrderingMode { hinge, raw };

struct LossReport {
  double cls = 0.0;
  double hor = 0.0;
  double exp = 0.0;
  double total = 0.0;
  std::vector<double> confidences;  // per granularity, batch-mean C(F_k)
};

// Batch mean of -logprob[label].
Tensor cls_loss(const Tensor& logprobs, const std::vector<int>& labels);

// (C, logC) of the ground-truth class; logC goes through log_softmax,
// never log of a softmax value.
std::pair<double, double> confidence(const Tensor& logits, int label);

// One granularity level of the hierarchical regularizer: logits for a
// batch plus its labels. Entries must be ordered by ascending k.
struct HorEntry {
  Tensor logits;  // N x K
  std::vector<int> labels;
};

// Sum of per-granularity cross-entropies plus the confidence ordering
// term sum_{i<j} pen(logC_i - logC_j), batch-averaged. pen is
// max(0, d) in hinge mode and d in raw mode. `with_ordering` = false
// drops the ordering term (the plain-CE ablation).
Tensor hor_loss(const std::vector<HorEntry>& entries, OrderingMode mode,
                bool with_ordering = true);

// Per-granularity batch-mean ground-truth confidences, for reporting.
std::vector<double> hor_confidences(const std::vector<HorEntry>& entries);

// sum_{i=1..4} || gap(F_G^i) - gap(F_L^i) ||_2  (norm, not squared).
Tensor exp_loss(const Tensor& F_G, const Tensor& F_L);

// alpha*cls + beta*hor + gamma*exp on the same arithmetic path that
// fills the report.
std::pair<Tensor, LossReport> total_loss(const Tensor& cls, const Tensor& hor,
                                         const Tensor& exp,
                                         const LossWeights& weights);

}  // namespace dhcnet
