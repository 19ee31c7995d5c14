#include "dhcnet/losses.hpp"

#include "dhcnet/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace dhcnet {

Tensor cls_loss(const Tensor& logprobs, const std::vector<int>& labels) {
  return mean_all(neg(gather_rows(logprobs, labels)));
}

std::pair<double, double> confidence(const Tensor& logits, int label) {
  Tensor row = logits;
  if (row.rank() == 1) row.shape = {1, row.shape[0]};
  if (row.rank() != 2 || row.shape[0] != 1)
    throw std::invalid_argument("confidence: expected a single logit row");
  row.tape = nullptr;
  row.node = -1;
  Tensor lsm = log_softmax(row);
  if (label < 0 || label >= row.shape[1])
    throw std::out_of_range("confidence: label out of range");
  double logC = lsm.values[label];
  return {std::exp(logC), logC};
}

namespace {
// {N} vector of per-sample ground-truth log-confidences.
Tensor log_confidences(const HorEntry& e) {
  return gather_rows(log_softmax(e.logits), e.labels);
}
}  // namespace

Tensor hor_loss(const std::vector<HorEntry>& entries, OrderingMode mode,
                bool with_ordering) {
  if (entries.empty())
    throw std::invalid_argument("hor_loss: empty granularity list");
  for (const auto& e : entries)
    if (e.logits.shape[0] != entries[0].logits.shape[0])
      throw std::invalid_argument(
          "hor_loss: granularities disagree on batch size");
  std::vector<Tensor> logC;
  logC.reserve(entries.size());
  for (const auto& e : entries) logC.push_back(log_confidences(e));

  Tensor loss = mean_all(neg(logC[0]));
  for (std::size_t k = 1; k < entries.size(); ++k)
    loss = add(loss, mean_all(neg(logC[k])));

  if (with_ordering) {
    for (std::size_t i = 0; i + 1 < entries.size(); ++i)
      for (std::size_t j = i + 1; j < entries.size(); ++j) {
        Tensor d = sub(logC[i], logC[j]);
        if (mode == OrderingMode::hinge) d = relu(d);
        loss = add(loss, mean_all(d));
      }
  }
  return loss;
}

std::vector<double> hor_confidences(const std::vector<HorEntry>& entries) {
  std::vector<double> out;
  for (const auto& e : entries) {
    Tensor t = e.logits.detached();
    Tensor c = exp(gather_rows(log_softmax(t), e.labels));
    out.push_back(c.values.mean());
  }
  return out;
}

Tensor exp_loss(const Tensor& F_G, const Tensor& F_L) {
  if (F_G.shape != F_L.shape)
    throw std::invalid_argument("exp_loss: shape mismatch " +
                                shape_str(F_G.shape) + " vs " +
                                shape_str(F_L.shape));
  if (F_G.rank() != 4)
    throw std::invalid_argument("exp_loss: expected V x C x h x w");
  // per-view pooled difference, then the L2 norm per view
  Tensor d = sub(reduce(ReduceKind::mean, F_G, {2, 3}),
                 reduce(ReduceKind::mean, F_L, {2, 3}));  // V x C
  Tensor sq = reduce(ReduceKind::sum, mul(d, d), {1});    // V
  return sum_all(sqrt(sq));
}

std::pair<Tensor, LossReport> total_loss(const Tensor& cls, const Tensor& hor,
                                         const Tensor& exp,
                                         const LossWeights& weights) {
  auto check = [](const Tensor& t, const char* name) {
    if (t.size() != 1 || !std::isfinite(t.values[0]))
      throw std::runtime_error(std::string("total_loss: non-finite ") + name +
                               " component");
  };
  check(cls, "cls");
  check(hor, "hor");
  check(exp, "exp");
  Tensor total = add(add(mul_scalar(cls, weights.alpha),
                         mul_scalar(hor, weights.beta)),
                     mul_scalar(exp, weights.gamma));
  LossReport r;
  r.cls = cls.values[0];
  r.hor = hor.values[0];
  r.exp = exp.values[0];
  r.total = total.values[0];
  return {total, r};
}

}  // namespace dhcnet
