#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dhcnet/losses.hpp"
#include "dhcnet/nn.hpp"
#include "dhcnet/rng.hpp"

#include <cmath>

using namespace dhcnet;

namespace {
Tensor rand_t(const Shape& s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::zeros(s);
  for (int i = 0; i < t.size(); ++i) t.values[i] = rng.uniform(lo, hi);
  return t;
}
}  // namespace

TEST_CASE("cross entropy equals mean negative log probability of the label") {
  Tensor logits = Tensor::from({2, 3}, {2.0, 1.0, 0.5, -1.0, 0.0, 3.0});
  Tensor lp = log_softmax(logits);
  Tensor l = cls_loss(lp, {0, 2});
  double expected = -(lp.at({0, 0}) + lp.at({1, 2})) / 2.0;
  CHECK(l.scalar() == doctest::Approx(expected));
  CHECK_THROWS(cls_loss(lp, {0}));      // label count mismatch
  CHECK_THROWS(cls_loss(lp, {0, 3}));   // label out of range
}

TEST_CASE("confidence is the softmax probability of the true class") {
  Tensor logits = Tensor::from({1, 3}, {1.0, 2.0, 3.0});
  auto [c, logc] = confidence(logits, 2);
  double denom = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  CHECK(c == doctest::Approx(std::exp(3.0) / denom));
  CHECK(logc == doctest::Approx(std::log(c)));
}

TEST_CASE("confidence stays finite for extreme logits") {
  Tensor logits = Tensor::from({1, 2}, {-2000.0, 2000.0});
  auto [c, logc] = confidence(logits, 0);
  CHECK(std::isfinite(logc));
  CHECK(logc < -1000.0);
  CHECK(c >= 0.0);
}

TEST_CASE("raw ordering on the worked confidence triple") {
  // three granularities collapsing to single known confidences
  // C = (0.2, 0.3, 0.5): raw ordering term
  // = (ln.2-ln.3)+(ln.2-ln.5)+(ln.3-ln.5) = -1.8326 (4 dp)
  auto make_entry = [](double conf) {
    // 2-class logits with p(true)=conf for one sample, label 0
    double l0 = std::log(conf), l1 = std::log(1.0 - conf);
    return HorEntry{Tensor::from({1, 2}, {l0, l1}), {0}};
  };
  std::vector<HorEntry> entries = {make_entry(0.2), make_entry(0.3),
                                   make_entry(0.5)};
  Tensor l = hor_loss(entries, OrderingMode::raw);
  double ce = -(std::log(0.2) + std::log(0.3) + std::log(0.5));
  double pen = (std::log(0.2) - std::log(0.3)) +
               (std::log(0.2) - std::log(0.5)) +
               (std::log(0.3) - std::log(0.5));
  CHECK(pen == doctest::Approx(-1.8326).epsilon(1e-3));
  CHECK(l.scalar() == doctest::Approx(ce + pen).epsilon(1e-9));
  // the ordering term alone: raw total minus the plain CE part
  double ce_only = hor_loss(entries, OrderingMode::raw, false).scalar();
  CHECK(l.scalar() - ce_only == doctest::Approx(-1.8326).epsilon(1e-3));

  auto confs = hor_confidences(entries);
  REQUIRE(confs.size() == 3);
  CHECK(confs[0] == doctest::Approx(0.2));
  CHECK(confs[2] == doctest::Approx(0.5));
}

TEST_CASE("hinge ordering only penalizes inverted confidence pairs") {
  auto make_entry = [](double conf) {
    double l0 = std::log(conf), l1 = std::log(1.0 - conf);
    return HorEntry{Tensor::from({1, 2}, {l0, l1}), {0}};
  };
  // already well ordered: coarse (first) less confident than fine (last)
  std::vector<HorEntry> ordered = {make_entry(0.2), make_entry(0.3),
                                   make_entry(0.5)};
  double ce = -(std::log(0.2) + std::log(0.3) + std::log(0.5));
  CHECK(hor_loss(ordered, OrderingMode::hinge).scalar() ==
        doctest::Approx(ce));

  // inverted: hinge kicks in with the positive part of the log gap
  std::vector<HorEntry> inverted = {make_entry(0.5), make_entry(0.2),
                                    make_entry(0.3)};
  double pen = (std::log(0.5) - std::log(0.2)) +
               (std::log(0.5) - std::log(0.3));
  CHECK(hor_loss(inverted, OrderingMode::hinge).scalar() ==
        doctest::Approx(ce + pen));

  // ce-only mode drops the ordering term entirely
  CHECK(hor_loss(inverted, OrderingMode::hinge, false).scalar() ==
        doctest::Approx(ce));
}

TEST_CASE("hor_loss validates its inputs") {
  CHECK_THROWS(hor_loss({}, OrderingMode::hinge));
  HorEntry a{Tensor::from({1, 2}, {0.0, 1.0}), {0}};
  HorEntry b{Tensor::from({2, 2}, {0.0, 1.0, 1.0, 0.0}), {0, 1}};
  CHECK_THROWS(hor_loss({a, b}, OrderingMode::hinge));  // batch mismatch
}

TEST_CASE("alignment loss is the summed L2 distance of pooled view features") {
  // 4 views x 2 channels x 1 x 1, hand-computable
  Tensor fg = Tensor::from({4, 2, 1, 1}, {1, 0, 0, 1, 2, 2, 1, 1});
  Tensor fl = Tensor::from({4, 2, 1, 1}, {0, 0, 0, 1, 2, 0, 1, 1});
  // per-view pooled diffs: (1,0), (0,0), (0,2), (0,0) -> norms 1,0,2,0
  Tensor l = exp_loss(fg, fl);
  CHECK(l.scalar() == doctest::Approx(3.0));
  CHECK_THROWS(exp_loss(fg, Tensor::zeros({4, 3, 1, 1})));
  CHECK_THROWS(exp_loss(Tensor::zeros({3, 2, 1, 1}), fl));
}

TEST_CASE("alignment loss pools over the spatial extent first") {
  // spatial values average before the distance; a map with mean equal to
  // the target contributes nothing even if pointwise different
  Tensor fg = Tensor::from({4, 1, 1, 2}, {1, 3, 0, 0, 0, 0, 0, 0});
  Tensor fl = Tensor::from({4, 1, 1, 2}, {2, 2, 0, 0, 0, 0, 0, 0});
  CHECK(exp_loss(fg, fl).scalar() == doctest::Approx(0.0));
}

TEST_CASE("total loss combines components with the configured weights") {
  LossWeights w;  // alpha 2, beta 1, gamma 0.6
  Tensor cls = Tensor::scalar_value(1.5);
  Tensor hor = Tensor::scalar_value(0.5);
  Tensor expc = Tensor::scalar_value(2.0);
  auto [t, rep] = total_loss(cls, hor, expc, w);
  CHECK(t.scalar() == doctest::Approx(2.0 * 1.5 + 0.5 + 0.6 * 2.0));
  CHECK(rep.cls == doctest::Approx(1.5));
  CHECK(rep.hor == doctest::Approx(0.5));
  CHECK(rep.exp == doctest::Approx(2.0));
  CHECK(rep.total == doctest::Approx(t.scalar()));

  LossWeights w2{1.0, 0.0, 0.0};
  auto [t2, rep2] = total_loss(cls, hor, expc, w2);
  CHECK(t2.scalar() == doctest::Approx(1.5));
}

TEST_CASE("total loss names the non-finite component") {
  LossWeights w;
  Tensor good = Tensor::scalar_value(1.0);
  Tensor bad = Tensor::scalar_value(std::nan(""));
  CHECK_THROWS_WITH_AS(total_loss(good, bad, good, w),
                       doctest::Contains("hor"), std::runtime_error);
  CHECK_THROWS_WITH_AS(total_loss(good, good, bad, w),
                       doctest::Contains("exp"), std::runtime_error);
}

TEST_CASE("loss gradients match finite differences") {
  Rng rng(4);

  auto f_cls = [](const Tensor& x) { return cls_loss(log_softmax(x), {1, 0, 3}); };
  CHECK(grad_check(f_cls, rand_t({3, 4}, rng), 1e-5) < 1e-6);

  std::vector<int> labels = {0, 1};
  auto f_hor = [&](const Tensor& x) {
    // carve three logit blocks out of one input so all entries get grads
    std::vector<HorEntry> es;
    for (int e = 0; e < 3; ++e)
      es.push_back({slice0(x, e), labels});
    return hor_loss(es, OrderingMode::hinge);
  };
  CHECK(grad_check(f_hor, rand_t({3, 2, 3}, rng), 1e-5) < 1e-5);

  auto f_raw = [&](const Tensor& x) {
    std::vector<HorEntry> es;
    for (int e = 0; e < 3; ++e) es.push_back({slice0(x, e), labels});
    return hor_loss(es, OrderingMode::raw);
  };
  CHECK(grad_check(f_raw, rand_t({3, 2, 3}, rng), 1e-5) < 1e-5);

  Tensor fl = rand_t({4, 2, 2, 2}, rng);
  auto f_exp = [&](const Tensor& x) { return exp_loss(x, fl); };
  CHECK(grad_check(f_exp, rand_t({4, 2, 2, 2}, rng), 1e-5) < 1e-5);
}
