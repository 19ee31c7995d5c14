#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

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

// Reference sampler, written independently of the library code: clamp the
// taps to the plane and lerp. Used as the oracle for bilinear_resize and
// roi_align below.
double sample_plane(const Tensor& feat, int c, double y, double x) {
  int H = feat.shape[feat.rank() - 2], W = feat.shape[feat.rank() - 1];
  auto px = [&](int yy, int xx) {
    yy = std::clamp(yy, 0, H - 1);
    xx = std::clamp(xx, 0, W - 1);
    return feat.values[(c * H + yy) * W + xx];
  };
  int y0 = static_cast<int>(std::floor(y)), x0 = static_cast<int>(std::floor(x));
  double fy = y - y0, fx = x - x0;
  return px(y0, x0) * (1 - fy) * (1 - fx) + px(y0, x0 + 1) * (1 - fy) * fx +
         px(y0 + 1, x0) * fy * (1 - fx) + px(y0 + 1, x0 + 1) * fy * fx;
}

double roi_ref(const Tensor& feat, int c, const Box& b, int oh, int ow, int by,
               int bx, int spb) {
  double bh = b.height() / oh, bw = b.width() / ow;
  double acc = 0.0;
  for (int sy = 0; sy < spb; ++sy)
    for (int sx = 0; sx < spb; ++sx) {
      double y = b.y0 + (by + (sy + 0.5) / spb) * bh - 0.5;
      double x = b.x0 + (bx + (sx + 0.5) / spb) * bw - 0.5;
      acc += sample_plane(feat, c, y, x);
    }
  return acc / (spb * spb);
}

}  // namespace

TEST_CASE("conv2d matches direct convolution on a small case") {
  // 1x1x3x3 input, identity-ish 1x1x3x3 kernel, pad 1 stride 1
  Tensor x = Tensor::from({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  ConvParams p;
  p.weight = Tensor::zeros({1, 1, 3, 3});
  p.weight.values[4] = 1.0;  // center tap: output == input
  p.bias = Tensor::from({1}, {0.5});
  p.padding = 1;
  Tensor y = conv2d(x, p);
  CHECK(y.shape == Shape{1, 1, 3, 3});
  for (int i = 0; i < 9; ++i) CHECK(y.values[i] == doctest::Approx(x.values[i] + 0.5));
}

TEST_CASE("conv2d stride and padding geometry") {
  Rng rng(2);
  Tensor x = rand_t({2, 3, 8, 8}, rng);
  ConvParams p;
  p.weight = rand_t({4, 3, 3, 3}, rng);
  p.bias = rand_t({4}, rng);
  p.stride = 2;
  p.padding = 1;
  Tensor y = conv2d(x, p);
  CHECK(y.shape == Shape{2, 4, 4, 4});

  // direct reference at a few positions
  for (int n : {0, 1})
    for (int o : {0, 3})
      for (int oy : {0, 2})
        for (int ox : {1, 3}) {
          double acc = p.bias.values[o];
          for (int c = 0; c < 3; ++c)
            for (int ky = 0; ky < 3; ++ky)
              for (int kx = 0; kx < 3; ++kx) {
                int iy = oy * 2 + ky - 1, ix = ox * 2 + kx - 1;
                if (iy < 0 || iy >= 8 || ix < 0 || ix >= 8) continue;
                acc += x.at({n, c, iy, ix}) * p.weight.at({o, c, ky, kx});
              }
          CHECK(y.at({n, o, oy, ox}) == doctest::Approx(acc));
        }
}

TEST_CASE("conv2d rejects channel mismatch and empty outputs") {
  Rng rng(3);
  ConvParams p;
  p.weight = rand_t({2, 4, 3, 3}, rng);
  p.bias = rand_t({2}, rng);
  CHECK_THROWS(conv2d(rand_t({1, 3, 8, 8}, rng), p));
  p.weight = rand_t({2, 3, 3, 3}, rng);
  CHECK_THROWS(conv2d(rand_t({1, 3, 2, 2}, rng), p));  // 3x3 won't fit, pad 0
}

TEST_CASE("conv2d gradients w.r.t. input, weight, bias") {
  Rng rng(4);
  Tensor x0 = rand_t({2, 2, 5, 5}, rng);
  Tensor w0 = rand_t({3, 2, 3, 3}, rng);
  Tensor b0 = rand_t({3}, rng);

  auto fx = [&](const Tensor& x) {
    ConvParams p{w0, b0, 2, 1};
    return sum_all(mul(conv2d(x, p), conv2d(x, p)));
  };
  CHECK(grad_check(fx, x0, 1e-5) < 1e-6);

  auto fw = [&](const Tensor& w) {
    ConvParams p{w, b0, 2, 1};
    return sum_all(mul(conv2d(x0, p), conv2d(x0, p)));
  };
  CHECK(grad_check(fw, w0, 1e-5) < 1e-6);

  auto fb = [&](const Tensor& b) {
    ConvParams p{w0, b, 2, 1};
    return sum_all(exp(mul_scalar(conv2d(x0, p), 0.1)));
  };
  CHECK(grad_check(fb, b0, 1e-5) < 1e-6);
}

TEST_CASE("global_avg_pool averages each plane") {
  Tensor x = Tensor::from({1, 2, 2, 2}, {1, 2, 3, 4, 10, 20, 30, 40});
  Tensor y = global_avg_pool(x);
  CHECK(y.shape == Shape{1, 2});
  CHECK(y.values[0] == doctest::Approx(2.5));
  CHECK(y.values[1] == doctest::Approx(25.0));
}

TEST_CASE("log_softmax rows are normalized and shift-invariant") {
  Rng rng(5);
  Tensor x = rand_t({4, 7}, rng, -3, 3);
  Tensor y = log_softmax(x);
  for (int i = 0; i < 4; ++i) {
    double s = 0;
    for (int k = 0; k < 7; ++k) s += std::exp(y.at({i, k}));
    CHECK(s == doctest::Approx(1.0));
  }
  Tensor shifted = add_scalar(x, 123.0);
  CHECK(log_softmax(shifted).values.isApprox(y.values, 1e-9));

  // huge logits must not overflow
  Tensor big = Tensor::from({1, 2}, {1000.0, 999.0});
  CHECK(std::isfinite(log_softmax(big).values[0]));

  Tensor bad = Tensor::from({1, 2}, {1.0, std::nan("")});
  CHECK_THROWS_AS(log_softmax(bad), std::domain_error);
}

TEST_CASE("bilinear_resize identity and constant preservation") {
  Rng rng(6);
  Tensor x = rand_t({1, 2, 5, 7}, rng);
  CHECK(bilinear_resize(x, 5, 7).values.isApprox(x.values, 1e-12));
  Tensor c = Tensor::full({1, 1, 3, 3}, 2.5);
  Tensor up = bilinear_resize(c, 9, 5);
  for (int i = 0; i < up.size(); ++i) CHECK(up.values[i] == doctest::Approx(2.5));
}

TEST_CASE("bilinear_resize matches half-pixel-center oracle") {
  Rng rng(7);
  Tensor x = rand_t({1, 3, 6, 4}, rng);
  int oh = 9, ow = 11;
  Tensor y = bilinear_resize(x, oh, ow);
  double sy = 6.0 / oh, sx = 4.0 / ow;
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < oh; ++i)
      for (int j = 0; j < ow; ++j) {
        double ref = sample_plane(Tensor({3, 6, 4}, x.values), c,
                                  (i + 0.5) * sy - 0.5, (j + 0.5) * sx - 0.5);
        CHECK(y.at({0, c, i, j}) == doctest::Approx(ref).epsilon(1e-12));
      }
}

TEST_CASE("roi_align reproduces the worked 1-channel examples") {
  // 4x4 plane 0..15; the top-left-quadrant box with one sample lands the
  // sample at continuous (1,1) = pixel position (0.5,0.5): mean(0,1,4,5)
  Tensor feat = Tensor::zeros({1, 4, 4});
  for (int i = 0; i < 16; ++i) feat.values[i] = i;
  Tensor quad = roi_align(feat, Box(0, 0, 2, 2), 1, 1, 1);
  CHECK(quad.shape == Shape{1, 1, 1});
  CHECK(quad.values[0] == doctest::Approx(2.5));

  // a full-plane box with one sample per bin is the identity
  Tensor ident = roi_align(feat, Box(0, 0, 4, 4), 4, 4, 1);
  for (int i = 0; i < 16; ++i)
    CHECK(ident.values[i] == doctest::Approx(feat.values[i]));
}

TEST_CASE("roi_align matches brute-force sampler on random boxes") {
  Rng rng(8);
  Tensor feat = rand_t({3, 9, 7}, rng);
  for (int trial = 0; trial < 100; ++trial) {
    double x0 = rng.uniform(0.0, 5.0), y0 = rng.uniform(0.0, 7.0);
    Box b(x0, y0, x0 + rng.uniform(0.3, 2.0), y0 + rng.uniform(0.3, 2.0));
    int oh = 1 + static_cast<int>(rng.uniform_int(3));
    int ow = 1 + static_cast<int>(rng.uniform_int(3));
    int spb = 1 + static_cast<int>(rng.uniform_int(3));
    Tensor out = roi_align(feat, b, oh, ow, spb);
    for (int c = 0; c < 3; ++c)
      for (int by = 0; by < oh; ++by)
        for (int bx = 0; bx < ow; ++bx) {
          double ref = roi_ref(feat, c, b, oh, ow, by, bx, spb);
          CHECK(std::abs(out.at({c, by, bx}) - ref) <= 1e-6);
        }
  }
}

TEST_CASE("roi_align rejects degenerate and out-of-plane boxes") {
  Tensor feat = Tensor::zeros({1, 4, 4});
  CHECK_THROWS(Box(2.0, 0.0, 1.0, 1.0));                       // x1 < x0
  CHECK_THROWS(roi_align(feat, Box(0, 0, 5.0, 1.0), 1, 1));    // past right edge
  CHECK_THROWS(roi_align(feat, Box(-0.5, 0, 1.0, 1.0), 1, 1)); // past left edge
}

TEST_CASE("bilinear and roi_align gradients") {
  Rng rng(9);
  auto fr = [](const Tensor& x) {
    Tensor y = bilinear_resize(x, 6, 9);
    return sum_all(mul(y, y));
  };
  CHECK(grad_check(fr, rand_t({1, 2, 4, 5}, rng), 1e-5) < 1e-6);

  auto fa = [](const Tensor& x) {
    Tensor y = roi_align(x, Box(0.4, 0.7, 3.9, 4.2), 2, 2, 3);
    return sum_all(exp(mul_scalar(y, 0.3)));
  };
  CHECK(grad_check(fa, rand_t({2, 5, 5}, rng), 1e-5) < 1e-6);
}
