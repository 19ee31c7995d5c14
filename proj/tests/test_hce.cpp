#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dhcnet/backbone.hpp"
#include "dhcnet/hce.hpp"
#include "dhcnet/nn.hpp"
#include "dhcnet/rng.hpp"

#include <cmath>

using namespace dhcnet;

namespace {
Tensor ramp_image(int H, int W) {
  Tensor t = Tensor::zeros({3, H, W});
  for (int i = 0; i < t.size(); ++i) t.values[i] = 0.001 * i;
  return t;
}
}  // namespace

TEST_CASE("views tile the four corners and are resized to full size") {
  Tensor img = ramp_image(64, 64);
  ViewSet vs = extract_views(img, 0.25);
  CHECK(vs.views.shape == Shape{4, 3, 64, 64});
  REQUIRE(vs.boxes.size() == 4);
  // sigma_v = 0.25 -> side 32; boxes in TL, TR, BL, BR order
  CHECK(vs.boxes[0].x0 == 0);
  CHECK(vs.boxes[0].y0 == 0);
  CHECK(vs.boxes[0].x1 == 32);
  CHECK(vs.boxes[1].x0 == 32);
  CHECK(vs.boxes[1].x1 == 64);
  CHECK(vs.boxes[2].y0 == 32);
  CHECK(vs.boxes[3].x0 == 32);
  CHECK(vs.boxes[3].y0 == 32);

  // quarter views at sigma 0.25 jointly cover the image exactly
  double sum_area = 0;
  for (const Box& b : vs.boxes) sum_area += b.width() * b.height();
  CHECK(sum_area == doctest::Approx(64.0 * 64.0));
}

TEST_CASE("view crop content matches a direct crop plus resize") {
  Tensor img = ramp_image(64, 64);
  ViewSet vs = extract_views(img, 0.25);
  // TL view: crop [0,32)x[0,32) upsampled to 64; compare against doing
  // exactly that by hand
  Tensor crop = Tensor::zeros({1, 3, 32, 32});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x)
        crop.values[(c * 32 + y) * 32 + x] = img.at({c, y, x});
  Tensor ref = bilinear_resize(crop, 64, 64);
  for (int i = 0; i < ref.size(); ++i)
    CHECK(vs.views.values[i] == doctest::Approx(ref.values[i]));
}

TEST_CASE("oversized sigma_v still yields in-bounds overlapping views") {
  Tensor img = ramp_image(64, 64);
  ViewSet vs = extract_views(img, 0.7);  // side floor(0.836*64)=53 > 32
  for (const Box& b : vs.boxes) {
    CHECK(b.x0 >= 0);
    CHECK(b.y0 >= 0);
    CHECK(b.x1 <= 64);
    CHECK(b.y1 <= 64);
    CHECK(b.width() == doctest::Approx(53));
  }
  CHECK_THROWS(extract_views(img, 0.2));   // below the lower bound
  CHECK_THROWS(extract_views(img, 1.01));
}

TEST_CASE("global features crop the same windows in feature coordinates") {
  // With a linear "network" (identity here), pooling the full-image feature
  // map over a view's box should approximate the view's own pooled feature.
  // We test the geometry directly: a feature map that is a downscaled copy
  // of the image produces roi crops matching downscaled view boxes.
  Tensor img = ramp_image(64, 64);
  ViewSet vs = extract_views(img, 0.25);
  // fake 1-channel feature plane 4x4 = image pooled by stride 16
  Tensor feat = Tensor::zeros({1, 4, 4});
  for (int i = 0; i < 16; ++i) feat.values[i] = i;
  Tensor fg = global_features(feat, vs, 4, 4, 16, 2);
  CHECK(fg.shape == Shape{4, 1, 4, 4});
  // TL view box (0,0,32,32) --/16--> (0,0,2,2): top-left quadrant upsampled
  Tensor tl = roi_align(feat, Box(0, 0, 2, 2), 4, 4, 2);
  for (int i = 0; i < 16; ++i)
    CHECK(fg.values[i] == doctest::Approx(tl.values[i]));
}

TEST_CASE("local and global features agree in shape through the backbone") {
  BackboneConfig c;
  c.input_size = 32;
  c.stage_channels = {4, 4, 6, 6};
  c.blocks_per_stage = 1;
  c.num_classes = 3;
  c.seed = 2;
  StagedBackbone m = StagedBackbone::init(c);
  BoundBackbone net(m, nullptr);
  Tensor img = ramp_image(32, 32);
  ViewSet vs = extract_views(img, 0.25);
  Tensor fl = local_features(net, vs);
  CHECK(fl.shape == Shape{4, 6, 2, 2});
  Tensor F = net.forward_full(stack({img}));
  Tensor fg = global_features(slice0(F, 0), vs, 2, 2, c.total_stride(), 2);
  CHECK(fg.shape == fl.shape);
}

TEST_CASE("gradients flow through the aligned roi crops") {
  Rng rng(3);
  Tensor img = ramp_image(32, 32);
  ViewSet vs = extract_views(img, 0.25);
  auto f = [&](const Tensor& x) {
    Tensor fg = global_features(x, vs, 2, 2, 16, 2);
    return sum_all(mul(fg, fg));
  };
  Tensor feat = Tensor::zeros({3, 2, 2});
  for (int i = 0; i < feat.size(); ++i) feat.values[i] = rng.uniform(-1, 1);
  CHECK(grad_check(f, feat, 1e-5) < 1e-6);
}
