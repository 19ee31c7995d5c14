#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dhcnet/hcl.hpp"

#include <algorithm>
#include <map>

using namespace dhcnet;

namespace {
Tensor ramp_image(int H, int W) {
  Tensor t = Tensor::zeros({3, H, W});
  for (int i = 0; i < t.size(); ++i) t.values[i] = i;
  return t;
}

// Multiset of per-patch pixel values inside the region, one entry per patch.
std::vector<std::vector<double>> region_patches(const Tensor& img,
                                                const RegionSpec& r, int n) {
  int ph = r.side_h / n, pw = r.side_w / n;
  std::vector<std::vector<double>> out;
  for (int gy = 0; gy < n; ++gy)
    for (int gx = 0; gx < n; ++gx) {
      std::vector<double> patch;
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < ph; ++y)
          for (int x = 0; x < pw; ++x)
            patch.push_back(
                img.at({c, r.y0 + gy * ph + y, r.x0 + gx * pw + x}));
      out.push_back(std::move(patch));
    }
  return out;
}
}  // namespace

TEST_CASE("region side scales with the square root of the area fraction") {
  Rng rng(1);
  RegionSpec r = select_region(64, 64, 0.25, 3, rng);
  CHECK(r.side_h == 32);  // floor(sqrt(0.25)*64) = 32, already a multiple of 8
  CHECK(r.side_w == 32);
  RegionSpec r2 = select_region(64, 64, 0.3, 3, rng);
  CHECK(r2.side_h == 32);  // floor(sqrt(0.3)*64) = 35 snapped down to 32
  CHECK_THROWS(select_region(64, 64, 0.0, 3, rng));
  CHECK_THROWS(select_region(64, 64, 1.5, 3, rng));
  CHECK_THROWS(select_region(16, 16, 0.01, 3, rng));  // side < 2^m
}

TEST_CASE("region sits flush in one of the four corners") {
  Rng rng(2);
  std::map<Corner, int> seen;
  for (int t = 0; t < 200; ++t) {
    RegionSpec r = select_region(64, 48, 0.25, 3, rng);
    ++seen[r.corner];
    bool left = r.x0 == 0, top = r.y0 == 0;
    bool right = r.x0 + r.side_w == 48, bottom = r.y0 + r.side_h == 64;
    switch (r.corner) {
      case Corner::top_left: CHECK((top && left)); break;
      case Corner::top_right: CHECK((top && right)); break;
      case Corner::bottom_left: CHECK((bottom && left)); break;
      case Corner::bottom_right: CHECK((bottom && right)); break;
    }
  }
  CHECK(seen.size() == 4);  // all corners drawn over 200 trials
}

TEST_CASE("shuffle preserves the patch multiset and everything outside") {
  Rng rng(3);
  Tensor img = ramp_image(64, 64);
  for (int trial = 0; trial < 1000; ++trial) {
    int k = 1 + static_cast<int>(rng.uniform_int(3));
    int n = 1 << k;
    RegionSpec r = select_region(64, 64, 0.25, 3, rng);
    auto [shuffled, perm] = shuffle_region(img, r, n, rng);

    // outside the region: untouched
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) {
          bool inside = y >= r.y0 && y < r.y0 + r.side_h && x >= r.x0 &&
                        x < r.x0 + r.side_w;
          if (!inside)
            REQUIRE(shuffled.at({c, y, x}) == img.at({c, y, x}));
        }

    // inside: same patches, rearranged per the returned permutation
    auto before = region_patches(img, r, n);
    auto after = region_patches(shuffled, r, n);
    REQUIRE(perm.size() == before.size());
    for (std::size_t i = 0; i < perm.size(); ++i)
      REQUIRE(after[i] == before[perm[i]]);

    auto sorted = perm;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i)
      REQUIRE(sorted[i] == static_cast<int>(i));
  }
}

TEST_CASE("identity permutation reproduces the input exactly") {
  Tensor img = ramp_image(32, 32);
  Rng rng(4);
  RegionSpec r = select_region(32, 32, 0.5, 3, rng);
  std::vector<int> ident(16);
  for (int i = 0; i < 16; ++i) ident[i] = i;
  Tensor out = apply_patch_permutation(img, r, 4, ident);
  CHECK((out.values == img.values).all());
}

TEST_CASE("patch permutation rejects non-permutations and bad sizes") {
  Tensor img = ramp_image(32, 32);
  Rng rng(5);
  RegionSpec r = select_region(32, 32, 0.5, 3, rng);
  CHECK_THROWS(apply_patch_permutation(img, r, 4, {0, 1, 2}));      // wrong len
  std::vector<int> dup(16, 0);
  CHECK_THROWS(apply_patch_permutation(img, r, 4, dup));            // not a perm
  CHECK_THROWS(apply_patch_permutation(img, r, 32, std::vector<int>(1024, 0)));
}

TEST_CASE("granularity schedule maps fine shuffles to deep truncations") {
  auto sched = granularity_schedule(3, 4);
  REQUIRE(sched.size() == 3);
  CHECK(sched[0].k == 1);
  CHECK(sched[0].n == 2);
  CHECK(sched[0].target_last_stage == 2);  // coarsest shuffle, shallowest net
  CHECK(sched[1].target_last_stage == 3);
  CHECK(sched[2].k == 3);
  CHECK(sched[2].n == 8);
  CHECK(sched[2].target_last_stage == 4);
}

TEST_CASE("schedule splits larger m into three contiguous bands") {
  auto sched = granularity_schedule(6, 4);
  REQUIRE(sched.size() == 6);
  // k 1..2 -> stage 2, k 3..4 -> stage 3, k 5..6 -> stage 4
  CHECK(sched[0].target_last_stage == 2);
  CHECK(sched[1].target_last_stage == 2);
  CHECK(sched[2].target_last_stage == 3);
  CHECK(sched[3].target_last_stage == 3);
  CHECK(sched[4].target_last_stage == 4);
  CHECK(sched[5].target_last_stage == 4);
  for (std::size_t i = 1; i < sched.size(); ++i)
    CHECK(sched[i].target_last_stage >= sched[i - 1].target_last_stage);
}

TEST_CASE("schedule refuses m too small to fill all three bands") {
  CHECK_THROWS_AS(granularity_schedule(1, 4), std::invalid_argument);
  CHECK_THROWS_AS(granularity_schedule(2, 4), std::invalid_argument);
  CHECK_NOTHROW(granularity_schedule(3, 4));
}

TEST_CASE("augmented set shares a single region across granularities") {
  Tensor img = ramp_image(64, 64);
  Rng rng(6);
  AugmentedSet set = build_augmented_set(img, 7, 0.25, 3, 4, rng);
  CHECK(set.source_id == 7);
  REQUIRE(set.variants.size() == 3);
  for (const auto& v : set.variants) {
    // every variant differs from the source only inside the shared region
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) {
          bool inside = y >= set.region.y0 && y < set.region.y0 + set.region.side_h &&
                        x >= set.region.x0 && x < set.region.x0 + set.region.side_w;
          if (!inside) REQUIRE(v.image.at({c, y, x}) == img.at({c, y, x}));
        }
  }
  CHECK(set.variants[0].n == 2);
  CHECK(set.variants[1].n == 4);
  CHECK(set.variants[2].n == 8);
}

TEST_CASE("augmentation is reproducible from the rng seed") {
  Tensor img = ramp_image(64, 64);
  Rng a(9), b(9);
  AugmentedSet s1 = build_augmented_set(img, 0, 0.25, 3, 4, a);
  AugmentedSet s2 = build_augmented_set(img, 0, 0.25, 3, 4, b);
  for (std::size_t i = 0; i < s1.variants.size(); ++i) {
    CHECK(s1.variants[i].permutation == s2.variants[i].permutation);
    CHECK((s1.variants[i].image.values == s2.variants[i].image.values).all());
  }
}

TEST_CASE("mixup blends images and labels with the same coefficient") {
  Tensor a = Tensor::full({3, 2, 2}, 1.0);
  Tensor b = Tensor::full({3, 2, 2}, 3.0);
  Tensor la = Tensor::from({2}, {1.0, 0.0});
  Tensor lb = Tensor::from({2}, {0.0, 1.0});
  auto [img, lbl] = mixup(a, b, la, lb, 0.25);
  CHECK(img.values[0] == doctest::Approx(0.25 * 1.0 + 0.75 * 3.0));
  CHECK(lbl.values[0] == doctest::Approx(0.25));
  CHECK(lbl.values[1] == doctest::Approx(0.75));
  CHECK_THROWS(mixup(a, Tensor::full({3, 2, 3}, 1.0), la, lb, 0.5));
}
