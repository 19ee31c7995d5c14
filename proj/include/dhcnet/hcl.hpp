#pragma once

#include "dhcnet/rng.hpp"
#include "dhcnet/tensor.hpp"

#include <utility>
#include <vector>

namespace dhcnet {

enum class Corner { top_left, top_right, bottom_left, bottom_right };

// Corner-anchored shuffle region covering a proportion sigma of the
// image. Sides are snapped down to a multiple of 2^m so every
// granularity n = 2^k, k <= m, divides them evenly.
struct RegionSpec {
  Corner corner;
  int side_h, side_w;
  int y0, x0;  // top-left pixel of the region
  double sigma;
};

RegionSpec select_region(int H, int W, double sigma, int m, Rng& rng);

// Splits the region into n x n patches, applies `perm` (patch index ->
// source patch), reinserts. The complement is untouched.
Tensor apply_patch_permutation(const Tensor& image, const RegionSpec& region,
                               int n, const std::vector<int>& perm);

// Uniformly random permutation (identity included).
std::pair<Tensor, std::vector<int>> shuffle_region(const Tensor& image,
                                                   const RegionSpec& region,
                                                   int n, Rng& rng);

struct ScheduleEntry {
  int k;
  int n;  // 2^k
  int target_last_stage;
};

// Maps each granularity k = 1..m to the truncation depth of its
// supervised forward: top third of k -> stage L, middle third -> L-1,
// bottom third -> L-2. Entries come back sorted by ascending k.
std::vector<ScheduleEntry> granularity_schedule(int m, int L);

// One augmented variant of a source image.
struct AugmentedVariant {
  int k;
  int n;
  std::vector<int> permutation;
  Tensor image;
  int target_last_stage;
};

struct AugmentedSet {
  int source_id = -1;
  RegionSpec region;
  std::vector<AugmentedVariant> variants;  // ascending k
};

// Builds the m shuffled variants of one image sharing a single region.
AugmentedSet build_augmented_set(const Tensor& image, int source_id,
                                 double sigma, int m, int L, Rng& rng);

// lambda * a + (1 - lambda) * b for image and one-hot/soft labels.
std::pair<Tensor, Tensor> mixup(const Tensor& image_a, const Tensor& image_b,
                                const Tensor& label_a, const Tensor& label_b,
                                double lambda);

}  // namespace dhcnet
