#include "dhcnet/hcl.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace dhcnet {

RegionSpec select_region(int H, int W, double sigma, int m, Rng& rng) {
  if (!(sigma > 0.0) || sigma > 1.0)
    throw std::invalid_argument("select_region: sigma " +
                                std::to_string(sigma) + " outside (0,1]");
  if (m < 1) throw std::invalid_argument("select_region: m < 1");
  int snap = 1 << m;
  double root = std::sqrt(sigma);
  int side_h = static_cast<int>(std::floor(root * H));
  int side_w = static_cast<int>(std::floor(root * W));
  side_h -= side_h % snap;
  side_w -= side_w % snap;
  if (side_h < snap || side_w < snap)
    throw std::invalid_argument(
        "select_region: region " + std::to_string(side_h) + "x" +
        std::to_string(side_w) + " too small for granularity 2^" +
        std::to_string(m));

  RegionSpec r;
  r.corner = static_cast<Corner>(rng.uniform_int(4));
  r.side_h = side_h;
  r.side_w = side_w;
  r.sigma = sigma;
  bool right = r.corner == Corner::top_right || r.corner == Corner::bottom_right;
  bool bottom =
      r.corner == Corner::bottom_left || r.corner == Corner::bottom_right;
  r.x0 = right ? W - side_w : 0;
  r.y0 = bottom ? H - side_h : 0;
  return r;
}

Tensor apply_patch_permutation(const Tensor& image, const RegionSpec& region,
                               int n, const std::vector<int>& perm) {
  if (image.rank() != 3)
    throw std::invalid_argument("apply_patch_permutation: image must be CxHxW");
  if (region.side_h % n != 0 || region.side_w % n != 0)
    throw std::invalid_argument("apply_patch_permutation: region " +
                                std::to_string(region.side_h) + "x" +
                                std::to_string(region.side_w) +
                                " not divisible by n=" + std::to_string(n));
  if (static_cast<int>(perm.size()) != n * n)
    throw std::invalid_argument("apply_patch_permutation: permutation size");
  std::vector<char> seen(perm.size(), 0);
  for (int p : perm) {
    if (p < 0 || p >= n * n || seen[p])
      throw std::invalid_argument(
          "apply_patch_permutation: not a permutation of 0.." +
          std::to_string(n * n - 1));
    seen[p] = 1;
  }
  int C = image.shape[0], H = image.shape[1], W = image.shape[2];
  int ph = region.side_h / n, pw = region.side_w / n;

  Tensor out = image.detached();
  for (int dst = 0; dst < n * n; ++dst) {
    int src = perm[dst];
    int dy = region.y0 + (dst / n) * ph, dx = region.x0 + (dst % n) * pw;
    int sy = region.y0 + (src / n) * ph, sx = region.x0 + (src % n) * pw;
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < ph; ++y)
        for (int x = 0; x < pw; ++x)
          out.values[(c * H + dy + y) * W + dx + x] =
              image.values[(c * H + sy + y) * W + sx + x];
  }
  return out;
}

std::pair<Tensor, std::vector<int>> shuffle_region(const Tensor& image,
                                                   const RegionSpec& region,
                                                   int n, Rng& rng) {
  std::vector<int> perm(static_cast<std::size_t>(n) * n);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);
  return {apply_patch_permutation(image, region, n, perm), perm};
}

std::vector<ScheduleEntry> granularity_schedule(int m, int L) {
  if (m < 1) throw std::invalid_argument("granularity_schedule: m < 1");
  if (L < 3) throw std::invalid_argument("granularity_schedule: L < 3");
  int third = (m + 2) / 3;       // ceil(m/3)
  int two_thirds = (2 * m + 2) / 3;  // ceil(2m/3)
  // intervals: [1, third] -> L-2, [third+1, two_thirds] -> L-1,
  //            [two_thirds+1, m] -> L
  if (two_thirds < third + 1 || m < two_thirds + 1)
    throw std::invalid_argument(
        "granularity_schedule: m=" + std::to_string(m) +
        " leaves an empty depth interval (ceil(m/3)=" + std::to_string(third) +
        ", ceil(2m/3)=" + std::to_string(two_thirds) +
        "); smallest usable m is 3");
  std::vector<ScheduleEntry> out;
  for (int k = 1; k <= m; ++k) {
    int depth = k <= third ? L - 2 : (k <= two_thirds ? L - 1 : L);
    out.push_back({k, 1 << k, depth});
  }
  return out;
}

AugmentedSet build_augmented_set(const Tensor& image, int source_id,
                                 double sigma, int m, int L, Rng& rng) {
  AugmentedSet set;
  set.source_id = source_id;
  set.region = select_region(image.shape[1], image.shape[2], sigma, m, rng);
  for (const ScheduleEntry& e : granularity_schedule(m, L)) {
    auto [img, perm] = shuffle_region(image, set.region, e.n, rng);
    set.variants.push_back({e.k, e.n, std::move(perm), std::move(img),
                            e.target_last_stage});
  }
  return set;
}

std::pair<Tensor, Tensor> mixup(const Tensor& image_a, const Tensor& image_b,
                                const Tensor& label_a, const Tensor& label_b,
                                double lambda) {
  if (image_a.shape != image_b.shape)
    throw std::invalid_argument("mixup: image shapes differ: " +
                                shape_str(image_a.shape) + " vs " +
                                shape_str(image_b.shape));
  if (label_a.shape != label_b.shape)
    throw std::invalid_argument("mixup: label shapes differ");
  if (lambda < 0.0 || lambda > 1.0)
    throw std::invalid_argument("mixup: lambda outside [0,1]");
  Tensor img(image_a.shape,
             lambda * image_a.values + (1.0 - lambda) * image_b.values);
  Tensor lbl(label_a.shape,
             lambda * label_a.values + (1.0 - lambda) * label_b.values);
  return {std::move(img), std::move(lbl)};
}

}  // namespace dhcnet
