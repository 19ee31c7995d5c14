#pragma once

#include "dhcnet/backbone.hpp"
#include "dhcnet/nn.hpp"
#include "dhcnet/tensor.hpp"

#include <vector>

namespace dhcnet {

// Four corner-anchored views of one image, each resized back to the
// input resolution. With sigma_v = 0.25 the boxes tile the image.
struct ViewSet {
  std::vector<Box> boxes;  // image coordinates, order TL TR BL BR
  Tensor views;            // 4 x 3 x H x W, bilinearly resized crops
  double sigma_v;
};

ViewSet extract_views(const Tensor& image, double sigma_v);

// Stacks forward_full over the four views -> 4 x C x h x w. Frozen mode
// is realized by binding the backbone without a tape.
Tensor local_features(const BoundBackbone& net, const ViewSet& views);

// RoIAligns each view box out of the global feature map F (C x h x w),
// mapping image coordinates down by `total_stride`.
Tensor global_features(const Tensor& F, const ViewSet& views, int out_h,
                       int out_w, int total_stride, int samples_per_bin = 2);

}  // namespace dhcnet
