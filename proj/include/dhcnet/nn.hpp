#pragma once

#include "dhcnet/tensor.hpp"

namespace dhcnet {

// Axis-aligned rectangle in continuous image/feature coordinates.
struct Box {
  double x0, y0, x1, y1;

  Box(double x0_, double y0_, double x1_, double y1_);
  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
};

struct ConvParams {
  Tensor weight;  // out_ch x in_ch x k x k
  Tensor bias;    // out_ch
  int stride = 1;
  int padding = 0;
};

// Cross-correlation with bias over NCHW input; differentiable w.r.t.
// input, weight and bias. Uses im2col + gemm.
Tensor conv2d(const Tensor& input, const ConvParams& params);

// N x C x H x W -> N x C per-channel spatial mean.
Tensor global_avg_pool(const Tensor& input);

// Row-wise log-softmax of an N x K logit matrix, max-subtracted for
// stability.
Tensor log_softmax(const Tensor& logits);

// Half-pixel-center bilinear resize: src = (dst + 0.5) * scale - 0.5,
// clamped to the valid range.
Tensor bilinear_resize(const Tensor& input, int out_h, int out_w);

// Quantization-free RoI pooling over a C x h x w feature map: each
// output bin averages samples_per_bin^2 bilinear samples on a regular
// grid inside the bin. Out-of-plane samples clamp to the border.
Tensor roi_align(const Tensor& feat, const Box& box, int out_h, int out_w,
                 int samples_per_bin = 2);

}  // namespace dhcnet
