#include "dhcnet/hce.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace dhcnet {

namespace {
// Integer crop of a CxHxW image as a 1x C x side_h x side_w tensor.
Tensor crop(const Tensor& image, int y0, int x0, int side_h, int side_w) {
  int C = image.shape[0], H = image.shape[1], W = image.shape[2];
  Tensor out = Tensor::zeros({1, C, side_h, side_w});
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < side_h; ++y)
      for (int x = 0; x < side_w; ++x)
        out.values[(c * side_h + y) * side_w + x] =
            image.values[(c * H + y0 + y) * W + x0 + x];
  return out;
}
}  // namespace

ViewSet extract_views(const Tensor& image, double sigma_v) {
  if (image.rank() != 3)
    throw std::invalid_argument("extract_views: image must be CxHxW");
  if (sigma_v < 0.25 || sigma_v > 1.0)
    throw std::invalid_argument(
        "extract_views: sigma_v " + std::to_string(sigma_v) +
        " outside [0.25, 1]; views would not cover the image");
  int H = image.shape[1], W = image.shape[2];
  int side_h = static_cast<int>(std::floor(std::sqrt(sigma_v) * H));
  int side_w = static_cast<int>(std::floor(std::sqrt(sigma_v) * W));
  // keep full coverage after the floor
  if (2 * side_h < H) side_h = H - side_h;
  if (2 * side_w < W) side_w = W - side_w;

  ViewSet vs;
  vs.sigma_v = sigma_v;
  int ys[4] = {0, 0, H - side_h, H - side_h};
  int xs[4] = {0, W - side_w, 0, W - side_w};
  std::vector<Tensor> resized;
  for (int i = 0; i < 4; ++i) {
    vs.boxes.emplace_back(xs[i], ys[i], xs[i] + side_w, ys[i] + side_h);
    Tensor c = crop(image, ys[i], xs[i], side_h, side_w);
    Tensor r = bilinear_resize(c, H, W);  // 1 x C x H x W
    r.shape = {image.shape[0], H, W};
    resized.push_back(std::move(r));
  }
  vs.views = stack(resized);  // 4 x C x H x W
  return vs;
}

Tensor local_features(const BoundBackbone& net, const ViewSet& views) {
  if (views.views.rank() != 4 || views.views.shape[0] != 4)
    throw std::invalid_argument("local_features: expected 4 stacked views");
  int in = net.model().config.input_size;
  if (views.views.shape[2] != in || views.views.shape[3] != in)
    throw std::invalid_argument(
        "local_features: view size " + std::to_string(views.views.shape[2]) +
        " does not match model input size " + std::to_string(in));
  return net.forward_full(views.views);  // 4 x C x h x w
}

Tensor global_features(const Tensor& F, const ViewSet& views, int out_h,
                       int out_w, int total_stride, int samples_per_bin) {
  if (F.rank() != 3)
    throw std::invalid_argument("global_features: F must be C x h x w");
  double inv = 1.0 / total_stride;
  std::vector<Tensor> parts;
  for (const Box& b : views.boxes) {
    Box fb(b.x0 * inv, b.y0 * inv, b.x1 * inv, b.y1 * inv);
    parts.push_back(roi_align(F, fb, out_h, out_w, samples_per_bin));
  }
  return stack(parts);  // 4 x C x out_h x out_w
}

}  // namespace dhcnet
