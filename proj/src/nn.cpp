#include "dhcnet/nn.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

namespace dhcnet {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<const RowMat>;

Box::Box(double x0_, double y0_, double x1_, double y1_)
    : x0(x0_), y0(y0_), x1(x1_), y1(y1_) {
  if (!(x0 < x1) || !(y0 < y1))
    throw std::invalid_argument("Box: degenerate rectangle (" +
                                std::to_string(x0) + "," + std::to_string(y0) +
                                "," + std::to_string(x1) + "," +
                                std::to_string(y1) + ")");
}

// ----------------------------------------------------------------- conv2d

static void im2col(const double* img, int C, int H, int W, int k, int stride,
                   int pad, int Ho, int Wo, double* col) {
  // col is (C*k*k) x (Ho*Wo), row-major
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        double* row = col + ((c * k + ky) * k + kx) * (Ho * Wo);
        for (int oy = 0; oy < Ho; ++oy) {
          int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= H) {
            for (int ox = 0; ox < Wo; ++ox) row[oy * Wo + ox] = 0.0;
            continue;
          }
          const double* src = img + (c * H + iy) * W;
          for (int ox = 0; ox < Wo; ++ox) {
            int ix = ox * stride + kx - pad;
            row[oy * Wo + ox] = (ix >= 0 && ix < W) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

static void col2im(const double* col, int C, int H, int W, int k, int stride,
                   int pad, int Ho, int Wo, double* img) {
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const double* row = col + ((c * k + ky) * k + kx) * (Ho * Wo);
        for (int oy = 0; oy < Ho; ++oy) {
          int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= H) continue;
          double* dst = img + (c * H + iy) * W;
          for (int ox = 0; ox < Wo; ++ox) {
            int ix = ox * stride + kx - pad;
            if (ix >= 0 && ix < W) dst[ix] += row[oy * Wo + ox];
          }
        }
      }
    }
  }
}

Tensor conv2d(const Tensor& input, const ConvParams& params) {
  if (input.rank() != 4)
    throw std::invalid_argument("conv2d: input must be NCHW, got " +
                                shape_str(input.shape));
  const Tensor& w = params.weight;
  const Tensor& b = params.bias;
  if (w.rank() != 4)
    throw std::invalid_argument("conv2d: weight must be OIKK");
  int N = input.shape[0], C = input.shape[1], H = input.shape[2],
      W = input.shape[3];
  int O = w.shape[0], k = w.shape[2];
  if (w.shape[1] != C)
    throw std::invalid_argument(
        "conv2d: input channels " + std::to_string(C) +
        " do not match weight channels " + std::to_string(w.shape[1]));
  if (w.shape[3] != k) throw std::invalid_argument("conv2d: non-square kernel");
  if (b.rank() != 1 || b.shape[0] != O)
    throw std::invalid_argument("conv2d: bias shape mismatch");
  int stride = params.stride, pad = params.padding;
  int Ho = (H + 2 * pad - k) / stride + 1;
  int Wo = (W + 2 * pad - k) / stride + 1;
  if (Ho < 1 || Wo < 1)
    throw std::invalid_argument("conv2d: empty output extent");

  int ck2 = C * k * k, hw = Ho * Wo;
  Tensor out;
  out.shape = {N, O, Ho, Wo};
  out.values.resize(static_cast<Eigen::Index>(N) * O * hw);

  // cols saved for backward when on a tape
  auto cols = std::make_shared<std::vector<Array>>();
  Tape* tape = nullptr;
  if (input.on_tape()) tape = input.tape;
  if (w.on_tape()) tape = w.tape;
  if (b.on_tape()) tape = b.tape;

  Array colbuf(static_cast<Eigen::Index>(ck2) * hw);
  MapMat wm(w.values.data(), O, ck2);
  for (int n = 0; n < N; ++n) {
    im2col(input.values.data() + static_cast<Eigen::Index>(n) * C * H * W, C, H,
           W, k, stride, pad, Ho, Wo, colbuf.data());
    Eigen::Map<RowMat> om(out.values.data() + static_cast<Eigen::Index>(n) * O * hw,
                          O, hw);
    om = wm * MapMat(colbuf.data(), ck2, hw);
    om.colwise() += Eigen::Map<const Eigen::VectorXd>(b.values.data(), O);
    if (tape) cols->push_back(colbuf);
  }

  if (tape) {
    int in_node = input.on_tape() ? input.node : -1;
    int w_node = w.on_tape() ? w.node : -1;
    int b_node = b.on_tape() ? b.node : -1;
    Array wv = w.values;
    out.tape = tape;
    out.requires_grad = true;
    out.node = tape->op(out.shape, [=](const Array& g, Tape& t) {
      Array gw, gb, gx;
      if (w_node >= 0) gw = Array::Zero(static_cast<Eigen::Index>(O) * ck2);
      if (b_node >= 0) gb = Array::Zero(O);
      if (in_node >= 0)
        gx = Array::Zero(static_cast<Eigen::Index>(N) * C * H * W);
      Array gcol(static_cast<Eigen::Index>(ck2) * hw);
      for (int n = 0; n < N; ++n) {
        MapMat gm(g.data() + static_cast<Eigen::Index>(n) * O * hw, O, hw);
        const Array& col = (*cols)[n];
        if (w_node >= 0)
          Eigen::Map<RowMat>(gw.data(), O, ck2) +=
              gm * MapMat(col.data(), ck2, hw).transpose();
        if (b_node >= 0)
          Eigen::Map<Eigen::VectorXd>(gb.data(), O) += gm.rowwise().sum();
        if (in_node >= 0) {
          Eigen::Map<RowMat>(gcol.data(), ck2, hw) =
              MapMat(wv.data(), O, ck2).transpose() * gm;
          col2im(gcol.data(), C, H, W, k, stride, pad, Ho, Wo,
                 gx.data() + static_cast<Eigen::Index>(n) * C * H * W);
        }
      }
      if (w_node >= 0) t.accumulate(w_node, gw);
      if (b_node >= 0) t.accumulate(b_node, gb);
      if (in_node >= 0) t.accumulate(in_node, gx);
    });
  }
  return out;
}

// ------------------------------------------------------- global_avg_pool

Tensor global_avg_pool(const Tensor& input) {
  if (input.rank() != 4)
    throw std::invalid_argument("global_avg_pool: input must be NCHW");
  return reduce(ReduceKind::mean, input, {2, 3});
}

// ----------------------------------------------------------- log_softmax

Tensor log_softmax(const Tensor& logits) {
  if (logits.rank() != 2)
    throw std::invalid_argument("log_softmax: input must be N x K");
  if (!logits.values.isFinite().all())
    throw std::domain_error("log_softmax: non-finite logits");
  int N = logits.shape[0], K = logits.shape[1];
  Tensor out;
  out.shape = logits.shape;
  out.values.resize(logits.values.size());
  for (int i = 0; i < N; ++i) {
    auto row = logits.values.segment(static_cast<Eigen::Index>(i) * K, K);
    double m = row.maxCoeff();
    double lse = std::log((row - m).exp().sum()) + m;
    out.values.segment(static_cast<Eigen::Index>(i) * K, K) = row - lse;
  }
  if (logits.on_tape()) {
    int xn = logits.node;
    Array lsm = out.values;
    out.tape = logits.tape;
    out.requires_grad = true;
    out.node = logits.tape->op(out.shape, [=](const Array& g, Tape& t) {
      Array gx(g.size());
      for (int i = 0; i < N; ++i) {
        auto gi = g.segment(static_cast<Eigen::Index>(i) * K, K);
        auto li = lsm.segment(static_cast<Eigen::Index>(i) * K, K);
        gx.segment(static_cast<Eigen::Index>(i) * K, K) =
            gi - li.exp() * gi.sum();
      }
      t.accumulate(xn, gx);
    });
  }
  return out;
}

// ------------------------------------------------------- bilinear_resize

namespace {
struct LerpTap {
  int lo, hi;
  double w_lo, w_hi;
};

// Half-pixel-center source tap for destination index d.
LerpTap lerp_tap(int d, int in_extent, int out_extent) {
  double scale = static_cast<double>(in_extent) / out_extent;
  double s = (d + 0.5) * scale - 0.5;
  if (s < 0) s = 0;
  if (s > in_extent - 1) s = in_extent - 1;
  LerpTap t;
  t.lo = static_cast<int>(std::floor(s));
  t.hi = std::min(t.lo + 1, in_extent - 1);
  t.w_hi = s - t.lo;
  t.w_lo = 1.0 - t.w_hi;
  return t;
}
}  // namespace

Tensor bilinear_resize(const Tensor& input, int out_h, int out_w) {
  if (input.rank() != 4)
    throw std::invalid_argument("bilinear_resize: input must be NCHW");
  if (out_h < 1 || out_w < 1)
    throw std::invalid_argument("bilinear_resize: output extent < 1");
  int N = input.shape[0], C = input.shape[1], H = input.shape[2],
      W = input.shape[3];
  std::vector<LerpTap> ty(out_h), tx(out_w);
  for (int y = 0; y < out_h; ++y) ty[y] = lerp_tap(y, H, out_h);
  for (int x = 0; x < out_w; ++x) tx[x] = lerp_tap(x, W, out_w);

  Tensor out;
  out.shape = {N, C, out_h, out_w};
  out.values.resize(static_cast<Eigen::Index>(N) * C * out_h * out_w);
  for (int nc = 0; nc < N * C; ++nc) {
    const double* src = input.values.data() + static_cast<Eigen::Index>(nc) * H * W;
    double* dst = out.values.data() + static_cast<Eigen::Index>(nc) * out_h * out_w;
    for (int y = 0; y < out_h; ++y)
      for (int x = 0; x < out_w; ++x)
        dst[y * out_w + x] =
            ty[y].w_lo * (tx[x].w_lo * src[ty[y].lo * W + tx[x].lo] +
                          tx[x].w_hi * src[ty[y].lo * W + tx[x].hi]) +
            ty[y].w_hi * (tx[x].w_lo * src[ty[y].hi * W + tx[x].lo] +
                          tx[x].w_hi * src[ty[y].hi * W + tx[x].hi]);
  }

  if (input.on_tape()) {
    int xn = input.node;
    out.tape = input.tape;
    out.requires_grad = true;
    out.node = input.tape->op(out.shape, [=](const Array& g, Tape& t) {
      Array gx = Array::Zero(static_cast<Eigen::Index>(N) * C * H * W);
      for (int nc = 0; nc < N * C; ++nc) {
        const double* gs = g.data() + static_cast<Eigen::Index>(nc) * out_h * out_w;
        double* gd = gx.data() + static_cast<Eigen::Index>(nc) * H * W;
        for (int y = 0; y < out_h; ++y)
          for (int x = 0; x < out_w; ++x) {
            double gv = gs[y * out_w + x];
            gd[ty[y].lo * W + tx[x].lo] += ty[y].w_lo * tx[x].w_lo * gv;
            gd[ty[y].lo * W + tx[x].hi] += ty[y].w_lo * tx[x].w_hi * gv;
            gd[ty[y].hi * W + tx[x].lo] += ty[y].w_hi * tx[x].w_lo * gv;
            gd[ty[y].hi * W + tx[x].hi] += ty[y].w_hi * tx[x].w_hi * gv;
          }
      }
      t.accumulate(xn, gx);
    });
  }
  return out;
}

// -------------------------------------------------------------- roi_align

namespace {
struct BilinearTap {
  int y0, x0, y1, x1;
  double w00, w01, w10, w11;
};

// Border-clamped bilinear tap at continuous (y, x).
BilinearTap bilinear_tap(double y, double x, int h, int w) {
  if (y < 0) y = 0;
  if (y > h - 1) y = h - 1;
  if (x < 0) x = 0;
  if (x > w - 1) x = w - 1;
  BilinearTap t;
  t.y0 = static_cast<int>(std::floor(y));
  t.x0 = static_cast<int>(std::floor(x));
  t.y1 = std::min(t.y0 + 1, h - 1);
  t.x1 = std::min(t.x0 + 1, w - 1);
  double ly = y - t.y0, lx = x - t.x0;
  t.w00 = (1 - ly) * (1 - lx);
  t.w01 = (1 - ly) * lx;
  t.w10 = ly * (1 - lx);
  t.w11 = ly * lx;
  return t;
}
}  // namespace

Tensor roi_align(const Tensor& feat, const Box& box, int out_h, int out_w,
                 int samples_per_bin) {
  if (feat.rank() != 3)
    throw std::invalid_argument("roi_align: feature must be C x h x w");
  if (samples_per_bin < 1)
    throw std::invalid_argument("roi_align: samples_per_bin < 1");
  int C = feat.shape[0], h = feat.shape[1], w = feat.shape[2];
  if (box.x0 < 0 || box.y0 < 0 || box.x1 > w || box.y1 > h)
    throw std::invalid_argument("roi_align: box outside the feature plane");

  int spb = samples_per_bin;
  double bin_h = box.height() / out_h;
  double bin_w = box.width() / out_w;

  // one shared tap table across channels
  std::vector<BilinearTap> taps;
  taps.reserve(static_cast<std::size_t>(out_h) * out_w * spb * spb);
  for (int by = 0; by < out_h; ++by)
    for (int bx = 0; bx < out_w; ++bx)
      for (int sy = 0; sy < spb; ++sy)
        for (int sx = 0; sx < spb; ++sx) {
          // half-pixel centers: continuous coordinate c covers pixel
          // index c - 0.5, so a full-plane box with one sample per bin
          // lands exactly on the pixel grid
          double y = box.y0 + (by + (sy + 0.5) / spb) * bin_h - 0.5;
          double x = box.x0 + (bx + (sx + 0.5) / spb) * bin_w - 0.5;
          taps.push_back(bilinear_tap(y, x, h, w));
        }

  double inv_samples = 1.0 / (spb * spb);
  Tensor out;
  out.shape = {C, out_h, out_w};
  out.values.resize(static_cast<Eigen::Index>(C) * out_h * out_w);
  for (int c = 0; c < C; ++c) {
    const double* src = feat.values.data() + static_cast<Eigen::Index>(c) * h * w;
    double* dst = out.values.data() + static_cast<Eigen::Index>(c) * out_h * out_w;
    std::size_t ti = 0;
    for (int bin = 0; bin < out_h * out_w; ++bin) {
      double acc = 0.0;
      for (int s = 0; s < spb * spb; ++s, ++ti) {
        const BilinearTap& t = taps[ti];
        acc += t.w00 * src[t.y0 * w + t.x0] + t.w01 * src[t.y0 * w + t.x1] +
               t.w10 * src[t.y1 * w + t.x0] + t.w11 * src[t.y1 * w + t.x1];
      }
      dst[bin] = acc * inv_samples;
    }
  }

  if (feat.on_tape()) {
    int fn = feat.node;
    out.tape = feat.tape;
    out.requires_grad = true;
    out.node = feat.tape->op(out.shape, [=](const Array& g, Tape& t) {
      Array gf = Array::Zero(static_cast<Eigen::Index>(C) * h * w);
      for (int c = 0; c < C; ++c) {
        const double* gs = g.data() + static_cast<Eigen::Index>(c) * out_h * out_w;
        double* gd = gf.data() + static_cast<Eigen::Index>(c) * h * w;
        std::size_t ti = 0;
        for (int bin = 0; bin < out_h * out_w; ++bin) {
          double gv = gs[bin] * inv_samples;
          for (int s = 0; s < spb * spb; ++s, ++ti) {
            const BilinearTap& tp = taps[ti];
            gd[tp.y0 * w + tp.x0] += tp.w00 * gv;
            gd[tp.y0 * w + tp.x1] += tp.w01 * gv;
            gd[tp.y1 * w + tp.x0] += tp.w10 * gv;
            gd[tp.y1 * w + tp.x1] += tp.w11 * gv;
          }
        }
      }
      t.accumulate(fn, gf);
    });
  }
  return out;
}

}  // namespace dhcnet
