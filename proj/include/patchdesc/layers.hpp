#pragma once

// Forward/backward passes for valid convolution, 2x2 average subsampling,
// tanh and fully connected layers. Activations are rank-3 (maps x rows x cols)
// except for the fully connected layer, which works on rank-1 vectors.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "patchdesc/error.hpp"
#include "patchdesc/tensor.hpp"

namespace patchdesc {

template <typename Real>
struct ConvParams {
  Tensor<Real> kernels;  // out_maps x in_maps x kh x kw
  Tensor<Real> bias;     // out_maps

  ConvParams() = default;
  ConvParams(std::size_t out_maps, std::size_t in_maps, std::size_t kh, std::size_t kw)
      : kernels(Shape{out_maps, in_maps, kh, kw}), bias(Shape{out_maps}) {}
  ConvParams(Tensor<Real> k, Tensor<Real> b) : kernels(std::move(k)), bias(std::move(b)) { validate(); }

  std::size_t out_maps() const { return kernels.extent(0); }
  std::size_t in_maps() const { return kernels.extent(1); }
  std::size_t kernel_rows() const { return kernels.extent(2); }
  std::size_t kernel_cols() const { return kernels.extent(3); }

  void validate() const {
    if (kernels.rank() != 4) throw Error(ErrorKind::invalid_shape, "conv kernels must be rank 4");
    if (bias.rank() != 1 || bias.extent(0) != kernels.extent(0)) {
      throw Error(ErrorKind::invalid_shape, "conv bias " + shape_string(bias.shape()) +
                                                " does not match kernels " + shape_string(kernels.shape()));
    }
  }
};

template <typename Real>
struct FcParams {
  Tensor<Real> weights;  // out_units x in_units
  Tensor<Real> bias;     // out_units

  FcParams() = default;
  FcParams(std::size_t out_units, std::size_t in_units)
      : weights(Shape{out_units, in_units}), bias(Shape{out_units}) {}
  FcParams(Tensor<Real> w, Tensor<Real> b) : weights(std::move(w)), bias(std::move(b)) { validate(); }

  std::size_t out_units() const { return weights.extent(0); }
  std::size_t in_units() const { return weights.extent(1); }

  void validate() const {
    if (weights.rank() != 2) throw Error(ErrorKind::invalid_shape, "fc weights must be rank 2");
    if (bias.rank() != 1 || bias.extent(0) != weights.extent(0)) {
      throw Error(ErrorKind::invalid_shape, "fc bias " + shape_string(bias.shape()) +
                                                " does not match weights " + shape_string(weights.shape()));
    }
  }
};

namespace detail {

/// Dot product with eight interleaved partial sums, combined in a fixed order.
template <typename Real>
Real lane_dot(const Real* a, const Real* b, std::size_t n) {
  Real lanes[8] = {};
  std::size_t q = 0;
  for (; q + 8 <= n; q += 8) {
    for (std::size_t l = 0; l < 8; ++l) lanes[l] += a[q + l] * b[q + l];
  }
  for (; q < n; ++q) lanes[q & 7] += a[q] * b[q];
  return ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) + ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Convolution (valid, stride 1, every output map sees every input map)

template <typename Real>
struct ConvCache {
  Tensor<Real> input;
  Shape kernel_shape;
};

template <typename Real>
struct ConvGrads {
  Tensor<Real> input;  // empty when not requested
  Tensor<Real> kernels;
  Tensor<Real> bias;
};

template <typename Real>
Tensor<Real> conv2d(const Tensor<Real>& input, const ConvParams<Real>& p) {
  if (input.rank() != 3 || input.extent(0) != p.in_maps()) {
    throw Error(ErrorKind::shape_mismatch, "conv input " + shape_string(input.shape()) +
                                               " vs kernels " + shape_string(p.kernels.shape()));
  }
  const std::size_t in_maps = p.in_maps();
  const std::size_t h = input.extent(1);
  const std::size_t w = input.extent(2);
  const std::size_t kh = p.kernel_rows();
  const std::size_t kw = p.kernel_cols();
  if (h < kh || w < kw) {
    throw Error(ErrorKind::shape_mismatch, "kernel " + shape_string(p.kernels.shape()) +
                                               " larger than input " + shape_string(input.shape()));
  }
  const std::size_t oh = h - kh + 1;
  const std::size_t ow = w - kw + 1;
  Tensor<Real> out(Shape{p.out_maps(), oh, ow});

  // Rows are computed at the input width ("wide" layout) so every kernel tap
  // is one contiguous multiply-add over the map; the kw - 1 trailing columns
  // of each wide row are discarded.
  const std::size_t span_len = (oh - 1) * w + ow;
  std::vector<Real> wide(oh * w);
  for (std::size_t o = 0; o < p.out_maps(); ++o) {
    std::fill(wide.begin(), wide.end(), p.bias[o]);
    for (std::size_t c = 0; c < in_maps; ++c) {
      const Real* imap = input.data() + c * h * w;
      const Real* kern = p.kernels.data() + (o * in_maps + c) * kh * kw;
      for (std::size_t u = 0; u < kh; ++u) {
        for (std::size_t v = 0; v < kw; ++v) {
          const Real k = kern[u * kw + v];
          const Real* src = imap + u * w + v;
          Real* dst = wide.data();
          for (std::size_t q = 0; q < span_len; ++q) dst[q] += k * src[q];
        }
      }
    }
    Real* omap = out.data() + o * oh * ow;
    for (std::size_t i = 0; i < oh; ++i) std::copy_n(wide.data() + i * w, ow, omap + i * ow);
  }
  return out;
}

template <typename Real>
std::pair<Tensor<Real>, ConvCache<Real>> conv2d_forward(const Tensor<Real>& input, const ConvParams<Real>& p) {
  Tensor<Real> out = conv2d(input, p);
  return {std::move(out), ConvCache<Real>{input, p.kernels.shape()}};
}

/// Gradients of conv2d. `p` must be the parameters the forward pass used.
template <typename Real>
ConvGrads<Real> conv2d_backward(const ConvCache<Real>& cache, const ConvParams<Real>& p,
                                const Tensor<Real>& grad_out, bool want_input_grad = true) {
  if (cache.kernel_shape != p.kernels.shape()) {
    throw Error(ErrorKind::cache_mismatch, "conv cache built for kernels " + shape_string(cache.kernel_shape) +
                                               ", got " + shape_string(p.kernels.shape()));
  }
  const Tensor<Real>& input = cache.input;
  const std::size_t in_maps = p.in_maps();
  const std::size_t out_maps = p.out_maps();
  const std::size_t h = input.extent(1);
  const std::size_t w = input.extent(2);
  const std::size_t kh = p.kernel_rows();
  const std::size_t kw = p.kernel_cols();
  const std::size_t oh = h - kh + 1;
  const std::size_t ow = w - kw + 1;
  if (grad_out.shape() != Shape{out_maps, oh, ow}) {
    throw Error(ErrorKind::shape_mismatch, "conv grad_out " + shape_string(grad_out.shape()) + ", expected " +
                                               shape_string(Shape{out_maps, oh, ow}));
  }

  ConvGrads<Real> g;
  g.kernels = Tensor<Real>(p.kernels.shape());
  g.bias = Tensor<Real>(p.bias.shape());
  if (want_input_grad) g.input = Tensor<Real>(input.shape());

  // Same wide layout as the forward pass; padding columns of the gradient are zero.
  const std::size_t span_len = (oh - 1) * w + ow;
  std::vector<Real> gwide(oh * w);
  for (std::size_t o = 0; o < out_maps; ++o) {
    const Real* gmap = grad_out.data() + o * oh * ow;
    Real bsum = 0;
    for (std::size_t q = 0; q < oh * ow; ++q) bsum += gmap[q];
    g.bias[o] = bsum;
    for (std::size_t i = 0; i < oh; ++i) std::copy_n(gmap + i * ow, ow, gwide.data() + i * w);

    for (std::size_t c = 0; c < in_maps; ++c) {
      const Real* imap = input.data() + c * h * w;
      const Real* kern = p.kernels.data() + (o * in_maps + c) * kh * kw;
      Real* gkern = g.kernels.data() + (o * in_maps + c) * kh * kw;
      Real* gin = want_input_grad ? g.input.data() + c * h * w : nullptr;
      for (std::size_t u = 0; u < kh; ++u) {
        for (std::size_t v = 0; v < kw; ++v) {
          const Real* src = imap + u * w + v;
          gkern[u * kw + v] = detail::lane_dot(gwide.data(), src, span_len);
          if (gin != nullptr) {
            const Real k = kern[u * kw + v];
            Real* dst = gin + u * w + v;
            for (std::size_t q = 0; q < span_len; ++q) dst[q] += k * gwide[q];
          }
        }
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// 2x2 average subsampling, odd trailing row/column dropped

struct PoolCache {
  Shape input_shape;
};

template <typename Real>
std::pair<Tensor<Real>, PoolCache> avgpool2_forward(const Tensor<Real>& input) {
  if (input.rank() != 3 || input.extent(1) < 2 || input.extent(2) < 2) {
    throw Error(ErrorKind::shape_mismatch, "avgpool2 needs maps x rows x cols with rows, cols >= 2, got " +
                                               shape_string(input.shape()));
  }
  const std::size_t maps = input.extent(0);
  const std::size_t h = input.extent(1);
  const std::size_t w = input.extent(2);
  const std::size_t oh = h / 2;
  const std::size_t ow = w / 2;
  Tensor<Real> out(Shape{maps, oh, ow});
  const Real quarter = Real(0.25);
  for (std::size_t c = 0; c < maps; ++c) {
    const Real* imap = input.data() + c * h * w;
    Real* omap = out.data() + c * oh * ow;
    for (std::size_t i = 0; i < oh; ++i) {
      const Real* r0 = imap + 2 * i * w;
      const Real* r1 = r0 + w;
      for (std::size_t j = 0; j < ow; ++j) {
        omap[i * ow + j] = quarter * (r0[2 * j] + r0[2 * j + 1] + r1[2 * j] + r1[2 * j + 1]);
      }
    }
  }
  return {std::move(out), PoolCache{input.shape()}};
}

template <typename Real>
Tensor<Real> avgpool2_backward(const PoolCache& cache, const Tensor<Real>& grad_out) {
  const std::size_t maps = cache.input_shape.at(0);
  const std::size_t h = cache.input_shape.at(1);
  const std::size_t w = cache.input_shape.at(2);
  const std::size_t oh = h / 2;
  const std::size_t ow = w / 2;
  if (grad_out.shape() != Shape{maps, oh, ow}) {
    throw Error(ErrorKind::shape_mismatch, "avgpool2 grad_out " + shape_string(grad_out.shape()) +
                                               ", expected " + shape_string(Shape{maps, oh, ow}));
  }
  Tensor<Real> grad_in(cache.input_shape);
  const Real quarter = Real(0.25);
  for (std::size_t c = 0; c < maps; ++c) {
    const Real* gmap = grad_out.data() + c * oh * ow;
    Real* imap = grad_in.data() + c * h * w;
    for (std::size_t i = 0; i < oh; ++i) {
      Real* r0 = imap + 2 * i * w;
      Real* r1 = r0 + w;
      for (std::size_t j = 0; j < ow; ++j) {
        const Real g = quarter * gmap[i * ow + j];
        r0[2 * j] = g;
        r0[2 * j + 1] = g;
        r1[2 * j] = g;
        r1[2 * j + 1] = g;
      }
    }
  }
  return grad_in;
}

// ---------------------------------------------------------------------------
// tanh

template <typename Real>
struct TanhCache {
  Tensor<Real> output;
};

template <typename Real>
std::pair<Tensor<Real>, TanhCache<Real>> tanh_forward(const Tensor<Real>& input) {
  Tensor<Real> out = input;
  for (Real& v : out.values()) v = std::tanh(v);
  TanhCache<Real> cache{out};
  return {std::move(out), std::move(cache)};
}

template <typename Real>
Tensor<Real> tanh_backward(const TanhCache<Real>& cache, const Tensor<Real>& grad_out) {
  if (grad_out.shape() != cache.output.shape()) {
    throw Error(ErrorKind::shape_mismatch, "tanh grad_out " + shape_string(grad_out.shape()) + ", expected " +
                                               shape_string(cache.output.shape()));
  }
  Tensor<Real> grad_in(grad_out.shape());
  const auto y = cache.output.values();
  const auto g = grad_out.values();
  auto dst = grad_in.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = g[i] * (Real(1) - y[i] * y[i]);
  return grad_in;
}

// ---------------------------------------------------------------------------
// Fully connected, linear

template <typename Real>
struct FcCache {
  Tensor<Real> input;
  Shape weight_shape;
};

template <typename Real>
struct FcGrads {
  Tensor<Real> input;
  Tensor<Real> weights;
  Tensor<Real> bias;
};

template <typename Real>
std::pair<Tensor<Real>, FcCache<Real>> fc_forward(const Tensor<Real>& input, const FcParams<Real>& p) {
  if (input.rank() != 1 || input.extent(0) != p.in_units()) {
    throw Error(ErrorKind::shape_mismatch, "fc input " + shape_string(input.shape()) + " vs weights " +
                                               shape_string(p.weights.shape()));
  }
  const std::size_t n = p.in_units();
  Tensor<Real> out(Shape{p.out_units()});
  for (std::size_t r = 0; r < p.out_units(); ++r) {
    out[r] = p.bias[r] + dot<Real>({p.weights.data() + r * n, n}, input.values());
  }
  return {std::move(out), FcCache<Real>{input, p.weights.shape()}};
}

template <typename Real>
FcGrads<Real> fc_backward(const FcCache<Real>& cache, const FcParams<Real>& p, const Tensor<Real>& grad_out) {
  if (cache.weight_shape != p.weights.shape()) {
    throw Error(ErrorKind::cache_mismatch, "fc cache built for weights " + shape_string(cache.weight_shape) +
                                               ", got " + shape_string(p.weights.shape()));
  }
  if (grad_out.shape() != Shape{p.out_units()}) {
    throw Error(ErrorKind::shape_mismatch, "fc grad_out " + shape_string(grad_out.shape()));
  }
  const std::size_t n = p.in_units();
  FcGrads<Real> g{Tensor<Real>(Shape{n}), Tensor<Real>(p.weights.shape()), grad_out};
  for (std::size_t r = 0; r < p.out_units(); ++r) {
    const Real gr = grad_out[r];
    const Real* wrow = p.weights.data() + r * n;
    Real* gwrow = g.weights.data() + r * n;
    for (std::size_t c = 0; c < n; ++c) {
      gwrow[c] = gr * cache.input[c];
      g.input[c] += gr * wrow[c];
    }
  }
  return g;
}

}  // namespace patchdesc
