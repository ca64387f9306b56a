#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "patchdesc/error.hpp"
#include "patchdesc/layers.hpp"
#include "patchdesc/tensor.hpp"

namespace patchdesc {

/// Layer sizes of the three-convolution descriptor network.
///
/// The default is the 64x64 network: C1 5x5/6 maps, S1, C2 6x6/21 maps, S2,
/// C3 5x5/55 maps, then a linear 32-unit layer. `reduced()` keeps the same
/// stage sequence on 16x16 inputs so that finite-difference checks stay cheap.
struct Architecture {
  std::size_t input_size = 64;
  std::size_t c1_maps = 6;
  std::size_t c1_kernel = 5;
  std::size_t c2_maps = 21;
  std::size_t c2_kernel = 6;
  std::size_t c3_maps = 55;
  std::size_t c3_kernel = 5;
  std::size_t descriptor_dim = 32;

  static Architecture full() { return {}; }

  // 16 -> C1 14 -> S1 7 -> C2 6 -> S2 3 -> C3 2; the odd S1 output exercises truncation.
  static Architecture reduced() { return {16, 2, 3, 3, 2, 4, 2, 32}; }

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

struct Stage {
  std::string name;
  Shape shape;
};

/// Output shape of every stage for a single-map input patch.
inline std::vector<Stage> shape_plan(const Architecture& arch = Architecture::full()) {
  auto conv_out = [](std::size_t size, std::size_t kernel, const char* stage) {
    if (kernel == 0 || size < kernel) {
      throw Error(ErrorKind::invalid_shape, std::string(stage) + " kernel " + std::to_string(kernel) +
                                                " does not fit a " + std::to_string(size) + " wide input");
    }
    return size - kernel + 1;
  };
  auto pool_out = [](std::size_t size, const char* stage) {
    if (size < 2) throw Error(ErrorKind::invalid_shape, std::string(stage) + " input narrower than 2");
    return size / 2;
  };
  if (arch.c1_maps == 0 || arch.c2_maps == 0 || arch.c3_maps == 0 || arch.descriptor_dim == 0) {
    throw Error(ErrorKind::invalid_shape, "feature map and descriptor counts must be positive");
  }
  std::vector<Stage> plan;
  std::size_t s = conv_out(arch.input_size, arch.c1_kernel, "C1");
  plan.push_back({"C1", {arch.c1_maps, s, s}});
  s = pool_out(s, "S1");
  plan.push_back({"S1", {arch.c1_maps, s, s}});
  s = conv_out(s, arch.c2_kernel, "C2");
  plan.push_back({"C2", {arch.c2_maps, s, s}});
  s = pool_out(s, "S2");
  plan.push_back({"S2", {arch.c2_maps, s, s}});
  s = conv_out(s, arch.c3_kernel, "C3");
  plan.push_back({"C3", {arch.c3_maps, s, s}});
  plan.push_back({"flatten", {arch.c3_maps * s * s}});
  plan.push_back({"FC", {arch.descriptor_dim}});
  return plan;
}

inline std::size_t flatten_size(const Architecture& arch) { return shape_plan(arch)[5].shape[0]; }

/// Every learnable tensor of the network. Gradients use the same type.
template <typename Real>
struct NetworkParams {
  Architecture arch;
  ConvParams<Real> c1;
  ConvParams<Real> c2;
  ConvParams<Real> c3;
  FcParams<Real> fc;

  /// All-zero parameters for `arch`.
  static NetworkParams zeros(const Architecture& arch = Architecture::full()) {
    NetworkParams p;
    p.arch = arch;
    p.c1 = ConvParams<Real>(arch.c1_maps, 1, arch.c1_kernel, arch.c1_kernel);
    p.c2 = ConvParams<Real>(arch.c2_maps, arch.c1_maps, arch.c2_kernel, arch.c2_kernel);
    p.c3 = ConvParams<Real>(arch.c3_maps, arch.c2_maps, arch.c3_kernel, arch.c3_kernel);
    p.fc = FcParams<Real>(arch.descriptor_dim, flatten_size(arch));
    return p;
  }

  /// Visits tensors in checkpoint order with their canonical names.
  template <typename F>
  void for_each_tensor(F&& f) {
    f("c1.kernels", c1.kernels);
    f("c1.bias", c1.bias);
    f("c2.kernels", c2.kernels);
    f("c2.bias", c2.bias);
    f("c3.kernels", c3.kernels);
    f("c3.bias", c3.bias);
    f("fc.weights", fc.weights);
    f("fc.bias", fc.bias);
  }
  template <typename F>
  void for_each_tensor(F&& f) const {
    f("c1.kernels", c1.kernels);
    f("c1.bias", c1.bias);
    f("c2.kernels", c2.kernels);
    f("c2.bias", c2.bias);
    f("c3.kernels", c3.kernels);
    f("c3.bias", c3.bias);
    f("fc.weights", fc.weights);
    f("fc.bias", fc.bias);
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each_tensor([&](const char*, const Tensor<Real>& t) { n += t.size(); });
    return n;
  }

  bool all_finite() const {
    bool ok = true;
    for_each_tensor([&](const char*, const Tensor<Real>& t) { ok = ok && t.all_finite(); });
    return ok;
  }

  /// Throws shape-mismatch when any tensor disagrees with `arch`.
  void validate() const {
    const NetworkParams expected = zeros(arch);
    std::vector<Shape> shapes;
    expected.for_each_tensor([&](const char*, const Tensor<Real>& t) { shapes.push_back(t.shape()); });
    std::size_t i = 0;
    for_each_tensor([&](const char* name, const Tensor<Real>& t) {
      if (t.shape() != shapes[i]) {
        throw Error(ErrorKind::shape_mismatch, std::string(name) + " has shape " + shape_string(t.shape()) +
                                                   ", architecture expects " + shape_string(shapes[i]));
      }
      ++i;
    });
  }

  template <typename Other>
  NetworkParams<Other> cast() const {
    NetworkParams<Other> out;
    out.arch = arch;
    out.c1 = {c1.kernels.template cast<Other>(), c1.bias.template cast<Other>()};
    out.c2 = {c2.kernels.template cast<Other>(), c2.bias.template cast<Other>()};
    out.c3 = {c3.kernels.template cast<Other>(), c3.bias.template cast<Other>()};
    out.fc = {fc.weights.template cast<Other>(), fc.bias.template cast<Other>()};
    return out;
  }

  friend bool operator==(const NetworkParams& a, const NetworkParams& b) {
    return a.arch == b.arch && a.c1.kernels == b.c1.kernels && a.c1.bias == b.c1.bias &&
           a.c2.kernels == b.c2.kernels && a.c2.bias == b.c2.bias && a.c3.kernels == b.c3.kernels &&
           a.c3.bias == b.c3.bias && a.fc.weights == b.fc.weights && a.fc.bias == b.fc.bias;
  }
};

template <typename Real>
using ParamGrads = NetworkParams<Real>;

/// Glorot-uniform kernels and weights, zero biases. Draws happen in double so
/// f32 and f64 networks from one seed differ only by rounding.
template <typename Real>
NetworkParams<Real> init_params(std::uint64_t seed, const Architecture& arch = Architecture::full()) {
  NetworkParams<Real> p = NetworkParams<Real>::zeros(arch);
  std::mt19937_64 rng(seed);
  auto fill = [&rng](Tensor<Real>& t, std::size_t fan_in, std::size_t fan_out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (Real& v : t.values()) v = static_cast<Real>(dist(rng));
  };
  auto fill_conv = [&](ConvParams<Real>& c) {
    const std::size_t area = c.kernel_rows() * c.kernel_cols();
    fill(c.kernels, c.in_maps() * area, c.out_maps() * area);
  };
  fill_conv(p.c1);
  fill_conv(p.c2);
  fill_conv(p.c3);
  fill(p.fc.weights, p.fc.in_units(), p.fc.out_units());
  return p;
}

template <typename Real>
struct NetworkCache {
  Architecture arch;
  ConvCache<Real> c1;
  TanhCache<Real> t1;
  PoolCache s1;
  ConvCache<Real> c2;
  TanhCache<Real> t2;
  PoolCache s2;
  ConvCache<Real> c3;
  TanhCache<Real> t3;
  FcCache<Real> fc;
};

/// descriptor = fc(flatten(tanh(c3(pool(tanh(c2(pool(tanh(c1(patch))))))))))
template <typename Real>
std::pair<Tensor<Real>, NetworkCache<Real>> forward(const NetworkParams<Real>& params, const Tensor<Real>& patch) {
  const Architecture& arch = params.arch;
  if (patch.shape() != Shape{1, arch.input_size, arch.input_size}) {
    throw Error(ErrorKind::shape_mismatch, "network input " + shape_string(patch.shape()) + ", expected 1x" +
                                               std::to_string(arch.input_size) + "x" +
                                               std::to_string(arch.input_size));
  }
  NetworkCache<Real> cache;
  cache.arch = arch;
  auto [a1, k1] = conv2d_forward(patch, params.c1);
  auto [h1, kt1] = tanh_forward(a1);
  auto [p1, ks1] = avgpool2_forward(h1);
  auto [a2, k2] = conv2d_forward(p1, params.c2);
  auto [h2, kt2] = tanh_forward(a2);
  auto [p2, ks2] = avgpool2_forward(h2);
  auto [a3, k3] = conv2d_forward(p2, params.c3);
  auto [h3, kt3] = tanh_forward(a3);
  auto [out, kfc] = fc_forward(h3.reshaped(Shape{h3.size()}), params.fc);
  cache.c1 = std::move(k1);
  cache.t1 = std::move(kt1);
  cache.s1 = std::move(ks1);
  cache.c2 = std::move(k2);
  cache.t2 = std::move(kt2);
  cache.s2 = std::move(ks2);
  cache.c3 = std::move(k3);
  cache.t3 = std::move(kt3);
  cache.fc = std::move(kfc);
  return {std::move(out), std::move(cache)};
}

/// Descriptor only, for inference.
template <typename Real>
Tensor<Real> embed(const NetworkParams<Real>& params, const Tensor<Real>& patch) {
  return forward(params, patch).first;
}

template <typename Real>
struct BackwardResult {
  ParamGrads<Real> grads;
  Tensor<Real> grad_input;  // empty unless requested
};

template <typename Real>
BackwardResult<Real> backward(const NetworkParams<Real>& params, const NetworkCache<Real>& cache,
                              const Tensor<Real>& grad_descriptor, bool want_input_grad = false) {
  if (!(cache.arch == params.arch)) {
    throw Error(ErrorKind::cache_mismatch, "network cache was produced for a different architecture");
  }
  if (grad_descriptor.shape() != Shape{params.arch.descriptor_dim}) {
    throw Error(ErrorKind::shape_mismatch, "descriptor gradient " + shape_string(grad_descriptor.shape()));
  }
  BackwardResult<Real> r;
  r.grads.arch = params.arch;

  FcGrads<Real> gfc = fc_backward(cache.fc, params.fc, grad_descriptor);
  r.grads.fc = {std::move(gfc.weights), std::move(gfc.bias)};
  Tensor<Real> g = tanh_backward(cache.t3, gfc.input.reshaped(cache.t3.output.shape()));

  ConvGrads<Real> g3 = conv2d_backward(cache.c3, params.c3, g);
  r.grads.c3 = {std::move(g3.kernels), std::move(g3.bias)};
  g = tanh_backward(cache.t2, avgpool2_backward(cache.s2, g3.input));

  ConvGrads<Real> g2 = conv2d_backward(cache.c2, params.c2, g);
  r.grads.c2 = {std::move(g2.kernels), std::move(g2.bias)};
  g = tanh_backward(cache.t1, avgpool2_backward(cache.s1, g2.input));

  ConvGrads<Real> g1 = conv2d_backward(cache.c1, params.c1, g, want_input_grad);
  r.grads.c1 = {std::move(g1.kernels), std::move(g1.bias)};
  r.grad_input = std::move(g1.input);
  return r;
}

/// into += scale * grads, tensor by tensor.
template <typename Real>
void accumulate(ParamGrads<Real>& into, const ParamGrads<Real>& grads, Real scale = Real(1)) {
  std::vector<const Tensor<Real>*> src;
  grads.for_each_tensor([&](const char*, const Tensor<Real>& t) { src.push_back(&t); });
  std::size_t i = 0;
  into.for_each_tensor([&](const char*, Tensor<Real>& t) { axpy(t, scale, *src[i++]); });
}

}  // namespace patchdesc
