#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "restore/nn_ops.hpp"
#include "restore/random.hpp"

namespace restore {

// Mapping labels are length-N vectors: one-hot for training domains, free
// points of [-eps, 1+eps]^N for estimated labels of unseen domains.
template <typename T>
Tensor<T> one_hot_label(std::size_t index, std::size_t n) {
  if (index >= n)
    throw ConfigError("one_hot_label: index " + std::to_string(index) + " out of range for N=" +
                      std::to_string(n));
  Tensor<T> c({n});
  c[index] = T(1);
  return c;
}

template <typename T>
void validate_label(const Tensor<T>& c, std::size_t n) {
  if (c.ndim() != 1 || c.dim(0) != n)
    throw ConfigError("mapping label must have length " + std::to_string(n) + ", got " +
                      shape_str(c.shape));
}

// Stacks per-sample labels into the {B,N} batch layout the networks consume.
template <typename T>
Tensor<T> stack_labels(const std::vector<Tensor<T>>& labels) {
  if (labels.empty()) throw ValidationError("stack_labels: empty batch");
  const std::size_t n = labels[0].numel();
  Tensor<T> out({labels.size(), n});
  for (std::size_t b = 0; b < labels.size(); ++b) {
    if (labels[b].numel() != n) throw ConfigError("stack_labels: inconsistent label lengths");
    std::copy_n(labels[b].ptr(), n, out.ptr() + b * n);
  }
  return out;
}

// Target statistics produced for one AdaIN site: one (mu, sigma) pair per
// channel, batch-major.
template <typename T>
struct AdaINStats {
  Tensor<T> mu;     // {B, J}
  Tensor<T> sigma;  // {B, J}
};

// Per-site mapping network: two hidden layers of `hidden` nodes with leaky
// rectification, then a linear layer emitting 2*J values laid out as
// [mu_1..mu_J, sigma_1..sigma_J].
template <typename T>
struct MappingNetwork {
  std::size_t label_dim = 0;  // N
  std::size_t channels = 0;   // J
  Parameter<T> w1, b1, w2, b2, w3, b3;

  MappingNetwork() = default;
  MappingNetwork(const std::string& prefix, std::size_t n, std::size_t j, std::size_t hidden)
      : label_dim(n),
        channels(j),
        w1(prefix + "/w1", {hidden, n}),
        b1(prefix + "/b1", {hidden}),
        w2(prefix + "/w2", {hidden, hidden}),
        b2(prefix + "/b2", {hidden}),
        w3(prefix + "/w3", {2 * j, hidden}),
        b3(prefix + "/b3", {2 * j}) {}

  void init(Rng& rng, T weight_std) {
    for (Parameter<T>* w : {&w1, &w2, &w3})
      for (auto& v : w->value.data) v = T(rng.normal(0.0, double(weight_std)));
    for (Parameter<T>* b : {&b1, &b2, &b3}) b->value.fill(T(0));
  }

  std::vector<Parameter<T>*> parameters() { return {&w1, &b1, &w2, &b2, &w3, &b3}; }

  // c: {B, N} -> (mu {B,J}, sigma {B,J})
  std::pair<Var<T>, Var<T>> forward(Tape<T>& t, Var<T> c, T slope) {
    if (c.shape().size() != 2 || c.shape()[1] != label_dim)
      throw ConfigError("mapping network expects labels of length " + std::to_string(label_dim) +
                        ", got " + shape_str(c.shape()));
    Var<T> h = leaky_relu(linear(c, t.param(w1), t.param(b1)), slope);
    h = leaky_relu(linear(h, t.param(w2), t.param(b2)), slope);
    Var<T> out = linear(h, t.param(w3), t.param(b3));
    return {slice_cols(out, 0, channels), slice_cols(out, channels, 2 * channels)};
  }
};

// Plain evaluation of the mapping network on a single label.
template <typename T>
AdaINStats<T> map_label(MappingNetwork<T>& net, const Tensor<T>& c, T slope = T(0.2)) {
  validate_label(c, net.label_dim);
  Tape<T> t(false);
  Tensor<T> batch({1, net.label_dim});
  std::copy_n(c.ptr(), c.numel(), batch.ptr());
  auto [mu, sigma] = net.forward(t, t.input(std::move(batch)), slope);
  return AdaINStats<T>{mu.value(), sigma.value()};
}

// Plain AdaIN on a {C,H,W} feature map with stats for a single sample.
template <typename T>
Tensor<T> adain_apply(const Tensor<T>& h, const AdaINStats<T>& stats, T eps) {
  if (h.ndim() != 3) throw DimensionError("adain_apply expects a {C,H,W} feature map");
  Tape<T> t(false);
  Tensor<T> batched({1, h.dim(0), h.dim(1), h.dim(2)});
  std::copy_n(h.ptr(), h.numel(), batched.ptr());
  Var<T> out = adain(t.input(std::move(batched)), t.input(stats.mu), t.input(stats.sigma), eps);
  Tensor<T> result(h.shape);
  std::copy_n(out.value().ptr(), result.numel(), result.ptr());
  return result;
}

}  // namespace restore
