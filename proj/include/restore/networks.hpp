#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "restore/conditioning.hpp"

namespace restore {

// How the per-block normalization sites are driven: by mapping networks fed
// with the label (the conditional model) or by learned per-channel affine
// parameters (the label-free ablations).
enum class Conditioning { MappedLabel, LearnedAffine };

struct GeneratorConfig {
  std::size_t stages = 4;                               // K
  std::vector<std::size_t> channels = {64, 128, 256, 512};  // J_1..J_K
  std::size_t domain_count = 3;                         // N
  std::size_t mapping_hidden = 64;
  double adain_eps = 1e-5;
  double lrelu_slope = 0.2;
  Conditioning conditioning = Conditioning::MappedLabel;
  // Debug switch: skip the normalization sites so hand-built pass-through
  // kernels give an exact identity network (used by tests and dry runs).
  bool debug_bypass_norm = false;

  void validate() const {
    if (stages == 0) throw ConfigError("generator needs at least one stage");
    if (channels.size() != stages)
      throw ConfigError("generator channel list must have one entry per stage: " +
                        std::to_string(channels.size()) + " entries for " +
                        std::to_string(stages) + " stages");
    for (std::size_t c : channels)
      if (c == 0) throw ConfigError("generator stage channels must be positive");
    if (domain_count == 0) throw ConfigError("domain count must be positive");
  }

  std::size_t downsample_factor() const { return std::size_t(1) << stages; }
};

struct DiscriminatorConfig {
  std::vector<std::size_t> channels = {64, 128, 256};  // three stride-2 stages
  double bn_momentum = 0.9;
  double bn_eps = 1e-5;
  double lrelu_slope = 0.2;

  void validate() const {
    if (channels.size() != 3) throw ConfigError("discriminator uses exactly three conv stages");
    for (std::size_t c : channels)
      if (c == 0) throw ConfigError("discriminator channels must be positive");
  }
};

// One 4x4 convolution followed by its conditioning site and leaky rectification.
template <typename T>
struct CondConvBlock {
  Parameter<T> weight, bias;
  std::optional<MappingNetwork<T>> mapnet;  // MappedLabel mode
  Parameter<T> gamma, beta;                 // LearnedAffine mode

  CondConvBlock() = default;
  CondConvBlock(const std::string& prefix, std::size_t cin, std::size_t cout,
                const GeneratorConfig& cfg)
      : weight(prefix + "/w", {cout, cin, 4, 4}), bias(prefix + "/b", {cout}) {
    if (cfg.conditioning == Conditioning::MappedLabel) {
      mapnet.emplace(prefix + "/map", cfg.domain_count, cout, cfg.mapping_hidden);
    } else {
      gamma = Parameter<T>(prefix + "/gamma", {cout});
      beta = Parameter<T>(prefix + "/beta", {cout});
    }
  }

  void init(Rng& rng, T weight_std) {
    for (auto& v : weight.value.data) v = T(rng.normal(0.0, double(weight_std)));
    bias.value.fill(T(0));
    if (mapnet) {
      mapnet->init(rng, weight_std);
    } else {
      gamma.value.fill(T(1));
      beta.value.fill(T(0));
    }
  }

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> ps{&weight, &bias};
    if (mapnet) {
      auto mp = mapnet->parameters();
      ps.insert(ps.end(), mp.begin(), mp.end());
    } else {
      ps.push_back(&gamma);
      ps.push_back(&beta);
    }
    return ps;
  }

  // labels is ignored in LearnedAffine mode.
  Var<T> forward(Tape<T>& t, Var<T> x, Var<T> labels, const GeneratorConfig& cfg) {
    Var<T> h = conv2d(x, t.param(weight), t.param(bias), 1);
    const T slope = T(cfg.lrelu_slope);
    const T eps = T(cfg.adain_eps);
    if (cfg.debug_bypass_norm) {
      // fall through to the activation
    } else if (mapnet) {
      auto [mu, sigma] = mapnet->forward(t, labels, slope);
      h = adain(h, mu, sigma, eps);
    } else {
      h = instance_norm_affine(h, t.param(gamma), t.param(beta), eps);
    }
    return leaky_relu(h, slope);
  }
};

// Conditional generator: encoder stages apply two conditioned blocks then a
// Haar analysis whose three high-pass subbands skip straight to the matching
// decoder stage while the low-pass descends. Each decoder stage concatenates
// the features arriving from below with the stage's low-pass subband, applies
// two conditioned blocks and runs the Haar synthesis with the skipped
// subbands. A final 1x1 convolution maps back to one channel.
template <typename T>
struct Generator {
  GeneratorConfig cfg;
  std::vector<std::array<CondConvBlock<T>, 2>> enc;  // [stage][block]
  std::vector<std::array<CondConvBlock<T>, 2>> dec;
  Parameter<T> out_weight, out_bias;

  Generator() = default;
  Generator(const std::string& prefix, GeneratorConfig config) : cfg(std::move(config)) {
    cfg.validate();
    const std::size_t k = cfg.stages;
    enc.resize(k);
    dec.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t cin = i == 0 ? 1 : cfg.channels[i - 1];
      const std::string ep = prefix + "/enc" + std::to_string(i);
      enc[i][0] = CondConvBlock<T>(ep + "/c0", cin, cfg.channels[i], cfg);
      enc[i][1] = CondConvBlock<T>(ep + "/c1", cfg.channels[i], cfg.channels[i], cfg);

      const std::size_t din =
          i + 1 == k ? cfg.channels[i] : cfg.channels[i + 1] + cfg.channels[i];
      const std::string dp = prefix + "/dec" + std::to_string(i);
      dec[i][0] = CondConvBlock<T>(dp + "/c0", din, cfg.channels[i], cfg);
      dec[i][1] = CondConvBlock<T>(dp + "/c1", cfg.channels[i], cfg.channels[i], cfg);
    }
    out_weight = Parameter<T>(prefix + "/out/w", {1, cfg.channels[0], 1, 1});
    out_bias = Parameter<T>(prefix + "/out/b", {1});
  }

  void init(Rng& rng, T weight_std) {
    for (auto& stage : enc)
      for (auto& block : stage) block.init(rng, weight_std);
    for (auto& stage : dec)
      for (auto& block : stage) block.init(rng, weight_std);
    for (auto& v : out_weight.value.data) v = T(rng.normal(0.0, double(weight_std)));
    out_bias.value.fill(T(0));
  }

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> ps;
    auto absorb = [&](std::vector<Parameter<T>*> more) {
      ps.insert(ps.end(), more.begin(), more.end());
    };
    for (auto& stage : enc)
      for (auto& block : stage) absorb(block.parameters());
    for (auto& stage : dec)
      for (auto& block : stage) absorb(block.parameters());
    ps.push_back(&out_weight);
    ps.push_back(&out_bias);
    return ps;
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (auto* p : parameters()) n += p->value.numel();
    return n;
  }

  bool label_conditioned() const { return cfg.conditioning == Conditioning::MappedLabel; }

  // x: {B,1,H,W}; labels: {B,N} (may be an empty Var in LearnedAffine mode).
  Var<T> forward(Tape<T>& t, Var<T> x, Var<T> labels) {
    const Shape& xs = x.shape();
    if (xs.size() != 4 || xs[1] != 1)
      throw DimensionError("generator input must be {B,1,H,W}, got " + shape_str(xs));
    const std::size_t factor = cfg.downsample_factor();
    if (xs[2] % factor != 0 || xs[3] % factor != 0)
      throw DimensionError("generator input " + shape_str(xs) + " must be divisible by 2^K = " +
                           std::to_string(factor));
    if (label_conditioned()) {
      if (!labels.valid() || labels.shape().size() != 2 || labels.shape()[0] != xs[0] ||
          labels.shape()[1] != cfg.domain_count)
        throw ConfigError("generator expects labels {B," + std::to_string(cfg.domain_count) +
                          "} matching the batch");
    }

    const std::size_t k = cfg.stages;
    std::vector<SubbandVars<T>> bands(k);
    Var<T> cur = x;
    for (std::size_t i = 0; i < k; ++i) {
      cur = enc[i][0].forward(t, cur, labels, cfg);
      cur = enc[i][1].forward(t, cur, labels, cfg);
      bands[i] = haar_down(cur);
      cur = bands[i].ll;
    }
    Var<T> up = cur;  // deepest low-pass
    for (std::size_t ii = k; ii-- > 0;) {
      Var<T> d = (ii + 1 == k) ? up : concat_channels(up, bands[ii].ll);
      d = dec[ii][0].forward(t, d, labels, cfg);
      d = dec[ii][1].forward(t, d, labels, cfg);
      up = haar_up(d, bands[ii].lh, bands[ii].hl, bands[ii].hh);
    }
    return conv2d(up, t.param(out_weight), t.param(out_bias), 1);
  }
};

// Patch discriminator: three stride-2 4x4 convolutions with batch
// normalization and leaky rectification, then a 1x1 convolution producing a
// single-channel score map. Takes only the image (no label).
template <typename T>
struct Discriminator {
  DiscriminatorConfig cfg;
  struct Layer {
    Parameter<T> weight, bias, gamma, beta;
    BatchNormState<T> bn;
  };
  std::vector<Layer> layers;
  Parameter<T> out_weight, out_bias;

  Discriminator() = default;
  Discriminator(const std::string& prefix, DiscriminatorConfig config) : cfg(std::move(config)) {
    cfg.validate();
    layers.resize(cfg.channels.size());
    std::size_t cin = 1;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const std::string lp = prefix + "/l" + std::to_string(i);
      layers[i].weight = Parameter<T>(lp + "/w", {cfg.channels[i], cin, 4, 4});
      layers[i].bias = Parameter<T>(lp + "/b", {cfg.channels[i]});
      layers[i].gamma = Parameter<T>(lp + "/gamma", {cfg.channels[i]});
      layers[i].beta = Parameter<T>(lp + "/beta", {cfg.channels[i]});
      layers[i].bn = BatchNormState<T>(cfg.channels[i]);
      cin = cfg.channels[i];
    }
    out_weight = Parameter<T>(prefix + "/out/w", {1, cin, 1, 1});
    out_bias = Parameter<T>(prefix + "/out/b", {1});
  }

  void init(Rng& rng, T weight_std) {
    for (auto& l : layers) {
      for (auto& v : l.weight.value.data) v = T(rng.normal(0.0, double(weight_std)));
      l.bias.value.fill(T(0));
      l.gamma.value.fill(T(1));
      l.beta.value.fill(T(0));
      l.bn = BatchNormState<T>(l.gamma.value.numel());
    }
    for (auto& v : out_weight.value.data) v = T(rng.normal(0.0, double(weight_std)));
    out_bias.value.fill(T(0));
  }

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> ps;
    for (auto& l : layers) {
      ps.push_back(&l.weight);
      ps.push_back(&l.bias);
      ps.push_back(&l.gamma);
      ps.push_back(&l.beta);
    }
    ps.push_back(&out_weight);
    ps.push_back(&out_bias);
    return ps;
  }

  // image: {B,1,H,W} with H,W >= 8 -> score map {B,1,ceil(H/8),ceil(W/8)}.
  Var<T> forward(Tape<T>& t, Var<T> x, bool training, bool update_running) {
    const Shape& xs = x.shape();
    if (xs.size() != 4 || xs[1] != 1)
      throw DimensionError("discriminator input must be {B,1,H,W}, got " + shape_str(xs));
    if (xs[2] < 8 || xs[3] < 8)
      throw DimensionError("discriminator input " + shape_str(xs) +
                           " too small for three stride-2 stages (needs >= 8)");
    Var<T> h = x;
    for (auto& l : layers) {
      h = conv2d(h, t.param(l.weight), t.param(l.bias), 2);
      h = batch_norm(h, t.param(l.gamma), t.param(l.beta), l.bn, training, update_running,
                     T(cfg.bn_momentum), T(cfg.bn_eps));
      h = leaky_relu(h, T(cfg.lrelu_slope));
    }
    return conv2d(h, t.param(out_weight), t.param(out_bias), 1);
  }
};

}  // namespace restore
