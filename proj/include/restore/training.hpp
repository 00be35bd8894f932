#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "restore/data.hpp"
#include "restore/losses.hpp"
#include "restore/networks.hpp"

namespace restore {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

// Ablation matrix: M1/M2 train one domain with plain least squares, M3/M4 pool
// all domains with the imbalance weights, and only the proposed mode conditions
// the networks on mapping labels.
enum class TrainMode { M1, M2, M3, M4, Proposed };

inline TrainMode train_mode_from_string(const std::string& s) {
  if (s == "m1") return TrainMode::M1;
  if (s == "m2") return TrainMode::M2;
  if (s == "m3") return TrainMode::M3;
  if (s == "m4") return TrainMode::M4;
  if (s == "proposed") return TrainMode::Proposed;
  throw ConfigError("unknown training mode '" + s + "' (m1|m2|m3|m4|proposed)");
}

inline std::string to_string(TrainMode m) {
  switch (m) {
    case TrainMode::M1: return "m1";
    case TrainMode::M2: return "m2";
    case TrainMode::M3: return "m3";
    case TrainMode::M4: return "m4";
    case TrainMode::Proposed: return "proposed";
  }
  return "?";
}

inline bool mode_uses_labels(TrainMode m) { return m == TrainMode::Proposed; }
inline bool mode_uses_cycle(TrainMode m) {
  return m == TrainMode::M2 || m == TrainMode::M4 || m == TrainMode::Proposed;
}
inline bool mode_uses_domain_weights(TrainMode m) {
  return m == TrainMode::M3 || m == TrainMode::M4 || m == TrainMode::Proposed;
}
inline bool mode_single_domain(TrainMode m) { return m == TrainMode::M1 || m == TrainMode::M2; }

struct TrainConfig {
  double learning_rate = 2e-4;
  double adam_beta1 = 0.5;  // customary GAN setting; the betas are a recorded choice
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  double lambda1 = 10.0;  // cycle-consistency weight
  double lambda2 = 10.0;  // weighted least-squares weight
  double init_std = 0.01;
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::Proposed;
  double air_threshold = 0.01;  // skip training slices with content below this fraction
  Reduction reduction = Reduction::Mean;
  WlsWeighting wls_weighting = WlsWeighting::InsideNorm;
  GanTargets gan_targets = GanTargets::Standard;

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (epochs == 0) throw ConfigError("epochs must be positive");
    if (batch_size < 2) throw ConfigError("batch_size must be at least 2");
    if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) throw ConfigError("lambdas must be nonnegative");
  }
};

inline json train_config_json(const TrainConfig& c) {
  json j;
  j["learning_rate"] = c.learning_rate;
  j["adam_beta1"] = c.adam_beta1;
  j["adam_beta2"] = c.adam_beta2;
  j["adam_eps"] = c.adam_eps;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["lambda1"] = c.lambda1;
  j["lambda2"] = c.lambda2;
  j["init_std"] = c.init_std;
  j["seed"] = c.seed;
  j["mode"] = to_string(c.mode);
  j["air_threshold"] = c.air_threshold;
  j["reduction"] = c.reduction == Reduction::Mean ? "mean" : "sum";
  j["wls_weighting"] = c.wls_weighting == WlsWeighting::InsideNorm ? "inside" : "outside";
  j["gan_targets"] = c.gan_targets == GanTargets::Standard ? "standard" : "printed";
  return j;
}

inline TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
  c.adam_eps = j.value("adam_eps", c.adam_eps);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lambda1 = j.value("lambda1", c.lambda1);
  c.lambda2 = j.value("lambda2", c.lambda2);
  c.init_std = j.value("init_std", c.init_std);
  c.seed = j.value("seed", c.seed);
  c.mode = train_mode_from_string(j.value("mode", "proposed"));
  c.air_threshold = j.value("air_threshold", c.air_threshold);
  c.reduction = j.value("reduction", "mean") == "sum" ? Reduction::Sum : Reduction::Mean;
  c.wls_weighting = j.value("wls_weighting", "inside") == "outside" ? WlsWeighting::OutsideNorm
                                                                    : WlsWeighting::InsideNorm;
  c.gan_targets =
      j.value("gan_targets", "standard") == "printed" ? GanTargets::PaperPrinted
                                                      : GanTargets::Standard;
  return c;
}

inline json generator_config_json(const GeneratorConfig& c) {
  json j;
  j["stages"] = c.stages;
  j["channels"] = c.channels;
  j["domain_count"] = c.domain_count;
  j["mapping_hidden"] = c.mapping_hidden;
  j["adain_eps"] = c.adain_eps;
  j["lrelu_slope"] = c.lrelu_slope;
  j["conditioning"] = c.conditioning == Conditioning::MappedLabel ? "mapped" : "affine";
  if (c.debug_bypass_norm) j["debug_bypass_norm"] = true;
  return j;
}

inline GeneratorConfig generator_config_from_json(const json& j) {
  GeneratorConfig c;
  c.stages = j.value("stages", c.stages);
  c.channels = j.value("channels", c.channels);
  c.domain_count = j.value("domain_count", c.domain_count);
  c.mapping_hidden = j.value("mapping_hidden", c.mapping_hidden);
  c.adain_eps = j.value("adain_eps", c.adain_eps);
  c.lrelu_slope = j.value("lrelu_slope", c.lrelu_slope);
  c.conditioning = j.value("conditioning", "mapped") == std::string("affine")
                       ? Conditioning::LearnedAffine
                       : Conditioning::MappedLabel;
  c.debug_bypass_norm = j.value("debug_bypass_norm", false);
  return c;
}

inline json discriminator_config_json(const DiscriminatorConfig& c) {
  json j;
  j["channels"] = c.channels;
  j["bn_momentum"] = c.bn_momentum;
  j["bn_eps"] = c.bn_eps;
  j["lrelu_slope"] = c.lrelu_slope;
  return j;
}

inline DiscriminatorConfig discriminator_config_from_json(const json& j) {
  DiscriminatorConfig c;
  c.channels = j.value("channels", c.channels);
  c.bn_momentum = j.value("bn_momentum", c.bn_momentum);
  c.bn_eps = j.value("bn_eps", c.bn_eps);
  c.lrelu_slope = j.value("lrelu_slope", c.lrelu_slope);
  return c;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

template <typename T>
class Adam {
 public:
  Adam(std::vector<Parameter<T>*> params, const TrainConfig& cfg)
      : params_(std::move(params)),
        lr_(T(cfg.learning_rate)),
        b1_(T(cfg.adam_beta1)),
        b2_(T(cfg.adam_beta2)),
        eps_(T(cfg.adam_eps)) {
    state_.reserve(params_.size());
    for (auto* p : params_) state_.push_back({Tensor<T>(p->value.shape), Tensor<T>(p->value.shape)});
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

  void step() {
    ++t_;
    const T c1 = T(1) - std::pow(b1_, T(t_));
    const T c2 = T(1) - std::pow(b2_, T(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Parameter<T>& p = *params_[i];
      if (p.grad.numel() != p.value.numel()) continue;  // never touched this step
      Tensor<T>& m = state_[i].m;
      Tensor<T>& v = state_[i].v;
      for (std::size_t k = 0; k < p.value.numel(); ++k) {
        const T g = p.grad[k];
        m[k] = b1_ * m[k] + (T(1) - b1_) * g;
        v[k] = b2_ * v[k] + (T(1) - b2_) * g * g;
        p.value[k] -= lr_ * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
      }
    }
  }

 private:
  struct State {
    Tensor<T> m, v;
  };
  std::vector<Parameter<T>*> params_;
  std::vector<State> state_;
  T lr_, b1_, b2_, eps_;
  std::size_t t_ = 0;
};

// ---------------------------------------------------------------------------
// Checkpoint
// ---------------------------------------------------------------------------

template <typename T>
struct Checkpoint {
  GeneratorConfig gen_config;
  DiscriminatorConfig disc_config;
  TrainConfig train_config;
  std::vector<std::string> domain_names;
  std::size_t epoch = 0;
  std::string rng_state;
  // Internal intensity normalization fitted on the training pool; inputs are
  // multiplied by this before the networks and outputs divided by it, so the
  // artifact consumes and produces native units.
  T intensity_norm = T(1);

  Generator<T> g, f;
  Discriminator<T> dx, dz;

  Checkpoint() = default;
  Checkpoint(GeneratorConfig gc, DiscriminatorConfig dc, TrainConfig tc)
      : gen_config(gc),
        disc_config(dc),
        train_config(tc),
        g("G", gc),
        f("F", gc),
        dx("DX", dc),
        dz("DZ", dc) {}

  struct NamedTensor {
    std::string name;
    Tensor<T>* tensor;
  };

  // Every serialized tensor: parameters plus batch-norm running statistics,
  // in a stable order.
  std::vector<NamedTensor> state_tensors() {
    std::vector<NamedTensor> out;
    for (Generator<T>* net : {&g, &f})
      for (auto* p : net->parameters()) out.push_back({p->name, &p->value});
    for (Discriminator<T>* net : {&dx, &dz}) {
      for (auto* p : net->parameters()) out.push_back({p->name, &p->value});
      for (std::size_t i = 0; i < net->layers.size(); ++i) {
        auto& l = net->layers[i];
        out.push_back({l.weight.name + ".bn_mean", &l.bn.running_mean});
        out.push_back({l.weight.name + ".bn_var", &l.bn.running_var});
      }
    }
    return out;
  }
};

namespace detail {

template <typename T>
constexpr const char* dtype_name() {
  if constexpr (std::is_same_v<T, float>) return "float32";
  else return "float64";
}

}  // namespace detail

template <typename T>
void save_checkpoint(Checkpoint<T>& ck, const fs::path& dir) {
  fs::create_directories(dir);
  json m;
  m["schema_version"] = 1;
  m["kind"] = "checkpoint";
  m["dtype"] = detail::dtype_name<T>();
  m["epoch"] = ck.epoch;
  m["rng_state"] = ck.rng_state;
  m["intensity_norm"] = double(ck.intensity_norm);
  m["train_config"] = train_config_json(ck.train_config);
  m["generator_config"] = generator_config_json(ck.gen_config);
  m["discriminator_config"] = discriminator_config_json(ck.disc_config);
  m["domains"] = ck.domain_names;
  m["tensors"] = json::array();

  std::ofstream bin(dir / "params.bin", std::ios::binary);
  std::size_t offset = 0;
  for (auto& nt : ck.state_tensors()) {
    const std::size_t bytes = nt.tensor->numel() * sizeof(T);
    json jt;
    jt["name"] = nt.name;
    jt["shape"] = nt.tensor->shape;
    jt["offset"] = offset;
    jt["bytes"] = bytes;
    m["tensors"].push_back(jt);
    bin.write(reinterpret_cast<const char*>(nt.tensor->ptr()), std::streamsize(bytes));
    offset += bytes;
  }
  if (!bin) throw IngestionError("cannot write checkpoint tensors to " + dir.string());
  std::ofstream mf(dir / "manifest.json");
  mf << m.dump(2) << "\n";
  if (!mf) throw IngestionError("cannot write checkpoint manifest to " + dir.string());
}

template <typename T = float>
Checkpoint<T> load_checkpoint(const fs::path& dir) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw IngestionError("missing checkpoint manifest in " + dir.string());
  json m;
  try {
    mf >> m;
  } catch (const json::exception& e) {
    throw IngestionError("malformed checkpoint manifest: " + std::string(e.what()));
  }
  if (m.value("kind", "") != "checkpoint")
    throw IngestionError(dir.string() + " does not hold a checkpoint");
  if (m.value("dtype", "") != detail::dtype_name<T>())
    throw IngestionError("checkpoint dtype " + m.value("dtype", "?") + " does not match " +
                         detail::dtype_name<T>());

  Checkpoint<T> ck(generator_config_from_json(m.at("generator_config")),
                   discriminator_config_from_json(m.at("discriminator_config")),
                   train_config_from_json(m.at("train_config")));
  ck.epoch = m.value("epoch", 0ULL);
  ck.rng_state = m.value("rng_state", "");
  ck.intensity_norm = T(m.value("intensity_norm", 1.0));
  if (m.contains("domains")) ck.domain_names = m["domains"].get<std::vector<std::string>>();

  std::ifstream bin(dir / "params.bin", std::ios::binary);
  if (!bin) throw IngestionError("missing params.bin in " + dir.string());

  auto tensors = ck.state_tensors();
  std::size_t cursor = 0;
  const auto& jts = m.at("tensors");
  if (jts.size() != tensors.size())
    throw IngestionError("checkpoint tensor count mismatch: manifest lists " +
                         std::to_string(jts.size()) + ", model expects " +
                         std::to_string(tensors.size()));
  for (const auto& jt : jts) {
    const std::string name = jt.at("name").get<std::string>();
    if (name != tensors[cursor].name)
      throw IngestionError("checkpoint tensor order mismatch at '" + name + "' (expected '" +
                           tensors[cursor].name + "')");
    const auto shape = jt.at("shape").get<Shape>();
    if (shape != tensors[cursor].tensor->shape)
      throw IngestionError("checkpoint tensor '" + name + "' has shape " + shape_str(shape) +
                           ", model expects " + shape_str(tensors[cursor].tensor->shape));
    bin.seekg(std::streamoff(jt.at("offset").get<std::size_t>()));
    bin.read(reinterpret_cast<char*>(tensors[cursor].tensor->ptr()),
             std::streamsize(jt.at("bytes").get<std::size_t>()));
    if (!bin) throw IngestionError("truncated checkpoint payload at tensor '" + name + "'");
    ++cursor;
  }
  return ck;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct EpochLoss {
  std::size_t epoch = 0;
  LossBreakdown losses;
};

inline void write_loss_csv(const std::vector<EpochLoss>& log, const fs::path& path) {
  std::ofstream f(path);
  f << "epoch,adv_g,adv_d,cyc,wls,total_g,total_d\n";
  for (const auto& e : log)
    f << e.epoch << ',' << e.losses.adv_g << ',' << e.losses.adv_d << ',' << e.losses.cyc << ','
      << e.losses.wls << ',' << e.losses.total_g << ',' << e.losses.total_d << '\n';
  if (!f) throw IngestionError("cannot write loss log to " + path.string());
}

struct TrainResult {
  Checkpoint<float> checkpoint;
  std::vector<EpochLoss> log;
};

namespace detail {

inline void check_finite_loss(float value, const char* term, std::size_t epoch,
                              std::size_t batch) {
  if (!std::isfinite(value))
    throw NumericError(std::string("non-finite ") + term + " loss at epoch " +
                       std::to_string(epoch) + ", batch " + std::to_string(batch));
}

}  // namespace detail

// Min-max training over the pooled multi-domain slice pairs. One discriminator
// step then one generator/backward step per batch, Adam updates, batches drawn
// uniformly from the shuffled pool with every sample carrying its domain's
// label and weight.
inline TrainResult train(const Dataset& ds, GeneratorConfig gcfg, DiscriminatorConfig dcfg,
                         TrainConfig cfg,
                         const std::function<void(const EpochLoss&)>& on_epoch = nullptr) {
  cfg.validate();
  const std::size_t n_domains = ds.domains.size();
  if (n_domains == 0) throw ValidationError("train: dataset has no domains");
  if (mode_single_domain(cfg.mode) && n_domains != 1)
    throw ValidationError("mode " + to_string(cfg.mode) +
                          " trains a single domain; select one domain from the dataset or use "
                          "m3/m4/proposed");
  if (mode_uses_labels(cfg.mode) && n_domains < 2)
    throw ValidationError("proposed mode needs at least two domains for label conditioning");

  gcfg.domain_count = n_domains;
  gcfg.conditioning =
      mode_uses_labels(cfg.mode) ? Conditioning::MappedLabel : Conditioning::LearnedAffine;
  gcfg.validate();
  dcfg.validate();

  auto pairs = slice_pairs(ds, "train");
  std::erase_if(pairs, [&](const SlicePair& p) { return p.content_fraction < cfg.air_threshold; });
  if (pairs.empty()) throw ValidationError("train: no training slices above the air threshold");
  for (const auto& p : pairs) {
    if (p.x.dim(0) % gcfg.downsample_factor() != 0 || p.x.dim(1) % gcfg.downsample_factor() != 0)
      throw DimensionError("training slices " + shape_str(p.x.shape) +
                           " are not divisible by 2^K = " +
                           std::to_string(gcfg.downsample_factor()));
  }

  // Intensity normalization fitted on the training pool: mean standard-scan
  // intensity maps to 1, which keeps the GAN and the init scale compatible
  // with arbitrary native units.
  double intensity_sum = 0.0;
  std::size_t intensity_n = 0;
  for (const auto& p : pairs) {
    for (float v : p.x.data) intensity_sum += double(v);
    intensity_n += p.x.numel();
  }
  const double mean_intensity = intensity_sum / double(intensity_n);
  const float norm = mean_intensity > 0.0 ? float(1.0 / mean_intensity) : 1.0f;

  // Imbalance weights from the actual training pool (after air filtering).
  std::vector<std::int64_t> counts(n_domains, 0);
  for (const auto& p : pairs) counts[std::size_t(p.domain_index)]++;
  std::vector<float> weight_of(n_domains, 1.0f);
  if (mode_uses_domain_weights(cfg.mode)) {
    for (std::int64_t c : counts)
      if (c == 0) throw ValidationError("train: a domain has no training slices");
    auto dw = domain_weights(counts);
    for (std::size_t i = 0; i < n_domains; ++i) weight_of[i] = float(dw.w[i]);
  }

  TrainResult result;
  result.checkpoint = Checkpoint<float>(gcfg, dcfg, cfg);
  for (const auto& d : ds.domains) result.checkpoint.domain_names.push_back(d.name);
  Checkpoint<float>& ck = result.checkpoint;
  ck.intensity_norm = norm;

  Rng rng(cfg.seed);
  ck.g.init(rng, float(cfg.init_std));
  ck.f.init(rng, float(cfg.init_std));
  ck.dx.init(rng, float(cfg.init_std));
  ck.dz.init(rng, float(cfg.init_std));

  auto gen_params = ck.g.parameters();
  {
    auto fp = ck.f.parameters();
    gen_params.insert(gen_params.end(), fp.begin(), fp.end());
  }
  auto disc_params = ck.dx.parameters();
  {
    auto dp = ck.dz.parameters();
    disc_params.insert(disc_params.end(), dp.begin(), dp.end());
  }
  Adam<float> opt_g(gen_params, cfg);
  Adam<float> opt_d(disc_params, cfg);

  const std::size_t hh = pairs[0].x.dim(0), ww = pairs[0].x.dim(1);
  const bool with_labels = mode_uses_labels(cfg.mode);
  const bool with_cycle = mode_uses_cycle(cfg.mode);

  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    LossBreakdown epoch_sum;
    std::size_t batches = 0;

    for (std::size_t start = 0; start + 2 <= order.size(); start += cfg.batch_size) {
      const std::size_t bsz = std::min(cfg.batch_size, order.size() - start);
      if (bsz < 2) break;  // batch statistics need at least two samples

      Tensor<float> zb({bsz, 1, hh, ww}), xb({bsz, 1, hh, ww});
      Tensor<float> labels({bsz, n_domains});
      std::vector<float> weights(bsz);
      for (std::size_t b = 0; b < bsz; ++b) {
        const SlicePair& p = pairs[order[start + b]];
        for (std::size_t i = 0; i < hh * ww; ++i) {
          zb[b * hh * ww + i] = p.z[i] * norm;
          xb[b * hh * ww + i] = p.x[i] * norm;
        }
        labels[b * n_domains + std::size_t(p.domain_index)] = 1.0f;
        weights[b] = weight_of[std::size_t(p.domain_index)];
      }

      // One generator graph serves both steps: its detached values feed the
      // discriminator update, then the same graph continues into the
      // generator objective against the freshly updated discriminators.
      Tape<float> t(true);
      Var<float> vz = t.input(zb), vx = t.input(xb);
      Var<float> vc = with_labels ? t.input(labels) : Var<float>{};
      Var<float> fake_x = ck.g.forward(t, vz, vc);
      Var<float> fake_z = ck.f.forward(t, vx, vc);

      // --- discriminator step (fakes detached; running stats update here) ---
      float adv_d_value = 0.0f;
      {
        Tape<float> td(true);
        Var<float> dxr = ck.dx.forward(td, td.input(xb), true, true);
        Var<float> dxf = ck.dx.forward(td, td.input(fake_x.value()), true, true);
        Var<float> dzr = ck.dz.forward(td, td.input(zb), true, true);
        Var<float> dzf = ck.dz.forward(td, td.input(fake_z.value()), true, true);
        Var<float> adv_d = add(lsgan_d_term(dxr, dxf, cfg.gan_targets, cfg.reduction),
                               lsgan_d_term(dzr, dzf, cfg.gan_targets, cfg.reduction));
        adv_d_value = adv_d.scalar();
        detail::check_finite_loss(adv_d_value, "adversarial (discriminator)", epoch, batches);
        opt_d.zero_grad();
        td.backward(adv_d);
        opt_d.step();
      }

      // --- generator/backward step against the updated discriminators ---
      float adv_g_value = 0.0f, cyc_value = 0.0f, wls_value = 0.0f;
      {
        t.freeze_params(true);
        Var<float> sx = ck.dx.forward(t, fake_x, true, false);
        Var<float> sz = ck.dz.forward(t, fake_z, true, false);
        t.freeze_params(false);
        Var<float> adv_g = add(lsgan_g_term(sx, cfg.gan_targets, cfg.reduction),
                               lsgan_g_term(sz, cfg.gan_targets, cfg.reduction));

        Var<float> wls = weighted_ls_loss(sub(fake_x, vx), sub(fake_z, vz), weights,
                                          cfg.wls_weighting, cfg.reduction);
        Var<float> total = add(adv_g, mul_scalar(wls, float(cfg.lambda2)));
        if (with_cycle) {
          Var<float> cyc_z = ck.f.forward(t, fake_x, vc);
          Var<float> cyc_x = ck.g.forward(t, fake_z, vc);
          Var<float> cyc = cycle_loss(vz, vx, cyc_z, cyc_x, cfg.reduction);
          cyc_value = cyc.scalar();
          detail::check_finite_loss(cyc_value, "cycle-consistency", epoch, batches);
          total = add(total, mul_scalar(cyc, float(cfg.lambda1)));
        }
        adv_g_value = adv_g.scalar();
        wls_value = wls.scalar();
        detail::check_finite_loss(adv_g_value, "adversarial (generator)", epoch, batches);
        detail::check_finite_loss(wls_value, "weighted least-squares", epoch, batches);

        opt_g.zero_grad();
        t.backward(total);
        opt_g.step();
      }

      LossBreakdown b = make_breakdown(adv_g_value, adv_d_value, cyc_value, wls_value,
                                       cfg.lambda1, cfg.lambda2);
      epoch_sum.adv_g += b.adv_g;
      epoch_sum.adv_d += b.adv_d;
      epoch_sum.cyc += b.cyc;
      epoch_sum.wls += b.wls;
      ++batches;
    }

    if (batches == 0) throw ValidationError("train: not enough slices for a single batch");
    EpochLoss el;
    el.epoch = epoch;
    el.losses = make_breakdown(epoch_sum.adv_g / double(batches), epoch_sum.adv_d / double(batches),
                               epoch_sum.cyc / double(batches), epoch_sum.wls / double(batches),
                               cfg.lambda1, cfg.lambda2);
    result.log.push_back(el);
    ck.epoch = epoch + 1;
    if (on_epoch) on_epoch(el);
  }

  ck.rng_state = rng.save_state();
  return result;
}

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

namespace detail {

struct PadPlan {
  std::size_t in_h, in_w;    // original slice dims
  std::size_t out_h, out_w;  // network dims (multiple of 2^K)
  // offsets of the overlap region in each coordinate frame
  std::size_t src_y, src_x;  // where the network window starts in the input
  std::size_t dst_y, dst_x;  // where the input lands in the network frame
  std::size_t copy_h, copy_w;
};

inline std::size_t nearest_multiple(std::size_t n, std::size_t f) {
  const std::size_t k = (n + f / 2) / f;  // round to nearest, at least one block
  return std::max<std::size_t>(1, k) * f;
}

inline PadPlan plan_pad(std::size_t h, std::size_t w, std::size_t factor) {
  PadPlan p{};
  p.in_h = h;
  p.in_w = w;
  p.out_h = nearest_multiple(h, factor);
  p.out_w = nearest_multiple(w, factor);
  p.copy_h = std::min(p.in_h, p.out_h);
  p.copy_w = std::min(p.in_w, p.out_w);
  p.src_y = p.in_h > p.out_h ? (p.in_h - p.out_h) / 2 : 0;
  p.src_x = p.in_w > p.out_w ? (p.in_w - p.out_w) / 2 : 0;
  p.dst_y = p.out_h > p.in_h ? (p.out_h - p.in_h) / 2 : 0;
  p.dst_x = p.out_w > p.in_w ? (p.out_w - p.in_w) / 2 : 0;
  return p;
}

}  // namespace detail

// Applies the trained correction network slice by slice with a fixed label.
// Slices are center-padded or center-cropped to the nearest multiple of 2^K
// for the forward pass; the output is mapped back onto the input geometry
// (cropped margins pass the input through unchanged).
inline Volume infer(Checkpoint<float>& ck, const Volume& volume, const Tensor<float>& label,
                    std::size_t slice_chunk = 16) {
  validate_volume(volume);
  const bool with_labels = ck.g.label_conditioned();
  if (with_labels) validate_label(label, ck.gen_config.domain_count);

  const std::size_t S = volume.slices(), H = volume.rows(), W = volume.cols();
  const auto plan = detail::plan_pad(H, W, ck.gen_config.downsample_factor());

  Volume out = volume;  // metadata and pass-through margins
  const float norm = ck.intensity_norm;
  for (std::size_t start = 0; start < S; start += slice_chunk) {
    const std::size_t bsz = std::min(slice_chunk, S - start);
    Tensor<float> batch({bsz, 1, plan.out_h, plan.out_w});
    for (std::size_t b = 0; b < bsz; ++b) {
      const float* src = volume.voxels.ptr() + (start + b) * H * W;
      for (std::size_t y = 0; y < plan.copy_h; ++y)
        for (std::size_t x = 0; x < plan.copy_w; ++x)
          batch.ptr()[((b * plan.out_h) + plan.dst_y + y) * plan.out_w + plan.dst_x + x] =
              src[(plan.src_y + y) * W + plan.src_x + x] * norm;
    }
    Tensor<float> labels({bsz, ck.gen_config.domain_count});
    if (with_labels)
      for (std::size_t b = 0; b < bsz; ++b)
        std::copy_n(label.ptr(), label.numel(), labels.ptr() + b * label.numel());

    Tape<float> t(false);
    Var<float> vc = with_labels ? t.input(labels) : Var<float>{};
    Tensor<float> corrected = ck.g.forward(t, t.input(batch), vc).value();

    for (std::size_t b = 0; b < bsz; ++b) {
      float* dst = out.voxels.ptr() + (start + b) * H * W;
      for (std::size_t y = 0; y < plan.copy_h; ++y)
        for (std::size_t x = 0; x < plan.copy_w; ++x)
          dst[(plan.src_y + y) * W + plan.src_x + x] =
              corrected.ptr()[((b * plan.out_h) + plan.dst_y + y) * plan.out_w + plan.dst_x + x] /
              norm;
    }
  }
  return out;
}

}  // namespace restore
