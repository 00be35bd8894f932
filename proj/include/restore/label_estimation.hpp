#pragma once

#include <functional>
#include <limits>
#include <vector>

#include "restore/training.hpp"

namespace restore {

// Discretized minimization of the empirical objective over [-eps, 1+eps]^N:
// exhaustive coarse grid, then a fine grid centered on the coarse argmin.
struct GridSearchConfig {
  double epsilon = 0.1;
  double coarse = 0.1;
  double fine = 0.02;
  double refinement_radius_cells = 1.0;  // fine window = +/- radius * coarse

  void validate() const {
    if (!(epsilon > 0.0)) throw ConfigError("grid epsilon must be positive");
    if (!(coarse > 0.0) || !(fine > 0.0)) throw ConfigError("grid spacings must be positive");
    if (fine > coarse) throw ConfigError("fine spacing must not exceed the coarse spacing");
    if (coarse > 1.0 + 2.0 * epsilon)
      throw ConfigError("coarse spacing leaves fewer than 2 points per axis");
  }

  double lo() const { return -epsilon; }
  double hi() const { return 1.0 + epsilon; }
};

struct GridPointRecord {
  std::vector<double> point;
  double objective = 0.0;
  int stage = 0;       // 0 = coarse, 1 = fine
  bool finite = true;  // false: excluded from the argmin and reported
};

struct LabelEstimate {
  std::vector<double> c;      // estimated mapping label c_T
  double objective = 0.0;
  std::vector<GridPointRecord> evaluated;
};

// Evaluates the correction network on a batch of slices under one label;
// returns the corrected batch. z: {B,1,H,W}.
using GeneratorFn =
    std::function<Tensor<float>(const Tensor<float>& z, const std::vector<double>& c)>;

// Empirical objective of a label: mean over the calibration pairs of the
// per-pixel squared error of G(z;c) against x.
inline double label_objective(const GeneratorFn& gen, const std::vector<SlicePair>& pairs,
                              const std::vector<double>& c) {
  if (pairs.empty()) throw ValidationError("label_objective: empty calibration set");
  const std::size_t hh = pairs[0].z.dim(0), ww = pairs[0].z.dim(1);
  Tensor<float> batch({pairs.size(), 1, hh, ww});
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].z.shape != pairs[0].z.shape)
      throw DimensionError("label_objective: calibration slices disagree in shape");
    std::copy_n(pairs[i].z.ptr(), hh * ww, batch.ptr() + i * hh * ww);
  }
  Tensor<float> corrected = gen(batch, c);
  double total = 0.0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    double s = 0.0;
    const float* out = corrected.ptr() + i * hh * ww;
    const float* ref = pairs[i].x.ptr();
    for (std::size_t k = 0; k < hh * ww; ++k) {
      const double d = double(out[k]) - double(ref[k]);
      s += d * d;
    }
    total += s / double(hh * ww);
  }
  return total / double(pairs.size());
}

namespace detail {

inline std::vector<double> axis_values(double lo, double hi, double spacing) {
  std::vector<double> vals;
  for (int k = 0;; ++k) {
    const double v = lo + spacing * k;
    if (v > hi + 1e-12) break;
    vals.push_back(v);
  }
  return vals;
}

// Cartesian product walk in row-major order (last axis fastest).
template <typename Fn>
void for_each_grid_point(const std::vector<std::vector<double>>& axes, Fn&& fn) {
  std::vector<std::size_t> idx(axes.size(), 0);
  std::vector<double> point(axes.size());
  while (true) {
    for (std::size_t a = 0; a < axes.size(); ++a) point[a] = axes[a][idx[a]];
    fn(point);
    std::size_t a = axes.size();
    while (a-- > 0) {
      if (++idx[a] < axes[a].size()) break;
      idx[a] = 0;
      if (a == 0) return;
    }
  }
}

// Order-independent running argmin: ties resolve to the lexicographically
// smallest point.
struct ArgMin {
  double best = std::numeric_limits<double>::infinity();
  std::vector<double> point;

  void offer(const std::vector<double>& p, double v) {
    if (v < best || (v == best && (point.empty() || p < point))) {
      best = v;
      point = p;
    }
  }
};

}  // namespace detail

// Core search over an arbitrary generator evaluator (checkpoints wrap into
// GeneratorFn below; tests drive it with stubs).
inline LabelEstimate estimate_label(const GeneratorFn& gen, std::size_t label_dim,
                                    const std::vector<SlicePair>& pairs,
                                    const GridSearchConfig& cfg) {
  cfg.validate();
  if (label_dim == 0) throw ConfigError("estimate_label: label dimension must be positive");
  if (pairs.empty()) throw ValidationError("estimate_label: empty calibration set");

  LabelEstimate est;
  detail::ArgMin argmin;

  auto evaluate_stage = [&](const std::vector<std::vector<double>>& axes, int stage) {
    detail::for_each_grid_point(axes, [&](const std::vector<double>& p) {
      double v;
      try {
        v = label_objective(gen, pairs, p);
      } catch (const NumericError&) {
        v = std::numeric_limits<double>::quiet_NaN();
      }
      GridPointRecord rec{p, v, stage, std::isfinite(v)};
      est.evaluated.push_back(rec);
      if (rec.finite) argmin.offer(p, v);
    });
  };

  // stage 0: exhaustive coarse grid
  std::vector<std::vector<double>> coarse_axes(
      label_dim, detail::axis_values(cfg.lo(), cfg.hi(), cfg.coarse));
  evaluate_stage(coarse_axes, 0);
  if (argmin.point.empty())
    throw NumericError("estimate_label: objective was non-finite at every coarse grid point");
  const std::vector<double> coarse_best = argmin.point;

  // stage 1: fine grid centered on the coarse argmin (always contains it, so
  // refinement is monotone)
  const double radius = cfg.refinement_radius_cells * cfg.coarse;
  std::vector<std::vector<double>> fine_axes(label_dim);
  for (std::size_t a = 0; a < label_dim; ++a) {
    std::vector<double> vals;
    const int steps = int(std::floor(radius / cfg.fine + 1e-9));
    for (int k = -steps; k <= steps; ++k) {
      double v = coarse_best[a] + cfg.fine * k;
      v = std::min(std::max(v, cfg.lo()), cfg.hi());
      if (vals.empty() || std::abs(v - vals.back()) > 1e-12) vals.push_back(v);
    }
    fine_axes[a] = std::move(vals);
  }
  evaluate_stage(fine_axes, 1);

  est.c = argmin.point;
  est.objective = argmin.best;
  return est;
}

// Pure mapping of every grid point to its objective value, in row-major order
// (last label axis fastest); feeds the surface CSV export.
inline std::vector<GridPointRecord> objective_surface(const GeneratorFn& gen,
                                                      const std::vector<SlicePair>& pairs,
                                                      const std::vector<std::vector<double>>& axes) {
  if (pairs.empty()) throw ValidationError("objective_surface: empty calibration set");
  std::vector<GridPointRecord> out;
  detail::for_each_grid_point(axes, [&](const std::vector<double>& p) {
    double v;
    try {
      v = label_objective(gen, pairs, p);
    } catch (const NumericError&) {
      v = std::numeric_limits<double>::quiet_NaN();
    }
    out.push_back({p, v, 0, std::isfinite(v)});
  });
  return out;
}

inline void write_surface_csv(const std::vector<GridPointRecord>& surface, const fs::path& path) {
  std::ofstream f(path);
  if (!surface.empty()) {
    for (std::size_t a = 0; a < surface[0].point.size(); ++a) f << 'c' << a << ',';
    f << "objective\n";
  }
  for (const auto& rec : surface) {
    for (double v : rec.point) f << v << ',';
    if (rec.finite)
      f << rec.objective << '\n';
    else
      f << "nan\n";
  }
  if (!f) throw IngestionError("cannot write surface CSV to " + path.string());
}

// Checkpoint-backed evaluator.
inline GeneratorFn checkpoint_generator(Checkpoint<float>& ck) {
  if (!ck.g.label_conditioned())
    throw ConfigError("label estimation needs a label-conditioned (proposed-mode) checkpoint");
  return [&ck](const Tensor<float>& z, const std::vector<double>& c) {
    if (c.size() != ck.gen_config.domain_count)
      throw ConfigError("label length " + std::to_string(c.size()) + " does not match N=" +
                        std::to_string(ck.gen_config.domain_count));
    Tensor<float> labels({z.dim(0), c.size()});
    for (std::size_t b = 0; b < z.dim(0); ++b)
      for (std::size_t i = 0; i < c.size(); ++i) labels[b * c.size() + i] = float(c[i]);
    Tensor<float> scaled = z;
    for (auto& v : scaled.data) v *= ck.intensity_norm;
    Tape<float> t(false);
    Tensor<float> out = ck.g.forward(t, t.input(scaled), t.input(labels)).value();
    for (auto& v : out.data) v /= ck.intensity_norm;
    return out;
  };
}

inline LabelEstimate estimate_label(Checkpoint<float>& ck, const std::vector<SlicePair>& pairs,
                                    const GridSearchConfig& cfg) {
  return estimate_label(checkpoint_generator(ck), ck.gen_config.domain_count, pairs, cfg);
}

// Optional gradient-based polish of an estimated label: the objective is
// differentiable in c through the mapping networks, so a few plain gradient
// steps can leave the grid. Grid search remains the default route.
inline LabelEstimate refine_label(Checkpoint<float>& ck, const std::vector<SlicePair>& pairs,
                                  const std::vector<double>& c0, std::size_t steps = 50,
                                  double step_size = 0.01) {
  if (!ck.g.label_conditioned())
    throw ConfigError("label refinement needs a label-conditioned checkpoint");
  if (pairs.empty()) throw ValidationError("refine_label: empty calibration set");
  const std::size_t n = ck.gen_config.domain_count;
  if (c0.size() != n) throw ConfigError("refine_label: label length must be N");

  const std::size_t hh = pairs[0].z.dim(0), ww = pairs[0].z.dim(1);
  const float norm = ck.intensity_norm;
  Tensor<float> zb({pairs.size(), 1, hh, ww}), xb({pairs.size(), 1, hh, ww});
  for (std::size_t i = 0; i < pairs.size(); ++i)
    for (std::size_t k = 0; k < hh * ww; ++k) {
      zb[i * hh * ww + k] = pairs[i].z[k] * norm;
      xb[i * hh * ww + k] = pairs[i].x[k] * norm;
    }

  std::vector<double> c = c0;
  double best = std::numeric_limits<double>::infinity();
  LabelEstimate est;
  for (std::size_t it = 0; it < steps; ++it) {
    Tensor<float> labels({pairs.size(), n});
    for (std::size_t b = 0; b < pairs.size(); ++b)
      for (std::size_t i = 0; i < n; ++i) labels[b * n + i] = float(c[i]);
    Tape<float> t(true);
    t.freeze_params(true);  // only the label gets a gradient
    Var<float> vc = t.leaf(labels, true);
    Var<float> out = ck.g.forward(t, t.input(zb), vc);
    Var<float> loss = mse_all(out, t.input(xb));
    // report in native units, consistent with label_objective
    const double v = double(loss.scalar()) / (double(norm) * double(norm));
    if (v < best) {
      best = v;
      est.c = c;
      est.objective = v;
    }
    t.backward(loss);
    const Tensor<float>& gc = t.grad_of(vc.idx);
    for (std::size_t i = 0; i < n; ++i) {
      double g = 0.0;
      for (std::size_t b = 0; b < pairs.size(); ++b) g += double(gc[b * n + i]);
      c[i] -= step_size * g;
    }
    est.evaluated.push_back({c, v, 1, std::isfinite(v)});
  }
  return est;
}

}  // namespace restore
