#pragma once

#include <cstdint>
#include <vector>

#include "restore/autodiff.hpp"

namespace restore {

// Targets for the least-squares GAN. Standard follows the cited least-squares
// GAN convention (real -> 1, fake -> 0 for D; fake -> 1 for the generator
// term). PaperPrinted flips the discriminator targets, matching the formula as
// literally printed; it is exposed for ablation only.
enum class GanTargets { Standard, PaperPrinted };

// Pixel reduction of the loss terms. Mean keeps lambda_1 = lambda_2 = 10
// meaningful across image sizes; Sum is exposed for ablation.
enum class Reduction { Mean, Sum };

// Whether the per-domain scalar multiplies the residual inside the squared
// norm (effective w^2, the literal formula) or the squared norm itself.
enum class WlsWeighting { InsideNorm, OutsideNorm };

struct LossBreakdown {
  double adv_g = 0, adv_d = 0, cyc = 0, wls = 0;
  double total_g = 0, total_d = 0;
  double lambda1 = 0, lambda2 = 0;
};

inline LossBreakdown make_breakdown(double adv_g, double adv_d, double cyc, double wls,
                                    double lambda1, double lambda2) {
  LossBreakdown b;
  b.adv_g = adv_g;
  b.adv_d = adv_d;
  b.cyc = cyc;
  b.wls = wls;
  b.lambda1 = lambda1;
  b.lambda2 = lambda2;
  b.total_g = adv_g + lambda1 * cyc + lambda2 * wls;
  b.total_d = adv_d;
  return b;
}

// Inverse-frequency domain weights, normalized to sum to one:
//   w_i = (1/|S_i|) / sum_j (1/|S_j|)
struct DomainWeights {
  std::vector<double> w;
};

inline DomainWeights domain_weights(const std::vector<std::int64_t>& sizes) {
  if (sizes.empty()) throw ValidationError("domain_weights: no domains");
  double denom = 0.0;
  for (std::int64_t s : sizes) {
    if (s <= 0)
      throw ValidationError("domain_weights: domain sizes must be positive, got " +
                            std::to_string(s));
    denom += 1.0 / double(s);
  }
  DomainWeights out;
  out.w.reserve(sizes.size());
  for (std::int64_t s : sizes) out.w.push_back((1.0 / double(s)) / denom);
  return out;
}

namespace detail {

template <typename T>
Var<T> reduce(Var<T> x, Reduction red) {
  return red == Reduction::Mean ? mean_all(x) : sum_all(x);
}

}  // namespace detail

// Least-squares penalty pulling a score map toward `target`.
template <typename T>
Var<T> lsgan_term(Var<T> scores, T target, Reduction red = Reduction::Mean) {
  return detail::reduce(square(affine(scores, T(1), -target)), red);
}

// Discriminator objective for one domain pair of score maps.
template <typename T>
Var<T> lsgan_d_term(Var<T> d_real, Var<T> d_fake, GanTargets targets = GanTargets::Standard,
                    Reduction red = Reduction::Mean) {
  const T real_t = targets == GanTargets::Standard ? T(1) : T(0);
  const T fake_t = targets == GanTargets::Standard ? T(0) : T(1);
  return add(lsgan_term(d_real, real_t, red), lsgan_term(d_fake, fake_t, red));
}

// Generator adversarial objective: make the fake scores look real.
template <typename T>
Var<T> lsgan_g_term(Var<T> d_fake, GanTargets targets = GanTargets::Standard,
                    Reduction red = Reduction::Mean) {
  const T real_t = targets == GanTargets::Standard ? T(1) : T(0);
  return lsgan_term(d_fake, real_t, red);
}

// Full adversarial pair over both discriminators:
//   discriminator term = mean[(dx_real-1)^2 + dx_fake^2 + (dz_real-1)^2 + dz_fake^2]
//   generator term     = mean[(dx_fake-1)^2 + (dz_fake-1)^2]
template <typename T>
std::pair<Var<T>, Var<T>> adversarial_losses(Var<T> dx_real, Var<T> dx_fake, Var<T> dz_real,
                                             Var<T> dz_fake,
                                             GanTargets targets = GanTargets::Standard,
                                             Reduction red = Reduction::Mean) {
  require_same_shape(dx_real.value(), dx_fake.value(), "adversarial_losses dx");
  require_same_shape(dz_real.value(), dz_fake.value(), "adversarial_losses dz");
  Var<T> g = add(lsgan_g_term(dx_fake, targets, red), lsgan_g_term(dz_fake, targets, red));
  Var<T> d = add(lsgan_d_term(dx_real, dx_fake, targets, red),
                 lsgan_d_term(dz_real, dz_fake, targets, red));
  return {g, d};
}

template <typename T>
std::pair<T, T> adversarial_losses(const Tensor<T>& dx_real, const Tensor<T>& dx_fake,
                                   const Tensor<T>& dz_real, const Tensor<T>& dz_fake,
                                   GanTargets targets = GanTargets::Standard,
                                   Reduction red = Reduction::Mean) {
  Tape<T> t(false);
  auto [g, d] = adversarial_losses(t.input(dx_real), t.input(dx_fake), t.input(dz_real),
                                   t.input(dz_fake), targets, red);
  return {g.scalar(), d.scalar()};
}

// Cycle-consistency loss: reconstruction error of both directions, averaged
// per element and summed over the two directions.
template <typename T>
Var<T> cycle_loss(Var<T> z, Var<T> x, Var<T> z_cycled, Var<T> x_cycled,
                  Reduction red = Reduction::Mean) {
  require_same_shape(z.value(), z_cycled.value(), "cycle_loss z");
  require_same_shape(x.value(), x_cycled.value(), "cycle_loss x");
  return add(detail::reduce(square(sub(z_cycled, z)), red),
             detail::reduce(square(sub(x_cycled, x)), red));
}

template <typename T>
T cycle_loss(const Tensor<T>& z, const Tensor<T>& x, const Tensor<T>& z_cycled,
             const Tensor<T>& x_cycled, Reduction red = Reduction::Mean) {
  Tape<T> t(false);
  return cycle_loss(t.input(z), t.input(x), t.input(z_cycled), t.input(x_cycled), red).scalar();
}

// One direction of the weighted least-squares loss. `weights` carries the
// per-sample domain weight w_i; InsideNorm multiplies the residual before
// squaring (effective w^2), OutsideNorm scales the squared residual.
template <typename T>
Var<T> weighted_ls_term(Var<T> residual, const std::vector<T>& weights,
                        WlsWeighting mode = WlsWeighting::InsideNorm,
                        Reduction red = Reduction::Mean) {
  if (residual.shape().empty() || residual.shape()[0] != weights.size())
    throw ValidationError("weighted_ls_term: need one domain weight per sample (" +
                          std::to_string(weights.size()) + " weights for batch " +
                          shape_str(residual.shape()) + ")");
  if (mode == WlsWeighting::InsideNorm)
    return detail::reduce(square(scale_samples(residual, weights)), red);
  return detail::reduce(scale_samples(square(residual), weights), red);
}

// Both directions: forward residual G(z;c)-x and backward residual F(x;c)-z.
template <typename T>
Var<T> weighted_ls_loss(Var<T> forward_residual, Var<T> backward_residual,
                        const std::vector<T>& weights,
                        WlsWeighting mode = WlsWeighting::InsideNorm,
                        Reduction red = Reduction::Mean) {
  return add(weighted_ls_term(forward_residual, weights, mode, red),
             weighted_ls_term(backward_residual, weights, mode, red));
}

template <typename T>
T weighted_ls_loss(const Tensor<T>& forward_residual, const Tensor<T>& backward_residual,
                   const std::vector<T>& weights, WlsWeighting mode = WlsWeighting::InsideNorm,
                   Reduction red = Reduction::Mean) {
  Tape<T> t(false);
  return weighted_ls_loss(t.input(forward_residual), t.input(backward_residual), weights, mode,
                          red)
      .scalar();
}

}  // namespace restore
