#include <catch2/catch_amalgamated.hpp>

#include "restore/losses.hpp"
#include "restore/random.hpp"

using namespace restore;

TEST_CASE("domain weights: symmetry and worked examples") {
  auto eq = domain_weights({1, 1, 1});
  for (double w : eq.w) REQUIRE(w == Catch::Approx(1.0 / 3.0).epsilon(1e-12));

  auto two = domain_weights({1, 3});
  REQUIRE(two.w[0] == Catch::Approx(0.75).epsilon(1e-12));
  REQUIRE(two.w[1] == Catch::Approx(0.25).epsilon(1e-12));

  auto paper = domain_weights({734, 365, 173});
  REQUIRE(paper.w[0] == Catch::Approx(0.1379).margin(5e-5));
  REQUIRE(paper.w[1] == Catch::Approx(0.2772).margin(5e-5));
  REQUIRE(paper.w[2] == Catch::Approx(0.5849).margin(5e-5));
}

TEST_CASE("domain weights validate sizes") {
  REQUIRE_THROWS_AS(domain_weights({}), ValidationError);
  REQUIRE_THROWS_AS(domain_weights({3, 0}), ValidationError);
  REQUIRE_THROWS_AS(domain_weights({3, -1}), ValidationError);
}

TEST_CASE("domain weights sum to one for random size vectors") {
  Rng rng(60);
  for (int rep = 0; rep < 500; ++rep) {
    std::vector<std::int64_t> sizes(1 + rng.uniform_index(6));
    for (auto& s : sizes) s = 1 + std::int64_t(rng.uniform_index(100000));
    auto w = domain_weights(sizes);
    double sum = 0;
    for (double v : w.w) {
      REQUIRE(v > 0.0);
      sum += v;
    }
    REQUIRE(sum == Catch::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("adversarial losses: perfect discrimination scores zero") {
  Tensor<float> ones({2, 1, 3, 3}, 1.0f);
  Tensor<float> zeros({2, 1, 3, 3}, 0.0f);
  auto [g, d] = adversarial_losses(ones, zeros, ones, zeros);
  REQUIRE(d == 0.0f);
  REQUIRE(g == Catch::Approx(2.0f));  // fakes scored 0, generator wants 1
}

TEST_CASE("adversarial losses at the 0.5 saddle") {
  Tensor<float> half({4, 4}, 0.5f);
  auto [g, d] = adversarial_losses(half, half, half, half);
  REQUIRE(d == Catch::Approx(1.0f));
  REQUIRE(g == Catch::Approx(0.5f));
}

TEST_CASE("generator term vanishes when fakes fool both discriminators") {
  Tensor<float> ones({3, 3}, 1.0f);
  Tensor<float> anything({3, 3}, 0.37f);
  auto [g, d] = adversarial_losses(anything, ones, anything, ones);
  (void)d;
  REQUIRE(g == 0.0f);
}

TEST_CASE("printed-convention flag swaps the discriminator targets") {
  Tensor<float> ones({2, 2}, 1.0f);
  Tensor<float> zeros({2, 2}, 0.0f);
  // printed convention: real -> 0, fake -> 1 for D; generator pulls fakes to 0
  auto [g, d] = adversarial_losses(zeros, ones, zeros, ones, GanTargets::PaperPrinted);
  REQUIRE(d == 0.0f);
  REQUIRE(g == Catch::Approx(2.0f));
  auto [g2, d2] = adversarial_losses(ones, zeros, ones, zeros, GanTargets::PaperPrinted);
  REQUIRE(d2 == Catch::Approx(4.0f));
  REQUIRE(g2 == Catch::Approx(0.0f));
}

TEST_CASE("adversarial losses reject mismatched map shapes") {
  Tape<float> t(false);
  Var<float> a = t.input(Tensor<float>({2, 2}));
  Var<float> b = t.input(Tensor<float>({2, 3}));
  REQUIRE_THROWS_AS(adversarial_losses(a, b, a, a), DimensionError);
}

TEST_CASE("cycle loss on perfect and shifted reconstructions") {
  Rng rng(61);
  Tensor<float> z({2, 1, 4, 4});
  Tensor<float> x({2, 1, 4, 4});
  for (auto& v : z.data) v = float(rng.normal());
  for (auto& v : x.data) v = float(rng.normal());
  REQUIRE(cycle_loss(z, x, z, x) == 0.0f);

  Tensor<float> z_shift = z;
  for (auto& v : z_shift.data) v += 1.0f;
  REQUIRE(cycle_loss(z, x, z_shift, x) == Catch::Approx(1.0f));

  // homogeneity: scaling both residuals by alpha scales the loss by alpha^2
  Tensor<float> z2 = z, x2 = x;
  for (std::size_t i = 0; i < z.numel(); ++i) {
    z2[i] = z[i] + 2.0f * (z_shift[i] - z[i]);
    x2[i] = x[i] + 2.0f * 0.5f;
  }
  const float base = cycle_loss(z, x, z_shift, x) +
                     0.0f;  // 1.0
  Tensor<float> x_half = x;
  for (auto& v : x_half.data) v += 0.5f;
  const float l1 = cycle_loss(z, x, z_shift, x_half);
  const float l2 = cycle_loss(z, x, z2, x2);
  (void)base;
  REQUIRE(l2 == Catch::Approx(4.0f * l1).epsilon(1e-5));
}

TEST_CASE("cycle loss shape mismatch") {
  Tensor<float> a({2, 2}), b({2, 3});
  REQUIRE_THROWS_AS(cycle_loss(a, a, b, a), DimensionError);
}

TEST_CASE("weighted least-squares loss worked examples") {
  Tensor<float> zero({1, 1, 2, 2}, 0.0f);
  Tensor<float> one({1, 1, 2, 2}, 1.0f);

  REQUIRE(weighted_ls_loss(zero, zero, std::vector<float>{1.0f}) == 0.0f);
  REQUIRE(weighted_ls_loss(one, zero, std::vector<float>{1.0f}) == Catch::Approx(1.0f));
  // literal formula: w inside the norm gives w^2 scaling
  REQUIRE(weighted_ls_loss(one, zero, std::vector<float>{0.5f}) == Catch::Approx(0.25f));
  // ablation flag: w scales the squared norm instead
  REQUIRE(weighted_ls_loss(one, zero, std::vector<float>{0.5f}, WlsWeighting::OutsideNorm) ==
          Catch::Approx(0.5f));
}

TEST_CASE("weighted loss needs one weight per sample") {
  Tensor<float> r({2, 1, 2, 2}, 1.0f);
  REQUIRE_THROWS_AS(weighted_ls_loss(r, r, std::vector<float>{1.0f}), ValidationError);
}

TEST_CASE("sum reduction scales mean reduction by element count") {
  Rng rng(62);
  Tensor<float> r({2, 1, 3, 3});
  for (auto& v : r.data) v = float(rng.normal());
  Tensor<float> zero(r.shape, 0.0f);
  std::vector<float> w{0.25f, 0.75f};
  const float m = weighted_ls_loss(r, zero, w, WlsWeighting::InsideNorm, Reduction::Mean);
  const float s = weighted_ls_loss(r, zero, w, WlsWeighting::InsideNorm, Reduction::Sum);
  REQUIRE(s == Catch::Approx(m * float(r.numel())).epsilon(1e-5));
}

TEST_CASE("all loss terms are nonnegative on random inputs") {
  Rng rng(63);
  for (int rep = 0; rep < 20; ++rep) {
    Tensor<float> a({2, 1, 4, 4}), b({2, 1, 4, 4}), c({2, 1, 4, 4}), d({2, 1, 4, 4});
    for (auto* tn : {&a, &b, &c, &d})
      for (auto& v : tn->data) v = float(rng.normal());
    auto [g, dd] = adversarial_losses(a, b, c, d);
    REQUIRE(g >= 0.0f);
    REQUIRE(dd >= 0.0f);
    REQUIRE(cycle_loss(a, b, c, d) >= 0.0f);
    REQUIRE(weighted_ls_loss(a, b, std::vector<float>{0.3f, 0.7f}) >= 0.0f);
  }
}

TEST_CASE("loss breakdown composition invariant") {
  auto b = make_breakdown(0.5, 1.0, 0.2, 0.05, 10.0, 10.0);
  REQUIRE(b.total_g == Catch::Approx(0.5 + 10.0 * 0.2 + 10.0 * 0.05));
  REQUIRE(b.total_d == 1.0);
}
