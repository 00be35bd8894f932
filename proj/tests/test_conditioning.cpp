#include <catch2/catch_amalgamated.hpp>

#include "grad_check.hpp"
#include "restore/conditioning.hpp"

using namespace restore;

namespace {

Tensor<double> randn(Rng& rng, Shape s, double scale = 1.0) {
  Tensor<double> t(std::move(s));
  for (auto& v : t.data) v = scale * rng.normal();
  return t;
}

}  // namespace

TEST_CASE("one_hot_label basics") {
  auto c = one_hot_label<float>(1, 3);
  REQUIRE(c.data == std::vector<float>{0, 1, 0});
  REQUIRE_THROWS_AS(one_hot_label<float>(3, 3), ConfigError);
  REQUIRE_NOTHROW(validate_label(c, 3));
  REQUIRE_THROWS_AS(validate_label(c, 4), ConfigError);
}

TEST_CASE("zero network maps any label to zero stats") {
  MappingNetwork<double> net("m", 3, 5, 64);
  // all weights and biases start at zero
  auto stats = map_label(net, one_hot_label<double>(2, 3));
  REQUIRE(stats.mu.shape == Shape{1, 5});
  REQUIRE(stats.sigma.shape == Shape{1, 5});
  for (double v : stats.mu.data) REQUIRE(v == 0.0);
  for (double v : stats.sigma.data) REQUIRE(v == 0.0);
}

TEST_CASE("distinct labels give distinct stats on a random net") {
  Rng rng(31);
  MappingNetwork<double> net("m", 3, 4, 64);
  net.init(rng, 0.5);
  auto s1 = map_label(net, one_hot_label<double>(0, 3));
  auto s2 = map_label(net, one_hot_label<double>(1, 3));
  double diff = 0;
  for (std::size_t i = 0; i < s1.mu.numel(); ++i)
    diff += std::abs(s1.mu[i] - s2.mu[i]) + std::abs(s1.sigma[i] - s2.sigma[i]);
  REQUIRE(diff > 1e-6);
}

TEST_CASE("map_label is deterministic") {
  Rng rng(32);
  MappingNetwork<double> net("m", 2, 3, 64);
  net.init(rng, 0.3);
  const auto c = one_hot_label<double>(0, 2);
  auto a = map_label(net, c);
  auto b = map_label(net, c);
  for (std::size_t i = 0; i < a.mu.numel(); ++i) {
    REQUIRE(a.mu[i] == b.mu[i]);
    REQUIRE(a.sigma[i] == b.sigma[i]);
  }
}

TEST_CASE("label length mismatch raises a configuration error") {
  MappingNetwork<double> net("m", 3, 4, 64);
  REQUIRE_THROWS_AS(map_label(net, Tensor<double>({2}, {1.0, 0.0})), ConfigError);
}

TEST_CASE("mapping network output layout is [mu | sigma]") {
  MappingNetwork<double> net("m", 1, 2, 4);
  // make only the output layer nonzero: out = b3
  net.b3.value = Tensor<double>({4}, {1.0, 2.0, 3.0, 4.0});
  auto stats = map_label(net, Tensor<double>({1}, {0.5}));
  REQUIRE(stats.mu.data == std::vector<double>{1.0, 2.0});
  REQUIRE(stats.sigma.data == std::vector<double>{3.0, 4.0});
}

TEST_CASE("post-AdaIN channel statistics hit the targets") {
  Rng rng(33);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t b = 1 + rng.uniform_index(3);
    const std::size_t c = 1 + rng.uniform_index(4);
    Tensor<double> h = randn(rng, {b, c, 8, 8});
    Tensor<double> mu = randn(rng, {b, c});
    Tensor<double> sigma = randn(rng, {b, c});
    Tape<double> t(false);
    Var<double> y = adain(t.input(h), t.input(mu), t.input(sigma), 1e-5);
    const std::size_t n = 64;
    for (std::size_t bc = 0; bc < b * c; ++bc) {
      double m = 0;
      for (std::size_t i = 0; i < n; ++i) m += y.value()[bc * n + i];
      m /= double(n);
      double v = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = y.value()[bc * n + i] - m;
        v += d * d;
      }
      const double sd = std::sqrt(v / double(n));
      REQUIRE(std::abs(m - mu[bc]) < 1e-4);
      REQUIRE(std::abs(sd - std::abs(sigma[bc])) < 1e-3 * std::max(1.0, std::abs(sigma[bc])));
    }
  }
}

TEST_CASE("stats are differentiable w.r.t. label and net parameters") {
  Rng rng(34);
  MappingNetwork<double> net("m", 3, 4, 8);
  net.init(rng, 0.4);
  Parameter<double> label("c", {2, 3});
  label.value = randn(rng, {2, 3});
  Parameter<double> h("h", {2, 4, 4, 4});
  h.value = randn(rng, {2, 4, 4, 4});
  const Tensor<double> r = randn(rng, {2, 4, 4, 4});

  std::vector<Parameter<double>*> params{&label, &h};
  auto np = net.parameters();
  params.insert(params.end(), np.begin(), np.end());

  auto make_loss = [&](Tape<double>& t) {
    auto [mu, sigma] = net.forward(t, t.param(label), 0.2);
    Var<double> y = adain(t.param(h), mu, sigma, 1e-5);
    return sum_all(mul(y, t.input(r)));
  };
  auto eval_only = [&]() {
    Tape<double> t(false);
    return make_loss(t).scalar();
  };
  auto build = [&]() {
    Tape<double> t(true);
    Var<double> loss = make_loss(t);
    t.backward(loss);
    return loss.scalar();
  };
  auto rep = gradcheck::check_params<double>(params, build, eval_only, 1e-6);
  INFO("max rel err " << rep.max_rel_err << " over " << rep.checked << " coords");
  REQUIRE(rep.max_rel_err < 1e-3);
}

TEST_CASE("adain_apply single-sample wrapper") {
  Tensor<double> h({1, 2, 2}, {1, 2, 3, 4});
  AdaINStats<double> stats{Tensor<double>({1, 1}, {0.0}), Tensor<double>({1, 1}, {2.0})};
  auto y = adain_apply(h, stats, 0.0);
  REQUIRE(y.shape == Shape{1, 2, 2});
  REQUIRE(y[0] == Catch::Approx(-2.6833).margin(1e-4));
  REQUIRE(y[3] == Catch::Approx(2.6833).margin(1e-4));
}
