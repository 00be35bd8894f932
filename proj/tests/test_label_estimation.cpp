#include <catch2/catch_amalgamated.hpp>

#include "restore/label_estimation.hpp"

using namespace restore;

namespace {

std::vector<SlicePair> constant_pairs(std::size_t count, float z_value, float x_value,
                                      std::size_t hw = 8) {
  std::vector<SlicePair> out;
  for (std::size_t i = 0; i < count; ++i) {
    SlicePair p;
    p.z = Tensor<float>({hw, hw}, z_value);
    p.x = Tensor<float>({hw, hw}, x_value);
    p.domain_index = 0;
    out.push_back(std::move(p));
  }
  return out;
}

// Stub generator: adds c[0] to every pixel.
GeneratorFn shift_generator() {
  return [](const Tensor<float>& z, const std::vector<double>& c) {
    Tensor<float> out = z;
    for (auto& v : out.data) v += float(c[0]);
    return out;
  };
}

}  // namespace

TEST_CASE("stub generator z + c with target z + 1 estimates c = 1 exactly") {
  auto pairs = constant_pairs(3, 0.5f, 1.5f);
  GridSearchConfig cfg;
  cfg.epsilon = 0.25;
  cfg.coarse = 0.25;
  cfg.fine = 0.05;
  LabelEstimate est = estimate_label(shift_generator(), 1, pairs, cfg);
  REQUIRE(est.c.size() == 1);
  REQUIRE(est.c[0] == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(est.objective == Catch::Approx(0.0).margin(1e-10));
}

TEST_CASE("quadratic objective lands on the 0.02 grid point closest to 0.52") {
  // G(z;c) = z + (c - 0.52) against x = z gives objective (c - 0.52)^2
  GeneratorFn gen = [](const Tensor<float>& z, const std::vector<double>& c) {
    Tensor<float> out = z;
    for (auto& v : out.data) v += float(c[0] - 0.52);
    return out;
  };
  auto pairs = constant_pairs(2, 1.0f, 1.0f);
  LabelEstimate est = estimate_label(gen, 1, pairs, GridSearchConfig{});
  REQUIRE(est.c[0] == Catch::Approx(0.52).margin(1e-9));

  // brute force over every evaluated point confirms the argmin
  double best = 1e30;
  std::vector<double> best_point;
  for (const auto& rec : est.evaluated)
    if (rec.finite && (rec.objective < best || (rec.objective == best && rec.point < best_point))) {
      best = rec.objective;
      best_point = rec.point;
    }
  REQUIRE(best_point == est.c);
  REQUIRE(best == est.objective);
}

TEST_CASE("monotone refinement: fine stage never loses to the coarse stage") {
  GeneratorFn gen = [](const Tensor<float>& z, const std::vector<double>& c) {
    Tensor<float> out = z;
    for (auto& v : out.data)
      v += float(0.8 * (c[0] - 0.37) + 0.5 * (c[1] - 0.61));
    return out;
  };
  auto pairs = constant_pairs(2, 0.0f, 0.0f);
  LabelEstimate est = estimate_label(gen, 2, pairs, GridSearchConfig{});
  double coarse_best = 1e30, fine_best = 1e30;
  for (const auto& rec : est.evaluated) {
    if (!rec.finite) continue;
    (rec.stage == 0 ? coarse_best : fine_best) = std::min(
        rec.stage == 0 ? coarse_best : fine_best, rec.objective);
  }
  REQUIRE(fine_best <= coarse_best);
  REQUIRE(est.objective == Catch::Approx(fine_best));
}

TEST_CASE("constant generator gives a flat surface and the lexicographic corner") {
  GeneratorFn gen = [](const Tensor<float>& z, const std::vector<double>&) { return z; };
  auto pairs = constant_pairs(2, 1.0f, 1.0f);  // objective 0 everywhere
  GridSearchConfig cfg;
  LabelEstimate est = estimate_label(gen, 2, pairs, cfg);
  REQUIRE(est.c == std::vector<double>{cfg.lo(), cfg.lo()});

  std::vector<std::vector<double>> axes{{0.0, 0.5, 1.0}, {0.0, 1.0}};
  auto surface = objective_surface(gen, pairs, axes);
  REQUIRE(surface.size() == 6);
  for (const auto& rec : surface) REQUIRE(rec.objective == surface[0].objective);
  // row-major order: last axis fastest
  REQUIRE(surface[0].point == std::vector<double>{0.0, 0.0});
  REQUIRE(surface[1].point == std::vector<double>{0.0, 1.0});
  REQUIRE(surface[2].point == std::vector<double>{0.5, 0.0});
}

TEST_CASE("surface values match the analytic quadratic within 1e-6") {
  GeneratorFn gen = [](const Tensor<float>& z, const std::vector<double>& c) {
    Tensor<float> out = z;
    for (auto& v : out.data) v += float(c[0] - 0.3);
    return out;
  };
  auto pairs = constant_pairs(4, 2.0f, 2.0f);
  std::vector<std::vector<double>> axes{{-0.1, 0.0, 0.3, 0.7, 1.1}};
  auto surface = objective_surface(gen, pairs, axes);
  for (const auto& rec : surface) {
    const double expect = (rec.point[0] - 0.3) * (rec.point[0] - 0.3);
    REQUIRE(rec.objective == Catch::Approx(expect).margin(1e-6));
  }
  auto dir = fs::temp_directory_path() / "restore_test_surface";
  fs::create_directories(dir);
  write_surface_csv(surface, dir / "surface.csv");
  std::ifstream f(dir / "surface.csv");
  std::string header;
  std::getline(f, header);
  REQUIRE(header == "c0,objective");
  fs::remove_all(dir);
}

TEST_CASE("surface minimum location equals the estimate") {
  GeneratorFn gen = [](const Tensor<float>& z, const std::vector<double>& c) {
    Tensor<float> out = z;
    for (auto& v : out.data) v += float(c[0] - 0.5);
    return out;
  };
  auto pairs = constant_pairs(2, 0.0f, 0.0f);
  GridSearchConfig cfg;
  LabelEstimate est = estimate_label(gen, 1, pairs, cfg);
  auto axes = std::vector<std::vector<double>>{detail::axis_values(cfg.lo(), cfg.hi(), cfg.fine)};
  auto surface = objective_surface(gen, pairs, axes);
  double best = 1e30;
  std::vector<double> where;
  for (const auto& rec : surface)
    if (rec.objective < best) {
      best = rec.objective;
      where = rec.point;
    }
  REQUIRE(std::abs(where[0] - est.c[0]) < 1e-9);
}

TEST_CASE("non-finite points are excluded and recorded") {
  GeneratorFn gen = [](const Tensor<float>& z, const std::vector<double>& c) {
    Tensor<float> out = z;
    for (auto& v : out.data)
      v = c[0] < 0.0 ? std::nanf("") : v + float(c[0] - 0.4);
    return out;
  };
  auto pairs = constant_pairs(2, 1.0f, 1.0f);
  LabelEstimate est = estimate_label(gen, 1, pairs, GridSearchConfig{});
  bool saw_excluded = false;
  for (const auto& rec : est.evaluated) {
    if (!rec.finite) {
      saw_excluded = true;
      REQUIRE(rec.point[0] < 0.0);
    }
  }
  REQUIRE(saw_excluded);
  REQUIRE(est.c[0] == Catch::Approx(0.4).margin(1e-9));
}

TEST_CASE("estimation validates inputs") {
  auto pairs = constant_pairs(1, 0.0f, 0.0f);
  REQUIRE_THROWS_AS(estimate_label(shift_generator(), 1, {}, GridSearchConfig{}),
                    ValidationError);
  GridSearchConfig bad;
  bad.fine = 0.5;  // fine > coarse
  REQUIRE_THROWS_AS(estimate_label(shift_generator(), 1, pairs, bad), ConfigError);
  GridSearchConfig bad2;
  bad2.epsilon = 0.0;
  REQUIRE_THROWS_AS(estimate_label(shift_generator(), 1, pairs, bad2), ConfigError);
}

TEST_CASE("checkpoint-backed estimation and gradient refinement run end to end") {
  // tiny proposed-mode model, untrained; we only exercise the plumbing here
  std::vector<DomainSpec> domains{{0, "a", 60.0, 0.5, 0.0}, {1, "b", 25.0, 0.5, 2.0}};
  Dataset ds = build_dataset(domains, {2, 2}, {2, 16, 16}, 17, 0.5);
  GeneratorConfig g;
  g.stages = 2;
  g.channels = {4, 6};
  g.mapping_hidden = 8;
  DiscriminatorConfig d;
  d.channels = {4, 4, 4};
  TrainConfig t;
  t.mode = TrainMode::Proposed;
  t.epochs = 1;
  t.batch_size = 4;
  t.seed = 5;
  TrainResult res = train(ds, g, d, t);

  auto calib = slice_pairs(ds, "val");
  calib.resize(4);
  GridSearchConfig cfg;
  cfg.coarse = 0.4;
  cfg.fine = 0.2;
  LabelEstimate est = estimate_label(res.checkpoint, calib, cfg);
  REQUIRE(est.c.size() == 2);
  REQUIRE(std::isfinite(est.objective));
  // the returned label attains the evaluated minimum
  for (const auto& rec : est.evaluated)
    if (rec.finite) REQUIRE(est.objective <= rec.objective + 1e-12);

  LabelEstimate refined = refine_label(res.checkpoint, calib, est.c, 5, 0.05);
  REQUIRE(refined.c.size() == 2);
  REQUIRE(refined.objective <= est.objective + 1e-6);

  // label-free checkpoints cannot drive estimation
  Dataset single = build_dataset({{0, "solo", 40.0, 0.5, 1.0}}, {2}, {2, 16, 16}, 3, 0.5);
  TrainConfig t1 = t;
  t1.mode = TrainMode::M3;
  REQUIRE_THROWS_AS(
      [&] {
        Dataset two = build_dataset(domains, {2, 2}, {2, 16, 16}, 11, 0.5);
        TrainResult r2 = train(two, g, d, t1);
        return estimate_label(r2.checkpoint, calib, cfg);
      }(),
      ConfigError);
}
