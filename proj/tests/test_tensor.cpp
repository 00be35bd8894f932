#include <catch2/catch_amalgamated.hpp>

#include "restore/tensor.hpp"

using namespace restore;

TEST_CASE("tensor shape and indexing") {
  Tensor<float> t({2, 3, 4});
  REQUIRE(t.numel() == 24);
  REQUIRE(t.ndim() == 3);
  t.at(1, 2, 3) = 7.0f;
  REQUIRE(t[23] == 7.0f);
  REQUIRE(t.at(0, 0, 0) == 0.0f);
}

TEST_CASE("tensor init list must match shape") {
  REQUIRE_THROWS_AS((Tensor<double>({2, 2}, {1.0, 2.0, 3.0})), DimensionError);
  Tensor<double> ok({2, 2}, {1.0, 2.0, 3.0, 4.0});
  REQUIRE(ok.at(1, 0) == 3.0);
}

TEST_CASE("shape helpers") {
  Tensor<float> a({2, 2}), b({2, 3});
  REQUIRE_THROWS_AS(require_same_shape(a, b, "test"), DimensionError);
  REQUIRE(shape_str(b.shape) == "(2x3)");
  REQUIRE(numel_of({}) == 1);
}

TEST_CASE("finite checks and reductions") {
  Tensor<double> t({3}, {1.0, 2.0, 3.0});
  REQUIRE(all_finite(t));
  REQUIRE(sum_of(t) == 6.0);
  t[1] = std::nan("");
  REQUIRE_FALSE(all_finite(t));

  Tensor<double> a({2}, {3.0, 4.0});
  REQUIRE(l2_norm(a) == Catch::Approx(5.0));
}
