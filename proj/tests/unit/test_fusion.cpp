#include <doctest.h>

#include <cmath>
#include <vector>

#include "prism/errors.hpp"
#include "prism/fusion.hpp"
#include "prism/gradcheck.hpp"

using namespace prism;
using namespace prism::fusion;

namespace {

FusionParams random_params(const FusionConfig& config, std::uint64_t seed) {
  SplitRng rng(seed);
  return FusionParams::xavier(config, rng);
}

// Explicit double-loop oracle for exact mode: builds the outer product
// entry by entry and applies W_fusion by index arithmetic.
std::vector<double> exact_oracle(std::span<const double> g,
                                 std::span<const double> m,
                                 const FusionParams& params) {
  const auto& c = params.config();
  std::vector<double> p(c.d_prime, 0.0), q(c.d_prime, 0.0);
  for (std::size_t j = 0; j < c.d_prime; ++j) {
    for (std::size_t i = 0; i < c.d_g; ++i) {
      p[j] += params.w_g.value(i, j) * g[i];
    }
    for (std::size_t i = 0; i < c.d_m; ++i) {
      q[j] += params.w_m.value(i, j) * m[i];
    }
  }
  std::vector<double> outer(c.d_prime * c.d_prime);
  for (std::size_t a = 0; a < c.d_prime; ++a) {
    for (std::size_t b = 0; b < c.d_prime; ++b) {
      outer[a * c.d_prime + b] = p[a] * q[b];
    }
  }
  std::vector<double> f(c.d, 0.0);
  for (std::size_t r = 0; r < outer.size(); ++r) {
    for (std::size_t k = 0; k < c.d; ++k) {
      f[k] += outer[r] * params.w_fusion.value(r, k);
    }
  }
  return f;
}

std::vector<double> random_vec(std::size_t n, SplitRng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

}  // namespace

TEST_CASE("zero generic input annihilates the exact interaction") {
  FusionConfig config{.d_g = 4, .d_m = 5, .d_prime = 3, .d = 6,
                      .mode = Mode::exact};
  auto params = random_params(config, 1);
  std::vector<double> g(4, 0.0);
  SplitRng rng(2);
  auto m = random_vec(5, rng);
  for (double v : fuse_exact(g, m, params)) CHECK(v == 0.0);
}

TEST_CASE("scalar case multiplies through") {
  FusionConfig config{.d_g = 1, .d_m = 1, .d_prime = 1, .d = 1,
                      .mode = Mode::exact};
  FusionParams params(config);
  params.w_g.value(0, 0) = 1.0;
  params.w_m.value(0, 0) = 1.0;
  params.w_fusion.value(0, 0) = 1.0;
  std::vector<double> g{2.0}, m{3.0};
  auto f = fuse_exact(g, m, params);
  REQUIRE(f.size() == 1);
  CHECK(f[0] == 6.0);
}

TEST_CASE("exact mode matches the double-loop oracle") {
  FusionConfig config{.d_g = 7, .d_m = 5, .d_prime = 4, .d = 6,
                      .mode = Mode::exact};
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto params = random_params(config, seed);
    SplitRng rng(seed + 50);
    auto g = random_vec(7, rng);
    auto m = random_vec(5, rng);
    auto got = fuse_exact(g, m, params);
    auto want = exact_oracle(g, m, params);
    for (std::size_t k = 0; k < got.size(); ++k) {
      CHECK(got[k] == doctest::Approx(want[k]).epsilon(1e-12));
    }
  }
}

TEST_CASE("zero morph input annihilates the factorized interaction") {
  FusionConfig config{.d_g = 4, .d_m = 5, .d_prime = 3, .d = 6,
                      .mode = Mode::factorized};
  auto params = random_params(config, 3);
  SplitRng rng(4);
  auto g = random_vec(4, rng);
  std::vector<double> m(5, 0.0);
  for (double v : fuse_factorized(g, m, params)) CHECK(v == 0.0);
}

TEST_CASE("factorized embeds into exact via the diagonal selector") {
  for (std::size_t d_prime : {1u, 2u, 3u, 4u}) {
    FusionConfig fact_config{.d_g = 5, .d_m = 4, .d_prime = d_prime, .d = 6,
                             .mode = Mode::factorized};
    auto fact = random_params(fact_config, 60 + d_prime);

    FusionConfig exact_config = fact_config;
    exact_config.mode = Mode::exact;
    FusionParams exact(exact_config);
    exact.w_g.value = fact.w_g.value;
    exact.w_m.value = fact.w_m.value;
    exact.w_fusion.value = diagonal_selector(fact.w_fusion.value, d_prime);

    SplitRng rng(70 + d_prime);
    for (int trial = 0; trial < 4; ++trial) {
      auto g = random_vec(5, rng);
      auto m = random_vec(4, rng);
      auto f_fact = fuse_factorized(g, m, fact);
      auto f_exact = fuse_exact(g, m, exact);
      for (std::size_t k = 0; k < f_fact.size(); ++k) {
        CHECK(f_fact[k] == doctest::Approx(f_exact[k]).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("fusion is bilinear") {
  FusionConfig config{.d_g = 5, .d_m = 4, .d_prime = 3, .d = 6,
                      .mode = Mode::exact};
  auto params = random_params(config, 5);
  SplitRng rng(6);
  auto g1 = random_vec(5, rng);
  auto g2 = random_vec(5, rng);
  auto m = random_vec(4, rng);
  double alpha = 2.75;

  auto scaled_g = g1;
  for (double& v : scaled_g) v *= alpha;
  auto f_scaled = fuse_exact(scaled_g, m, params);
  auto f_base = fuse_exact(g1, m, params);
  for (std::size_t k = 0; k < f_base.size(); ++k) {
    CHECK(f_scaled[k] == doctest::Approx(alpha * f_base[k]).epsilon(1e-9));
  }

  auto g_sum = g1;
  for (std::size_t i = 0; i < g_sum.size(); ++i) g_sum[i] += g2[i];
  auto f_sum = fuse_exact(g_sum, m, params);
  auto f1 = fuse_exact(g1, m, params);
  auto f2 = fuse_exact(g2, m, params);
  for (std::size_t k = 0; k < f_sum.size(); ++k) {
    CHECK(f_sum[k] == doctest::Approx(f1[k] + f2[k]).epsilon(1e-9));
  }
}

TEST_CASE("bag fusion preserves rows and matches per-patch calls") {
  FusionConfig config{.d_g = 4, .d_m = 3, .d_prime = 2, .d = 5,
                      .mode = Mode::factorized};
  auto params = random_params(config, 7);
  SplitRng rng(8);
  num::Matrix g(6, 4), m(6, 3);
  for (double& v : g.data()) v = rng.normal();
  for (double& v : m.data()) v = rng.normal();

  auto fused = fuse_bag(g, m, params);
  REQUIRE(fused.rows() == 6);
  REQUIRE(fused.cols() == 5);
  for (std::size_t j = 0; j < 6; ++j) {
    auto f = fuse_one(g.row(j), m.row(j), params);
    for (std::size_t k = 0; k < 5; ++k) CHECK(fused(j, k) == f[k]);
  }

  // One-patch bag.
  num::Matrix g1(1, 4), m1(1, 3);
  for (double& v : g1.data()) v = rng.normal();
  for (double& v : m1.data()) v = rng.normal();
  auto one = fuse_bag(g1, m1, params);
  CHECK(one.rows() == 1);

  // Permuting rows permutes outputs identically.
  std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
  num::Matrix gp(6, 4), mp(6, 3);
  for (std::size_t j = 0; j < 6; ++j) {
    for (std::size_t k = 0; k < 4; ++k) gp(j, k) = g(perm[j], k);
    for (std::size_t k = 0; k < 3; ++k) mp(j, k) = m(perm[j], k);
  }
  auto fused_p = fuse_bag(gp, mp, params);
  for (std::size_t j = 0; j < 6; ++j) {
    for (std::size_t k = 0; k < 5; ++k) {
      CHECK(fused_p(j, k) == fused(perm[j], k));
    }
  }
}

TEST_CASE("fusion gradients pass finite differences in both modes") {
  for (Mode mode : {Mode::exact, Mode::factorized}) {
    FusionConfig config{.d_g = 4, .d_m = 3, .d_prime = 2, .d = 5,
                        .mode = mode};
    auto params = random_params(config, 9);
    SplitRng rng(10);
    num::Matrix g(3, 4), m(3, 3);
    for (double& v : g.data()) v = rng.normal();
    for (double& v : m.data()) v = rng.normal();

    // loss = sum of squared fused entries; d(loss)/d(fused) = 2 * fused.
    auto loss = [&] {
      auto fused = fuse_bag(g, m, params);
      double s = 0;
      for (double v : fused.data()) s += v * v;
      return s;
    };
    for (auto* p : params.params()) p->zero_grad();
    FusionCache cache;
    auto fused = fuse_bag(g, m, params, &cache);
    num::Matrix dfused(fused.rows(), fused.cols());
    for (std::size_t i = 0; i < fused.size(); ++i) {
      dfused.data()[i] = 2.0 * fused.data()[i];
    }
    fuse_bag_backward(g, m, params, cache, dfused);

    auto tensors = params.params();
    CHECK(num::finite_diff_check(loss, tensors) < 1e-4);
  }
}

TEST_CASE("dimension mismatches are rejected") {
  FusionConfig config{.d_g = 4, .d_m = 3, .d_prime = 2, .d = 5,
                      .mode = Mode::factorized};
  auto params = random_params(config, 11);
  std::vector<double> g(3, 1.0), m(3, 1.0);
  CHECK_THROWS_AS(fuse_one(g, m, params), DimError);
  CHECK_THROWS_AS(fuse_exact(g, m, params), DimError);  // wrong mode
}
