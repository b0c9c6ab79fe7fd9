#include "prism/fusion.hpp"

#include <algorithm>
#include <string>

#include "prism/errors.hpp"

namespace prism::fusion {

const char* mode_name(Mode m) {
  return m == Mode::exact ? "exact" : "factorized";
}

Mode parse_mode(const std::string& s) {
  if (s == "exact") return Mode::exact;
  if (s == "factorized") return Mode::factorized;
  throw ConfigError("unknown fusion mode: '" + s + "'");
}

namespace {

std::size_t interaction_dim(const FusionConfig& c) {
  return c.mode == Mode::exact ? c.d_prime * c.d_prime : c.d_prime;
}

}  // namespace

FusionParams::FusionParams(const FusionConfig& config)
    : w_g("fusion.w_g", num::Matrix(config.d_g, config.d_prime)),
      w_m("fusion.w_m", num::Matrix(config.d_m, config.d_prime)),
      w_fusion("fusion.w_fusion",
               num::Matrix(interaction_dim(config), config.d)),
      config_(config) {
  if (config.d_g == 0 || config.d_m == 0 || config.d_prime == 0 ||
      config.d == 0) {
    throw DimError("fusion: zero dimension");
  }
}

FusionParams FusionParams::xavier(const FusionConfig& config, SplitRng& rng) {
  FusionParams params(config);
  params.w_g.value = num::xavier_uniform_init(config.d_g, config.d_prime, rng);
  params.w_m.value = num::xavier_uniform_init(config.d_m, config.d_prime, rng);
  params.w_fusion.value =
      num::xavier_uniform_init(interaction_dim(config), config.d, rng);
  return params;
}

std::vector<num::ParamTensor*> FusionParams::params() {
  return {&w_g, &w_m, &w_fusion};
}

std::vector<const num::ParamTensor*> FusionParams::params() const {
  return {&w_g, &w_m, &w_fusion};
}

namespace {

void check_patch_dims(std::span<const double> g, std::span<const double> m,
                      const FusionConfig& c) {
  if (g.size() != c.d_g) {
    throw DimError("fuse: generic feature dim " + std::to_string(g.size()) +
                   ", expected " + std::to_string(c.d_g));
  }
  if (m.size() != c.d_m) {
    throw DimError("fuse: morph feature dim " + std::to_string(m.size()) +
                   ", expected " + std::to_string(c.d_m));
  }
}

// p = W^T x for one patch.
std::vector<double> project(std::span<const double> x, const num::Matrix& w) {
  std::vector<double> p(w.cols(), 0.0);
  for (std::size_t i = 0; i < w.rows(); ++i) {
    double xi = x[i];
    if (xi == 0.0) continue;
    for (std::size_t j = 0; j < w.cols(); ++j) p[j] += xi * w(i, j);
  }
  return p;
}

std::vector<double> fuse_from_projections(std::span<const double> p,
                                          std::span<const double> q,
                                          const FusionParams& params) {
  const auto& c = params.config();
  const num::Matrix& wf = params.w_fusion.value;
  std::vector<double> f(c.d, 0.0);
  if (c.mode == Mode::exact) {
    // f = W_fusion^T vec(p q^T), row-major vec: entry (a, b) at a*d' + b.
    for (std::size_t a = 0; a < c.d_prime; ++a) {
      for (std::size_t b = 0; b < c.d_prime; ++b) {
        double interaction = p[a] * q[b];
        if (interaction == 0.0) continue;
        std::size_t row = a * c.d_prime + b;
        for (std::size_t k = 0; k < c.d; ++k) {
          f[k] += interaction * wf(row, k);
        }
      }
    }
  } else {
    for (std::size_t a = 0; a < c.d_prime; ++a) {
      double interaction = p[a] * q[a];
      if (interaction == 0.0) continue;
      for (std::size_t k = 0; k < c.d; ++k) {
        f[k] += interaction * wf(a, k);
      }
    }
  }
  return f;
}

}  // namespace

std::vector<double> fuse_exact(std::span<const double> g,
                               std::span<const double> m,
                               const FusionParams& params) {
  if (params.config().mode != Mode::exact) {
    throw DimError("fuse_exact called on factorized parameters");
  }
  return fuse_one(g, m, params);
}

std::vector<double> fuse_factorized(std::span<const double> g,
                                    std::span<const double> m,
                                    const FusionParams& params) {
  if (params.config().mode != Mode::factorized) {
    throw DimError("fuse_factorized called on exact parameters");
  }
  return fuse_one(g, m, params);
}

std::vector<double> fuse_one(std::span<const double> g,
                             std::span<const double> m,
                             const FusionParams& params) {
  check_patch_dims(g, m, params.config());
  auto p = project(g, params.w_g.value);
  auto q = project(m, params.w_m.value);
  return fuse_from_projections(p, q, params);
}

num::Matrix fuse_bag(const num::Matrix& g, const num::Matrix& m,
                     const FusionParams& params, FusionCache* cache) {
  if (g.rows() != m.rows()) {
    throw DimError("fuse_bag: per-patch row counts disagree");
  }
  const auto& c = params.config();
  const std::size_t n = g.rows();
  num::Matrix fused(n, c.d);
  if (cache) {
    cache->p = num::Matrix(n, c.d_prime);
    cache->q = num::Matrix(n, c.d_prime);
  }
  for (std::size_t j = 0; j < n; ++j) {
    check_patch_dims(g.row(j), m.row(j), c);
    auto p = project(g.row(j), params.w_g.value);
    auto q = project(m.row(j), params.w_m.value);
    auto f = fuse_from_projections(p, q, params);
    for (std::size_t k = 0; k < c.d; ++k) fused(j, k) = f[k];
    if (cache) {
      for (std::size_t a = 0; a < c.d_prime; ++a) {
        cache->p(j, a) = p[a];
        cache->q(j, a) = q[a];
      }
    }
  }
  return fused;
}

void fuse_bag_backward(const num::Matrix& g, const num::Matrix& m,
                       FusionParams& params, const FusionCache& cache,
                       const num::Matrix& d_fused) {
  const auto& c = params.config();
  const std::size_t n = g.rows();
  if (d_fused.rows() != n || d_fused.cols() != c.d) {
    throw DimError("fuse_bag_backward: gradient shape mismatch");
  }
  const num::Matrix& wf = params.w_fusion.value;

  std::vector<double> dp(c.d_prime), dq(c.d_prime);
  for (std::size_t j = 0; j < n; ++j) {
    std::fill(dp.begin(), dp.end(), 0.0);
    std::fill(dq.begin(), dq.end(), 0.0);
    if (c.mode == Mode::exact) {
      for (std::size_t a = 0; a < c.d_prime; ++a) {
        for (std::size_t b = 0; b < c.d_prime; ++b) {
          std::size_t row = a * c.d_prime + b;
          double dinter = 0.0;
          for (std::size_t k = 0; k < c.d; ++k) {
            dinter += wf(row, k) * d_fused(j, k);
            params.w_fusion.grad(row, k) +=
                cache.p(j, a) * cache.q(j, b) * d_fused(j, k);
          }
          dp[a] += dinter * cache.q(j, b);
          dq[b] += dinter * cache.p(j, a);
        }
      }
    } else {
      for (std::size_t a = 0; a < c.d_prime; ++a) {
        double dinter = 0.0;
        for (std::size_t k = 0; k < c.d; ++k) {
          dinter += wf(a, k) * d_fused(j, k);
          params.w_fusion.grad(a, k) +=
              cache.p(j, a) * cache.q(j, a) * d_fused(j, k);
        }
        dp[a] += dinter * cache.q(j, a);
        dq[a] += dinter * cache.p(j, a);
      }
    }
    for (std::size_t i = 0; i < c.d_g; ++i) {
      double gi = g(j, i);
      if (gi == 0.0) continue;
      for (std::size_t a = 0; a < c.d_prime; ++a) {
        params.w_g.grad(i, a) += gi * dp[a];
      }
    }
    for (std::size_t i = 0; i < c.d_m; ++i) {
      double mi = m(j, i);
      if (mi == 0.0) continue;
      for (std::size_t a = 0; a < c.d_prime; ++a) {
        params.w_m.grad(i, a) += mi * dq[a];
      }
    }
  }
}

num::Matrix diagonal_selector(const num::Matrix& w_fusion_factorized,
                              std::size_t d_prime) {
  if (w_fusion_factorized.rows() != d_prime) {
    throw DimError("diagonal_selector: factorized W_fusion must have d' rows");
  }
  num::Matrix exact(d_prime * d_prime, w_fusion_factorized.cols());
  for (std::size_t a = 0; a < d_prime; ++a) {
    for (std::size_t k = 0; k < w_fusion_factorized.cols(); ++k) {
      exact(a * d_prime + a, k) = w_fusion_factorized(a, k);
    }
  }
  return exact;
}

}  // namespace prism::fusion
