#pragma once

#include <span>
#include <string>
#include <vector>

#include "prism/adam.hpp"
#include "prism/matrix.hpp"
#include "prism/rng.hpp"

namespace prism::fusion {

// Cross-feature interaction between the generic and morphology channels.
// `exact` forms the full outer product of the two projections and flattens
// it (the interaction quadratic in d'); `factorized` keeps only the
// Hadamard diagonal and is the training default. Exact reproduces
// factorized when its projection matrix reads only diagonal entries, which
// the test suite uses as the bridging oracle.
enum class Mode { exact, factorized };

const char* mode_name(Mode m);
Mode parse_mode(const std::string& s);

struct FusionConfig {
  std::size_t d_g = 16;    // generic channel dim
  std::size_t d_m = 16;    // morphology channel dim
  std::size_t d_prime = 8; // interaction rank
  std::size_t d = 16;      // fused output dim
  Mode mode = Mode::factorized;
};

// No bias terms anywhere: fusion is bilinear in (g, m) by construction.
class FusionParams {
 public:
  explicit FusionParams(const FusionConfig& config);
  static FusionParams xavier(const FusionConfig& config, SplitRng& rng);

  const FusionConfig& config() const { return config_; }

  std::vector<num::ParamTensor*> params();
  std::vector<const num::ParamTensor*> params() const;

  num::ParamTensor w_g;       // d_g x d'
  num::ParamTensor w_m;       // d_m x d'
  num::ParamTensor w_fusion;  // (d'^2) x d in exact mode, d' x d factorized

 private:
  FusionConfig config_;
};

std::vector<double> fuse_exact(std::span<const double> g,
                               std::span<const double> m,
                               const FusionParams& params);
std::vector<double> fuse_factorized(std::span<const double> g,
                                    std::span<const double> m,
                                    const FusionParams& params);
std::vector<double> fuse_one(std::span<const double> g,
                             std::span<const double> m,
                             const FusionParams& params);

// Per-patch intermediates kept for the backward pass.
struct FusionCache {
  num::Matrix p;  // n x d' (projected generic)
  num::Matrix q;  // n x d' (projected morph)
};

// Row j of the result fuses patch j; order preserved.
num::Matrix fuse_bag(const num::Matrix& g, const num::Matrix& m,
                     const FusionParams& params,
                     FusionCache* cache = nullptr);

// Accumulates parameter gradients for d(loss)/d(output) = d_fused.
void fuse_bag_backward(const num::Matrix& g, const num::Matrix& m,
                       FusionParams& params, const FusionCache& cache,
                       const num::Matrix& d_fused);

// Builds the exact-mode W_fusion whose rows select only diagonal entries of
// the outer product, making exact mode reproduce a factorized parameter set.
num::Matrix diagonal_selector(const num::Matrix& w_fusion_factorized,
                              std::size_t d_prime);

}  // namespace prism::fusion
