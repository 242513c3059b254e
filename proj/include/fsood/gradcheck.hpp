#pragma once

#include <cstdint>
#include <vector>

namespace fsood {

/// Central-difference step used by the gradient check.
inline constexpr double kGradcheckStep = 1e-6;
/// Largest relative error that still passes.
inline constexpr double kGradcheckTolerance = 1e-5;

struct GradcheckInstance {
  std::size_t batch = 0;
  std::size_t bank = 0;
  std::size_t dim = 0;
  double tau = 0.0;
  double rel_err_embeddings = 0.0;  ///< dL_mcl/dz
  double rel_err_encoder = 0.0;     ///< d(L_cls + lambda L_mcl)/d(encoder params)
};

struct GradcheckReport {
  std::size_t instances = 0;
  double max_rel_err = 0.0;
  bool pass = true;
  std::vector<GradcheckInstance> details;
};

/// Compares analytic gradients with central differences on randomly drawn
/// small problems: batch size 2..6, bank size 0..16, embedding dim 4 or 8.
/// Relative error per parameter block is |a - n|_inf / max(|a|_inf, |n|_inf)
/// (0 when both vanish). `corrupt` scales the analytic gradients by 1.001 so
/// the check can be seen to fail. Zero instances pass vacuously.
GradcheckReport run_gradcheck(std::size_t instances, std::uint64_t seed, bool corrupt = false);

}  // namespace fsood
