#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>

#include "retina/analysis.hpp"
#include "retina/pyramid.hpp"

namespace retina {

/// Condition number quoted for the 257x257 filter bank, printed next to our estimate for comparison.
inline constexpr double kReferenceCondition257 = 16.0;

/// Upper frame constant: sum over layers of (layer_weight * ||DoG_k||_1)^2.
double beta_bound(const GridSpec& grid, const DoGParams& params, CoarseFilter coarse = CoarseFilter::scaling);

/// Lower frame constant from the DFT of the (weighted) coarsest and finest filters on the
/// N x N periodic grid: min of |F(DoG_0)(0,0)|^2 and |F(DoG_{K-1})(w)|^2 over w != 0.
/// Throws ConsistencyError when the result is not positive.
double alpha_bound(const DoGParams& params, std::size_t image_side, int layers,
                   CoarseFilter coarse = CoarseFilter::scaling);

/// ||Phi f||^2 / ||f||^2.
double energy_ratio(const AnalysisOperator& op, std::span<const double> image);

struct SpectrumEstimate {
  double lambda_min = 0.0;
  double lambda_max = 0.0;
  double condition = 0.0;
  std::size_t iterations = 0;
};

/// Extreme eigenvalues of Phi* Phi by power iteration (the smallest through the shifted
/// operator lambda_max I - Phi* Phi).
SpectrumEstimate estimate_spectrum(const AnalysisOperator& op, std::size_t max_iterations = 3000,
                                   double tolerance = 1e-10, std::uint64_t seed = 7);

struct FrameReport {
  std::size_t image_side = 0;
  int layers = 0;
  std::size_t trials = 0;
  double alpha = 0.0;
  double beta = 0.0;
  double empirical_min = 0.0;
  double empirical_max = 0.0;
  double lambda_min = 0.0;
  double lambda_max = 0.0;
  double condition_estimate = 0.0;
};

/// Draws `trials` uniform random images, checks alpha - eps <= ||Phi f||^2/||f||^2 <= beta + eps
/// with eps = 1e-9 beta, and estimates the condition number of Phi* Phi.
/// Throws FrameConditionViolated with the offending ratio.
FrameReport verify_frame_condition(const AnalysisOperator& op, std::size_t trials, std::uint64_t seed = 1);

/// "key value" lines, one per field.
std::string to_key_value(const FrameReport& report);
/// Aligned human-readable table.
std::string to_table(const FrameReport& report);

}  // namespace retina
