#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace diunet {

inline constexpr double kDefaultAlpha = 0.05;

/// Standard median; averages the two middle values for even counts.
double median(std::vector<double> values);
double mean(std::span<const double> values);

struct ShapiroWilkResult {
  double w = 0.0;
  double p_value = 0.0;
};

/// Royston's (1995) approximation for the coefficients and p-value.
/// Requires 3 <= n <= 50 and a non-constant sample.
ShapiroWilkResult shapiro_wilk(std::span<const double> sample);

enum class WilcoxonMode { Auto, Exact, Normal };

struct WilcoxonResult {
  double statistic = 0.0;  // min(W+, W-)
  double w_plus = 0.0;     // rank sum of positive differences b - a
  std::size_t nonzero = 0; // pairs left after dropping zero differences
  double p_value = 1.0;    // two-sided
  bool exact = true;
};

/// Two-sided paired signed-rank test on b - a. Zero differences are dropped
/// and tied magnitudes share their average rank. Auto mode enumerates the
/// exact null distribution for up to 25 nonzero pairs and falls back to the
/// tie-corrected normal approximation (with continuity correction) above.
/// Throws when every difference is zero.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b,
                                    WilcoxonMode mode = WilcoxonMode::Auto);

/// Per-fold summary: median per-image Dice over the fold's validation set.
struct FoldReport {
  std::size_t fold = 0;
  std::size_t images = 0;
  double wt = 0.0;
  double tc = 0.0;
  double et = 0.0;

  bool operator==(const FoldReport&) const = default;
};

struct ComparisonRow {
  std::string region;  // WT, TC or ET
  double median_a = 0.0, median_b = 0.0;
  double mean_a = 0.0, mean_b = 0.0;
  // NaN when the test is undefined for the sample (constant values).
  double shapiro_w_a = 0.0, shapiro_p_a = 0.0;
  double shapiro_w_b = 0.0, shapiro_p_b = 0.0;
  bool normal_a = false, normal_b = false;
  std::string test = "wilcoxon";
  double statistic = 0.0;
  double p_value = 1.0;
  bool significant = false;
};

/// Normality check on each model's fold scores, then a two-sided Wilcoxon
/// signed-rank test per sub-region. Identical score lists give p = 1.
std::vector<ComparisonRow> compare_models(std::span<const FoldReport> a,
                                          std::span<const FoldReport> b,
                                          double alpha = kDefaultAlpha);

}  // namespace diunet
