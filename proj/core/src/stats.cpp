#include "diunet/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <boost/math/distributions/normal.hpp>

namespace diunet {

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double mean(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("mean of an empty list");
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

namespace {

const boost::math::normal_distribution<double> kStdNormal;

// c[0] + c[1] x + ... + c[n-1] x^(n-1)
double poly(std::initializer_list<double> c, double x) {
  double r = 0.0;
  for (auto it = std::rbegin(c); it != std::rend(c); ++it) r = r * x + *it;
  return r;
}

double upper_tail(double z) { return boost::math::cdf(boost::math::complement(kStdNormal, z)); }

}  // namespace

ShapiroWilkResult shapiro_wilk(std::span<const double> sample) {
  const std::size_t n = sample.size();
  if (n < 3 || n > 50) {
    throw std::invalid_argument("Shapiro-Wilk needs 3 to 50 values, got " + std::to_string(n));
  }
  std::vector<double> x(sample.begin(), sample.end());
  std::sort(x.begin(), x.end());
  if (!(x.back() - x.front() > 0.0)) {
    throw std::invalid_argument("Shapiro-Wilk is undefined for a constant sample");
  }

  // Coefficients for the lower half of the order statistics (positive,
  // applied with a negative sign); the upper half mirrors them.
  const std::size_t half = n / 2;
  const double an = static_cast<double>(n);
  std::vector<double> a(half);
  if (n == 3) {
    a[0] = std::sqrt(0.5);
  } else {
    std::vector<double> m(half);
    double summ2 = 0.0;
    for (std::size_t i = 0; i < half; ++i) {
      m[i] = boost::math::quantile(kStdNormal, (static_cast<double>(i + 1) - 0.375) / (an + 0.25));
      summ2 += m[i] * m[i];
    }
    summ2 *= 2.0;
    const double ssumm2 = std::sqrt(summ2);
    const double rsn = 1.0 / std::sqrt(an);
    const double a1 =
        poly({0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056}, rsn) - m[0] / ssumm2;
    std::size_t first_scaled;
    double fac;
    if (n > 5) {
      const double a2 =
          -m[1] / ssumm2 + poly({0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633}, rsn);
      fac = std::sqrt((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1]) /
                      (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2));
      a[1] = a2;
      first_scaled = 2;
    } else {
      fac = std::sqrt((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1));
      first_scaled = 1;
    }
    a[0] = a1;
    for (std::size_t i = first_scaled; i < half; ++i) a[i] = -m[i] / fac;
  }

  // W as the squared correlation between coefficients and order statistics.
  std::vector<double> coef(n, 0.0);
  for (std::size_t i = 0; i < half; ++i) {
    coef[i] = -a[i];
    coef[n - 1 - i] = a[i];
  }
  const double xbar = std::accumulate(x.begin(), x.end(), 0.0) / an;
  const double cbar = std::accumulate(coef.begin(), coef.end(), 0.0) / an;
  double sxx = 0.0, scc = 0.0, scx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - xbar;
    const double dc = coef[i] - cbar;
    sxx += dx * dx;
    scc += dc * dc;
    scx += dc * dx;
  }
  const double w = std::min(1.0, scx * scx / (scc * sxx));

  ShapiroWilkResult result;
  result.w = w;
  if (n == 3) {
    constexpr double kPi = 3.14159265358979323846;
    result.p_value = std::max(0.0, 6.0 / kPi * (std::asin(std::sqrt(w)) - kPi / 3.0));
    return result;
  }
  double w1 = std::log(1.0 - w);
  double mu, sigma;
  if (n <= 11) {
    const double gamma = poly({-2.273, 0.459}, an);
    if (w1 >= gamma) {
      result.p_value = 1e-99;
      return result;
    }
    w1 = -std::log(gamma - w1);
    mu = poly({0.5440, -0.39978, 0.025054, -6.714e-4}, an);
    sigma = std::exp(poly({1.3822, -0.77857, 0.062767, -0.0020322}, an));
  } else {
    const double ln = std::log(an);
    mu = poly({-1.5861, -0.31082, -0.083751, 0.0038915}, ln);
    sigma = std::exp(poly({-0.4803, -0.082676, 0.0030302}, ln));
  }
  result.p_value = upper_tail((w1 - mu) / sigma);
  return result;
}

WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b,
                                    WilcoxonMode mode) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("Wilcoxon test needs paired lists of equal length, got " +
                                std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = b[i] - a[i];
    if (!std::isfinite(diff)) throw std::invalid_argument("Wilcoxon input is not finite");
    if (diff != 0.0) d.push_back(diff);
  }
  const std::size_t m = d.size();
  if (m == 0) throw std::invalid_argument("Wilcoxon test: every paired difference is zero");

  // Doubled average ranks of |d| are integers, which keeps the exact
  // distribution on an integer lattice even with ties.
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t i, std::size_t j) { return std::abs(d[i]) < std::abs(d[j]); });
  std::vector<std::size_t> rank2(m);
  double tie_term = 0.0;
  for (std::size_t i = 0; i < m;) {
    std::size_t j = i;
    while (j + 1 < m && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
    const std::size_t doubled = (i + 1) + (j + 1);  // 2 * average of ranks i+1..j+1
    for (std::size_t k = i; k <= j; ++k) rank2[order[k]] = doubled;
    const double t = static_cast<double>(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }
  std::size_t w_plus2 = 0;
  for (std::size_t i = 0; i < m; ++i)
    if (d[i] > 0) w_plus2 += rank2[i];
  const std::size_t total2 = m * (m + 1);

  WilcoxonResult r;
  r.nonzero = m;
  r.w_plus = static_cast<double>(w_plus2) / 2.0;
  r.statistic = std::min(r.w_plus, static_cast<double>(total2 - w_plus2) / 2.0);

  const bool exact = mode == WilcoxonMode::Exact || (mode == WilcoxonMode::Auto && m <= 25);
  r.exact = exact;
  if (exact) {
    if (m > 60) throw std::invalid_argument("exact Wilcoxon supports at most 60 nonzero pairs");
    std::vector<double> count(total2 + 1, 0.0);
    count[0] = 1.0;
    std::size_t reach = 0;
    for (std::size_t i = 0; i < m; ++i) {
      reach += rank2[i];
      for (std::size_t s = reach; s >= rank2[i]; --s) count[s] += count[s - rank2[i]];
    }
    double lower = 0.0, upper = 0.0;
    for (std::size_t s = 0; s <= total2; ++s) {
      if (s <= w_plus2) lower += count[s];
      if (s >= w_plus2) upper += count[s];
    }
    const double all = std::ldexp(1.0, static_cast<int>(m));
    r.p_value = std::min(1.0, 2.0 * std::min(lower, upper) / all);
  } else {
    const double dm = static_cast<double>(m);
    const double mu = dm * (dm + 1.0) / 4.0;
    const double var = dm * (dm + 1.0) * (2.0 * dm + 1.0) / 24.0 - tie_term / 48.0;
    const double dev = std::abs(r.w_plus - mu);
    if (var <= 0.0) {
      r.p_value = 1.0;
    } else {
      const double z = std::max(0.0, dev - 0.5) / std::sqrt(var);
      r.p_value = std::min(1.0, 2.0 * upper_tail(z));
    }
  }
  return r;
}

std::vector<ComparisonRow> compare_models(std::span<const FoldReport> a,
                                          std::span<const FoldReport> b, double alpha) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("model comparison needs equal fold counts, got " +
                                std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  if (a.empty()) throw std::invalid_argument("model comparison needs at least one fold");
  constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
  auto column = [](std::span<const FoldReport> reports, double FoldReport::*field) {
    std::vector<double> out;
    for (const auto& r : reports) out.push_back(r.*field);
    return out;
  };
  auto normality = [&](const std::vector<double>& v, double& w, double& p) {
    try {
      const ShapiroWilkResult s = shapiro_wilk(v);
      w = s.w;
      p = s.p_value;
      return p >= alpha;
    } catch (const std::invalid_argument&) {
      w = p = kNaN;
      return false;
    }
  };

  const std::pair<const char*, double FoldReport::*> regions[] = {
      {"WT", &FoldReport::wt}, {"TC", &FoldReport::tc}, {"ET", &FoldReport::et}};
  std::vector<ComparisonRow> rows;
  for (const auto& [name, field] : regions) {
    const auto va = column(a, field);
    const auto vb = column(b, field);
    ComparisonRow row;
    row.region = name;
    row.median_a = median(va);
    row.median_b = median(vb);
    row.mean_a = mean(va);
    row.mean_b = mean(vb);
    row.normal_a = normality(va, row.shapiro_w_a, row.shapiro_p_a);
    row.normal_b = normality(vb, row.shapiro_w_b, row.shapiro_p_b);
    if (va == vb) {
      row.statistic = 0.0;
      row.p_value = 1.0;
    } else {
      const WilcoxonResult w = wilcoxon_signed_rank(va, vb);
      row.statistic = w.statistic;
      row.p_value = w.p_value;
    }
    row.significant = row.p_value < alpha;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace diunet
