#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "diunet/stats.hpp"

using namespace diunet;

namespace {

// Exact two-sided p by enumerating every sign assignment of the average
// ranks of |b - a| (zeros dropped).
double enumerate_p(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (b[i] != a[i]) d.push_back(b[i] - a[i]);
  const std::size_t m = d.size();
  std::vector<std::size_t> order(m);
  for (std::size_t i = 0; i < m; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t x, std::size_t y) { return std::abs(d[x]) < std::abs(d[y]); });
  std::vector<double> rank(m);
  for (std::size_t i = 0; i < m;) {
    std::size_t j = i;
    while (j + 1 < m && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = (i + j) / 2.0 + 1.0;
    i = j + 1;
  }
  double observed = 0;
  for (std::size_t i = 0; i < m; ++i)
    if (d[i] > 0) observed += rank[i];
  std::size_t le = 0, ge = 0;
  const std::size_t total = std::size_t{1} << m;
  for (std::size_t mask = 0; mask < total; ++mask) {
    double w = 0;
    for (std::size_t i = 0; i < m; ++i)
      if (mask >> i & 1) w += rank[i];
    le += w <= observed + 1e-9;
    ge += w >= observed - 1e-9;
  }
  return std::min(1.0, 2.0 * std::min(le, ge) / static_cast<double>(total));
}

struct Fixture {
  std::string name;
  double w, p;
  std::vector<double> values;
};

std::vector<Fixture> load_fixtures() {
  std::ifstream in(DIUNET_FIXTURE_DIR "/shapiro_wilk.csv");
  std::vector<Fixture> out;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      header = true;
      continue;
    }
    std::stringstream ss(line);
    Fixture f;
    std::string field;
    std::getline(ss, f.name, ',');
    std::getline(ss, field, ',');
    f.w = std::stod(field);
    std::getline(ss, field, ',');
    f.p = std::stod(field);
    std::getline(ss, field);
    std::stringstream vs(field);
    for (double v; vs >> v;) f.values.push_back(v);
    out.push_back(f);
  }
  return out;
}

FoldReport report(std::size_t f, double wt, double tc, double et) { return {f, 10, wt, tc, et}; }

}  // namespace

TEST(Summary, MedianAndMean) {
  EXPECT_EQ(median({3, 1, 2}), 2.0);
  EXPECT_EQ(median({4, 1, 3, 2}), 2.5);
  const std::vector<double> v{1, 2, 6};
  EXPECT_EQ(mean(v), 3.0);
  EXPECT_THROW(median({}), std::invalid_argument);
}

TEST(Wilcoxon, AllPositiveTenPairs) {
  std::vector<double> a(10, 0.0), b(10);
  for (int i = 0; i < 10; ++i) b[i] = i + 1;
  const auto r = wilcoxon_signed_rank(a, b);
  EXPECT_TRUE(r.exact);
  EXPECT_EQ(r.w_plus, 55.0);
  EXPECT_EQ(r.statistic, 0.0);
  EXPECT_DOUBLE_EQ(r.p_value, 0.001953125);
}

TEST(Wilcoxon, SingleNonzeroPairGivesPOne) {
  const std::vector<double> a{0.5, 0.6, 0.7, 0.8, 0.9}, b{0.5, 0.6, 0.75, 0.8, 0.9};
  const auto r = wilcoxon_signed_rank(a, b);
  EXPECT_EQ(r.nonzero, 1u);
  EXPECT_EQ(r.p_value, 1.0);
}

TEST(Wilcoxon, ExactMatchesEnumeration) {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> len(4, 14);
  std::uniform_int_distribution<int> val(0, 6);  // small range -> ties and zeros
  for (int trial = 0; trial < 300; ++trial) {
    const int n = len(rng);
    std::vector<double> a(n), b(n);
    for (int i = 0; i < n; ++i) {
      a[i] = val(rng) * 0.25;
      b[i] = val(rng) * 0.25;
    }
    if (a == b) continue;
    const auto r = wilcoxon_signed_rank(a, b, WilcoxonMode::Exact);
    EXPECT_NEAR(r.p_value, enumerate_p(a, b), 1e-12) << "trial " << trial;
  }
}

TEST(Wilcoxon, AntisymmetricAndScaleInvariant) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.8, 0.1);
  std::vector<double> a(12), b(12);
  for (int i = 0; i < 12; ++i) {
    a[i] = n(rng);
    b[i] = n(rng) + 0.05;
  }
  const auto ab = wilcoxon_signed_rank(a, b);
  const auto ba = wilcoxon_signed_rank(b, a);
  EXPECT_EQ(ab.p_value, ba.p_value);
  EXPECT_EQ(ab.w_plus + ba.w_plus, 12.0 * 13.0 / 2.0);
  std::vector<double> a3(a), b3(b);
  for (int i = 0; i < 12; ++i) {
    a3[i] = 3 * a[i] + 1;
    b3[i] = 3 * b[i] + 1;
  }
  EXPECT_NEAR(wilcoxon_signed_rank(a3, b3).p_value, ab.p_value, 1e-12);
}

TEST(Wilcoxon, NormalApproximationFormula) {
  // 30 distinct magnitudes, no ties: z = (|W+ - mu| - 1/2) / sigma.
  std::vector<double> a(30, 0.0), b(30);
  double w_plus = 0;
  for (int i = 0; i < 30; ++i) {
    b[i] = (i % 3 == 0 ? -1.0 : 1.0) * (i + 1);
    if (b[i] > 0) w_plus += i + 1;
  }
  const auto r = wilcoxon_signed_rank(a, b);
  EXPECT_FALSE(r.exact);
  EXPECT_EQ(r.w_plus, w_plus);
  const double mu = 30.0 * 31.0 / 4.0, sigma = std::sqrt(30.0 * 31.0 * 61.0 / 24.0);
  const double z = (std::abs(w_plus - mu) - 0.5) / sigma;
  EXPECT_NEAR(r.p_value, std::erfc(z / std::sqrt(2.0)), 1e-12);
  // The exact distribution is close at this size.
  EXPECT_NEAR(wilcoxon_signed_rank(a, b, WilcoxonMode::Exact).p_value, r.p_value, 0.01);
}

TEST(Wilcoxon, Errors) {
  const std::vector<double> a{1, 2, 3}, b{1, 2};
  EXPECT_THROW(wilcoxon_signed_rank(a, b), std::invalid_argument);
  EXPECT_THROW(wilcoxon_signed_rank(a, a), std::invalid_argument);
}

TEST(ShapiroWilk, MatchesReferenceFixtures) {
  const auto fixtures = load_fixtures();
  ASSERT_GE(fixtures.size(), 20u);
  for (const auto& f : fixtures) {
    const auto r = shapiro_wilk(f.values);
    EXPECT_NEAR(r.w, f.w, 1e-3) << f.name;
    EXPECT_NEAR(r.p_value, f.p, 0.1 * f.p) << f.name;
  }
}

TEST(ShapiroWilk, InvariantUnderAffineMaps) {
  std::mt19937_64 rng(8);
  std::gamma_distribution<double> g(2.0, 1.0);
  std::vector<double> v(15), u(15);
  for (int i = 0; i < 15; ++i) {
    v[i] = g(rng);
    u[i] = -4 * v[i] + 7;
  }
  EXPECT_NEAR(shapiro_wilk(v).w, shapiro_wilk(u).w, 1e-12);
  EXPECT_NEAR(shapiro_wilk(v).p_value, shapiro_wilk(u).p_value, 1e-10);
}

TEST(ShapiroWilk, DomainErrors) {
  EXPECT_THROW(shapiro_wilk(std::vector<double>{1, 2}), std::invalid_argument);
  EXPECT_THROW(shapiro_wilk(std::vector<double>(51, 1.0)), std::invalid_argument);
  EXPECT_THROW(shapiro_wilk(std::vector<double>(10, 0.5)), std::invalid_argument);
}

TEST(Compare, IdenticalScoresGivePOne) {
  std::vector<FoldReport> a;
  for (std::size_t f = 0; f < 10; ++f) a.push_back(report(f, 0.8 + 0.01 * f, 0.7, 0.6 + 0.02 * f));
  const auto rows = compare_models(a, a);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].region, "WT");
  EXPECT_EQ(rows[2].region, "ET");
  for (const auto& r : rows) {
    EXPECT_EQ(r.p_value, 1.0);
    EXPECT_FALSE(r.significant);
    EXPECT_EQ(r.test, "wilcoxon");
  }
  // Constant TC column: normality undefined, reported as NaN.
  EXPECT_TRUE(std::isnan(rows[1].shapiro_w_a));
  EXPECT_FALSE(rows[1].normal_a);
}

TEST(Compare, ConsistentImprovementIsSignificant) {
  std::vector<FoldReport> a, b;
  for (std::size_t f = 0; f < 10; ++f) {
    const double base = 0.7 + 0.013 * f;
    a.push_back(report(f, base, base - 0.1, base - 0.2));
    b.push_back(report(f, base + 0.01 + 0.001 * f, base - 0.1 + 0.02, base - 0.2 - 0.001 * (f + 1)));
  }
  const auto rows = compare_models(a, b);
  EXPECT_DOUBLE_EQ(rows[0].p_value, 0.001953125);
  EXPECT_TRUE(rows[0].significant);
  EXPECT_GT(rows[0].median_b, rows[0].median_a);
  EXPECT_TRUE(rows[2].significant);
  EXPECT_LT(rows[2].median_b, rows[2].median_a);
  EXPECT_THROW(compare_models(a, std::span<const FoldReport>(b).first(5)), std::invalid_argument);
}
