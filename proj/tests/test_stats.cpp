#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "qta/rng.hpp"
#include "qta/stats.hpp"

using namespace qta;
using namespace qta::stats;
using Catch::Approx;

namespace {

// composite Simpson on [a, b]
template <class F> double simpson(F f, double a, double b, int n = 20000) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i)
    s += f(a + i * h) * (i % 2 ? 4 : 2);
  return s * h / 3;
}

// exact two-sided signed-rank p by enumerating all 2^n sign patterns
double wilcoxon_enumerated(const std::vector<double> &d) {
  std::vector<double> nz;
  for (double v : d)
    if (v != 0)
      nz.push_back(v);
  std::vector<double> a;
  for (double v : nz)
    a.push_back(std::abs(v));
  const auto r = average_ranks(a);
  double obs = 0;
  for (std::size_t i = 0; i < nz.size(); ++i)
    if (nz[i] > 0)
      obs += r[i];
  const std::size_t n = nz.size();
  double lo = 0, hi = 0;
  for (std::uint64_t mask = 0; mask < (1ULL << n); ++mask) {
    double w = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (mask >> i & 1)
        w += r[i];
    lo += w <= obs + 1e-9;
    hi += w >= obs - 1e-9;
  }
  const double total = static_cast<double>(1ULL << n);
  return std::min(1.0, 2 * std::min(lo, hi) / total);
}

} // namespace

TEST_CASE("concordance correlation hand cases", "[stats]") {
  CHECK(ccc({1, 2, 3}, {2, 3, 4}) == Approx(4.0 / 7.0).epsilon(1e-14));
  CHECK(ccc({1, 2, 3}, {3, 2, 1}) == Approx(-1.0).epsilon(1e-14));
  CHECK(ccc({1, 2, 3}, {1, 2, 3}) == Approx(1.0).epsilon(1e-14));
  CHECK(ccc({2, 2, 2}, {2, 2, 2}) == 1.0);
  CHECK_THROWS_AS(ccc({1, 2}, {1}), ValidationError);

  Rng rng(12);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> a, b;
    for (int i = 0; i < 6; ++i) {
      a.push_back(rng.normal());
      b.push_back(2 * rng.normal() + 0.5);
    }
    CHECK(ccc(a, b) == Approx(ccc(b, a)).epsilon(1e-14));
    CHECK(std::abs(ccc(a, b)) <= 1.0);
  }
}

TEST_CASE("r squared and its bootstrap interval", "[stats]") {
  CHECK(r2({1, 2, 3, 4}, {1, 2, 3, 4}) == 1.0);
  // residuals 0.5, -0.5, 0.5, -0.5 over SStot 5
  CHECK(r2({1, 2, 3, 4}, {0.5, 2.5, 2.5, 4.5}) == Approx(1 - 1.0 / 5).epsilon(1e-14));
  CHECK_THROWS_AS(r2({3, 3, 3}, {1, 2, 3}), NumericError);

  Rng gen(11);
  std::vector<double> y, p;
  for (int i = 0; i < 40; ++i) {
    y.push_back(gen.normal());
    p.push_back(y.back() + 0.3 * gen.normal());
  }
  const auto ci = bootstrap_ci_r2(y, p, 500, 99);
  // second pass: replay the resampling with the same generator
  Rng rng(99);
  std::vector<double> vals;
  int skipped = 0;
  for (int b = 0; b < 500; ++b) {
    std::vector<double> ys, ps;
    for (std::size_t i = 0; i < y.size(); ++i) {
      const auto k = rng.below(y.size());
      ys.push_back(y[k]);
      ps.push_back(p[k]);
    }
    double m = 0;
    for (double v : ys)
      m += v / static_cast<double>(ys.size());
    double res = 0, tot = 0;
    for (std::size_t i = 0; i < ys.size(); ++i) {
      res += (ys[i] - ps[i]) * (ys[i] - ps[i]);
      tot += (ys[i] - m) * (ys[i] - m);
    }
    if (tot == 0) {
      ++skipped;
      continue;
    }
    vals.push_back(1 - res / tot);
  }
  std::sort(vals.begin(), vals.end());
  const double h = 0.025 * static_cast<double>(vals.size() - 1);
  const auto i = static_cast<std::size_t>(h);
  CHECK(ci.lo == Approx(vals[i] + (h - i) * (vals[i + 1] - vals[i])).epsilon(1e-12));
  CHECK(ci.skipped == skipped);
  CHECK(ci.used == 500);
  CHECK(ci.lo < r2(y, p));
  CHECK(ci.hi > r2(y, p));

  // a two-point sample produces many constant resamples that are skipped
  const auto small = bootstrap_ci_r2({0, 1}, {0, 1}, 200, 3);
  CHECK(small.skipped > 50);
  CHECK(small.used + small.skipped == 200);
}

TEST_CASE("type-7 quantiles", "[stats]") {
  CHECK(quantile({1, 2, 3, 4}, 0.5) == 2.5);
  CHECK(quantile({4, 1, 3, 2}, 0.25) == 1.75);
  CHECK(quantile({5}, 0.9) == 5);
  CHECK(quantile({1, 2}, 1.0) == 2);
}

TEST_CASE("Student t quantile agrees with integrated density", "[stats]") {
  const double q = t_quantile(0.975, 4);
  CHECK(q == Approx(2.7764).margin(5e-5));
  const double df = 4;
  const double c = std::tgamma((df + 1) / 2) / (std::sqrt(df * M_PI) * std::tgamma(df / 2));
  const double mass = simpson([&](double t) { return c * std::pow(1 + t * t / df, -(df + 1) / 2); }, 0, q);
  CHECK(mass == Approx(0.475).margin(1e-9));
}

TEST_CASE("studentized range distribution", "[stats][tukey]") {
  // reference values from an independent implementation
  CHECK(qtukey(0.95, 3, 12) == Approx(3.772928965726967).epsilon(1e-6));
  CHECK(qtukey(0.95, 3, 8) == Approx(4.04103647198594).epsilon(1e-6));
  CHECK(qtukey(0.95, 2, 4) == Approx(3.9264863229551143).epsilon(1e-6));
  CHECK(qtukey(0.95, 5, 16) == Approx(4.332687844866267).epsilon(1e-6));
  CHECK(1 - ptukey(3.0, 4, 12) == Approx(0.20126407659071655).epsilon(1e-6));

  // two groups: Q = sqrt(2) |T| with df degrees of freedom
  const double t = t_quantile(0.975, 6);
  CHECK(ptukey(std::sqrt(2.0) * t, 2, 6) == Approx(0.95).margin(1e-8));

  // Monte Carlo: range of k normals over an independent chi/sqrt(df)
  Rng rng(5);
  const int k = 3, df = 12, draws = 400000;
  const double q = qtukey(0.95, k, df);
  int below = 0;
  for (int d = 0; d < draws; ++d) {
    double lo = 1e300, hi = -1e300;
    for (int g = 0; g < k; ++g) {
      const double z = rng.normal();
      lo = std::min(lo, z);
      hi = std::max(hi, z);
    }
    double chi = 0;
    for (int j = 0; j < df; ++j) {
      const double z = rng.normal();
      chi += z * z;
    }
    below += (hi - lo) / std::sqrt(chi / df) <= q;
  }
  // binomial SE at 0.95 is about 3.4e-4
  CHECK(static_cast<double>(below) / draws == Approx(0.95).margin(0.0015));
}

TEST_CASE("repeated-measures ANOVA with Tukey HSD", "[stats][tukey]") {
  // 3 models x 5 repeats; model means 0.80, 0.82, 0.90
  const std::vector<std::vector<double>> s{
      {0.80, 0.78, 0.82, 0.79, 0.81},
      {0.81, 0.80, 0.84, 0.82, 0.83},
      {0.90, 0.89, 0.91, 0.88, 0.92},
  };
  const auto r = rm_anova_tukey({"a", "b", "c"}, s);
  CHECK(r.df_error == 8);
  CHECK(r.means[0] == Approx(0.80).epsilon(1e-12));
  CHECK(r.means[2] == Approx(0.90).epsilon(1e-12));

  // hand computation of the error mean square
  double grand = 0;
  for (const auto &row : s)
    for (double v : row)
      grand += v / 15;
  double sse = 0;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      double blk = (s[0][j] + s[1][j] + s[2][j]) / 3;
      sse += std::pow(s[i][j] - r.means[i] - blk + grand, 2);
    }
  CHECK(r.mse == Approx(sse / 8).epsilon(1e-10));
  CHECK(r.q_crit == Approx(4.04103647198594).epsilon(1e-6));
  CHECK(r.msd == Approx(4.04103647198594 * std::sqrt(sse / 8 / 5)).epsilon(1e-6));

  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = i + 1; j < 3; ++j) {
      const double gap = std::abs(r.means[i] - r.means[j]);
      CHECK(r.significant(i, j) == (gap > r.msd));
      CHECK(r.significant(i, j) == (r.p_raw[i][j] < 0.05));
      CHECK(r.p_reported[i][j] >= kReportedPFloor);
      CHECK(r.p_reported[i][j] == std::max(r.p_raw[i][j], kReportedPFloor));
    }
  CHECK(r.significant(0, 2));
  CHECK(r.p_raw[0][2] < 1e-3);
  CHECK(r.p_reported[0][2] == kReportedPFloor);

  // confidence half-width uses the sample standard deviation
  const double sd = std::sqrt(variance(s[0]));
  CHECK(r.ci_half[0] == Approx(t_quantile(0.975, 4) * sd / std::sqrt(5.0)).epsilon(1e-12));

  // a pure shift between models leaves no error variance
  const auto d = rm_anova_tukey({"a", "b"}, {{1, 2, 3}, {2, 3, 4}});
  CHECK(d.degenerate);
  CHECK(d.p_raw[0][1] == 0.0);

  const auto same = rm_anova_tukey({"a", "b", "c"}, {s[0], s[0], s[2]});
  CHECK(same.p_raw[0][1] == Approx(1.0).margin(1e-9));
  CHECK(same.p_reported[0][0] == 1.0);
  CHECK_FALSE(same.significant(0, 1));

  CHECK_THROWS_AS(rm_anova_tukey({"a", "b"}, {{1, 2}, {1, 2, 3}}), ValidationError);
  CHECK_THROWS_AS(rm_anova_tukey({"a"}, {{1, 2}}), ValidationError);
}

TEST_CASE("Tukey p decreases with the mean gap", "[stats][tukey]") {
  Rng rng(31);
  std::vector<double> base, noise_b, noise_c;
  for (int r = 0; r < 5; ++r) {
    base.push_back(0.8 + 0.01 * rng.normal());
    noise_b.push_back(0.01 * rng.normal());
    noise_c.push_back(0.01 * rng.normal());
  }
  double last = 2;
  for (double gap = 0; gap <= 0.1; gap += 0.005) {
    std::vector<double> b, c;
    for (int r = 0; r < 5; ++r) {
      b.push_back(base[r] + noise_b[r]);
      c.push_back(base[r] + noise_c[r] + gap);
    }
    const auto t = rm_anova_tukey({"a", "b", "c"}, {base, b, c});
    // a constant offset leaves the error term unchanged
    CHECK(t.p_raw[0][2] <= last + 1e-12);
    last = t.p_raw[0][2];
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = i + 1; j < 3; ++j) {
        const double gap_ij = std::abs(t.means[i] - t.means[j]);
        if (std::abs(gap_ij - t.msd) > 1e-9)
          CHECK(t.significant(i, j) == (gap_ij > t.msd));
      }
  }
  CHECK(last < 1e-3);
}

TEST_CASE("score matrix aggregation", "[stats]") {
  ScoreMatrix m;
  for (int r = 1; r <= 2; ++r)
    for (int f = 1; f <= 3; ++f)
      for (const char *st : {"ring", "chain"})
        m.push_back({"x", r, f, st, "r2", (r - 1) + 0.1 * (f - 1) + (std::string(st) == "ring" ? 0.02 : 0.0)});
  const auto all = fold_scores(m, "x", "r2", {}, 2, 3);
  CHECK(all[1][2] == Approx(1.2 + 0.01).epsilon(1e-12));
  const auto ring = fold_scores(m, "x", "r2", {"ring"}, 2, 3);
  CHECK(ring[0][1] == Approx(0.12).epsilon(1e-12));
  const auto means = repeat_means(all);
  CHECK(means[0] == Approx(0.11).epsilon(1e-12));
  CHECK_THROWS_AS(fold_scores(m, "x", "r2", {}, 3, 3), ValidationError);
  CHECK_THROWS_AS(fold_scores(m, "y", "r2", {}, 2, 3), ValidationError);
}

TEST_CASE("intraclass correlation and effective sample size", "[stats]") {
  CHECK(icc1({{1, 1}, {2, 2}}).icc == Approx(1.0));
  const auto z = icc1({{1, 2}, {1, 2}});
  CHECK(z.msb == 0);
  CHECK(z.icc == Approx(-1.0));
  CHECK(n_eff(0.153) == Approx(15.5).margin(0.05));
  CHECK(n_eff(0.343) == Approx(10.5).margin(0.05));
  CHECK(n_eff(-0.2) == 25);
  CHECK(icc1({{3, 3}, {3, 3}}).degenerate);

  // MSB and MSW against a direct computation
  const auto r = icc1({{1, 2, 3}, {2, 4, 6}, {0, 0, 3}});
  // group means 2, 4, 1; grand 7/3
  const double msb = 3 * (std::pow(2 - 7.0 / 3, 2) + std::pow(4 - 7.0 / 3, 2) + std::pow(1 - 7.0 / 3, 2)) / 2;
  const double msw = (2.0 + 8.0 + 6.0) / 6;
  CHECK(r.msb == Approx(msb).epsilon(1e-12));
  CHECK(r.msw == Approx(msw).epsilon(1e-12));
  CHECK(r.icc == Approx((msb - msw) / (msb + 2 * msw)).epsilon(1e-12));
}

TEST_CASE("Shapiro-Wilk", "[stats][normality]") {
  const auto a = shapiro_wilk({1, 2, 3, 4, 5});
  CHECK(a.statistic == Approx(0.986762155211559).epsilon(1e-6));
  CHECK(a.p == Approx(0.9671739349728582).epsilon(1e-5));
  const auto b =
      shapiro_wilk({2.1, 3.4, 1.9, 5.6, 4.4, 3.3, 2.8, 3.9, 4.1, 2.2, 6.0, 3.1, 2.7, 4.8, 3.6});
  CHECK(b.statistic == Approx(0.95758348489739786).epsilon(1e-6));
  CHECK(b.p == Approx(0.65048919647670789).epsilon(1e-4));
  const auto c = shapiro_wilk({1.0, 1.5, 2.2, 8.0, 9.5, 1.1, 0.3, 2.0});
  CHECK(c.statistic == Approx(0.74690481433249745).epsilon(1e-6));
  CHECK(c.p == Approx(0.007548900886059781).epsilon(1e-3));

  CHECK(shapiro_wilk({1, 1, 1, 1}).degenerate);
  CHECK_THROWS_AS(shapiro_wilk({1, 2}), ValidationError);
}

TEST_CASE("Shapiro-Wilk holds its size under normal data", "[stats][normality]") {
  Rng rng(8);
  const int trials = 100000;
  int rejected = 0;
  for (int t = 0; t < trials; ++t) {
    std::vector<double> x(5);
    for (auto &v : x)
      v = rng.normal();
    rejected += shapiro_wilk(x).p < 0.05;
  }
  const double rate = static_cast<double>(rejected) / trials;
  CHECK(rate >= 0.035);
  CHECK(rate <= 0.065);
}

TEST_CASE("Levene", "[stats]") {
  const auto a = levene({{1, 2, 3, 4, 5.5}, {2, 4, 6, 9, 1}, {3, 3.5, 2, 8, 9, 10}});
  CHECK(a.statistic == Approx(3.2742128420519196).epsilon(1e-10));
  CHECK(a.p == Approx(0.070535081190469098).epsilon(1e-8));

  const auto same = levene({{1, 2, 4, 7}, {1, 2, 4, 7}});
  CHECK(same.statistic == Approx(0.0).margin(1e-14));
  CHECK(same.p == Approx(1.0));

  Rng rng(4);
  std::vector<double> g1, g2;
  for (int i = 0; i < 40; ++i) {
    g1.push_back(rng.normal());
    g2.push_back(100 * rng.normal());
  }
  CHECK(levene({g1, g2}).p < 1e-6);
}

TEST_CASE("paired t and Wilcoxon signed-rank", "[stats]") {
  const std::vector<double> d{0.5, -1.2, 2.3, 0.8, 1.9, -0.4};
  const auto t = paired_t(d);
  CHECK(t.statistic == Approx(1.1964090823227052).epsilon(1e-10));
  CHECK(t.p == Approx(0.28516953483172253).epsilon(1e-8));

  const auto w = wilcoxon(d);
  CHECK(w.statistic == 16); // W+; W- = 5
  CHECK(w.p == Approx(0.3125).epsilon(1e-12));

  // exact distribution against brute-force enumeration, with ties and zeros
  Rng rng(21);
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(8));
    std::vector<double> x;
    for (int i = 0; i < n; ++i)
      x.push_back(static_cast<double>(static_cast<int>(rng.below(7)) - 3));
    const auto r = wilcoxon(x);
    if (r.degenerate)
      continue;
    CHECK(r.p == Approx(wilcoxon_enumerated(x)).epsilon(1e-12));
  }

  // normal approximation above 25 pairs
  const std::vector<double> e{
      0.64558419206478601,  1.1216181435011583,   0.63043707618338707,  -1.0031572316043609,
      1.2053558666731177,   0.74637457236401128,  -0.23695323536028517, 0.88111810419635317,
      0.66457239618607566,  0.59413249665552592,  0.32842224131579678,  0.84671298661244698,
      -0.43645408700166693, 0.13709005200694721,  -0.18211931267997827, 0.89884621263462749,
      0.33972210748165899,  0.0075432490349113812, -0.48190846235684209, 0.042807759381129296,
      0.30814218051834352,  0.024397094700629562, 1.5940638143982073,   1.3067243153057944,
      -2.4111624789659687,  -1.5890132459676727,  0.12522790794483804,  -0.12219041157635357,
      0.51364299749861109,  0.51732193102256363,  2.4178387550510481,   -0.81202076269228129,
      -0.077605007126998082, 2.3427716074923302,  0.94670299620184695,  0.96306337237626161,
      -0.21400637168746289, -1.3480751708556526,  0.46746474422274109,  0.40901408782154752};
  CHECK(wilcoxon(e).p == Approx(0.017997559798809262).epsilon(1e-9));

  // 25 equal positive shifts: only the all-positive pattern reaches W+ = 325
  const auto shift = wilcoxon(std::vector<double>(25, 0.01));
  CHECK(shift.statistic == 325);
  CHECK(shift.p == Approx(2.0 / 33554432.0).epsilon(1e-12));

  CHECK(wilcoxon({0, 0, 0}).degenerate);
  CHECK(paired_t({1, 1, 1}).degenerate);
}

TEST_CASE("paired diagnostic battery", "[stats]") {
  const std::vector<std::vector<double>> a{{0.9, 0.8, 0.85, 0.7, 0.95},
                                           {0.88, 0.82, 0.8, 0.75, 0.9},
                                           {0.91, 0.79, 0.86, 0.72, 0.93},
                                           {0.87, 0.81, 0.84, 0.74, 0.96},
                                           {0.9, 0.83, 0.83, 0.71, 0.94}};
  auto b = a;
  Rng rng(2);
  for (auto &r : b)
    for (auto &v : r)
      v -= 0.02 + 0.01 * rng.normal();
  const auto p = paired_battery(a, b);
  std::vector<double> d;
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t f = 0; f < 5; ++f)
      d.push_back(a[r][f] - b[r][f]);
  CHECK(p.mean_delta == Approx(mean(d)).epsilon(1e-12));
  CHECK(p.t_test.p == Approx(paired_t(d).p).epsilon(1e-12));
  CHECK(p.wilcoxon.p == Approx(wilcoxon(d).p).epsilon(1e-12));
  CHECK(p.shapiro.statistic == Approx(shapiro_wilk(d).statistic).epsilon(1e-12));
  CHECK(p.n_eff == Approx(n_eff(p.icc.icc)).epsilon(1e-12));
  CHECK(p.t_test.p < 0.001);

  const auto none = paired_battery(a, a);
  CHECK(none.mean_delta == 0);
  CHECK(none.degenerate);
  CHECK(none.t_test.degenerate);
  CHECK(none.wilcoxon.degenerate);

  auto shifted = a;
  for (auto &r : shifted)
    for (auto &v : r)
      v += 0.01;
  const auto c = paired_battery(shifted, a);
  CHECK(c.t_test.degenerate);
  CHECK(c.wilcoxon.p == Approx(2.0 / 33554432.0).epsilon(1e-12));
}
