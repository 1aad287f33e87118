#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/tools/roots.hpp>

#include "qta/error.hpp"
#include "qta/rng.hpp"

namespace qta::stats {

inline double mean(const std::vector<double> &x) {
  require(!x.empty(), "mean: empty input");
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

/// Sample variance (ddof = 1).
inline double variance(const std::vector<double> &x) {
  require(x.size() >= 2, "variance: need at least two values");
  const double m = mean(x);
  double s = 0;
  for (double v : x)
    s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

inline double sem(const std::vector<double> &x) { return std::sqrt(variance(x) / static_cast<double>(x.size())); }

/// Lin's concordance correlation coefficient with population moments.
/// Identical constant vectors give 1.
inline double ccc(const std::vector<double> &y, const std::vector<double> &yhat) {
  require(y.size() == yhat.size(), "ccc: length mismatch");
  require(y.size() >= 2, "ccc: need at least two points");
  const double n = static_cast<double>(y.size());
  const double my = mean(y), mp = mean(yhat);
  double vy = 0, vp = 0, cov = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    vy += (y[i] - my) * (y[i] - my);
    vp += (yhat[i] - mp) * (yhat[i] - mp);
    cov += (y[i] - my) * (yhat[i] - mp);
  }
  vy /= n, vp /= n, cov /= n;
  const double den = vy + vp + (my - mp) * (my - mp);
  if (den == 0.0)
    return 1.0;
  return 2.0 * cov / den;
}

inline double r2(const std::vector<double> &y, const std::vector<double> &yhat) {
  require(y.size() == yhat.size(), "r2: length mismatch");
  require(y.size() >= 2, "r2: need at least two points");
  const double my = mean(y);
  double res = 0, tot = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    res += (y[i] - yhat[i]) * (y[i] - yhat[i]);
    tot += (y[i] - my) * (y[i] - my);
  }
  if (tot == 0.0)
    throw NumericError("r2: zero total sum of squares");
  return 1.0 - res / tot;
}

/// Linear-interpolation quantile (Hyndman-Fan type 7).
inline double quantile(std::vector<double> x, double q) {
  require(!x.empty(), "quantile: empty input");
  require(q >= 0 && q <= 1, "quantile: q outside [0, 1]");
  std::sort(x.begin(), x.end());
  const double h = (static_cast<double>(x.size()) - 1) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, x.size() - 1);
  return x[lo] + (h - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

struct BootstrapCI {
  double lo = 0, hi = 0;
  int used = 0;    // resamples with non-zero total variance
  int skipped = 0; // degenerate resamples (every draw equal in y)
};

/// Percentile bootstrap over points (resampled with replacement) of R^2,
/// 2.5 and 97.5 % quantiles.
inline BootstrapCI bootstrap_ci_r2(const std::vector<double> &y, const std::vector<double> &yhat, int resamples = 1000,
                                   std::uint64_t seed = 0, double level = 0.95) {
  require(y.size() == yhat.size() && y.size() >= 2, "bootstrap_ci_r2: need matching vectors of length >= 2");
  require(resamples >= 1, "bootstrap_ci_r2: resamples must be >= 1");
  Rng rng(seed);
  std::vector<double> vals, ys(y.size()), ps(y.size());
  BootstrapCI ci;
  for (int b = 0; b < resamples; ++b) {
    for (std::size_t i = 0; i < y.size(); ++i) {
      const auto k = rng.below(y.size());
      ys[i] = y[k];
      ps[i] = yhat[k];
    }
    try {
      vals.push_back(r2(ys, ps));
    } catch (const NumericError &) {
      ++ci.skipped;
    }
  }
  if (vals.empty())
    throw NumericError("bootstrap_ci_r2: every resample was degenerate");
  const double a = (1.0 - level) / 2;
  ci.lo = quantile(vals, a);
  ci.hi = quantile(vals, 1.0 - a);
  ci.used = static_cast<int>(vals.size());
  return ci;
}

// ---- score tables ----

struct ScoreEntry {
  std::string model;
  int repeat = 1; // 1-based
  int fold = 1;   // 1-based
  std::string stratum;
  std::string metric;
  double value = 0;

  friend bool operator==(const ScoreEntry &, const ScoreEntry &) = default;
};

using ScoreMatrix = std::vector<ScoreEntry>;

/// repeats x folds matrix of fold scores for one model and metric, each
/// cell averaged over the requested strata (all strata if empty).
inline std::vector<std::vector<double>> fold_scores(const ScoreMatrix &s, const std::string &model,
                                                    const std::string &metric,
                                                    const std::vector<std::string> &strata = {}, int repeats = 5,
                                                    int folds = 5) {
  std::vector<std::vector<double>> sum(static_cast<std::size_t>(repeats), std::vector<double>(folds, 0.0));
  std::vector<std::vector<int>> cnt(static_cast<std::size_t>(repeats), std::vector<int>(folds, 0));
  for (const auto &e : s) {
    if (e.model != model || e.metric != metric)
      continue;
    if (!strata.empty() && std::find(strata.begin(), strata.end(), e.stratum) == strata.end())
      continue;
    require(e.repeat >= 1 && e.repeat <= repeats && e.fold >= 1 && e.fold <= folds,
            "fold_scores: repeat/fold index out of range for " + model);
    sum[static_cast<std::size_t>(e.repeat - 1)][static_cast<std::size_t>(e.fold - 1)] += e.value;
    ++cnt[static_cast<std::size_t>(e.repeat - 1)][static_cast<std::size_t>(e.fold - 1)];
  }
  for (int r = 0; r < repeats; ++r)
    for (int f = 0; f < folds; ++f) {
      const int c = cnt[static_cast<std::size_t>(r)][static_cast<std::size_t>(f)];
      if (c == 0)
        throw ValidationError("missing score cell: model " + model + ", metric " + metric + ", repeat " +
                              std::to_string(r + 1) + ", fold " + std::to_string(f + 1));
      if (!strata.empty() && c != static_cast<int>(strata.size()))
        throw ValidationError("unbalanced strata in cell: model " + model + ", repeat " + std::to_string(r + 1) +
                              ", fold " + std::to_string(f + 1));
      sum[static_cast<std::size_t>(r)][static_cast<std::size_t>(f)] /= c;
    }
  return sum;
}

/// Mean of the fold scores of each repeat.
inline std::vector<double> repeat_means(const std::vector<std::vector<double>> &folds) {
  require(!folds.empty(), "repeat_means: no repeats");
  std::vector<double> out;
  for (const auto &r : folds) {
    require(r.size() == folds.front().size() && !r.empty(), "repeat_means: unbalanced folds");
    out.push_back(mean(r));
  }
  return out;
}

// ---- distributions ----

inline double t_quantile(double p, double df) {
  return boost::math::quantile(boost::math::students_t_distribution<double>(df), p);
}

/// P(R <= w) for the range of k standard normals.
inline double range_cdf(double w, int k) {
  if (w <= 0)
    return 0.0;
  const auto Phi = [](double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); };
  const double lo = -8.5, hi = 8.5;
  const int panels = 24;
  const double width = (hi - lo) / panels;
  double total = 0;
  for (int p = 0; p < panels; ++p) {
    const double a = lo + p * width;
    total += boost::math::quadrature::gauss<double, 20>::integrate(
        [&](double z) {
          const double d = Phi(z) - Phi(z - w);
          return std::exp(-z * z / 2) / std::sqrt(2 * std::numbers::pi) * std::pow(d, k - 1);
        },
        a, a + width);
  }
  return std::clamp(k * total, 0.0, 1.0);
}

/// Studentized range CDF P(Q <= q) for k groups and df error degrees of
/// freedom; df = infinity reduces to the range of normals.
inline double ptukey(double q, int k, double df) {
  require(k >= 2, "ptukey: need k >= 2");
  require(df > 0, "ptukey: df must be > 0");
  if (q <= 0)
    return 0.0;
  if (std::isinf(df))
    return range_cdf(q, k);
  // outer integral over s = chi_df / sqrt(df)
  const boost::math::chi_squared_distribution<double> chi(df);
  const double s_lo = std::sqrt(boost::math::quantile(chi, 1e-13) / df);
  const double s_hi = std::sqrt(boost::math::quantile(boost::math::complement(chi, 1e-13)) / df);
  const double log_norm = (df / 2) * std::log(df) - std::lgamma(df / 2) - (df / 2 - 1) * std::log(2.0);
  const int panels = 16;
  const double width = (s_hi - s_lo) / panels;
  double total = 0;
  for (int p = 0; p < panels; ++p) {
    const double a = s_lo + p * width;
    total += boost::math::quadrature::gauss<double, 20>::integrate(
        [&](double s) {
          if (s <= 0)
            return 0.0;
          const double dens = std::exp(log_norm + (df - 1) * std::log(s) - df * s * s / 2);
          return dens * range_cdf(q * s, k);
        },
        a, a + width);
  }
  return std::clamp(total, 0.0, 1.0);
}

/// Inverse of ptukey in q.
inline double qtukey(double p, int k, double df) {
  require(p > 0 && p < 1, "qtukey: p outside (0, 1)");
  double lo = 0, hi = 2;
  while (ptukey(hi, k, df) < p)
    hi *= 2;
  std::uintmax_t iters = 200;
  const auto r = boost::math::tools::toms748_solve([&](double q) { return ptukey(q, k, df) - p; }, lo, hi,
                                                   boost::math::tools::eps_tolerance<double>(40), iters);
  return (r.first + r.second) / 2;
}

// ---- repeated-measures ANOVA with Tukey HSD ----

inline constexpr double kReportedPFloor = 0.001;

struct TukeyResult {
  std::vector<std::string> models;
  std::vector<double> means;
  std::vector<double> ci_half; // t_{0.975,n-1} * SEM
  std::vector<std::vector<double>> p_raw;
  std::vector<std::vector<double>> p_reported; // clamped to >= 0.001
  double mse = 0;
  double df_error = 0;
  double q_crit = 0;
  double msd = 0;
  double f_model = 0;
  double p_model = 1;
  bool degenerate = false; // zero error variance

  /// Mean gap exceeds the minimum significant difference.
  bool significant(std::size_t i, std::size_t j) const { return i != j && std::abs(means[i] - means[j]) > msd; }
};

/// Two-way (model x repeat) block design on repeat-level means;
/// `scores[m][r]` is model m's mean in repeat r.
inline TukeyResult rm_anova_tukey(const std::vector<std::string> &models,
                                  const std::vector<std::vector<double>> &scores, double alpha = 0.05) {
  const std::size_t k = scores.size();
  require(k >= 2, "rm_anova_tukey: need at least two models");
  require(models.size() == k, "rm_anova_tukey: model names and score rows differ");
  const std::size_t n = scores.front().size();
  require(n >= 2, "rm_anova_tukey: need at least two repeats");
  for (const auto &r : scores)
    require(r.size() == n, "rm_anova_tukey: unbalanced design");

  TukeyResult t;
  t.models = models;
  double grand = 0;
  std::vector<double> block(n, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    t.means.push_back(mean(scores[i]));
    for (std::size_t j = 0; j < n; ++j) {
      block[j] += scores[i][j] / static_cast<double>(k);
      grand += scores[i][j];
    }
  }
  grand /= static_cast<double>(k * n);
  double ss_model = 0, ss_block = 0, ss_total = 0;
  for (std::size_t i = 0; i < k; ++i)
    ss_model += static_cast<double>(n) * (t.means[i] - grand) * (t.means[i] - grand);
  for (std::size_t j = 0; j < n; ++j)
    ss_block += static_cast<double>(k) * (block[j] - grand) * (block[j] - grand);
  for (const auto &r : scores)
    for (double v : r)
      ss_total += (v - grand) * (v - grand);
  const double ss_err = std::max(0.0, ss_total - ss_model - ss_block);
  t.df_error = static_cast<double>((k - 1) * (n - 1));
  t.mse = ss_err / t.df_error;
  const double tq = t_quantile(0.975, static_cast<double>(n - 1));
  for (const auto &r : scores)
    t.ci_half.push_back(tq * sem(r));
  const double se = std::sqrt(t.mse / static_cast<double>(n));
  t.q_crit = qtukey(1.0 - alpha, static_cast<int>(k), t.df_error);
  t.msd = t.q_crit * se;
  // scale-relative test so rounding residue counts as zero error variance
  t.degenerate = t.mse <= 1e-24 * std::max(1.0, ss_total);
  t.p_raw.assign(k, std::vector<double>(k, 1.0));
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j) {
      const double gap = std::abs(t.means[i] - t.means[j]);
      double p;
      if (t.degenerate)
        p = gap == 0 ? 1.0 : 0.0;
      else
        p = 1.0 - ptukey(gap / se, static_cast<int>(k), t.df_error);
      t.p_raw[i][j] = t.p_raw[j][i] = std::clamp(p, 0.0, 1.0);
    }
  t.p_reported = t.p_raw;
  for (auto &r : t.p_reported)
    for (auto &p : r)
      p = std::max(p, kReportedPFloor);
  if (!t.degenerate) {
    t.f_model = (ss_model / static_cast<double>(k - 1)) / t.mse;
    t.p_model = boost::math::cdf(
        boost::math::complement(boost::math::fisher_f_distribution<double>(static_cast<double>(k - 1), t.df_error),
                                t.f_model));
  }
  return t;
}

// ---- diagnostics ----

struct IccResult {
  double icc = 0;
  double msb = 0, msw = 0;
  bool degenerate = false; // no variance at all
};

/// One-way random-effects ICC(1,1) over equally sized groups.
inline IccResult icc1(const std::vector<std::vector<double>> &groups) {
  require(groups.size() >= 2, "icc1: need at least two groups");
  const std::size_t k = groups.front().size();
  require(k >= 2, "icc1: groups need at least two members");
  for (const auto &g : groups)
    require(g.size() == k, "icc1: unbalanced groups");
  const double a = static_cast<double>(groups.size());
  double grand = 0, ssb = 0, ssw = 0;
  std::vector<double> gm;
  for (const auto &g : groups) {
    gm.push_back(mean(g));
    grand += gm.back();
  }
  grand /= a;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    ssb += static_cast<double>(k) * (gm[i] - grand) * (gm[i] - grand);
    for (double v : groups[i])
      ssw += (v - gm[i]) * (v - gm[i]);
  }
  IccResult r;
  r.msb = ssb / (a - 1);
  r.msw = ssw / (a * static_cast<double>(k - 1));
  const double den = r.msb + static_cast<double>(k - 1) * r.msw;
  if (den == 0) {
    r.degenerate = true;
    r.icc = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  r.icc = (r.msb - r.msw) / den;
  return r;
}

inline double n_eff(double icc, int k = 5, int n_total = 25) {
  require(k >= 1 && n_total >= 1, "n_eff: bad sizes");
  const double c = std::isnan(icc) ? 0.0 : std::max(0.0, icc);
  return n_total / (1.0 + (k - 1) * c);
}

struct TestResult {
  double statistic = 0;
  double p = 1;
  bool degenerate = false;
};

namespace detail {
inline double poly(const double *c, int n, double x) {
  double r = c[0];
  if (n > 1) {
    double p = x * c[n - 1];
    for (int j = n - 2; j > 0; --j)
      p = (p + c[j]) * x;
    r += p;
  }
  return r;
}
} // namespace detail

/// Shapiro-Wilk W with Royston's (1995, AS R94) coefficient and p-value
/// approximations, valid here for 3 <= n <= 50.
inline TestResult shapiro_wilk(std::vector<double> x) {
  const int n = static_cast<int>(x.size());
  require(n >= 3 && n <= 50, "shapiro_wilk: n must be in 3..50");
  std::sort(x.begin(), x.end());
  TestResult r;
  if (x.back() - x.front() <= 1e-19 * std::max(1.0, std::abs(x.front()))) {
    r.degenerate = true;
    r.statistic = 1.0;
    r.p = 1.0;
    return r;
  }
  static const double c1[6] = {0., .221157, -.147981, -2.07119, 4.434685, -2.706056};
  static const double c2[6] = {0., .042981, -.293762, -1.752461, 5.682633, -3.582633};
  static const double c3[4] = {.544, -.39978, .025054, -6.714e-4};
  static const double c4[4] = {1.3822, -.77857, .062767, -.0020322};
  static const double c5[4] = {-1.5861, -.31082, -.083751, .0038915};
  static const double c6[3] = {-.4803, -.082676, .0030302};
  static const double g[2] = {-2.273, .459};

  const int nn2 = n / 2;
  std::vector<double> a(static_cast<std::size_t>(nn2) + 1, 0.0); // 1-based
  const double an = n;
  const boost::math::normal_distribution<double> N;
  if (n == 3) {
    a[1] = std::sqrt(0.5);
  } else {
    double summ2 = 0;
    for (int i = 1; i <= nn2; ++i) {
      a[static_cast<std::size_t>(i)] = boost::math::quantile(N, (i - 0.375) / (an + 0.25));
      summ2 += a[static_cast<std::size_t>(i)] * a[static_cast<std::size_t>(i)];
    }
    summ2 *= 2;
    const double ssumm2 = std::sqrt(summ2), rsn = 1.0 / std::sqrt(an);
    const double a1 = detail::poly(c1, 6, rsn) - a[1] / ssumm2;
    int i1;
    double fac;
    if (n > 5) {
      i1 = 3;
      const double a2 = -a[2] / ssumm2 + detail::poly(c2, 6, rsn);
      fac = std::sqrt((summ2 - 2 * a[1] * a[1] - 2 * a[2] * a[2]) / (1 - 2 * a1 * a1 - 2 * a2 * a2));
      a[2] = a2;
    } else {
      i1 = 2;
      fac = std::sqrt((summ2 - 2 * a[1] * a[1]) / (1 - 2 * a1 * a1));
    }
    a[1] = a1;
    for (int i = i1; i <= nn2; ++i)
      a[static_cast<std::size_t>(i)] /= -fac;
  }
  const double m = mean(x);
  double b = 0, ss = 0;
  for (int i = 1; i <= nn2; ++i)
    b += a[static_cast<std::size_t>(i)] * (x[static_cast<std::size_t>(n - i)] - x[static_cast<std::size_t>(i - 1)]);
  for (double v : x)
    ss += (v - m) * (v - m);
  double w = std::min(1.0, b * b / ss);
  r.statistic = w;
  if (n == 3) {
    const double pi6 = 1.90985931710274, stqr = 1.04719755119660;
    r.p = std::max(0.0, pi6 * (std::asin(std::sqrt(w)) - stqr));
    return r;
  }
  double y = std::log(1 - w);
  const double xx = std::log(an);
  double mu, s;
  if (n <= 11) {
    const double gamma = detail::poly(g, 2, an);
    if (y >= gamma) {
      r.p = 1e-99;
      return r;
    }
    y = -std::log(gamma - y);
    mu = detail::poly(c3, 4, an);
    s = std::exp(detail::poly(c4, 4, an));
  } else {
    mu = detail::poly(c5, 4, xx);
    s = std::exp(detail::poly(c6, 3, xx));
  }
  r.p = boost::math::cdf(boost::math::complement(boost::math::normal_distribution<double>(mu, s), y));
  return r;
}

/// Levene's test, mean-centred (or median-centred) absolute deviations.
inline TestResult levene(const std::vector<std::vector<double>> &groups, bool median_centred = false) {
  require(groups.size() >= 2, "levene: need at least two groups");
  std::vector<std::vector<double>> z;
  std::size_t total = 0;
  for (const auto &g : groups) {
    require(g.size() >= 2, "levene: each group needs at least two values");
    const double c = median_centred ? quantile(g, 0.5) : mean(g);
    std::vector<double> d;
    for (double v : g)
      d.push_back(std::abs(v - c));
    z.push_back(std::move(d));
    total += g.size();
  }
  const double k = static_cast<double>(groups.size()), N = static_cast<double>(total);
  double grand = 0;
  for (const auto &d : z)
    for (double v : d)
      grand += v;
  grand /= N;
  double ssb = 0, ssw = 0;
  for (const auto &d : z) {
    const double m = mean(d);
    ssb += static_cast<double>(d.size()) * (m - grand) * (m - grand);
    for (double v : d)
      ssw += (v - m) * (v - m);
  }
  TestResult r;
  if (ssw == 0) {
    r.degenerate = true;
    r.statistic = ssb == 0 ? 0.0 : std::numeric_limits<double>::infinity();
    r.p = ssb == 0 ? 1.0 : 0.0;
    return r;
  }
  r.statistic = (ssb / (k - 1)) / (ssw / (N - k));
  r.p = boost::math::cdf(boost::math::complement(boost::math::fisher_f_distribution<double>(k - 1, N - k), r.statistic));
  return r;
}

/// Two-sided paired t-test on the differences.
inline TestResult paired_t(const std::vector<double> &d) {
  require(d.size() >= 2, "paired_t: need at least two pairs");
  TestResult r;
  const double m = mean(d), v = variance(d);
  if (v == 0) {
    r.degenerate = true;
    r.statistic = m == 0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), m);
    r.p = m == 0 ? 1.0 : 0.0;
    return r;
  }
  r.statistic = m / std::sqrt(v / static_cast<double>(d.size()));
  const boost::math::students_t_distribution<double> T(static_cast<double>(d.size() - 1));
  r.p = std::min(1.0, 2 * boost::math::cdf(boost::math::complement(T, std::abs(r.statistic))));
  return r;
}

/// Average ranks (1-based) with ties sharing their mean rank.
inline std::vector<double> average_ranks(const std::vector<double> &x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]])
      ++j;
    const double avg = (static_cast<double>(i + j) + 2.0) / 2.0;
    for (std::size_t t = i; t <= j; ++t)
      r[idx[t]] = avg;
    i = j + 1;
  }
  return r;
}

/// Wilcoxon signed-rank test, two-sided. Zero differences are dropped
/// before ranking; ties get average ranks. Exact permutation distribution
/// for up to 25 non-zero differences, normal approximation (tie-corrected,
/// no continuity correction) above.
inline TestResult wilcoxon(const std::vector<double> &d_in) {
  std::vector<double> d;
  for (double v : d_in)
    if (v != 0)
      d.push_back(v);
  TestResult r;
  if (d.empty()) {
    r.degenerate = true;
    return r;
  }
  std::vector<double> absd;
  for (double v : d)
    absd.push_back(std::abs(v));
  const auto ranks = average_ranks(absd);
  double wplus = 0;
  for (std::size_t i = 0; i < d.size(); ++i)
    if (d[i] > 0)
      wplus += ranks[i];
  r.statistic = wplus;
  const std::size_t n = d.size();
  if (n <= 25) {
    // doubled ranks are integers; count sign assignments by subset-sum DP
    std::vector<int> r2;
    int total = 0;
    for (double v : ranks) {
      r2.push_back(static_cast<int>(std::lround(2 * v)));
      total += r2.back();
    }
    std::vector<double> ways(static_cast<std::size_t>(total) + 1, 0.0);
    ways[0] = 1;
    for (int v : r2)
      for (int s = total; s >= v; --s)
        ways[static_cast<std::size_t>(s)] += ways[static_cast<std::size_t>(s - v)];
    const int w2 = static_cast<int>(std::lround(2 * wplus));
    double lower = 0, upper = 0, all = 0;
    for (int s = 0; s <= total; ++s) {
      all += ways[static_cast<std::size_t>(s)];
      if (s <= w2)
        lower += ways[static_cast<std::size_t>(s)];
      if (s >= w2)
        upper += ways[static_cast<std::size_t>(s)];
    }
    r.p = std::min(1.0, 2 * std::min(lower, upper) / all);
    return r;
  }
  const double nn = static_cast<double>(n);
  const double mu = nn * (nn + 1) / 4;
  double var = nn * (nn + 1) * (2 * nn + 1) / 24;
  std::map<double, int> tie;
  for (double v : absd)
    ++tie[v];
  for (const auto &[v, t] : tie)
    var -= (static_cast<double>(t) * t * t - t) / 48;
  const double z = (wplus - mu) / std::sqrt(var);
  r.p = std::min(1.0, 2 * boost::math::cdf(boost::math::complement(boost::math::normal_distribution<double>(), std::abs(z))));
  return r;
}

struct PairedBattery {
  double mean_delta = 0;
  double sem_delta = 0;
  IccResult icc;
  double n_eff = 0;
  TestResult shapiro;
  TestResult t_test;
  TestResult wilcoxon;
  bool degenerate = false;
};

/// Diagnostics on fold-level differences a - b, grouped by repeat
/// (`a[r][f]`, `b[r][f]`).
inline PairedBattery paired_battery(const std::vector<std::vector<double>> &a,
                                    const std::vector<std::vector<double>> &b) {
  require(a.size() == b.size() && !a.empty(), "paired_battery: repeat counts differ");
  std::vector<std::vector<double>> groups;
  std::vector<double> d;
  for (std::size_t r = 0; r < a.size(); ++r) {
    require(a[r].size() == b[r].size() && a[r].size() == a.front().size(), "paired_battery: unmatched folds");
    std::vector<double> g;
    for (std::size_t f = 0; f < a[r].size(); ++f) {
      g.push_back(a[r][f] - b[r][f]);
      d.push_back(g.back());
    }
    groups.push_back(std::move(g));
  }
  PairedBattery p;
  p.mean_delta = mean(d);
  p.sem_delta = sem(d);
  p.icc = icc1(groups);
  p.n_eff = n_eff(p.icc.icc, static_cast<int>(a.front().size()), static_cast<int>(d.size()));
  p.shapiro = d.size() <= 50 ? shapiro_wilk(d) : TestResult{0, 1, true};
  p.t_test = paired_t(d);
  p.wilcoxon = wilcoxon(d);
  p.degenerate = p.t_test.degenerate || p.shapiro.degenerate || p.icc.degenerate;
  return p;
}

} // namespace qta::stats
