#pragma once

// Score tables on disk and the rendered comparison tables.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "qta/error.hpp"
#include "qta/stats.hpp"

namespace qta::report {

using stats::ScoreEntry;
using stats::ScoreMatrix;

inline const char *kScoreHeader = "model,repeat,fold,stratum,metric,value";

inline std::string fmt(const char *spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

inline std::string exact(double v) { return fmt("%.17g", v); }

/// Provenance travels as leading `# key=value` lines, skipped by readers.
inline void write_provenance(std::ostream &os, const std::vector<std::pair<std::string, std::string>> &prov) {
  for (const auto &[k, v] : prov)
    os << "# " << k << "=" << v << "\n";
}

/// Leading `# key=value` lines of a text artifact; stops at the first other line.
inline std::map<std::string, std::string> read_provenance(std::istream &is) {
  std::map<std::string, std::string> out;
  std::string line;
  while (std::getline(is, line) && line.rfind("# ", 0) == 0) {
    const auto eq = line.find('=');
    if (eq != std::string::npos)
      out[line.substr(2, eq - 2)] = line.substr(eq + 1);
  }
  return out;
}

inline void write_scores(std::ostream &os, const ScoreMatrix &m,
                         const std::vector<std::pair<std::string, std::string>> &prov = {}) {
  write_provenance(os, prov);
  os << kScoreHeader << "\n";
  for (const auto &e : m) {
    for (const auto &f : {e.model, e.stratum, e.metric})
      require(f.find_first_of(",\n\"") == std::string::npos, "write_scores: field contains a separator: " + f);
    os << e.model << "," << e.repeat << "," << e.fold << "," << e.stratum << "," << e.metric << "," << exact(e.value)
       << "\n";
  }
}

inline std::vector<std::string> split_csv(const std::string &line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline ScoreMatrix read_scores(std::istream &is) {
  ScoreMatrix m;
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#')
      continue;
    if (!header) {
      if (line != kScoreHeader && line != std::string(kScoreHeader) + "\r")
        throw ParseError("score table: expected header '" + std::string(kScoreHeader) + "'", lineno);
      header = true;
      continue;
    }
    const auto f = split_csv(line);
    if (f.size() != 6)
      throw ParseError("score table: expected 6 fields, got " + std::to_string(f.size()), lineno);
    ScoreEntry e;
    e.model = f[0];
    e.stratum = f[3];
    e.metric = f[4];
    try {
      std::size_t used = 0;
      e.repeat = std::stoi(f[1], &used);
      if (used != f[1].size())
        throw std::invalid_argument("repeat");
      e.fold = std::stoi(f[2], &used);
      if (used != f[2].size())
        throw std::invalid_argument("fold");
      e.value = std::stod(f[5], &used);
      if (used != f[5].size())
        throw std::invalid_argument("value");
    } catch (const std::exception &) {
      throw ParseError("score table: malformed number", lineno);
    }
    if (e.repeat < 1 || e.fold < 1)
      throw ParseError("score table: repeat and fold are 1-based", lineno);
    if (!std::isfinite(e.value))
      throw NumericError("score table: non-finite value on line " + std::to_string(lineno));
    m.push_back(std::move(e));
  }
  if (!header)
    throw ParseError("score table: missing header");
  return m;
}

inline void save_scores(const std::string &path, const ScoreMatrix &m,
                        const std::vector<std::pair<std::string, std::string>> &prov = {}) {
  std::ofstream os(path);
  if (!os)
    throw Error("cannot write " + path);
  write_scores(os, m, prov);
}

inline ScoreMatrix load_scores(const std::string &path) {
  std::ifstream is(path);
  if (!is)
    throw MissingArtifactError("score table not found: " + path);
  return read_scores(is);
}

/// Models in order of first appearance.
inline std::vector<std::string> models_of(const ScoreMatrix &m) {
  std::vector<std::string> out;
  for (const auto &e : m)
    if (std::find(out.begin(), out.end(), e.model) == out.end())
      out.push_back(e.model);
  return out;
}

inline std::vector<std::string> strata_of(const ScoreMatrix &m, const std::string &metric) {
  std::vector<std::string> out;
  for (const auto &e : m)
    if (e.metric == metric && std::find(out.begin(), out.end(), e.stratum) == out.end())
      out.push_back(e.stratum);
  return out;
}

/// Fold scores pooled over `strata`, averaged per repeat, compared across models.
inline stats::TukeyResult compare(const ScoreMatrix &m, const std::vector<std::string> &models,
                                  const std::string &metric, const std::vector<std::string> &strata = {},
                                  int repeats = 5, int folds = 5) {
  std::vector<std::vector<double>> means;
  for (const auto &name : models)
    means.push_back(stats::repeat_means(stats::fold_scores(m, name, metric, strata, repeats, folds)));
  return stats::rm_anova_tukey(models, means);
}

inline void tukey_csv(std::ostream &os, const stats::TukeyResult &t) {
  os << "model";
  for (const auto &m : t.models)
    os << "," << m;
  os << ",mean,ci95_half_width\n";
  for (std::size_t i = 0; i < t.models.size(); ++i) {
    os << t.models[i];
    for (std::size_t j = 0; j < t.models.size(); ++j)
      os << "," << fmt("%.4f", t.p_reported[i][j]);
    os << "," << fmt("%.6f", t.means[i]) << "," << fmt("%.6f", t.ci_half[i]) << "\n";
  }
  os << "# msd=" << exact(t.msd) << "\n# mse=" << exact(t.mse) << "\n# df_error=" << t.df_error << "\n";
  if (t.degenerate)
    os << "# degenerate=zero error variance\n";
}

/// Raw (unclamped) pairwise p-values for machine consumption.
inline void tukey_raw_csv(std::ostream &os, const stats::TukeyResult &t) {
  os << "model_a,model_b,mean_gap,p_raw,significant\n";
  for (std::size_t i = 0; i < t.models.size(); ++i)
    for (std::size_t j = i + 1; j < t.models.size(); ++j)
      os << t.models[i] << "," << t.models[j] << "," << exact(t.means[i] - t.means[j]) << "," << exact(t.p_raw[i][j])
         << "," << (t.significant(i, j) ? 1 : 0) << "\n";
}

inline std::string render_tukey(const stats::TukeyResult &t, const std::string &title = {}) {
  std::ostringstream os;
  std::size_t w = 5;
  for (const auto &m : t.models)
    w = std::max(w, m.size());
  if (!title.empty())
    os << title << "\n";
  os << std::left << std::setw(static_cast<int>(w)) << "Model";
  for (const auto &m : t.models)
    os << "  " << std::right << std::setw(static_cast<int>(std::max<std::size_t>(6, m.size()))) << m;
  os << "  " << "mean +- CI95\n";
  for (std::size_t i = 0; i < t.models.size(); ++i) {
    os << std::left << std::setw(static_cast<int>(w)) << t.models[i];
    for (std::size_t j = 0; j < t.models.size(); ++j) {
      std::string cell = fmt("%.4f", t.p_reported[i][j]);
      if (i != j && !t.significant(i, j))
        cell = "*" + cell;
      os << "  " << std::right << std::setw(static_cast<int>(std::max<std::size_t>(6, t.models[j].size()))) << cell;
    }
    os << "  " << fmt("%.3f", t.means[i]) << " +- " << fmt("%.3f", t.ci_half[i]) << "\n";
  }
  os << "MSD = " << fmt("%.4f", t.msd) << "; * marks pairs not significantly different (alpha = 0.05)\n";
  return os.str();
}

struct ModelDiagnostics {
  std::string model;
  double icc_mean = 0, icc_sd = 0;
  double n_eff_mean = 0;
  double sw_pass = 0;  // fraction of strata with SW p >= 0.05 on repeat means
  double lev_pass = 0; // fraction of strata with Levene p >= 0.05 across models
  int strata = 0;
};

/// Per-model validity diagnostics over a list of strata.
inline std::vector<ModelDiagnostics> diagnostics(const ScoreMatrix &m, const std::vector<std::string> &models,
                                                 const std::string &metric, const std::vector<std::string> &strata,
                                                 int repeats = 5, int folds = 5) {
  require(!strata.empty(), "diagnostics: no strata");
  std::vector<ModelDiagnostics> out(models.size());
  std::vector<std::vector<double>> iccs(models.size());
  for (std::size_t i = 0; i < models.size(); ++i)
    out[i].model = models[i];
  for (const auto &s : strata) {
    std::vector<std::vector<double>> repeat_level;
    for (std::size_t i = 0; i < models.size(); ++i) {
      const auto f = stats::fold_scores(m, models[i], metric, {s}, repeats, folds);
      const auto icc = stats::icc1(f);
      const double v = icc.degenerate ? 0.0 : icc.icc;
      iccs[i].push_back(v);
      out[i].n_eff_mean += stats::n_eff(v, folds, repeats * folds);
      const auto rm = stats::repeat_means(f);
      const auto sw = stats::shapiro_wilk(rm);
      out[i].sw_pass += (sw.degenerate || sw.p >= 0.05) ? 1 : 0;
      repeat_level.push_back(rm);
    }
    const auto lev = models.size() >= 2 ? stats::levene(repeat_level) : stats::TestResult{};
    for (auto &d : out)
      d.lev_pass += (lev.degenerate || lev.p >= 0.05) ? 1 : 0;
  }
  const double ns = static_cast<double>(strata.size());
  for (std::size_t i = 0; i < models.size(); ++i) {
    auto &d = out[i];
    d.strata = static_cast<int>(strata.size());
    d.icc_mean = stats::mean(iccs[i]);
    d.icc_sd = iccs[i].size() >= 2 ? std::sqrt(stats::variance(iccs[i])) : 0.0;
    d.n_eff_mean /= ns;
    d.sw_pass /= ns;
    d.lev_pass /= ns;
  }
  return out;
}

inline void diagnostics_csv(std::ostream &os, const std::vector<ModelDiagnostics> &d) {
  os << "model,icc_mean,icc_sd,n_eff,sw_pass_pct,levene_pass_pct,strata\n";
  for (const auto &r : d)
    os << r.model << "," << fmt("%.3f", r.icc_mean) << "," << fmt("%.3f", r.icc_sd) << "," << fmt("%.1f", r.n_eff_mean)
       << "," << fmt("%.0f", 100 * r.sw_pass) << "," << fmt("%.0f", 100 * r.lev_pass) << "," << r.strata << "\n";
}

inline std::string render_diagnostics(const std::vector<ModelDiagnostics> &d) {
  std::ostringstream os;
  os << std::left << std::setw(12) << "Model" << std::setw(20) << "ICC(1,1)" << std::setw(8) << "n_eff"
     << std::setw(8) << "SW %" << "Lev. %\n";
  for (const auto &r : d)
    os << std::left << std::setw(12) << r.model << std::setw(20)
       << (fmt("%.3f", r.icc_mean) + " +- " + fmt("%.3f", r.icc_sd)) << std::setw(8) << fmt("%.1f", r.n_eff_mean)
       << std::setw(8) << fmt("%.0f", 100 * r.sw_pass) << fmt("%.0f", 100 * r.lev_pass) << "\n";
  return os.str();
}

struct PairedRow {
  std::string label; // e.g. fraction and property
  stats::PairedBattery battery;
};

inline void paired_csv(std::ostream &os, const std::vector<PairedRow> &rows) {
  os << "cell,delta_mean,delta_sem,icc_delta,n_eff,sw_p,paired_t_p,wilcoxon_p,degenerate\n";
  for (const auto &r : rows) {
    const auto &b = r.battery;
    os << r.label << "," << exact(b.mean_delta) << "," << exact(b.sem_delta) << ","
       << (b.icc.degenerate ? std::string("nan") : exact(b.icc.icc)) << "," << exact(b.n_eff) << ","
       << exact(b.shapiro.p) << "," << exact(b.t_test.p) << "," << exact(b.wilcoxon.p) << ","
       << (b.degenerate ? 1 : 0) << "\n";
  }
}

} // namespace qta::report
