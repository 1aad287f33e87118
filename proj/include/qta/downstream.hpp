#pragma once

// Molecular property experiments with and without QTA inputs, ensemble
// inference of atomic properties and molecular dipole reconstruction.

#include <algorithm>
#include <cmath>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "qta/molecule.hpp"
#include "qta/qtnet_train.hpp"
#include "qta/report.hpp"
#include "qta/splits.hpp"
#include "qta/stats.hpp"

namespace qta::downstream {

inline const std::vector<double> &default_fractions() {
  static const std::vector<double> f{0.01, 0.05, 0.1, 1.0};
  return f;
}

struct ExperimentGrid {
  std::vector<double> fractions = default_fractions();
  std::vector<std::string> properties = required_mol_props();
  double val_share = 0.1;  // of the whole fold
  double test_share = 0.2; // one of 1 / test_share scaffold folds
};

enum class Mode { Informed, Blind };

inline std::string to_string(Mode m) { return m == Mode::Informed ? "informed" : "blind"; }

inline Mode mode_from_string(const std::string &s) {
  if (s == "informed")
    return Mode::Informed;
  if (s == "blind")
    return Mode::Blind;
  throw ValidationError("unknown mode '" + s + "' (expected informed or blind)");
}

/// Mean and standard deviation per molecular property.
struct PropStats {
  std::vector<std::string> names;
  std::vector<double> mean, std;

  static PropStats fit(const Dataset &ds, const std::vector<std::string> &ids, const std::vector<std::string> &names) {
    require(!ids.empty(), "PropStats: no molecules");
    PropStats s;
    s.names = names;
    for (const auto &p : names) {
      std::vector<double> v;
      for (const auto &id : ids) {
        const Molecule *m = ds.find(id);
        require(m != nullptr, "PropStats: unknown molecule " + id);
        auto it = m->record.props.find(p);
        if (it == m->record.props.end())
          throw ValidationError("molecule " + id + " has no property '" + p + "'");
        v.push_back(it->second);
      }
      const double mu = stats::mean(v);
      double var = 0;
      for (double x : v)
        var += (x - mu) * (x - mu);
      var /= static_cast<double>(v.size());
      s.mean.push_back(mu);
      s.std.push_back(var > 0 ? std::sqrt(var) : 1.0);
    }
    return s;
  }

  ad::Mat apply(const MolProps &p) const {
    ad::Mat row(1, static_cast<Eigen::Index>(names.size()));
    for (std::size_t k = 0; k < names.size(); ++k) {
      auto it = p.find(names[k]);
      require(it != p.end(), "missing molecular property '" + names[k] + "'");
      row(0, static_cast<Eigen::Index>(k)) = (it->second - mean[k]) / std[k];
    }
    return row;
  }

  std::vector<double> invert(const ad::Mat &row) const {
    std::vector<double> out;
    for (std::size_t k = 0; k < names.size(); ++k)
      out.push_back(row(0, static_cast<Eigen::Index>(k)) * std[k] + mean[k]);
    return out;
  }
};

inline nlohmann::ordered_json to_json(const PropStats &s) {
  return {{"names", s.names}, {"mean", s.mean}, {"std", s.std}};
}

inline PropStats prop_stats_from_json(const nlohmann::ordered_json &j) {
  try {
    PropStats s;
    s.names = j.at("names").get<std::vector<std::string>>();
    s.mean = j.at("mean").get<std::vector<double>>();
    s.std = j.at("std").get<std::vector<double>>();
    if (s.mean.size() != s.names.size() || s.std.size() != s.names.size())
      throw ParseError("property stats: length mismatch");
    return s;
  } catch (const nlohmann::json::exception &e) {
    throw ParseError(std::string("property stats: ") + e.what());
  }
}

/// Per-atom QTA values used as model inputs, keyed by molecule id.
using QtaInputs = std::map<std::string, std::vector<AtomTargets>>;

inline QtaInputs ground_truth_inputs(const Dataset &ds, const std::vector<std::string> &ids) {
  QtaInputs out;
  for (const auto &id : ids) {
    const Molecule *m = ds.find(id);
    require(m != nullptr, "unknown molecule " + id);
    if (!m->targets)
      throw ValidationError("informed mode: molecule " + id + " has no QTA inputs");
    out[id] = *m->targets;
  }
  return out;
}

/// Molecular samples; informed samples carry normalized QTA rows as `extra`.
inline std::vector<Sample> molecular_samples(const Dataset &ds, const std::vector<std::string> &ids,
                                             const PropStats &ps, const QtaInputs *qta = nullptr,
                                             const TargetStats *qstats = nullptr) {
  std::vector<Sample> out;
  for (const auto &id : ids) {
    const Molecule *m = ds.find(id);
    require(m != nullptr, "unknown molecule " + id);
    Sample s{m->record, ps.apply(m->record.props), {}};
    if (qta) {
      auto it = qta->find(id);
      if (it == qta->end())
        throw ValidationError("informed mode: molecule " + id + " has no QTA inputs");
      require(it->second.size() == m->record.size(), "informed mode: QTA row count differs from atoms in " + id);
      s.extra = qstats->apply(target_matrix(it->second));
    }
    out.push_back(std::move(s));
  }
  return out;
}

/// Molecular predictions in physical units, one row of properties per sample.
inline std::vector<std::vector<double>> predict_molecular(const ParamSet &p, const ModelConfig &c,
                                                          const std::vector<Sample> &set, const PropStats &ps,
                                                          int batch_size = 64) {
  std::vector<std::vector<double>> out;
  for (std::size_t b = 0; b < set.size(); b += static_cast<std::size_t>(batch_size)) {
    std::vector<const Sample *> batch;
    for (std::size_t k = b; k < std::min(set.size(), b + static_cast<std::size_t>(batch_size)); ++k)
      batch.push_back(&set[k]);
    auto [in, y] = make_batch(batch, c);
    const ad::Mat pred = predict(p, c, in);
    for (Eigen::Index r = 0; r < pred.rows(); ++r)
      out.push_back(ps.invert(pred.row(r)));
  }
  return out;
}

// ---- informed vs blind experiment ----

struct CellSplit {
  int repeat = 1, fold = 1;          // 1-based
  std::vector<std::string> pool;     // 70 % training pool in draw order
  std::vector<std::string> val, test;

  /// Leading share of the pool used at a training fraction.
  std::vector<std::string> train_at(double fraction) const {
    require(fraction > 0 && fraction <= 1, "training fraction must be in (0, 1]");
    const auto n = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(pool.size()))));
    return {pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(std::min(n, pool.size()))};
  }

  friend bool operator==(const CellSplit &, const CellSplit &) = default;
};

/// Scaffold-grouped test folds per repeat; the rest of each fold is split
/// into validation and training pool by a seeded shuffle.
inline std::vector<CellSplit> experiment_splits(const std::vector<std::string> &ids,
                                                const std::map<std::string, std::string> &groups,
                                                const std::vector<std::uint64_t> &seeds, const ExperimentGrid &g) {
  require(g.test_share > 0 && g.test_share < 1 && g.val_share > 0 && g.val_share + g.test_share < 1,
          "experiment grid: bad validation/test shares");
  const int k = static_cast<int>(std::lround(1.0 / g.test_share));
  std::vector<CellSplit> out;
  for (std::size_t r = 0; r < seeds.size(); ++r) {
    const auto folds = grouped_kfold(ids, groups, k, seeds[r]);
    for (int f = 0; f < k; ++f) {
      CellSplit c;
      c.repeat = static_cast<int>(r) + 1;
      c.fold = f + 1;
      c.test = folds[static_cast<std::size_t>(f)];
      const std::set<std::string> held(c.test.begin(), c.test.end());
      std::vector<std::string> rest;
      for (const auto &id : ids)
        if (!held.count(id))
          rest.push_back(id);
      Rng rng(Rng::splitmix(seeds[r] ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(f + 1))));
      rng.shuffle(rest);
      const double val_of_rest = g.val_share / (1.0 - g.test_share);
      const auto nv = std::clamp<std::size_t>(
          static_cast<std::size_t>(std::llround(val_of_rest * static_cast<double>(rest.size()))), 1,
          rest.size() > 1 ? rest.size() - 1 : 1);
      c.val.assign(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(nv));
      c.pool.assign(rest.begin() + static_cast<std::ptrdiff_t>(nv), rest.end());
      require(!c.pool.empty(), "experiment splits: empty training pool");
      out.push_back(std::move(c));
    }
  }
  return out;
}

struct ExperimentOptions {
  ExperimentGrid grid;
  ModelConfig config = variant_config("molecular");
  TrainOptions train;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
};

struct ParityRow {
  std::string id;
  std::string property;
  double truth = 0, prediction = 0;
};

struct ExperimentResult {
  stats::ScoreMatrix scores; // model = mode, stratum = "<fraction>|<property>", metric r2
  std::vector<CellSplit> splits;
  std::vector<ParityRow> parity; // test predictions at every (cell, fraction)
};

inline std::string fraction_label(double f) { return report::fmt("%g", f); }

inline std::uint64_t cell_seed(std::uint64_t base, int repeat, int fold, std::size_t fraction_index) {
  return Rng::splitmix(base ^ Rng::splitmix(static_cast<std::uint64_t>(repeat) * 1000003ULL +
                                            static_cast<std::uint64_t>(fold) * 1009ULL + fraction_index));
}

/// Trains one molecular model per (cell, fraction) and scores R^2 per
/// property on the cell's test set. Blind runs never read QTA values.
inline ExperimentResult run_molecular_experiment(const Dataset &ds, const std::vector<std::string> &ids,
                                                 const std::map<std::string, std::string> &groups, Mode mode,
                                                 const ExperimentOptions &opt,
                                                 const std::function<void(const std::string &)> &on_cell = {}) {
  ModelConfig c = opt.config;
  c.molecular = true;
  c.mol_outputs = static_cast<int>(opt.grid.properties.size());
  c.informed = mode == Mode::Informed;
  c.validate();
  std::optional<QtaInputs> qta;
  if (c.informed)
    qta = ground_truth_inputs(ds, ids);

  ExperimentResult res;
  res.splits = experiment_splits(ids, groups, opt.seeds, opt.grid);
  for (const auto &cell : res.splits) {
    for (std::size_t fi = 0; fi < opt.grid.fractions.size(); ++fi) {
      const double frac = opt.grid.fractions[fi];
      const auto train_ids = cell.train_at(frac);
      const auto ps = PropStats::fit(ds, train_ids, opt.grid.properties);
      std::optional<TargetStats> qs;
      if (qta)
        qs = TargetStats::fit(stacked_targets(ds, train_ids));
      const QtaInputs *qp = qta ? &*qta : nullptr;
      const TargetStats *qsp = qs ? &*qs : nullptr;
      const auto tr = molecular_samples(ds, train_ids, ps, qp, qsp);
      const auto va = molecular_samples(ds, cell.val, ps, qp, qsp);
      const auto te = molecular_samples(ds, cell.test, ps, qp, qsp);
      TrainOptions to = opt.train;
      to.seed = cell_seed(opt.train.seed, cell.repeat, cell.fold, fi);
      const auto trained = train(c, tr, va, to);
      const auto pred = predict_molecular(trained.params, c, te, ps);
      for (std::size_t k = 0; k < opt.grid.properties.size(); ++k) {
        std::vector<double> y, yhat;
        for (std::size_t i = 0; i < te.size(); ++i) {
          y.push_back(ds.find(cell.test[i])->record.props.at(opt.grid.properties[k]));
          yhat.push_back(pred[i][k]);
          res.parity.push_back({cell.test[i], fraction_label(frac) + "|" + opt.grid.properties[k], y.back(),
                                yhat.back()});
        }
        res.scores.push_back({to_string(mode), cell.repeat, cell.fold,
                              fraction_label(frac) + "|" + opt.grid.properties[k], "r2", stats::r2(y, yhat)});
      }
      if (on_cell)
        on_cell(to_string(mode) + " repeat " + std::to_string(cell.repeat) + " fold " + std::to_string(cell.fold) +
                " fraction " + fraction_label(frac));
    }
  }
  return res;
}

/// Paired diagnostics of informed minus blind per (fraction, property).
inline std::vector<report::PairedRow> paired_comparison(const stats::ScoreMatrix &scores, int repeats, int folds,
                                                        const std::string &a = "informed",
                                                        const std::string &b = "blind") {
  std::vector<report::PairedRow> rows;
  for (const auto &stratum : report::strata_of(scores, "r2")) {
    const auto fa = stats::fold_scores(scores, a, "r2", {stratum}, repeats, folds);
    const auto fb = stats::fold_scores(scores, b, "r2", {stratum}, repeats, folds);
    rows.push_back({stratum, stats::paired_battery(fa, fb)});
  }
  return rows;
}

// ---- ensembles ----

enum class Aggregation { Mean, Median };

struct EnsembleSpec {
  int members = 5;
  std::uint64_t seed = 0;
  Aggregation aggregation = Aggregation::Mean;
};

/// Disjoint validation partitions, one per member, by seeded shuffle.
inline std::vector<std::vector<std::string>> member_partitions(std::vector<std::string> ids, int members,
                                                               std::uint64_t seed) {
  require(members >= 1, "ensemble: need at least one member");
  require(ids.size() >= static_cast<std::size_t>(members) + 1, "ensemble: too few molecules for the member count");
  Rng rng(Rng::splitmix(seed));
  rng.shuffle(ids);
  std::vector<std::vector<std::string>> parts(static_cast<std::size_t>(members));
  if (members == 1) {
    const auto nv = std::max<std::size_t>(1, ids.size() / 10);
    parts[0].assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(nv));
    return parts;
  }
  for (std::size_t i = 0; i < ids.size(); ++i)
    parts[i % parts.size()].push_back(ids[i]);
  return parts;
}

/// Trains atomic-property members on `ids`, each with its own validation
/// partition for model selection and a derived seed.
inline std::vector<Checkpoint> train_ensemble(const Dataset &ds, const std::vector<std::string> &ids,
                                              const ModelConfig &c, const TrainOptions &opt, const EnsembleSpec &spec,
                                              const std::function<void(int, const EpochRecord &)> &on_epoch = {}) {
  const auto stats = TargetStats::fit(stacked_targets(ds, ids));
  const auto parts = member_partitions(ids, spec.members, spec.seed);
  std::vector<Checkpoint> out;
  for (int k = 0; k < spec.members; ++k) {
    const std::set<std::string> val(parts[static_cast<std::size_t>(k)].begin(), parts[static_cast<std::size_t>(k)].end());
    std::vector<std::string> tr;
    for (const auto &id : ids)
      if (!val.count(id))
        tr.push_back(id);
    const std::vector<std::string> va(val.begin(), val.end());
    TrainOptions o = opt;
    o.seed = Rng::splitmix(spec.seed + 0x1000 + static_cast<std::uint64_t>(k));
    auto res = train(c, atomic_samples(ds, tr, stats), atomic_samples(ds, va, stats), o, std::nullopt,
                     [&](const EpochRecord &r) {
                       if (on_epoch)
                         on_epoch(k, r);
                     });
    Checkpoint ck{c, std::move(res.params), stats, nlohmann::ordered_json::object()};
    ck.extra["member"] = k;
    ck.extra["seed"] = o.seed;
    ck.extra["best_epoch"] = res.best_epoch;
    ck.extra["best_val_loss"] = res.best_val_loss;
    out.push_back(std::move(ck));
  }
  return out;
}

/// Per-molecule ensemble output in physical units.
struct QtaPrediction {
  std::string id;
  std::vector<Element> elements;
  std::vector<AtomTargets> mean;
  /// Per atom: member variance averaged over the 10 normalized outputs.
  std::vector<double> spread;
};

/// Aggregates member predictions; normalization of the first member defines
/// the units in which the spread is measured.
inline std::vector<QtaPrediction> infer_qta(const std::vector<Checkpoint> &members,
                                            const std::vector<MoleculeRecord> &mols,
                                            Aggregation agg = Aggregation::Mean) {
  require(!members.empty(), "infer_qta: empty ensemble");
  for (const auto &m : members) {
    require(!m.config.molecular, "infer_qta: members must be atomic-property models");
    require(m.stats.has_value(), "infer_qta: member checkpoint lacks target statistics");
  }
  const TargetStats &ref = *members.front().stats;
  std::vector<QtaPrediction> out;
  for (const auto &mol : mols) {
    mol.validate();
    std::vector<ad::Mat> phys;
    for (const auto &m : members) {
      const auto in = make_input(build_graph(mol, m.config.graph), m.config);
      phys.push_back(m.stats->invert(predict(m.params, m.config, in)));
    }
    const Eigen::Index n = phys.front().rows();
    ad::Mat agg_m(n, kAtomOutputs);
    std::vector<double> spread(static_cast<std::size_t>(n), 0.0);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < kAtomOutputs; ++j) {
        std::vector<double> v;
        for (const auto &p : phys)
          v.push_back(p(i, j));
        if (agg == Aggregation::Mean) {
          double s = 0;
          for (double x : v)
            s += x;
          agg_m(i, j) = s / static_cast<double>(v.size());
        } else {
          agg_m(i, j) = stats::quantile(v, 0.5);
        }
      }
    // spread in normalized units so components are comparable
    std::vector<ad::Mat> norm;
    for (const auto &p : phys)
      norm.push_back(ref.apply(p));
    for (Eigen::Index i = 0; i < n; ++i) {
      double acc = 0;
      for (Eigen::Index j = 0; j < kAtomOutputs; ++j) {
        double m = 0;
        for (const auto &p : norm)
          m += p(i, j);
        m /= static_cast<double>(norm.size());
        double v = 0;
        for (const auto &p : norm)
          v += (p(i, j) - m) * (p(i, j) - m);
        acc += v / static_cast<double>(norm.size());
      }
      spread[static_cast<std::size_t>(i)] = acc / kAtomOutputs;
    }
    out.push_back({mol.id, mol.elements, targets_from_matrix(agg_m), std::move(spread)});
  }
  return out;
}

/// Best member of each repeat by validation loss; `val_loss[r][k]` belongs to `models[r][k]`.
template <class T>
std::vector<T> best_per_repeat(const std::vector<std::vector<T>> &models, const std::vector<std::vector<double>> &val_loss) {
  require(models.size() == val_loss.size(), "best_per_repeat: shape mismatch");
  std::vector<T> out;
  for (std::size_t r = 0; r < models.size(); ++r) {
    require(!models[r].empty() && models[r].size() == val_loss[r].size(), "best_per_repeat: shape mismatch");
    const auto it = std::min_element(val_loss[r].begin(), val_loss[r].end());
    out.push_back(models[r][static_cast<std::size_t>(it - val_loss[r].begin())]);
  }
  return out;
}

// ---- dipoles ----

struct Dipole {
  Vec3 vector = Vec3::Zero(); // e Bohr
  double magnitude = 0;       // e Bohr
  double debye() const { return magnitude * kDebyePerAu; }
};

inline Dipole reconstruct_dipole(const std::vector<Vec3> &atomic) {
  Dipole d;
  for (const auto &m : atomic)
    d.vector += m;
  d.magnitude = d.vector.norm();
  return d;
}

inline Dipole reconstruct_dipole(const std::vector<AtomTargets> &atoms) {
  std::vector<Vec3> mu;
  for (const auto &a : atoms)
    mu.push_back(a.mu);
  return reconstruct_dipole(mu);
}

// ---- emission ----

inline void write_inferred_csv(std::ostream &os, const std::vector<QtaPrediction> &preds,
                               const std::vector<std::pair<std::string, std::string>> &prov = {}) {
  report::write_provenance(os, prov);
  os << "molecule_id,atom_index,element,N,lambda,mu_x,mu_y,mu_z,Q_xy,Q_xz,Q_yz,Q_an,Q_zz,spread\n";
  for (const auto &p : preds)
    for (std::size_t i = 0; i < p.mean.size(); ++i) {
      const auto &a = p.mean[i];
      os << p.id << "," << i << "," << symbol(p.elements[i]) << "," << report::exact(a.n_e) << ","
         << report::exact(a.li);
      for (int k = 0; k < 3; ++k)
        os << "," << report::exact(a.mu[k]);
      for (int k = 0; k < 5; ++k)
        os << "," << report::exact(a.quad[static_cast<std::size_t>(k)]);
      os << "," << report::exact(p.spread[i]) << "\n";
    }
}

inline std::vector<QtaPrediction> read_inferred_csv(std::istream &is) {
  std::vector<QtaPrediction> out;
  std::string line;
  std::size_t ln = 0;
  bool header = false;
  while (std::getline(is, line)) {
    ++ln;
    if (line.empty() || line[0] == '#')
      continue;
    const auto f = report::split_csv(line);
    if (!header) {
      if (f.size() != 14 || f[0] != "molecule_id" || f[13] != "spread")
        throw ParseError("inferred table: unexpected header", ln);
      header = true;
      continue;
    }
    if (f.size() != 14)
      throw ParseError("inferred table: expected 14 fields, got " + std::to_string(f.size()), ln);
    std::vector<double> v;
    try {
      for (std::size_t k = 3; k < 14; ++k) {
        std::size_t used = 0;
        v.push_back(std::stod(f[k], &used));
        if (used != f[k].size())
          throw std::invalid_argument("trailing");
      }
    } catch (const std::exception &) {
      throw ParseError("inferred table: malformed number", ln);
    }
    for (double x : v)
      if (!std::isfinite(x))
        throw NumericError("inferred table: non-finite value on line " + std::to_string(ln));
    if (out.empty() || out.back().id != f[0])
      out.push_back({f[0], {}, {}, {}});
    auto &p = out.back();
    if (f[1] != std::to_string(p.mean.size()))
      throw ParseError("inferred table: atom indices of " + f[0] + " must be contiguous from 0", ln);
    p.elements.push_back(element_from_symbol(f[2]));
    AtomTargets a;
    a.n_e = v[0];
    a.li = v[1];
    a.mu = Vec3(v[2], v[3], v[4]);
    for (std::size_t k = 0; k < 5; ++k)
      a.quad[k] = v[5 + k];
    p.mean.push_back(a);
    p.spread.push_back(v[10]);
  }
  if (!header)
    throw ParseError("inferred table: missing header");
  return out;
}

inline void write_parity_csv(std::ostream &os, const std::vector<ParityRow> &rows,
                             const std::vector<std::pair<std::string, std::string>> &prov = {}) {
  report::write_provenance(os, prov);
  os << "molecule_id,property,truth,prediction\n";
  for (const auto &r : rows)
    os << r.id << "," << r.property << "," << report::exact(r.truth) << "," << report::exact(r.prediction) << "\n";
}

} // namespace qta::downstream
