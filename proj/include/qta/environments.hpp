#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "qta/hdbscan.hpp"
#include "qta/molecule.hpp"
#include "qta/pca.hpp"
#include "qta/soap.hpp"
#include "qta/sumviz.hpp"

namespace qta {

/// Element-scoped environment label; cluster == kNoise marks noise.
struct EnvLabel {
  Element element = Element::H;
  int cluster = kNoise;

  bool is_noise() const { return cluster == kNoise; }
  std::string str() const { return std::string(symbol(element)) + "_" + std::to_string(cluster); }
  auto operator<=>(const EnvLabel &) const = default;
};

inline EnvLabel parse_env_label(std::string_view s) {
  const auto us = s.find('_');
  if (us == std::string_view::npos || us == 0 || us + 1 >= s.size())
    throw ParseError("malformed environment label '" + std::string(s) + "'");
  EnvLabel l;
  l.element = element_from_symbol(s.substr(0, us));
  try {
    std::size_t used = 0;
    l.cluster = std::stoi(std::string(s.substr(us + 1)), &used);
    if (used != s.size() - us - 1)
      throw std::invalid_argument("trailing");
  } catch (const std::exception &) {
    throw ParseError("malformed environment label '" + std::string(s) + "'");
  }
  return l;
}

struct AtomLabel {
  std::string molecule_id;
  int atom_index = 0;
  EnvLabel label;
  bool operator==(const AtomLabel &) const = default;
};

/// Atom labels in dataset order.
struct LabelTable {
  std::vector<AtomLabel> rows;

  /// Distinct non-noise labels per molecule.
  std::map<std::string, std::set<EnvLabel>> by_molecule() const {
    std::map<std::string, std::set<EnvLabel>> out;
    for (const auto &r : rows) {
      auto &s = out[r.molecule_id];
      if (!r.label.is_noise())
        s.insert(r.label);
    }
    return out;
  }

  std::map<std::pair<std::string, int>, EnvLabel> index() const {
    std::map<std::pair<std::string, int>, EnvLabel> out;
    for (const auto &r : rows)
      out[{r.molecule_id, r.atom_index}] = r.label;
    return out;
  }
};

struct ElementClusterConfig {
  SoapParams soap;
  double variance_target = 0.99;
  std::optional<std::size_t> fixed_components;
  ClusterParams cluster;
};

struct ElementClusterStats {
  Element element = Element::H;
  std::size_t atoms = 0;
  std::size_t pca_components = 0;
  double variance_retained = 0;
  int min_cluster_size = 0;
  int min_samples = 0;
  int clusters = 0;
  double noise_percent = 0;
};

struct ClusterReport {
  std::vector<ElementClusterStats> elements;
};

/// Descriptor matrix for every atom of `element`, rows in dataset order.
inline RowMatrix element_descriptors(const Dataset &ds, Element element, const SoapCalculator &calc,
                                     std::vector<std::pair<std::size_t, std::size_t>> *where = nullptr) {
  std::vector<std::pair<std::size_t, std::size_t>> at;
  for (std::size_t m = 0; m < ds.size(); ++m)
    for (std::size_t a = 0; a < ds.molecules[m].record.size(); ++a)
      if (ds.molecules[m].record.elements[a] == element)
        at.emplace_back(m, a);
  RowMatrix X(static_cast<Eigen::Index>(at.size()), static_cast<Eigen::Index>(calc.dimension()));
  for (std::size_t i = 0; i < at.size(); ++i) {
    const auto d = calc.descriptor(ds.molecules[at[i].first].record, at[i].second);
    X.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::RowVectorXd>(d.data(), static_cast<Eigen::Index>(d.size()));
  }
  if (where)
    *where = std::move(at);
  return X;
}

/// SOAP, per-element PCA and per-element clustering for every atom.
inline std::pair<LabelTable, ClusterReport> label_atoms(const Dataset &ds,
                                                        const std::map<Element, ElementClusterConfig> &cfg) {
  std::vector<std::vector<EnvLabel>> labels(ds.size());
  for (std::size_t m = 0; m < ds.size(); ++m) {
    labels[m].resize(ds.molecules[m].record.size());
    for (std::size_t a = 0; a < labels[m].size(); ++a)
      labels[m][a].element = ds.molecules[m].record.elements[a];
  }
  ClusterReport report;
  for (Element e : kElements) {
    auto it = cfg.find(e);
    if (it == cfg.end())
      continue;
    const auto &c = it->second;
    ElementClusterStats st;
    st.element = e;
    st.min_cluster_size = c.cluster.min_cluster_size;
    st.min_samples = c.cluster.min_samples;
    const SoapCalculator calc(c.soap, std::vector<Element>(kElements.begin(), kElements.end()));
    std::vector<std::pair<std::size_t, std::size_t>> where;
    const RowMatrix X = element_descriptors(ds, e, calc, &where);
    st.atoms = where.size();
    if (where.empty()) {
      report.elements.push_back(st);
      continue;
    }
    HdbscanResult hr;
    if (where.size() >= 2) {
      std::optional<std::size_t> k = c.fixed_components;
      if (k)
        k = std::min<std::size_t>(*k, static_cast<std::size_t>(X.cols()));
      const auto model = pca_fit(X, c.variance_target, k);
      st.pca_components = model.k();
      st.variance_retained = model.explained();
      hr = hdbscan_cluster(pca_transform(model, X), c.cluster);
    } else {
      hr.labels.assign(1, kNoise);
    }
    std::size_t noise = 0;
    for (std::size_t i = 0; i < where.size(); ++i) {
      labels[where[i].first][where[i].second].cluster = hr.labels[i];
      noise += hr.labels[i] == kNoise;
    }
    st.clusters = hr.n_clusters;
    st.noise_percent = 100.0 * static_cast<double>(noise) / static_cast<double>(where.size());
    report.elements.push_back(st);
  }
  LabelTable table;
  for (std::size_t m = 0; m < ds.size(); ++m)
    for (std::size_t a = 0; a < labels[m].size(); ++a)
      table.rows.push_back({ds.molecules[m].record.id, static_cast<int>(a), labels[m][a]});
  return {table, report};
}

struct Cooccurrence {
  std::vector<EnvLabel> labels;
  /// p(i, j) = P(labels[j] present | labels[i] present), over molecules.
  Eigen::MatrixXd p;
  std::vector<std::size_t> support;
  std::vector<EnvLabel> zero_support;

  std::size_t index_of(const EnvLabel &l) const {
    auto it = std::find(labels.begin(), labels.end(), l);
    require(it != labels.end(), "cooccurrence: unknown label " + l.str());
    return static_cast<std::size_t>(it - labels.begin());
  }
  double operator()(const EnvLabel &given, const EnvLabel &other) const {
    return p(static_cast<Eigen::Index>(index_of(given)), static_cast<Eigen::Index>(index_of(other)));
  }
};

/// Conditional co-occurrence over molecules. Noise is ignored. Extra labels
/// in `universe` that never occur get an all-zero row and are flagged.
inline Cooccurrence cooccurrence(const LabelTable &table, const std::set<EnvLabel> &universe = {}) {
  const auto per_mol = table.by_molecule();
  std::set<EnvLabel> all = universe;
  for (const auto &[id, s] : per_mol)
    all.insert(s.begin(), s.end());
  Cooccurrence out;
  out.labels.assign(all.begin(), all.end());
  const auto n = static_cast<Eigen::Index>(out.labels.size());
  Eigen::MatrixXd joint = Eigen::MatrixXd::Zero(n, n);
  for (const auto &[id, s] : per_mol) {
    std::vector<Eigen::Index> idx;
    for (const auto &l : s)
      idx.push_back(static_cast<Eigen::Index>(out.index_of(l)));
    for (auto i : idx)
      for (auto j : idx)
        joint(i, j) += 1.0;
  }
  out.p = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.support.push_back(static_cast<std::size_t>(joint(i, i)));
    if (joint(i, i) == 0) {
      out.zero_support.push_back(out.labels[static_cast<std::size_t>(i)]);
      continue;
    }
    out.p.row(i) = joint.row(i) / joint(i, i);
  }
  return out;
}

/// Grows a held-out set from `seed`: any label present in more than
/// `threshold` of the molecules containing a held label joins, until stable.
inline std::set<EnvLabel> expand_held_labels(const Cooccurrence &co, const std::set<EnvLabel> &seed,
                                             double threshold = 0.9) {
  std::set<EnvLabel> held = seed;
  for (bool grew = true; grew;) {
    grew = false;
    for (const auto &a : std::set<EnvLabel>(held))
      for (const auto &b : co.labels)
        if (!held.count(b) && co(a, b) > threshold) {
          held.insert(b);
          grew = true;
        }
  }
  return held;
}

struct HoldoutSplit {
  std::vector<std::string> train_pool;
  std::vector<std::string> holdout;
};

/// Molecules with any held label go to the holdout; the rest form the
/// training pool. Order follows the dataset.
inline HoldoutSplit build_holdout(const Dataset &ds, const LabelTable &table, const std::set<EnvLabel> &held) {
  require(!held.empty(), "build_holdout: empty held label set");
  const auto per_mol = table.by_molecule();
  for (const auto &l : held) {
    require(!l.is_noise(), "build_holdout: noise cannot be held out");
    bool seen = false;
    for (const auto &[id, s] : per_mol)
      if (s.count(l)) {
        seen = true;
        break;
      }
    if (!seen)
      throw ValidationError("build_holdout: held label " + l.str() + " has zero support");
  }
  HoldoutSplit out;
  for (const auto &m : ds.molecules) {
    auto it = per_mol.find(m.record.id);
    bool hit = false;
    if (it != per_mol.end())
      for (const auto &l : it->second)
        hit |= held.count(l) > 0;
    (hit ? out.holdout : out.train_pool).push_back(m.record.id);
  }
  for (const auto &id : out.train_pool) {
    auto it = per_mol.find(id);
    if (it == per_mol.end())
      continue;
    for (const auto &l : it->second)
      if (held.count(l))
        throw Error("build_holdout: leakage of " + l.str() + " into training molecule " + id);
  }
  return out;
}

// Labels file: one atom per line, "molecule_id atom_index element cluster".

inline void write_labels(std::ostream &os, const LabelTable &t) {
  for (const auto &r : t.rows)
    os << r.molecule_id << ' ' << r.atom_index << ' ' << symbol(r.label.element) << ' ' << r.label.cluster
       << '\n';
}

inline LabelTable read_labels(std::istream &is) {
  LabelTable t;
  std::string line;
  std::size_t ln = 0;
  while (std::getline(is, line)) {
    ++ln;
    const auto f = detail::split_ws(line);
    if (f.empty() || f[0].front() == '#')
      continue;
    if (f.size() != 4)
      throw ParseError("labels: expected 4 fields", ln);
    AtomLabel r;
    r.molecule_id = std::string(f[0]);
    try {
      r.atom_index = std::stoi(std::string(f[1]));
      r.label.cluster = std::stoi(std::string(f[3]));
    } catch (const std::exception &) {
      throw ParseError("labels: malformed integer", ln);
    }
    if (r.atom_index < 0 || r.label.cluster < kNoise)
      throw ParseError("labels: negative index", ln);
    try {
      r.label.element = element_from_symbol(f[2]);
    } catch (const UnsupportedElementError &e) {
      throw ParseError(e.what(), ln);
    }
    t.rows.push_back(std::move(r));
  }
  return t;
}

inline nlohmann::ordered_json to_json(const ClusterReport &r) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const auto &e : r.elements)
    out.push_back({{"element", std::string(symbol(e.element))},
                   {"atoms", e.atoms},
                   {"pca_components", e.pca_components},
                   {"variance_retained_percent", 100.0 * e.variance_retained},
                   {"min_cluster_size", e.min_cluster_size},
                   {"min_samples", e.min_samples},
                   {"clusters", e.clusters},
                   {"noise_percent", e.noise_percent}});
  return out;
}

} // namespace qta
