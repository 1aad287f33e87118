#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "qta/error.hpp"
#include "qta/rng.hpp"
#include "qta/smiles.hpp"

namespace qta {

inline constexpr const char *kAcyclicScaffold = "ACYCLIC";

/// Ring systems plus linkers: degree-1 atoms are removed until none remain.
inline MolGraph murcko_graph(const MolGraph &g) {
  const int n = static_cast<int>(g.atoms.size());
  std::vector<char> alive(static_cast<std::size_t>(n), 1);
  std::vector<int> degree(static_cast<std::size_t>(n), 0);
  for (const auto &b : g.bonds) {
    ++degree[static_cast<std::size_t>(b.i)];
    ++degree[static_cast<std::size_t>(b.j)];
  }
  const auto adj = g.adjacency(); // incident bond indices
  std::vector<int> queue;
  for (int i = 0; i < n; ++i)
    if (degree[static_cast<std::size_t>(i)] <= 1)
      queue.push_back(i);
  while (!queue.empty()) {
    const int v = queue.back();
    queue.pop_back();
    if (!alive[static_cast<std::size_t>(v)])
      continue;
    alive[static_cast<std::size_t>(v)] = 0;
    for (int b : adj[static_cast<std::size_t>(v)]) {
      const auto &bond = g.bonds[static_cast<std::size_t>(b)];
      const int u = bond.i == v ? bond.j : bond.i;
      if (alive[static_cast<std::size_t>(u)] && --degree[static_cast<std::size_t>(u)] <= 1)
        queue.push_back(u);
    }
  }
  MolGraph out;
  std::vector<int> remap(static_cast<std::size_t>(n), -1);
  for (int i = 0; i < n; ++i)
    if (alive[static_cast<std::size_t>(i)]) {
      remap[static_cast<std::size_t>(i)] = static_cast<int>(out.atoms.size());
      out.atoms.push_back(g.atoms[static_cast<std::size_t>(i)]);
    }
  for (const auto &b : g.bonds)
    if (alive[static_cast<std::size_t>(b.i)] && alive[static_cast<std::size_t>(b.j)])
      out.bonds.push_back({remap[static_cast<std::size_t>(b.i)], remap[static_cast<std::size_t>(b.j)], b.order, b.in_ring});
  return out;
}

/// Canonical key of a graph by iterated neighbourhood refinement over element,
/// aromaticity and bond order labels. Independent of atom order.
inline std::string graph_hash_key(const MolGraph &g) {
  const std::size_t n = g.atoms.size();
  std::vector<std::vector<std::pair<int, int>>> nb(n); // (bond order, neighbour)
  for (const auto &b : g.bonds) {
    nb[static_cast<std::size_t>(b.i)].emplace_back(static_cast<int>(b.order), b.j);
    nb[static_cast<std::size_t>(b.j)].emplace_back(static_cast<int>(b.order), b.i);
  }
  std::vector<std::uint64_t> label(n);
  for (std::size_t i = 0; i < n; ++i)
    label[i] = fnv1a(std::string(symbol(g.atoms[i].element)) + (g.atoms[i].aromatic ? "a" : "") + "/" +
                     std::to_string(nb[i].size()));
  for (std::size_t round = 0; round < n; ++round) {
    std::vector<std::uint64_t> next(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<std::pair<int, std::uint64_t>> ms;
      for (const auto &[order, j] : nb[i])
        ms.emplace_back(order, label[static_cast<std::size_t>(j)]);
      std::sort(ms.begin(), ms.end());
      std::string s = std::to_string(label[i]);
      for (const auto &[o, l] : ms)
        s += "|" + std::to_string(o) + ":" + std::to_string(l);
      next[i] = fnv1a(s);
    }
    label = std::move(next);
  }
  std::sort(label.begin(), label.end());
  std::string s = std::to_string(n) + "/" + std::to_string(g.bonds.size());
  for (auto l : label)
    s += "," + std::to_string(l);
  std::ostringstream os;
  os << "S" << n << "-" << g.bonds.size() << "-" << std::hex << fnv1a(s);
  return os.str();
}

inline std::string murcko_scaffold(const MolGraph &g) {
  const auto core = murcko_graph(g);
  if (core.atoms.empty())
    return kAcyclicScaffold;
  return graph_hash_key(core);
}

enum class AcyclicGrouping { Shared, PerMolecule };

/// Scaffold keys for (id, SMILES) pairs.
inline std::map<std::string, std::string> scaffold_groups(const std::vector<std::pair<std::string, std::string>> &mols,
                                                          AcyclicGrouping acyclic = AcyclicGrouping::Shared) {
  std::map<std::string, std::string> out;
  for (const auto &[id, smi] : mols) {
    require(!smi.empty(), "scaffold_groups: molecule " + id + " has no SMILES");
    std::string key;
    try {
      key = murcko_scaffold(parse_smiles(smi));
    } catch (const ParseError &e) {
      throw ParseError("scaffold_groups: " + id + ": " + e.what());
    }
    if (key == kAcyclicScaffold && acyclic == AcyclicGrouping::PerMolecule)
      key += ":" + id;
    out[id] = key;
  }
  return out;
}

/// Grouped k-fold: whole groups go to one fold. Groups are taken largest
/// first (ties in seeded random order) and each goes to the currently
/// smallest fold, lowest index first. `ids` fixes the output order.
inline std::vector<std::vector<std::string>> grouped_kfold(const std::vector<std::string> &ids,
                                                           const std::map<std::string, std::string> &groups, int k,
                                                           std::uint64_t seed) {
  require(k >= 2, "grouped_kfold: k must be >= 2");
  std::map<std::string, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto it = groups.find(ids[i]);
    require(it != groups.end(), "grouped_kfold: no group for " + ids[i]);
    members[it->second].push_back(i);
  }
  if (members.size() < static_cast<std::size_t>(k))
    throw ValidationError("grouped_kfold: " + std::to_string(members.size()) + " groups is fewer than k = " +
                          std::to_string(k));
  std::vector<const std::vector<std::size_t> *> order;
  for (const auto &[key, m] : members)
    order.push_back(&m);
  Rng rng(seed);
  rng.shuffle(order);
  std::stable_sort(order.begin(), order.end(), [](auto *a, auto *b) { return a->size() > b->size(); });
  std::vector<std::vector<std::size_t>> folds(static_cast<std::size_t>(k));
  for (const auto *m : order) {
    std::size_t best = 0;
    for (std::size_t f = 1; f < folds.size(); ++f)
      if (folds[f].size() < folds[best].size())
        best = f;
    folds[best].insert(folds[best].end(), m->begin(), m->end());
  }
  std::vector<std::vector<std::string>> out(folds.size());
  for (std::size_t f = 0; f < folds.size(); ++f) {
    std::sort(folds[f].begin(), folds[f].end());
    for (auto i : folds[f])
      out[f].push_back(ids[i]);
  }
  return out;
}

struct FoldCell {
  std::vector<std::string> train_ids;
  std::vector<std::string> val_ids;
  bool operator==(const FoldCell &) const = default;
};

struct FoldPlan {
  int repeats = 5;
  int folds = 5;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> holdout_ids;
  /// cells[repeat][fold]
  std::vector<std::vector<FoldCell>> cells;
  bool operator==(const FoldPlan &) const = default;

  const FoldCell &cell(int repeat, int fold) const {
    require(repeat >= 0 && repeat < repeats && fold >= 0 && fold < folds, "FoldPlan: cell out of range");
    return cells[static_cast<std::size_t>(repeat)][static_cast<std::size_t>(fold)];
  }
};

/// Repeated grouped k-fold over the training pool with a fixed, shared holdout.
/// In every cell the validation set is one fold and training is the rest.
inline FoldPlan build_plan(const std::vector<std::string> &train_pool, const std::vector<std::string> &holdout,
                           const std::map<std::string, std::string> &groups, const std::vector<std::uint64_t> &seeds,
                           int folds = 5) {
  require(!train_pool.empty(), "build_plan: empty training pool");
  require(!seeds.empty(), "build_plan: no seeds");
  const std::set<std::string> held(holdout.begin(), holdout.end());
  std::set<std::string> pool;
  for (const auto &id : train_pool) {
    require(!held.count(id), "build_plan: " + id + " is in both the pool and the holdout");
    require(pool.insert(id).second, "build_plan: duplicate id " + id);
  }
  FoldPlan plan;
  plan.repeats = static_cast<int>(seeds.size());
  plan.folds = folds;
  plan.seeds = seeds;
  plan.holdout_ids = holdout;
  for (auto seed : seeds) {
    const auto parts = grouped_kfold(train_pool, groups, folds, seed);
    std::vector<FoldCell> row;
    for (std::size_t f = 0; f < parts.size(); ++f) {
      FoldCell c;
      c.val_ids = parts[f];
      const std::set<std::string> val(parts[f].begin(), parts[f].end());
      for (const auto &id : train_pool)
        if (!val.count(id))
          c.train_ids.push_back(id);
      row.push_back(std::move(c));
    }
    plan.cells.push_back(std::move(row));
  }
  return plan;
}

inline nlohmann::ordered_json to_json(const FoldPlan &p, const nlohmann::ordered_json &provenance = nlohmann::ordered_json::object()) {
  nlohmann::ordered_json j;
  j["schema"] = "qta-plan";
  j["version"] = 1;
  j["repeats"] = p.repeats;
  j["folds"] = p.folds;
  j["seeds"] = p.seeds;
  j["holdout"] = p.holdout_ids;
  auto cells = nlohmann::ordered_json::array();
  for (int r = 0; r < p.repeats; ++r)
    for (int f = 0; f < p.folds; ++f) {
      const auto &c = p.cell(r, f);
      cells.push_back({{"repeat", r}, {"fold", f}, {"val", c.val_ids}, {"train", c.train_ids}});
    }
  j["cells"] = cells;
  j["provenance"] = provenance;
  return j;
}

inline FoldPlan plan_from_json(const nlohmann::ordered_json &j) {
  try {
    if (j.at("schema") != "qta-plan" || j.at("version") != 1)
      throw ParseError("plan: unknown schema or version");
    FoldPlan p;
    p.repeats = j.at("repeats").get<int>();
    p.folds = j.at("folds").get<int>();
    p.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    p.holdout_ids = j.at("holdout").get<std::vector<std::string>>();
    p.cells.assign(static_cast<std::size_t>(p.repeats), std::vector<FoldCell>(static_cast<std::size_t>(p.folds)));
    std::size_t seen = 0;
    for (const auto &c : j.at("cells")) {
      const int r = c.at("repeat").get<int>(), f = c.at("fold").get<int>();
      if (r < 0 || r >= p.repeats || f < 0 || f >= p.folds)
        throw ParseError("plan: cell index out of range");
      auto &cell = p.cells[static_cast<std::size_t>(r)][static_cast<std::size_t>(f)];
      cell.val_ids = c.at("val").get<std::vector<std::string>>();
      cell.train_ids = c.at("train").get<std::vector<std::string>>();
      ++seen;
    }
    if (seen != static_cast<std::size_t>(p.repeats * p.folds))
      throw ParseError("plan: expected " + std::to_string(p.repeats * p.folds) + " cells");
    return p;
  } catch (const nlohmann::json::exception &e) {
    throw ParseError(std::string("plan: ") + e.what());
  }
}

inline void save_plan(const std::string &path, const FoldPlan &p,
                      const nlohmann::ordered_json &provenance = nlohmann::ordered_json::object()) {
  std::ofstream os(path);
  if (!os)
    throw Error("cannot write " + path);
  os << to_json(p, provenance).dump(1) << "\n";
}

inline FoldPlan load_plan(const std::string &path) {
  std::ifstream is(path);
  if (!is)
    throw MissingArtifactError("plan not found: " + path);
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(is);
  } catch (const nlohmann::json::exception &e) {
    throw ParseError(std::string("plan: ") + e.what());
  }
  return plan_from_json(j);
}

} // namespace qta
