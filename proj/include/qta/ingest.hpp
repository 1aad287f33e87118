#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "qta/dataset_io.hpp"
#include "qta/molecule.hpp"
#include "qta/sumviz.hpp"
#include "qta/xyz.hpp"

namespace qta {

struct AssemblyOptions {
  /// Downgrade 0 < li <= N violations from errors to logged drops.
  bool li_violation_is_warning = false;
  /// Position agreement required between the geometry file and the
  /// coordinates embedded in the atomic-property file (Bohr).
  double geometry_tolerance = 1e-3;
};

struct AssemblyReport {
  std::size_t molecules_in = 0;
  std::size_t excluded = 0;
  std::size_t missing_props = 0;
  std::size_t li_violations = 0;
  std::size_t with_targets = 0;
  std::size_t retained = 0;
  std::vector<std::string> log;
};

struct AssemblyResult {
  Dataset dataset;
  AssemblyReport report;
};

/// Joins geometry records with per-atom targets by molecule id, applies the
/// exclusion list and drops molecules lacking any required QM9 property.
inline AssemblyResult assemble_dataset(const std::vector<MoleculeRecord> &molecules,
                                       const std::map<std::string, SumvizResult> &atom_files,
                                       const std::set<std::string> &excluded,
                                       const AssemblyOptions &opt = {}) {
  AssemblyResult out;
  auto &rep = out.report;
  std::set<std::string> seen;
  for (const auto &rec : molecules) {
    ++rep.molecules_in;
    if (!seen.insert(rec.id).second)
      throw ValidationError("assemble_dataset: duplicate molecule id " + rec.id);
    if (excluded.count(rec.id)) {
      ++rep.excluded;
      rep.log.push_back("excluded " + rec.id);
      continue;
    }
    std::vector<std::string> missing;
    for (const auto &k : required_mol_props())
      if (!rec.props.count(k) || !std::isfinite(rec.props.at(k)))
        missing.push_back(k);
    if (!missing.empty()) {
      ++rep.missing_props;
      std::string msg = "dropped " + rec.id + ": missing";
      for (const auto &k : missing)
        msg += " " + k;
      rep.log.push_back(msg);
      continue;
    }
    Molecule m;
    m.record = rec;
    if (auto it = atom_files.find(rec.id); it != atom_files.end()) {
      const auto &sv = it->second;
      if (sv.targets.size() != rec.size())
        throw ValidationError("assemble_dataset: atom-count mismatch for " + rec.id + " (geometry " +
                              std::to_string(rec.size()) + ", targets " +
                              std::to_string(sv.targets.size()) + ")");
      if (sv.geometry.elements != rec.elements)
        throw ValidationError("assemble_dataset: element order mismatch for " + rec.id);
      bool bad_li = false;
      for (std::size_t a = 0; a < sv.targets.size(); ++a) {
        try {
          validate_targets(sv.targets[a], rec.id + " atom " + std::to_string(a));
        } catch (const ValidationError &e) {
          if (!opt.li_violation_is_warning)
            throw;
          rep.log.push_back(std::string("dropped ") + e.what());
          bad_li = true;
          break;
        }
      }
      if (bad_li) {
        ++rep.li_violations;
        continue;
      }
      for (std::size_t a = 0; a < rec.size(); ++a)
        if ((sv.geometry.positions[a] - rec.positions[a]).norm() > opt.geometry_tolerance)
          rep.log.push_back("warning " + rec.id + ": geometry differs at atom " + std::to_string(a));
      m.targets = sv.targets;
      ++rep.with_targets;
    }
    out.dataset.molecules.push_back(std::move(m));
  }
  rep.retained = out.dataset.size();
  return out;
}

/// One molecule id per line; blank lines and '#' comments ignored.
inline std::set<std::string> parse_exclusion_list(std::string_view text) {
  std::set<std::string> ids;
  std::size_t start = 0;
  while (start < text.size()) {
    auto nl = text.find('\n', start);
    if (nl == std::string_view::npos)
      nl = text.size();
    auto line = detail::trim(text.substr(start, nl - start));
    if (!line.empty() && line.front() != '#')
      ids.emplace(line);
    start = nl + 1;
  }
  return ids;
}

} // namespace qta
