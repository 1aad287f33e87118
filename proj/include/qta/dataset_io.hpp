#pragma once

// Canonical dataset file: UTF-8 JSON lines. The first record is a header
// (schema, version, units, provenance); every following line is one molecule.
// Field order is fixed and floats are written as shortest round-trip decimals.

#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <string>

#include <json.hpp>

#include "qta/molecule.hpp"

namespace qta {

using ojson = nlohmann::ordered_json;

inline constexpr const char *kDatasetSchema = "qta-dataset";
inline constexpr int kDatasetVersion = 1;

inline ojson dataset_units() {
  return ojson{{"positions", "bohr"},     {"n_e", "e"},
               {"li", "e"},               {"mu", "e*bohr"},
               {"quad", "e*bohr^2"},      {"alpha", "bohr^3"},
               {"gap", "hartree"},        {"u0", "hartree"},
               {"cv", "cal/(mol*K)"},     {"mol_mu", "debye"}};
}

inline ojson to_json(const Molecule &m) {
  const auto &r = m.record;
  ojson j;
  j["id"] = r.id;
  j["smiles"] = r.smiles;
  ojson el = ojson::array();
  for (auto e : r.elements)
    el.push_back(std::string(symbol(e)));
  j["elements"] = el;
  ojson pos = ojson::array();
  for (const auto &p : r.positions)
    pos.push_back({p.x(), p.y(), p.z()});
  j["positions"] = pos;
  ojson props = ojson::object();
  for (const auto &[k, v] : r.props)
    props[k == "mu" ? "mol_mu" : k] = v;
  j["props"] = props;
  if (m.targets) {
    ojson t;
    ojson n = ojson::array(), li = ojson::array(), mu = ojson::array(), q = ojson::array();
    for (const auto &a : *m.targets) {
      n.push_back(a.n_e);
      li.push_back(a.li);
      mu.push_back({a.mu.x(), a.mu.y(), a.mu.z()});
      q.push_back({a.quad[0], a.quad[1], a.quad[2], a.quad[3], a.quad[4]});
    }
    t["n_e"] = n;
    t["li"] = li;
    t["mu"] = mu;
    t["quad"] = q;
    j["targets"] = t;
  } else {
    j["targets"] = nullptr;
  }
  return j;
}

inline Molecule molecule_from_json(const ojson &j) {
  Molecule m;
  auto &r = m.record;
  r.id = j.at("id").get<std::string>();
  r.smiles = j.at("smiles").get<std::string>();
  for (const auto &e : j.at("elements"))
    r.elements.push_back(element_from_symbol(e.get<std::string>()));
  for (const auto &p : j.at("positions"))
    r.positions.emplace_back(p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>());
  for (const auto &[k, v] : j.at("props").items())
    r.props[k == "mol_mu" ? "mu" : k] = v.get<double>();
  r.validate();
  const auto &t = j.at("targets");
  if (!t.is_null()) {
    std::vector<AtomTargets> ts(r.size());
    const auto &n = t.at("n_e");
    if (n.size() != r.size())
      throw ParseError("dataset: target count mismatch for " + r.id);
    for (std::size_t a = 0; a < r.size(); ++a) {
      ts[a].n_e = n.at(a).get<double>();
      ts[a].li = t.at("li").at(a).get<double>();
      const auto &mu = t.at("mu").at(a);
      ts[a].mu = Vec3(mu.at(0).get<double>(), mu.at(1).get<double>(), mu.at(2).get<double>());
      const auto &q = t.at("quad").at(a);
      for (int k = 0; k < 5; ++k)
        ts[a].quad[k] = q.at(k).get<double>();
    }
    m.targets = std::move(ts);
  }
  return m;
}

inline void write_dataset(std::ostream &os, const Dataset &ds, const ojson &provenance = ojson::object()) {
  ojson header;
  header["schema"] = kDatasetSchema;
  header["version"] = kDatasetVersion;
  header["units"] = dataset_units();
  header["molecules"] = ds.size();
  header["provenance"] = provenance;
  os << header.dump() << "\n";
  for (const auto &m : ds.molecules)
    os << to_json(m).dump() << "\n";
}

struct DatasetFile {
  Dataset dataset;
  ojson header;
};

inline DatasetFile read_dataset(std::istream &is) {
  DatasetFile out;
  std::string line;
  std::size_t ln = 0;
  if (!std::getline(is, line))
    throw ParseError("dataset: empty file", 1);
  ++ln;
  try {
    out.header = ojson::parse(line);
  } catch (const nlohmann::json::exception &e) {
    throw ParseError(std::string("dataset header: ") + e.what(), ln);
  }
  if (out.header.value("schema", "") != kDatasetSchema)
    throw ParseError("dataset: unknown schema", ln);
  if (out.header.value("version", 0) != kDatasetVersion)
    throw ParseError("dataset: unsupported version", ln);
  std::set<std::string> seen;
  while (std::getline(is, line)) {
    ++ln;
    if (line.empty())
      continue;
    try {
      auto m = molecule_from_json(ojson::parse(line));
      if (!seen.insert(m.record.id).second)
        throw ParseError("dataset: duplicate molecule id " + m.record.id, ln);
      out.dataset.molecules.push_back(std::move(m));
    } catch (const nlohmann::json::exception &e) {
      throw ParseError(std::string("dataset record: ") + e.what(), ln);
    } catch (const ValidationError &e) {
      throw ParseError(e.what(), ln);
    } catch (const UnsupportedElementError &e) {
      throw ParseError(e.what(), ln);
    }
  }
  return out;
}

inline void save_dataset(const std::string &path, const Dataset &ds, const ojson &provenance = ojson::object()) {
  std::ofstream os(path);
  if (!os)
    throw Error("cannot write " + path);
  write_dataset(os, ds, provenance);
}

inline DatasetFile load_dataset(const std::string &path) {
  std::ifstream is(path);
  if (!is)
    throw MissingArtifactError("dataset not found: " + path);
  return read_dataset(is);
}

} // namespace qta
