#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "qta/error.hpp"
#include "qta/tensor_geometry.hpp"

namespace qta {

enum class Element : int { H = 0, C = 1, N = 2, O = 3 };

inline constexpr int kNumElements = 4;
inline constexpr std::array<Element, 4> kElements{Element::H, Element::C, Element::N,
                                                  Element::O};

inline constexpr double kBohrPerAngstrom = 1.8897261254578281;
inline constexpr double kDebyePerAu = 2.5417464519;

inline int index_of(Element e) { return static_cast<int>(e); }

inline int atomic_number(Element e) {
  switch (e) {
  case Element::H: return 1;
  case Element::C: return 6;
  case Element::N: return 7;
  case Element::O: return 8;
  }
  return 0;
}

inline std::string_view symbol(Element e) {
  switch (e) {
  case Element::H: return "H";
  case Element::C: return "C";
  case Element::N: return "N";
  case Element::O: return "O";
  }
  return "?";
}

inline Element element_from_symbol(std::string_view s) {
  if (s == "H") return Element::H;
  if (s == "C") return Element::C;
  if (s == "N") return Element::N;
  if (s == "O") return Element::O;
  throw UnsupportedElementError("unsupported element '" + std::string(s) + "'");
}

inline Element element_from_number(int z) {
  switch (z) {
  case 1: return Element::H;
  case 6: return Element::C;
  case 7: return Element::N;
  case 8: return Element::O;
  }
  throw UnsupportedElementError("unsupported atomic number " + std::to_string(z));
}

/// QM9 molecular properties carried alongside the geometry.
/// Keys: alpha (Bohr^3), gap (Hartree), u0 (Hartree), cv (cal/(mol K)),
/// and optionally mu (Debye).
using MolProps = std::map<std::string, double>;

inline const std::vector<std::string> &required_mol_props() {
  static const std::vector<std::string> keys{"alpha", "gap", "u0", "cv"};
  return keys;
}

struct MoleculeRecord {
  std::string id;
  std::vector<Element> elements;
  std::vector<Vec3> positions; // Bohr
  std::string smiles;
  MolProps props;

  std::size_t size() const { return elements.size(); }

  void validate() const {
    if (elements.empty())
      throw ValidationError("molecule " + id + ": no atoms");
    if (elements.size() != positions.size())
      throw ValidationError("molecule " + id + ": element/position count mismatch");
    for (const auto &p : positions)
      if (!p.allFinite())
        throw ValidationError("molecule " + id + ": non-finite coordinate");
  }

  friend bool operator==(const MoleculeRecord &, const MoleculeRecord &) = default;
};

/// Per-atom ground truth in atomic units.
struct AtomTargets {
  double n_e = 0.0;
  double li = 0.0;
  Vec3 mu = Vec3::Zero();
  Traceless5 quad;

  friend bool operator==(const AtomTargets &, const AtomTargets &) = default;
};

/// Throws unless 0 < li <= n_e.
inline void validate_targets(const AtomTargets &t, const std::string &where = {}) {
  if (!(t.n_e > 0.0))
    throw ValidationError(where + ": electron population must be positive");
  if (!(t.li > 0.0 && t.li <= t.n_e))
    throw ValidationError(where + ": localization index must satisfy 0 < li <= N");
}

struct Molecule {
  MoleculeRecord record;
  std::optional<std::vector<AtomTargets>> targets;

  friend bool operator==(const Molecule &, const Molecule &) = default;
};

struct Dataset {
  std::vector<Molecule> molecules;

  std::size_t size() const { return molecules.size(); }

  std::size_t atom_count() const {
    std::size_t n = 0;
    for (const auto &m : molecules)
      n += m.record.size();
    return n;
  }

  const Molecule *find(const std::string &id) const {
    for (const auto &m : molecules)
      if (m.record.id == id)
        return &m;
    return nullptr;
  }

  std::map<std::string, std::size_t> index() const {
    std::map<std::string, std::size_t> out;
    for (std::size_t i = 0; i < molecules.size(); ++i)
      out.emplace(molecules[i].record.id, i);
    return out;
  }
};

} // namespace qta
