#pragma once

// Small H/C/N/O molecules with analytic per-atom targets. Targets are smooth
// functions of the geometry: populations and localization indices are
// invariant, dipoles and quadrupoles co-rotate with the molecule, and the
// atomic dipoles sum to the stored molecular dipole.

#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "qta/molecule.hpp"
#include "qta/rng.hpp"
#include "qta/smiles.hpp"
#include "qta/tensor_geometry.hpp"

namespace qta {

struct SyntheticOptions {
  int n_molecules = 50;
  std::uint64_t seed = 7;
  int min_heavy = 2;
  int max_heavy = 6;
  double ring_probability = 0.35;
  std::string id_prefix = "syn";
};

namespace detail {

inline double pauling(Element e) {
  static constexpr std::array<double, 4> chi{2.20, 2.55, 3.04, 3.44};
  return chi[static_cast<std::size_t>(index_of(e))];
}

inline int valence(Element e) {
  static constexpr std::array<int, 4> v{1, 4, 3, 2};
  return v[static_cast<std::size_t>(index_of(e))];
}

inline Vec3 random_unit(Rng &rng) {
  for (;;) {
    Vec3 v(rng.normal(), rng.normal(), rng.normal());
    const double n = v.norm();
    if (n > 1e-6)
      return v / n;
  }
}

struct Skeleton {
  std::vector<Element> elements;
  std::vector<std::pair<int, int>> bonds;
  std::vector<Vec3> positions;
};

// Appends a position bonded to `parent` at `length`, clear of every other atom.
inline bool place(Skeleton &s, int parent, double length, Rng &rng) {
  for (int attempt = 0; attempt < 400; ++attempt) {
    const Vec3 p = s.positions[static_cast<std::size_t>(parent)] + length * random_unit(rng);
    bool ok = true;
    for (std::size_t k = 0; k < s.positions.size() && ok; ++k)
      if (static_cast<int>(k) != parent && (s.positions[k] - p).norm() < 3.0)
        ok = false;
    if (ok) {
      s.positions.push_back(p);
      return true;
    }
  }
  return false;
}

inline bool build_skeleton(Skeleton &s, const SyntheticOptions &o, Rng &rng) {
  s = {};
  const int n_heavy = o.min_heavy + static_cast<int>(rng.below(static_cast<std::uint64_t>(o.max_heavy - o.min_heavy + 1)));
  int start = 0;
  if (n_heavy >= 5 && rng.uniform() < o.ring_probability) {
    const int ring = n_heavy >= 6 && rng.uniform() < 0.5 ? 6 : 5;
    const double bond = 2.9, radius = bond / (2 * std::sin(std::numbers::pi / ring));
    for (int k = 0; k < ring; ++k) {
      const double a = 2 * std::numbers::pi * k / ring;
      s.elements.push_back(k == 0 && rng.uniform() < 0.3 ? Element::N : Element::C);
      s.positions.emplace_back(radius * std::cos(a), radius * std::sin(a), 0.0);
      s.bonds.emplace_back(k, (k + 1) % ring);
    }
    start = ring;
  } else {
    s.elements.push_back(Element::C);
    s.positions.push_back(Vec3::Zero());
    start = 1;
  }
  auto heavy_degree = [&](int i) {
    int d = 0;
    for (auto [a, b] : s.bonds)
      d += (a == i) + (b == i);
    return d;
  };
  for (int k = start; k < n_heavy; ++k) {
    const double u = rng.uniform();
    const Element e = u < 0.6 ? Element::C : (u < 0.8 ? Element::N : Element::O);
    std::vector<int> open;
    for (int i = 0; i < k; ++i)
      if (heavy_degree(i) < std::min(3, valence(s.elements[static_cast<std::size_t>(i)])))
        open.push_back(i);
    if (open.empty())
      return false;
    const int parent = open[rng.below(open.size())];
    if (!place(s, parent, 2.8, rng))
      return false;
    s.elements.push_back(e);
    s.bonds.emplace_back(parent, k);
  }
  const int heavy = static_cast<int>(s.elements.size());
  for (int i = 0; i < heavy; ++i) {
    const int nh = valence(s.elements[static_cast<std::size_t>(i)]) - heavy_degree(i);
    for (int h = 0; h < nh; ++h) {
      if (!place(s, i, 2.05, rng))
        return false;
      s.elements.push_back(Element::H);
      s.bonds.emplace_back(i, static_cast<int>(s.elements.size()) - 1);
    }
  }
  return true;
}

inline std::string skeleton_smiles(const Skeleton &s) {
  MolGraph g;
  std::vector<int> heavy_index(s.elements.size(), -1);
  for (std::size_t i = 0; i < s.elements.size(); ++i)
    if (s.elements[i] != Element::H) {
      heavy_index[i] = static_cast<int>(g.atoms.size());
      g.atoms.push_back({s.elements[i], false, 0, -1, false});
    }
  for (auto [a, b] : s.bonds)
    if (heavy_index[static_cast<std::size_t>(a)] >= 0 && heavy_index[static_cast<std::size_t>(b)] >= 0)
      g.bonds.push_back({heavy_index[static_cast<std::size_t>(a)], heavy_index[static_cast<std::size_t>(b)],
                         BondOrder::Single, false});
  g.perceive_rings();
  return write_smiles(g);
}

} // namespace detail

/// Analytic per-atom targets for any H/C/N/O geometry.
inline std::vector<AtomTargets> synthetic_targets(const MoleculeRecord &m) {
  const std::size_t n = m.size();
  std::vector<AtomTargets> t(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double chi_i = detail::pauling(m.elements[i]);
    double transfer = 0, crowd = 0;
    Vec3 mu = Vec3::Zero();
    Traceless5 q;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i)
        continue;
      const Vec3 d = m.positions[j] - m.positions[i];
      const double r = d.norm();
      const double s = std::exp(-(r / 3.0) * (r / 3.0));
      const double dchi = detail::pauling(m.elements[j]) - chi_i;
      transfer -= s * dchi;
      crowd += s;
      mu += 0.15 * s * (dchi + 0.2) * (d / r);
      q = q + (0.3 * s * (1.0 + 0.1 * atomic_number(m.elements[j]))) * gyration_tensor(d / r);
    }
    t[i].n_e = atomic_number(m.elements[i]) + 0.3 * transfer;
    t[i].li = t[i].n_e * (0.5 + 0.4 * std::exp(-0.5 * crowd));
    t[i].mu = mu;
    t[i].quad = q;
  }
  return t;
}

/// Sum of atomic dipole contributions (atomic units).
inline Vec3 dipole_sum(const std::vector<AtomTargets> &t) {
  Vec3 s = Vec3::Zero();
  for (const auto &a : t)
    s += a.mu;
  return s;
}

inline MolProps synthetic_props(const MoleculeRecord &m, const std::vector<AtomTargets> &t) {
  std::array<int, 4> count{};
  for (auto e : m.elements)
    ++count[static_cast<std::size_t>(index_of(e))];
  double pair = 0, charge_spread = 0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    charge_spread += std::abs(atomic_number(m.elements[i]) - t[i].n_e);
    for (std::size_t j = i + 1; j < m.size(); ++j)
      pair += std::exp(-(m.positions[i] - m.positions[j]).norm() / 4.0);
  }
  const int heavy = count[1] + count[2] + count[3];
  MolProps p;
  p["alpha"] = 1.2 * count[0] + 8.0 * count[1] + 7.0 * count[2] + 5.5 * count[3] + 0.5 * pair;
  p["gap"] = 0.32 - 0.012 * heavy + 0.05 * charge_spread / static_cast<double>(m.size());
  p["u0"] = -0.5 * count[0] - 37.8 * count[1] - 54.5 * count[2] - 75.0 * count[3] - 0.02 * pair;
  p["cv"] = 6.0 + 1.5 * static_cast<double>(m.size()) + 0.2 * pair;
  p["mu"] = dipole_sum(t).norm() * kDebyePerAu;
  return p;
}

/// Seeded synthetic dataset with targets and molecular properties.
inline Dataset synthetic_dataset(const SyntheticOptions &o) {
  require(o.n_molecules >= 1, "synthetic: need at least one molecule");
  require(o.min_heavy >= 1 && o.max_heavy >= o.min_heavy, "synthetic: bad heavy-atom range");
  Rng rng(o.seed);
  Dataset ds;
  for (int k = 0; k < o.n_molecules; ++k) {
    detail::Skeleton s;
    while (!detail::build_skeleton(s, o, rng)) {
    }
    // centre the molecule
    Vec3 c = Vec3::Zero();
    for (const auto &p : s.positions)
      c += p;
    c /= static_cast<double>(s.positions.size());
    Molecule m;
    m.record.id = o.id_prefix + "_" + std::to_string(k);
    m.record.elements = s.elements;
    for (const auto &p : s.positions)
      m.record.positions.push_back(p - c);
    m.record.smiles = detail::skeleton_smiles(s);
    m.targets = synthetic_targets(m.record);
    m.record.props = synthetic_props(m.record, *m.targets);
    ds.molecules.push_back(std::move(m));
  }
  return ds;
}

} // namespace qta
