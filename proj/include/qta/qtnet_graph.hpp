#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "qta/autodiff.hpp"
#include "qta/molecule.hpp"
#include "qta/tensor_geometry.hpp"

namespace qta {

struct GraphConfig {
  /// Absent for fully connected graphs.
  std::optional<double> cutoff;
  std::optional<int> max_nn;
  /// Range of the radial basis; defaults to the cutoff.
  double rbf_cutoff = 8.0;
  int n_rbf = 8;
  int legendre_degree = 6;
  /// Keep only rotation-invariant filter inputs (distances and angles).
  bool invariant_only = false;
};

/// A batch of molecular graphs with disjoint node ranges. Edges are directed
/// (receiver <- sender) and both directions are stored independently.
struct GraphInstance {
  std::vector<Element> species;
  std::vector<Vec3> positions;
  std::vector<int> molecule_of_node;
  int n_molecules = 0;

  std::vector<int> receiver, sender;
  std::vector<Vec3> rhat;
  std::vector<double> length;
  std::vector<Traceless5> gyration;

  /// Edge-edge pairs: edges that share their receiver node, which is the
  /// intermediary.
  std::vector<int> ee_receiver, ee_sender, ee_node;
  std::vector<Traceless5> ee_relative;
  std::vector<double> ee_cos;

  std::vector<std::string> warnings;

  std::size_t n_nodes() const { return species.size(); }
  std::size_t n_edges() const { return receiver.size(); }
  std::size_t n_pairs() const { return ee_receiver.size(); }
};

/// Filter inputs derived from a graph.
struct GraphFeatures {
  ad::Mat node_geom; // per edge: [rhat, RBF(r)] or [RBF(r)]
  ad::Mat edge_geom; // per edge: [G, RBF(r)] or [RBF(r)]
  ad::Mat pair_geom; // per edge pair: [G_rs, P(cos)] or [P(cos)]
};

inline std::vector<double> rbf_features(double r, double c, int n) {
  if (r >= c)
    return std::vector<double>(static_cast<std::size_t>(n), 0.0);
  return rbf_basis(r, c, n);
}

inline GraphInstance build_graph(const MoleculeRecord &mol, const GraphConfig &cfg) {
  const int n = static_cast<int>(mol.size());
  require(n >= 1, "build_graph: empty molecule");
  if (cfg.cutoff)
    require(*cfg.cutoff > 0, "build_graph: cutoff must be > 0");
  if (cfg.max_nn)
    require(*cfg.max_nn >= 1, "build_graph: max_nn must be >= 1");
  if (cfg.cutoff && n < 2)
    throw ValidationError("build_graph: degenerate graph for " + mol.id + " (single atom under a cutoff)");
  GraphInstance g;
  g.species = mol.elements;
  g.positions = mol.positions;
  g.molecule_of_node.assign(static_cast<std::size_t>(n), 0);
  g.n_molecules = 1;
  for (int i = 0; i < n; ++i) {
    std::vector<std::pair<double, int>> cand;
    for (int j = 0; j < n; ++j) {
      if (j == i)
        continue;
      const double r = (mol.positions[static_cast<std::size_t>(j)] - mol.positions[static_cast<std::size_t>(i)]).norm();
      if (r <= 0)
        throw ValidationError("build_graph: coincident atoms " + std::to_string(i) + " and " + std::to_string(j) +
                              " in " + mol.id);
      if (!cfg.cutoff || r <= *cfg.cutoff)
        cand.emplace_back(r, j);
    }
    std::sort(cand.begin(), cand.end());
    if (cfg.max_nn && static_cast<int>(cand.size()) > *cfg.max_nn)
      cand.resize(static_cast<std::size_t>(*cfg.max_nn));
    if (cand.size() < 2 && n > 2)
      g.warnings.push_back(mol.id + ": atom " + std::to_string(i) + " has " + std::to_string(cand.size()) +
                           " neighbours");
    for (const auto &[r, j] : cand) {
      const Vec3 d = mol.positions[static_cast<std::size_t>(j)] - mol.positions[static_cast<std::size_t>(i)];
      g.receiver.push_back(i);
      g.sender.push_back(j);
      g.rhat.push_back(d / r);
      g.length.push_back(r);
      g.gyration.push_back(gyration_tensor(d / r, 1e-8));
    }
  }
  // pairs of distinct edges into the same receiver
  std::vector<std::vector<int>> incoming(static_cast<std::size_t>(n));
  for (std::size_t e = 0; e < g.receiver.size(); ++e)
    incoming[static_cast<std::size_t>(g.receiver[e])].push_back(static_cast<int>(e));
  for (int i = 0; i < n; ++i)
    for (int a : incoming[static_cast<std::size_t>(i)])
      for (int b : incoming[static_cast<std::size_t>(i)]) {
        if (a == b)
          continue;
        const auto &Ga = g.gyration[static_cast<std::size_t>(a)];
        const auto &Gb = g.gyration[static_cast<std::size_t>(b)];
        const Traceless5 d = Ga - Gb;
        const double nd = frob_norm5(d);
        g.ee_receiver.push_back(a);
        g.ee_sender.push_back(b);
        g.ee_node.push_back(i);
        g.ee_relative.push_back(nd > 1e-9 ? (1.0 / nd) * d : Traceless5{});
        g.ee_cos.push_back(cos_gyration(Ga, Gb, 1e-6));
      }
  return g;
}

/// Concatenates graphs into one batch with offset node and edge indices.
inline GraphInstance merge_graphs(const std::vector<GraphInstance> &parts) {
  GraphInstance out;
  int node_off = 0, edge_off = 0;
  for (const auto &g : parts) {
    for (std::size_t i = 0; i < g.n_nodes(); ++i) {
      out.species.push_back(g.species[i]);
      out.positions.push_back(g.positions[i]);
      out.molecule_of_node.push_back(out.n_molecules + g.molecule_of_node[i]);
    }
    for (std::size_t e = 0; e < g.n_edges(); ++e) {
      out.receiver.push_back(g.receiver[e] + node_off);
      out.sender.push_back(g.sender[e] + node_off);
      out.rhat.push_back(g.rhat[e]);
      out.length.push_back(g.length[e]);
      out.gyration.push_back(g.gyration[e]);
    }
    for (std::size_t p = 0; p < g.n_pairs(); ++p) {
      out.ee_receiver.push_back(g.ee_receiver[p] + edge_off);
      out.ee_sender.push_back(g.ee_sender[p] + edge_off);
      out.ee_node.push_back(g.ee_node[p] + node_off);
      out.ee_relative.push_back(g.ee_relative[p]);
      out.ee_cos.push_back(g.ee_cos[p]);
    }
    out.warnings.insert(out.warnings.end(), g.warnings.begin(), g.warnings.end());
    node_off += static_cast<int>(g.n_nodes());
    edge_off += static_cast<int>(g.n_edges());
    out.n_molecules += g.n_molecules;
  }
  return out;
}

inline int node_geom_dim(const GraphConfig &c) { return (c.invariant_only ? 0 : 3) + c.n_rbf; }
inline int edge_geom_dim(const GraphConfig &c) { return (c.invariant_only ? 0 : 5) + c.n_rbf; }
inline int pair_geom_dim(const GraphConfig &c) { return (c.invariant_only ? 0 : 5) + c.legendre_degree + 1; }

inline GraphFeatures graph_features(const GraphInstance &g, const GraphConfig &c) {
  GraphFeatures f;
  const auto E = static_cast<Eigen::Index>(g.n_edges());
  const auto P = static_cast<Eigen::Index>(g.n_pairs());
  f.node_geom.resize(E, node_geom_dim(c));
  f.edge_geom.resize(E, edge_geom_dim(c));
  f.pair_geom.resize(P, pair_geom_dim(c));
  for (Eigen::Index e = 0; e < E; ++e) {
    const auto rb = rbf_features(g.length[static_cast<std::size_t>(e)], c.rbf_cutoff, c.n_rbf);
    Eigen::Index k = 0, m = 0;
    if (!c.invariant_only) {
      for (int a = 0; a < 3; ++a)
        f.node_geom(e, k++) = g.rhat[static_cast<std::size_t>(e)][a];
      for (int a = 0; a < 5; ++a)
        f.edge_geom(e, m++) = g.gyration[static_cast<std::size_t>(e)][a];
    }
    for (double v : rb) {
      f.node_geom(e, k++) = v;
      f.edge_geom(e, m++) = v;
    }
  }
  for (Eigen::Index p = 0; p < P; ++p) {
    Eigen::Index k = 0;
    if (!c.invariant_only)
      for (int a = 0; a < 5; ++a)
        f.pair_geom(p, k++) = g.ee_relative[static_cast<std::size_t>(p)][a];
    for (double v : legendre_basis(g.ee_cos[static_cast<std::size_t>(p)], c.legendre_degree))
      f.pair_geom(p, k++) = v;
  }
  return f;
}

} // namespace qta
