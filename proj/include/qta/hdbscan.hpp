#pragma once

// Hierarchical density-based clustering with excess-of-mass selection.
//
// Core distance is the distance to the min_samples-th nearest neighbour, the
// point itself counting as the first. The single-linkage hierarchy over
// mutual-reachability distances is built level by level: all edges of equal
// weight are merged at once, so a level where several components join forms
// one n-ary node. Stability uses lambda = 1 / distance. The root is never
// selected, and clusters are never merged.

#include <algorithm>
#include <limits>
#include <numeric>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "qta/error.hpp"

namespace qta {

inline constexpr int kNoise = -1;

struct ClusterParams {
  int min_cluster_size = 5;
  int min_samples = 5;

  void validate() const {
    require(min_cluster_size >= 2, "ClusterParams: min_cluster_size must be >= 2");
    require(min_samples >= 1, "ClusterParams: min_samples must be >= 1");
    require(min_samples <= min_cluster_size, "ClusterParams: min_samples must be <= min_cluster_size");
  }
};

struct MstEdge {
  int a = 0;
  int b = 0;
  double weight = 0;
};

struct HdbscanResult {
  std::vector<int> labels;
  int n_clusters = 0;
  std::vector<double> core_distances;
  std::vector<MstEdge> mst;
  /// Stability of each selected cluster, in label order.
  std::vector<double> stabilities;
};

namespace detail {

template <typename Mat> double row_dist(const Mat &X, Eigen::Index i, Eigen::Index j) {
  return (X.row(i) - X.row(j)).norm();
}

inline double lambda_of(double d, double floor) { return 1.0 / std::max(d, floor); }

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
      x = parent[static_cast<std::size_t>(x)];
    }
    return x;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b)
      parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
  }
};

} // namespace detail

template <typename Mat> std::vector<double> core_distances(const Mat &X, int min_samples) {
  const Eigen::Index n = X.rows();
  std::vector<double> core(static_cast<std::size_t>(n), 0.0);
  std::vector<double> row(static_cast<std::size_t>(n));
  const std::size_t k = static_cast<std::size_t>(std::min<Eigen::Index>(min_samples, n)) - 1;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j)
      row[static_cast<std::size_t>(j)] = i == j ? 0.0 : detail::row_dist(X, i, j);
    std::nth_element(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(k), row.end());
    core[static_cast<std::size_t>(i)] = row[k];
  }
  return core;
}

/// Prim's algorithm on the dense mutual-reachability graph. Ties pick the
/// lowest vertex index.
template <typename Mat> std::vector<MstEdge> mutual_reachability_mst(const Mat &X, const std::vector<double> &core) {
  const int n = static_cast<int>(X.rows());
  std::vector<MstEdge> edges;
  if (n < 2)
    return edges;
  std::vector<char> in_tree(static_cast<std::size_t>(n), 0);
  std::vector<double> best(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  std::vector<int> from(static_cast<std::size_t>(n), -1);
  int cur = 0;
  in_tree[0] = 1;
  for (int step = 1; step < n; ++step) {
    int next = -1;
    for (int j = 0; j < n; ++j) {
      const auto uj = static_cast<std::size_t>(j);
      if (in_tree[uj])
        continue;
      const double mr = std::max({core[static_cast<std::size_t>(cur)], core[uj], detail::row_dist(X, cur, j)});
      if (mr < best[uj] || (mr == best[uj] && cur < from[uj])) {
        best[uj] = mr;
        from[uj] = cur;
      }
      if (next < 0 || best[uj] < best[static_cast<std::size_t>(next)])
        next = j;
    }
    in_tree[static_cast<std::size_t>(next)] = 1;
    edges.push_back({from[static_cast<std::size_t>(next)], next, best[static_cast<std::size_t>(next)]});
    cur = next;
  }
  std::sort(edges.begin(), edges.end(), [](const MstEdge &x, const MstEdge &y) {
    const auto kx = std::make_tuple(x.weight, std::min(x.a, x.b), std::max(x.a, x.b));
    const auto ky = std::make_tuple(y.weight, std::min(y.a, y.b), std::max(y.a, y.b));
    return kx < ky;
  });
  return edges;
}

template <typename Mat> HdbscanResult hdbscan_cluster(const Mat &X, const ClusterParams &p) {
  p.validate();
  const int n = static_cast<int>(X.rows());
  require(n >= 1, "hdbscan_cluster: need at least 1 sample");
  HdbscanResult res;
  res.labels.assign(static_cast<std::size_t>(n), kNoise);
  if (n < p.min_cluster_size)
    return res;

  res.core_distances = core_distances(X, p.min_samples);
  res.mst = mutual_reachability_mst(X, res.core_distances);
  const double max_w = res.mst.empty() ? 0.0 : res.mst.back().weight;
  const double floor = max_w > 0 ? 1e-12 * max_w : 1e-300;

  // level-set hierarchy; nodes 0..n-1 are points
  struct Node {
    double level = 0;
    int size = 1;
    std::vector<int> children;
  };
  std::vector<Node> nodes(static_cast<std::size_t>(n));
  std::vector<int> comp_node(static_cast<std::size_t>(n));
  std::iota(comp_node.begin(), comp_node.end(), 0);
  detail::UnionFind uf(static_cast<std::size_t>(n));
  for (std::size_t e = 0; e < res.mst.size();) {
    std::size_t end = e;
    while (end < res.mst.size() && res.mst[end].weight == res.mst[e].weight)
      ++end;
    const double w = res.mst[e].weight;
    // group the touched components by the component they end up in
    std::vector<int> roots;
    for (std::size_t i = e; i < end; ++i) {
      roots.push_back(uf.find(res.mst[i].a));
      roots.push_back(uf.find(res.mst[i].b));
    }
    std::sort(roots.begin(), roots.end());
    roots.erase(std::unique(roots.begin(), roots.end()), roots.end());
    std::vector<std::pair<int, int>> old_nodes; // (old root, node)
    for (int r : roots)
      old_nodes.emplace_back(r, comp_node[static_cast<std::size_t>(r)]);
    for (std::size_t i = e; i < end; ++i)
      uf.unite(res.mst[i].a, res.mst[i].b);
    std::vector<std::pair<int, std::vector<int>>> merged; // new root -> children
    for (const auto &[r, node] : old_nodes) {
      const int nr = uf.find(r);
      auto it = std::find_if(merged.begin(), merged.end(), [&](const auto &m) { return m.first == nr; });
      if (it == merged.end())
        merged.emplace_back(nr, std::vector<int>{node});
      else
        it->second.push_back(node);
    }
    for (auto &[nr, kids] : merged) {
      Node nd;
      nd.level = w;
      nd.size = 0;
      for (int k : kids)
        nd.size += nodes[static_cast<std::size_t>(k)].size;
      nd.children = std::move(kids);
      nodes.push_back(std::move(nd));
      comp_node[static_cast<std::size_t>(nr)] = static_cast<int>(nodes.size()) - 1;
    }
    e = end;
  }

  // condense top-down
  struct Cluster {
    int parent = -1;
    double birth = 0;
    double stability = 0;
    std::vector<int> children;
  };
  std::vector<Cluster> clusters(1);
  std::vector<int> fell_from(static_cast<std::size_t>(n), 0);
  auto drop_points = [&](int node, int c, double lam) {
    std::vector<int> stack{node};
    int count = 0;
    while (!stack.empty()) {
      const int x = stack.back();
      stack.pop_back();
      if (x < n) {
        fell_from[static_cast<std::size_t>(x)] = c;
        ++count;
      } else {
        for (int k : nodes[static_cast<std::size_t>(x)].children)
          stack.push_back(k);
      }
    }
    clusters[static_cast<std::size_t>(c)].stability += (lam - clusters[static_cast<std::size_t>(c)].birth) * count;
  };
  std::vector<std::pair<int, int>> work{{static_cast<int>(nodes.size()) - 1, 0}};
  while (!work.empty()) {
    const auto [node, c] = work.back();
    work.pop_back();
    const auto &nd = nodes[static_cast<std::size_t>(node)];
    const double lam = detail::lambda_of(nd.level, floor);
    std::vector<int> big;
    for (int k : nd.children) {
      if (nodes[static_cast<std::size_t>(k)].size >= p.min_cluster_size)
        big.push_back(k);
      else
        drop_points(k, c, lam);
    }
    if (big.size() == 1) {
      work.emplace_back(big[0], c);
    } else if (big.size() >= 2) {
      for (int k : big) {
        clusters[static_cast<std::size_t>(c)].stability +=
            (lam - clusters[static_cast<std::size_t>(c)].birth) * nodes[static_cast<std::size_t>(k)].size;
        Cluster child;
        child.parent = c;
        child.birth = lam;
        clusters.push_back(child);
        const int id = static_cast<int>(clusters.size()) - 1;
        clusters[static_cast<std::size_t>(c)].children.push_back(id);
        work.emplace_back(k, id);
      }
    }
  }

  // excess of mass; children always have larger ids than their parent
  const std::size_t nc = clusters.size();
  std::vector<char> selected(nc, 0);
  std::vector<double> best(nc, 0.0);
  for (std::size_t c = nc; c-- > 1;) {
    const auto &cl = clusters[c];
    double sub = 0;
    for (int k : cl.children)
      sub += best[static_cast<std::size_t>(k)];
    if (cl.children.empty() || cl.stability >= sub) {
      selected[c] = 1;
      best[c] = cl.stability;
    } else {
      best[c] = sub;
    }
  }
  // keep only the topmost selected cluster on each path
  for (std::size_t c = 1; c < nc; ++c)
    for (int a = clusters[c].parent; a > 0; a = clusters[static_cast<std::size_t>(a)].parent)
      if (selected[static_cast<std::size_t>(a)]) {
        selected[c] = 0;
        break;
      }

  std::vector<int> raw(static_cast<std::size_t>(n), kNoise);
  for (int i = 0; i < n; ++i)
    for (int c = fell_from[static_cast<std::size_t>(i)]; c > 0; c = clusters[static_cast<std::size_t>(c)].parent)
      if (selected[static_cast<std::size_t>(c)]) {
        raw[static_cast<std::size_t>(i)] = c;
        break;
      }
  std::vector<int> relabel(nc, kNoise);
  for (int i = 0; i < n; ++i) {
    const int c = raw[static_cast<std::size_t>(i)];
    if (c != kNoise && relabel[static_cast<std::size_t>(c)] == kNoise) {
      relabel[static_cast<std::size_t>(c)] = res.n_clusters++;
      res.stabilities.push_back(clusters[static_cast<std::size_t>(c)].stability);
    }
    if (c != kNoise)
      res.labels[static_cast<std::size_t>(i)] = relabel[static_cast<std::size_t>(c)];
  }
  return res;
}

} // namespace qta
