#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "qta/autodiff.hpp"
#include "qta/qtnet_graph.hpp"
#include "qta/rng.hpp"

namespace qta {

/// Per-atom output columns: N, lambda, mu (3), quadrupole (5).
inline constexpr int kAtomOutputs = 10;

struct ModelConfig {
  std::string variant = "SG-8-12";
  GraphConfig graph{8.0, 12, 8.0, 8, 6, false};
  int depth = 7;
  int width = 48;
  int mlp_hidden = 2;
  int filter_hidden = 1;
  bool augment = true;
  /// Pooled molecule-level head instead of per-atom heads.
  bool molecular = false;
  int mol_outputs = 4;
  /// Append per-atom reference values to the node encoder input.
  bool informed = false;

  void validate() const {
    require(depth >= 1, "model: depth must be >= 1");
    require(width > 0, "model: width must be > 0");
    require(mlp_hidden >= 1 && filter_hidden >= 1, "model: hidden layer counts must be >= 1");
    require(graph.n_rbf >= 1 && graph.legendre_degree >= 0, "model: bad basis sizes");
    require(graph.rbf_cutoff > 0, "model: rbf cutoff must be > 0");
    require(!molecular || mol_outputs >= 1, "model: molecular head needs outputs");
    require(!informed || molecular, "model: informed mode applies to the molecular variant");
  }
};

/// Named configurations. Fully connected variants use a 20 Bohr radial range.
inline ModelConfig variant_config(const std::string &name) {
  ModelConfig c;
  c.variant = name;
  if (name == "SG-8-12") {
    c.graph = {8.0, 12, 8.0, 8, 6, false};
  } else if (name == "SG-8-5") {
    c.graph = {8.0, 5, 8.0, 8, 6, false};
  } else if (name == "SFC2") {
    c.graph = {std::nullopt, std::nullopt, 20.0, 8, 6, false};
  } else if (name == "SGFC") {
    c.graph = {std::nullopt, std::nullopt, 20.0, 8, 6, false};
    c.augment = false;
  } else if (name == "SGNN") {
    c.graph = {5.25, 5, 5.25, 8, 6, false};
    c.augment = false;
  } else if (name == "molecular") {
    c.graph = {3.5, 4, 3.5, 8, 6, true};
    c.depth = 3;
    c.width = 32;
    c.augment = false;
    c.molecular = true;
  } else {
    throw ValidationError("unknown model variant '" + name + "'");
  }
  return c;
}

inline nlohmann::ordered_json to_json(const ModelConfig &c) {
  nlohmann::ordered_json j;
  j["variant"] = c.variant;
  j["cutoff"] = c.graph.cutoff ? nlohmann::ordered_json(*c.graph.cutoff) : nlohmann::ordered_json(nullptr);
  j["max_nn"] = c.graph.max_nn ? nlohmann::ordered_json(*c.graph.max_nn) : nlohmann::ordered_json(nullptr);
  j["rbf_cutoff"] = c.graph.rbf_cutoff;
  j["n_rbf"] = c.graph.n_rbf;
  j["legendre_degree"] = c.graph.legendre_degree;
  j["invariant_only"] = c.graph.invariant_only;
  j["depth"] = c.depth;
  j["width"] = c.width;
  j["mlp_hidden"] = c.mlp_hidden;
  j["filter_hidden"] = c.filter_hidden;
  j["augment"] = c.augment;
  j["molecular"] = c.molecular;
  j["mol_outputs"] = c.mol_outputs;
  j["informed"] = c.informed;
  j["layer_order"] = "edge-edge,node-node,node-edge,node-ff,edge-ff";
  return j;
}

inline ModelConfig model_config_from_json(const nlohmann::ordered_json &j) {
  try {
    ModelConfig c;
    c.variant = j.at("variant").get<std::string>();
    c.graph.cutoff = j.at("cutoff").is_null() ? std::nullopt : std::optional<double>(j.at("cutoff").get<double>());
    c.graph.max_nn = j.at("max_nn").is_null() ? std::nullopt : std::optional<int>(j.at("max_nn").get<int>());
    c.graph.rbf_cutoff = j.at("rbf_cutoff").get<double>();
    c.graph.n_rbf = j.at("n_rbf").get<int>();
    c.graph.legendre_degree = j.at("legendre_degree").get<int>();
    c.graph.invariant_only = j.at("invariant_only").get<bool>();
    c.depth = j.at("depth").get<int>();
    c.width = j.at("width").get<int>();
    c.mlp_hidden = j.at("mlp_hidden").get<int>();
    c.filter_hidden = j.at("filter_hidden").get<int>();
    c.augment = j.at("augment").get<bool>();
    c.molecular = j.at("molecular").get<bool>();
    c.mol_outputs = j.at("mol_outputs").get<int>();
    c.informed = j.at("informed").get<bool>();
    c.validate();
    return c;
  } catch (const nlohmann::json::exception &e) {
    throw ParseError(std::string("model config: ") + e.what());
  }
}

inline std::uint64_t config_hash(const ModelConfig &c) { return fnv1a(to_json(c).dump()); }

/// Named parameter matrices in a fixed registration order.
struct ParamSet {
  std::vector<std::string> names;
  std::vector<ad::Mat> values;

  std::size_t size() const { return names.size(); }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto &v : values)
      n += static_cast<std::size_t>(v.size());
    return n;
  }

  const ad::Mat &at(const std::string &name) const { return values[index(name)]; }
  ad::Mat &at(const std::string &name) { return values[index(name)]; }

  std::size_t index(const std::string &name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name)
        return i;
    throw ValidationError("no parameter named '" + name + "'");
  }

  bool all_finite() const {
    for (const auto &v : values)
      if (!v.allFinite())
        return false;
    return true;
  }

  friend bool operator==(const ParamSet &a, const ParamSet &b) { return a.names == b.names && a.values == b.values; }
};

namespace detail {

enum class Init { Weight, Zero, One, Normal };

struct Layout {
  struct Entry {
    std::string name;
    Eigen::Index rows, cols;
    Init init;
  };
  std::vector<Entry> entries;

  void add(std::string name, Eigen::Index r, Eigen::Index c, Init i) { entries.push_back({std::move(name), r, c, i}); }
  void linear(const std::string &p, int in, int out, bool bias = true) {
    add(p + ".w", in, out, Init::Weight);
    if (bias)
      add(p + ".b", 1, out, Init::Zero);
  }
  void mlp(const std::string &p, int in, int hidden, int out, int n_hidden) {
    int d = in;
    for (int k = 0; k < n_hidden; ++k) {
      linear(p + "." + std::to_string(k), d, hidden);
      d = hidden;
    }
    linear(p + ".out", d, out);
  }
  // hidden layers then a tanh output of the same width
  void filter(const std::string &p, int in, int w, int n_hidden) { mlp(p, in, w, w, n_hidden); }
  void gate(const std::string &p, int w) { mlp(p, w, w, w, 1); }
  void ln(const std::string &p, int w) {
    add(p + ".g", 1, w, Init::One);
    add(p + ".b", 1, w, Init::Zero);
  }
};

inline Layout model_layout(const ModelConfig &c) {
  c.validate();
  const int W = c.width, nh = c.mlp_hidden, fh = c.filter_hidden;
  const int nd = node_geom_dim(c.graph), ed = edge_geom_dim(c.graph), pd = pair_geom_dim(c.graph);
  Layout L;
  L.add("embed", kNumElements, W, Init::Normal);
  L.mlp("enc.node.mlp", 2 * W + (c.informed ? 2 * kAtomOutputs : 0), W, W, nh);
  L.filter("enc.node.filter", nd, W, fh);
  L.ln("enc.node.ln", W);
  L.mlp("enc.edge.a", W, W, W, nh);
  L.ln("enc.edge.ln_in", W);
  L.mlp("enc.edge.b", W, W, W, nh);
  L.filter("enc.edge.filter", ed, W, fh);
  L.ln("enc.edge.ln", W);
  for (int l = 0; l < c.depth; ++l) {
    const std::string p = "layer" + std::to_string(l);
    L.ln(p + ".ee.ln_e", W);
    L.ln(p + ".ee.ln_n", W);
    L.mlp(p + ".ee.mlp", 3 * W, W, W, nh);
    L.filter(p + ".ee.filter", pd, W, fh);
    L.gate(p + ".ee.gate", W);
    L.ln(p + ".nn.ln_n", W);
    L.ln(p + ".nn.ln_e", W);
    L.mlp(p + ".nn.mlp", 3 * W, W, W, nh);
    L.filter(p + ".nn.filter", nd, W, fh);
    L.gate(p + ".nn.gate", W);
    L.ln(p + ".ne.ln_e", W);
    L.ln(p + ".ne.ln_n", W);
    L.mlp(p + ".ne.mlp", 2 * W, W, W, nh);
    L.filter(p + ".ne.filter", ed, W, fh);
    L.gate(p + ".ne.gate", W);
    L.ln(p + ".nff.ln", W);
    L.linear(p + ".nff.reminder", W, W, false);
    L.mlp(p + ".nff.mlp", 2 * W, W, W, nh);
    L.gate(p + ".nff.gate", W);
    L.ln(p + ".eff.ln", W);
    L.mlp(p + ".eff.mlp", W, W, W, nh);
    L.gate(p + ".eff.gate", W);
    if (!c.molecular) {
      L.ln(p + ".head.ln", W);
      L.mlp(p + ".head.mlp", W, W, W, nh);
      L.linear(p + ".head.out", W, kAtomOutputs);
    }
  }
  if (c.molecular) {
    L.ln("mol.ln", W);
    L.mlp("mol.mlp", W, W, c.mol_outputs, nh);
  } else {
    L.add("readout.logits", 1, c.depth, Init::Zero);
  }
  return L;
}

} // namespace detail

inline std::size_t param_count(const ModelConfig &c) {
  std::size_t n = 0;
  for (const auto &e : detail::model_layout(c).entries)
    n += static_cast<std::size_t>(e.rows * e.cols);
  return n;
}

/// Smallest width whose parameter count is closest to the target.
inline int width_for_param_budget(ModelConfig c, std::size_t target) {
  int best = 1;
  double best_err = INFINITY;
  for (int w = 1; w <= 1024; ++w) {
    c.width = w;
    const double err = std::abs(static_cast<double>(param_count(c)) - static_cast<double>(target));
    if (err < best_err) {
      best_err = err;
      best = w;
    }
  }
  return best;
}

/// Weights ~ N(0, 1/fan_in), biases and logits zero, norm gains one.
inline ParamSet init_params(const ModelConfig &c, std::uint64_t seed) {
  Rng rng(seed);
  ParamSet p;
  for (const auto &e : detail::model_layout(c).entries) {
    ad::Mat m(e.rows, e.cols);
    switch (e.init) {
    case detail::Init::Zero:
      m.setZero();
      break;
    case detail::Init::One:
      m.setOnes();
      break;
    case detail::Init::Weight:
    case detail::Init::Normal: {
      const double s = e.init == detail::Init::Weight ? 1.0 / std::sqrt(static_cast<double>(e.rows)) : 1.0;
      for (Eigen::Index i = 0; i < m.size(); ++i)
        m.data()[i] = s * rng.normal();
      break;
    }
    }
    p.names.push_back(e.name);
    p.values.push_back(std::move(m));
  }
  return p;
}

/// Throws unless the parameter names and shapes match the configuration.
inline void check_shapes(const ParamSet &p, const ModelConfig &c) {
  const auto L = detail::model_layout(c);
  if (L.entries.size() != p.size())
    throw ValidationError("parameter set has " + std::to_string(p.size()) + " tensors, configuration needs " +
                          std::to_string(L.entries.size()));
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto &e = L.entries[i];
    if (p.names[i] != e.name || p.values[i].rows() != e.rows || p.values[i].cols() != e.cols)
      throw ValidationError("parameter " + std::to_string(i) + " ('" + p.names[i] + "') has the wrong name or shape");
  }
}

/// Inputs of one forward pass.
struct ModelInput {
  GraphInstance graph;
  GraphFeatures features;
  /// n_nodes x 10 normalized reference values (informed mode only).
  ad::Mat atom_extra;
};

inline ModelInput make_input(GraphInstance g, const ModelConfig &c, ad::Mat extra = {}) {
  ModelInput in;
  in.features = graph_features(g, c.graph);
  in.graph = std::move(g);
  in.atom_extra = std::move(extra);
  return in;
}

struct ForwardResult {
  ad::Var output; // n_nodes x 10, or n_molecules x mol_outputs
  ad::Var alpha;  // 1 x depth softmax weights (atomic heads only)
  std::vector<ad::Var> layer_outputs;
};

namespace detail {

struct Net {
  ad::Tape &t;
  const ModelConfig &c;
  std::map<std::string, ad::Var> p;

  ad::Var P(const std::string &n) const {
    auto it = p.find(n);
    require(it != p.end(), "forward: missing parameter '" + n + "'");
    return it->second;
  }
  ad::Var linear(const std::string &n, ad::Var x) const { return ad::add_row(ad::matmul(x, P(n + ".w")), P(n + ".b")); }
  ad::Var mlp(const std::string &n, ad::Var x, int n_hidden) const {
    for (int k = 0; k < n_hidden; ++k)
      x = ad::silu(linear(n + "." + std::to_string(k), x));
    return linear(n + ".out", x);
  }
  ad::Var filter(const std::string &n, ad::Var x) const { return ad::tanh(mlp(n, x, c.filter_hidden)); }
  ad::Var gate(const std::string &n, ad::Var x) const { return ad::sigmoid(mlp(n, x, 1)); }
  ad::Var ln(const std::string &n, ad::Var x) const { return ad::layer_norm(x, P(n + ".g"), P(n + ".b")); }
  ad::Var residual(const std::string &n, ad::Var h, ad::Var m) const { return ad::add(h, ad::hadamard(gate(n, h), m)); }

  void check(ad::Var v, const std::string &what, int layer) const {
    if (!t.value(v).allFinite())
      throw NumericError("forward: non-finite " + what + " at layer " + std::to_string(layer));
  }
};

} // namespace detail

/// Records one forward pass on the tape. `vars` holds the tape variables of
/// every parameter in ParamSet order.
inline ForwardResult forward(ad::Tape &t, const std::vector<ad::Var> &vars, const ParamSet &params,
                             const ModelConfig &c, const ModelInput &in) {
  require(vars.size() == params.size(), "forward: parameter/variable count mismatch");
  const auto &g = in.graph;
  const auto n = static_cast<Eigen::Index>(g.n_nodes());
  const auto E = static_cast<Eigen::Index>(g.n_edges());
  require(n > 0, "forward: empty graph");
  require(in.features.node_geom.rows() == E && in.features.node_geom.cols() == node_geom_dim(c.graph),
          "forward: node filter features have the wrong shape");
  require(in.features.edge_geom.rows() == E && in.features.edge_geom.cols() == edge_geom_dim(c.graph),
          "forward: edge filter features have the wrong shape");
  require(in.features.pair_geom.rows() == static_cast<Eigen::Index>(g.n_pairs()) &&
              in.features.pair_geom.cols() == pair_geom_dim(c.graph),
          "forward: pair filter features have the wrong shape");
  detail::Net net{t, c, {}};
  for (std::size_t i = 0; i < vars.size(); ++i)
    net.p.emplace(params.names[i], vars[i]);

  std::vector<int> species(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i)
    species[static_cast<std::size_t>(i)] = index_of(g.species[static_cast<std::size_t>(i)]);
  const ad::Var emb = ad::gather_rows(net.P("embed"), species);
  const ad::Var node_geom = t.constant(in.features.node_geom);
  const ad::Var edge_geom = t.constant(in.features.edge_geom);
  const ad::Var pair_geom = t.constant(in.features.pair_geom);
  const int nh = c.mlp_hidden;

  // node encoder: messages from neighbouring atoms
  std::vector<ad::Var> enc_in{ad::gather_rows(emb, g.receiver), ad::gather_rows(emb, g.sender)};
  if (c.informed) {
    require(in.atom_extra.rows() == n && in.atom_extra.cols() == kAtomOutputs,
            "forward: informed mode needs n_atoms x 10 reference values");
    const ad::Var x = t.constant(in.atom_extra);
    enc_in.push_back(ad::gather_rows(x, g.receiver));
    enc_in.push_back(ad::gather_rows(x, g.sender));
  }
  const ad::Var m0 =
      ad::hadamard(net.mlp("enc.node.mlp", ad::concat_cols(enc_in), nh), net.filter("enc.node.filter", node_geom));
  ad::Var hn = net.ln("enc.node.ln", ad::scatter_add_rows(m0, g.receiver, n));

  // edge encoder: from the two end-point node features
  const ad::Var a = net.mlp("enc.edge.a", hn, nh);
  const ad::Var s = net.ln("enc.edge.ln_in", ad::add(ad::gather_rows(a, g.receiver), ad::gather_rows(a, g.sender)));
  ad::Var he = net.ln("enc.edge.ln", ad::hadamard(net.mlp("enc.edge.b", s, nh), net.filter("enc.edge.filter", edge_geom)));
  net.check(hn, "node features", 0);
  net.check(he, "edge features", 0);

  ForwardResult out;
  for (int l = 0; l < c.depth; ++l) {
    const std::string p = "layer" + std::to_string(l);
    {
      const ad::Var le = net.ln(p + ".ee.ln_e", he);
      const ad::Var ln_ = net.ln(p + ".ee.ln_n", hn);
      const ad::Var x =
          ad::concat_cols({ad::gather_rows(le, g.ee_receiver), ad::gather_rows(le, g.ee_sender), ad::gather_rows(ln_, g.ee_node)});
      const ad::Var m = ad::hadamard(net.mlp(p + ".ee.mlp", x, nh), net.filter(p + ".ee.filter", pair_geom));
      he = net.residual(p + ".ee.gate", he, ad::scatter_add_rows(m, g.ee_receiver, E));
    }
    {
      const ad::Var ln_ = net.ln(p + ".nn.ln_n", hn);
      const ad::Var le = net.ln(p + ".nn.ln_e", he);
      const ad::Var x = ad::concat_cols({ad::gather_rows(ln_, g.receiver), ad::gather_rows(ln_, g.sender), le});
      const ad::Var m = ad::hadamard(net.mlp(p + ".nn.mlp", x, nh), net.filter(p + ".nn.filter", node_geom));
      hn = net.residual(p + ".nn.gate", hn, ad::scatter_add_rows(m, g.receiver, n));
    }
    {
      const ad::Var le = net.ln(p + ".ne.ln_e", he);
      const ad::Var ln_ = net.ln(p + ".ne.ln_n", hn);
      const ad::Var f = net.filter(p + ".ne.filter", edge_geom);
      const ad::Var mr = net.mlp(p + ".ne.mlp", ad::concat_cols({le, ad::gather_rows(ln_, g.receiver)}), nh);
      const ad::Var ms = net.mlp(p + ".ne.mlp", ad::concat_cols({le, ad::gather_rows(ln_, g.sender)}), nh);
      he = net.residual(p + ".ne.gate", he, ad::hadamard(ad::add(mr, ms), f));
    }
    {
      const ad::Var rem = ad::matmul(emb, net.P(p + ".nff.reminder.w"));
      const ad::Var m = net.mlp(p + ".nff.mlp", ad::concat_cols({net.ln(p + ".nff.ln", hn), rem}), nh);
      hn = net.residual(p + ".nff.gate", hn, m);
    }
    he = net.residual(p + ".eff.gate", he, net.mlp(p + ".eff.mlp", net.ln(p + ".eff.ln", he), nh));
    net.check(hn, "node features", l + 1);
    net.check(he, "edge features", l + 1);
    if (!c.molecular)
      out.layer_outputs.push_back(net.linear(p + ".head.out", net.mlp(p + ".head.mlp", net.ln(p + ".head.ln", hn), nh)));
  }

  if (c.molecular) {
    const ad::Var pooled = ad::scatter_add_rows(net.ln("mol.ln", hn), g.molecule_of_node, g.n_molecules);
    out.output = net.mlp("mol.mlp", pooled, nh);
  } else {
    out.alpha = ad::softmax_row(net.P("readout.logits"));
    out.output = ad::weighted_sum(out.alpha, out.layer_outputs);
  }
  if (!t.value(out.output).allFinite())
    throw NumericError("forward: non-finite output at layer " + std::to_string(c.depth));
  return out;
}

/// Forward pass without gradients; returns the output matrix.
inline ad::Mat predict(const ParamSet &params, const ModelConfig &c, const ModelInput &in) {
  ad::Tape t;
  std::vector<ad::Var> vars;
  for (const auto &v : params.values)
    vars.push_back(t.constant(v));
  return t.value(forward(t, vars, params, c, in).output);
}

// ---- losses ----

/// Per-entry weights of the first loss: property-averaged squared errors,
/// vector and tensor components averaged, atoms averaged.
inline ad::Mat loss_weights_v1(Eigen::Index n_atoms) {
  require(n_atoms > 0, "loss: no atoms");
  ad::Mat w(n_atoms, kAtomOutputs);
  const double a = 1.0 / (4.0 * static_cast<double>(n_atoms));
  for (Eigen::Index i = 0; i < n_atoms; ++i) {
    w(i, 0) = a;
    w(i, 1) = a;
    for (int k = 2; k < 5; ++k)
      w(i, k) = a / 3.0;
    for (int k = 5; k < 10; ++k)
      w(i, k) = a / 5.0;
  }
  return w;
}

enum class ElementWeighting { InverseSqrtFrequency, PerElementUnitSum };

/// w_Z from the element counts of a fold: sqrt(N_at / N_Z), or 1/N_Z so each
/// element's weights sum to one.
inline std::map<Element, double> element_weights(const std::vector<Element> &atoms,
                                                 ElementWeighting mode = ElementWeighting::InverseSqrtFrequency) {
  require(!atoms.empty(), "element_weights: no atoms");
  std::map<Element, std::size_t> count;
  for (auto e : atoms)
    ++count[e];
  std::map<Element, double> w;
  for (const auto &[e, k] : count)
    w[e] = mode == ElementWeighting::InverseSqrtFrequency
               ? std::sqrt(static_cast<double>(atoms.size()) / static_cast<double>(k))
               : 1.0 / static_cast<double>(k);
  return w;
}

/// Per-entry weights of the second loss: element-weighted atoms, squared
/// vector norm and Frobenius norm of the quadrupole.
inline ad::Mat loss_weights_v2(const std::vector<Element> &species, const std::map<Element, double> &wz) {
  require(!species.empty(), "loss: no atoms");
  std::vector<double> wi;
  double total = 0;
  for (auto e : species) {
    auto it = wz.find(e);
    require(it != wz.end() && it->second > 0, "loss: missing element weight for " + std::string(symbol(e)));
    wi.push_back(it->second);
    total += it->second;
  }
  ad::Mat w(static_cast<Eigen::Index>(species.size()), kAtomOutputs);
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    const double a = wi[static_cast<std::size_t>(i)] / (4.0 * total);
    for (int k = 0; k < 5; ++k)
      w(i, k) = a;
    for (int k = 0; k < 5; ++k)
      w(i, 5 + k) = a * kFrobeniusWeights[static_cast<std::size_t>(k)];
  }
  return w;
}

inline double weighted_loss(const ad::Mat &pred, const ad::Mat &target, const ad::Mat &w) {
  require(pred.rows() == target.rows() && pred.cols() == target.cols() && w.rows() == pred.rows() &&
              w.cols() == pred.cols(),
          "loss: shape mismatch");
  return (pred - target).cwiseAbs2().cwiseProduct(w).sum();
}

struct LossGrad {
  double loss = 0;
  std::vector<ad::Mat> grads;
  ad::Mat output;
};

/// Loss and exact gradients for one batch.
inline LossGrad loss_and_gradient(const ParamSet &params, const ModelConfig &c, const ModelInput &in,
                                  const ad::Mat &target, const ad::Mat &weights) {
  ad::Tape t;
  std::vector<ad::Var> vars;
  for (const auto &v : params.values)
    vars.push_back(t.variable(v));
  const auto res = forward(t, vars, params, c, in);
  require(t.value(res.output).rows() == target.rows() && t.value(res.output).cols() == target.cols(),
          "loss: prediction/target shape mismatch");
  const ad::Var loss = ad::weighted_sq_error(res.output, target, weights);
  t.backward(loss);
  LossGrad out;
  out.loss = t.value(loss)(0, 0);
  out.output = t.value(res.output);
  for (auto v : vars)
    out.grads.push_back(t.grad(v));
  return out;
}

} // namespace qta
