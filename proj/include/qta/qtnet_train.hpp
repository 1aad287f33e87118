#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "qta/molecule.hpp"
#include "qta/qtnet_model.hpp"

namespace qta {

// ---- target normalization ----

inline ad::Mat target_matrix(const std::vector<AtomTargets> &t) {
  ad::Mat m(static_cast<Eigen::Index>(t.size()), kAtomOutputs);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    m(r, 0) = t[i].n_e;
    m(r, 1) = t[i].li;
    for (int k = 0; k < 3; ++k)
      m(r, 2 + k) = t[i].mu[k];
    for (int k = 0; k < 5; ++k)
      m(r, 5 + k) = t[i].quad[static_cast<std::size_t>(k)];
  }
  return m;
}

inline std::vector<AtomTargets> targets_from_matrix(const ad::Mat &m) {
  require(m.cols() == kAtomOutputs, "targets_from_matrix: expected 10 columns");
  std::vector<AtomTargets> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    auto &t = out[static_cast<std::size_t>(r)];
    t.n_e = m(r, 0);
    t.li = m(r, 1);
    t.mu = Vec3(m(r, 2), m(r, 3), m(r, 4));
    for (int k = 0; k < 5; ++k)
      t.quad[static_cast<std::size_t>(k)] = m(r, 5 + k);
  }
  return out;
}

/// z-scores for N and lambda (population moments); a single RMS over all
/// dipole components and one over all quadrupole components.
struct TargetStats {
  double mean_n = 0, std_n = 1, mean_li = 0, std_li = 1, rms_mu = 1, rms_q = 1;

  static TargetStats fit(const ad::Mat &t) {
    require(t.rows() > 0 && t.cols() == kAtomOutputs, "TargetStats: empty or malformed training targets");
    const double n = static_cast<double>(t.rows());
    TargetStats s;
    s.mean_n = t.col(0).mean();
    s.mean_li = t.col(1).mean();
    s.std_n = std::sqrt((t.col(0).array() - s.mean_n).square().sum() / n);
    s.std_li = std::sqrt((t.col(1).array() - s.mean_li).square().sum() / n);
    s.rms_mu = std::sqrt(t.middleCols(2, 3).array().square().sum() / (3 * n));
    s.rms_q = std::sqrt(t.middleCols(5, 5).array().square().sum() / (5 * n));
    if (!(s.std_n > 0) || !(s.std_li > 0) || !(s.rms_mu > 0) || !(s.rms_q > 0))
      throw ValidationError("TargetStats: zero variance in a training target");
    return s;
  }

  ad::Mat apply(ad::Mat t) const {
    require(t.cols() == kAtomOutputs, "TargetStats: expected 10 columns");
    t.col(0) = (t.col(0).array() - mean_n) / std_n;
    t.col(1) = (t.col(1).array() - mean_li) / std_li;
    t.middleCols(2, 3) /= rms_mu;
    t.middleCols(5, 5) /= rms_q;
    return t;
  }

  ad::Mat invert(ad::Mat t) const {
    require(t.cols() == kAtomOutputs, "TargetStats: expected 10 columns");
    t.col(0) = t.col(0).array() * std_n + mean_n;
    t.col(1) = t.col(1).array() * std_li + mean_li;
    t.middleCols(2, 3) *= rms_mu;
    t.middleCols(5, 5) *= rms_q;
    return t;
  }

  friend bool operator==(const TargetStats &, const TargetStats &) = default;
};

inline nlohmann::ordered_json to_json(const TargetStats &s) {
  return {{"mean_n", s.mean_n}, {"std_n", s.std_n}, {"mean_li", s.mean_li},
          {"std_li", s.std_li}, {"rms_mu", s.rms_mu}, {"rms_q", s.rms_q}};
}

inline TargetStats target_stats_from_json(const nlohmann::ordered_json &j) {
  try {
    TargetStats s;
    s.mean_n = j.at("mean_n").get<double>();
    s.std_n = j.at("std_n").get<double>();
    s.mean_li = j.at("mean_li").get<double>();
    s.std_li = j.at("std_li").get<double>();
    s.rms_mu = j.at("rms_mu").get<double>();
    s.rms_q = j.at("rms_q").get<double>();
    return s;
  } catch (const nlohmann::json::exception &e) {
    throw ParseError(std::string("target stats: ") + e.what());
  }
}

// ---- samples and augmentation ----

/// One molecule with its (normalized) targets. Atomic models use one target
/// row per atom; molecular models a single row.
struct Sample {
  MoleculeRecord mol;
  ad::Mat target;
  /// Per-atom reference values for informed molecular models.
  ad::Mat extra;
};

namespace detail {
inline void rotate_rows(ad::Mat &m, const Rotation &R) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const Vec3 mu = rotate_vec(R, Vec3(m(r, 2), m(r, 3), m(r, 4)));
    Traceless5 q;
    for (int k = 0; k < 5; ++k)
      q[static_cast<std::size_t>(k)] = m(r, 5 + k);
    q = rotate5(R, q);
    for (int k = 0; k < 3; ++k)
      m(r, 2 + k) = mu[k];
    for (int k = 0; k < 5; ++k)
      m(r, 5 + k) = q[static_cast<std::size_t>(k)];
  }
}
} // namespace detail

/// Rotates positions, dipoles and quadrupoles; N and lambda are unchanged.
inline std::pair<MoleculeRecord, std::vector<AtomTargets>> augment(const MoleculeRecord &mol,
                                                                   const std::vector<AtomTargets> &t,
                                                                   const Rotation &R) {
  MoleculeRecord m = mol;
  for (auto &p : m.positions)
    p = rotate_vec(R, p);
  std::vector<AtomTargets> out = t;
  for (auto &a : out) {
    a.mu = rotate_vec(R, a.mu);
    a.quad = rotate5(R, a.quad);
  }
  return {std::move(m), std::move(out)};
}

inline Sample augment(const Sample &s, const Rotation &R) {
  Sample out = s;
  for (auto &p : out.mol.positions)
    p = rotate_vec(R, p);
  if (out.target.cols() == kAtomOutputs && out.target.rows() == static_cast<Eigen::Index>(out.mol.size()))
    detail::rotate_rows(out.target, R);
  if (out.extra.size() > 0)
    detail::rotate_rows(out.extra, R);
  return out;
}

// ---- optimizer ----

/// Adam with decoupled weight decay.
class AdamW {
public:
  AdamW(double lr, double weight_decay, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {
    require(lr > 0 && weight_decay >= 0, "AdamW: lr must be > 0 and weight decay >= 0");
  }

  void step(ParamSet &p, const std::vector<ad::Mat> &grads) {
    require(grads.size() == p.size(), "AdamW: gradient count mismatch");
    if (m_.empty())
      for (const auto &v : p.values) {
        m_.push_back(ad::Mat::Zero(v.rows(), v.cols()));
        v_.push_back(ad::Mat::Zero(v.rows(), v.cols()));
      }
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, t_), c2 = 1.0 - std::pow(b2_, t_);
    for (std::size_t i = 0; i < p.size(); ++i) {
      auto &th = p.values[i];
      const auto &g = grads[i];
      m_[i] = b1_ * m_[i] + (1 - b1_) * g;
      v_[i] = b2_ * v_[i] + (1 - b2_) * g.cwiseAbs2();
      th *= 1.0 - lr_ * wd_;
      th.array() -= lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
    }
  }

  double lr() const { return lr_; }

private:
  double lr_, wd_, b1_, b2_, eps_;
  int t_ = 0;
  std::vector<ad::Mat> m_, v_;
};

// ---- training ----

enum class LossKind { V1, V2 };

struct TrainOptions {
  double lr = 1e-3;
  double weight_decay = 1e-4;
  int batch_size = 32;
  int epochs = 100;
  std::uint64_t seed = 0;
  /// Defaults to V2 for augmented models and V1 otherwise.
  std::optional<LossKind> loss;
  ElementWeighting weighting = ElementWeighting::InverseSqrtFrequency;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0;
  double val_loss = 0;
  double lr = 0;
  std::uint64_t seed = 0;
  std::uint64_t rotation_seed = 0;
};

struct TrainResult {
  ParamSet params; // best validation loss
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_val_loss = INFINITY;
};

/// Merges samples into one model input and stacked targets.
inline std::pair<ModelInput, ad::Mat> make_batch(const std::vector<const Sample *> &samples, const ModelConfig &c,
                                                 const std::vector<GraphInstance> *graphs = nullptr,
                                                 const std::vector<std::size_t> *which = nullptr) {
  require(!samples.empty(), "make_batch: empty batch");
  std::vector<GraphInstance> parts;
  Eigen::Index rows = 0, extra_rows = 0;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    parts.push_back(graphs ? (*graphs)[(*which)[k]] : build_graph(samples[k]->mol, c.graph));
    rows += samples[k]->target.rows();
    extra_rows += samples[k]->extra.rows();
  }
  ad::Mat y(rows, samples.front()->target.cols());
  ad::Mat x(extra_rows, extra_rows ? samples.front()->extra.cols() : 0);
  Eigen::Index r = 0, q = 0;
  for (const auto *s : samples) {
    require(s->target.cols() == y.cols(), "make_batch: inconsistent target widths");
    y.middleRows(r, s->target.rows()) = s->target;
    r += s->target.rows();
    if (s->extra.rows()) {
      x.middleRows(q, s->extra.rows()) = s->extra;
      q += s->extra.rows();
    }
  }
  return {make_input(merge_graphs(parts), c, std::move(x)), std::move(y)};
}

inline ad::Mat batch_weights(const ModelConfig &c, const ModelInput &in, const ad::Mat &y, LossKind kind,
                             const std::map<Element, double> &wz) {
  if (c.molecular)
    return ad::Mat::Constant(y.rows(), y.cols(), 1.0 / static_cast<double>(y.size()));
  return kind == LossKind::V1 ? loss_weights_v1(y.rows()) : loss_weights_v2(in.graph.species, wz);
}

/// Loss of a parameter set over a whole sample set, with weights normalized
/// over the full set.
inline double evaluate_loss(const ParamSet &p, const ModelConfig &c, const std::vector<Sample> &set, LossKind kind,
                            const std::map<Element, double> &wz, int batch_size = 64) {
  require(!set.empty(), "evaluate_loss: empty set");
  std::vector<ad::Mat> preds, ys;
  std::vector<Element> species;
  Eigen::Index rows = 0;
  for (std::size_t b = 0; b < set.size(); b += static_cast<std::size_t>(batch_size)) {
    std::vector<const Sample *> batch;
    for (std::size_t k = b; k < std::min(set.size(), b + static_cast<std::size_t>(batch_size)); ++k)
      batch.push_back(&set[k]);
    auto [in, y] = make_batch(batch, c);
    preds.push_back(predict(p, c, in));
    species.insert(species.end(), in.graph.species.begin(), in.graph.species.end());
    rows += y.rows();
    ys.push_back(std::move(y));
  }
  ad::Mat P(rows, ys.front().cols()), Y(rows, ys.front().cols());
  Eigen::Index r = 0;
  for (std::size_t k = 0; k < ys.size(); ++k) {
    P.middleRows(r, ys[k].rows()) = preds[k];
    Y.middleRows(r, ys[k].rows()) = ys[k];
    r += ys[k].rows();
  }
  ad::Mat W;
  if (c.molecular)
    W = ad::Mat::Constant(Y.rows(), Y.cols(), 1.0 / static_cast<double>(Y.size()));
  else
    W = kind == LossKind::V1 ? loss_weights_v1(Y.rows()) : loss_weights_v2(species, wz);
  return weighted_loss(P, Y, W);
}

inline std::uint64_t rotation_seed(std::uint64_t seed, int epoch) {
  return Rng::splitmix(seed ^ (0x5851f42d4c957f2dULL * static_cast<std::uint64_t>(epoch + 1)));
}

/// Trains from a seeded initialization. The returned parameters are those of
/// the epoch with the lowest validation loss (training loss if `val` is empty).
inline TrainResult train(const ModelConfig &c, const std::vector<Sample> &train_set, const std::vector<Sample> &val,
                         const TrainOptions &opt, std::optional<ParamSet> init = std::nullopt,
                         const std::function<void(const EpochRecord &)> &on_epoch = {}) {
  c.validate();
  require(!train_set.empty(), "train: empty training set");
  require(opt.batch_size >= 1 && opt.epochs >= 0, "train: batch_size must be >= 1 and epochs >= 0");
  const LossKind kind = opt.loss.value_or(c.augment ? LossKind::V2 : LossKind::V1);
  std::vector<Element> fold_atoms;
  for (const auto &s : train_set)
    fold_atoms.insert(fold_atoms.end(), s.mol.elements.begin(), s.mol.elements.end());
  const auto wz = element_weights(fold_atoms, opt.weighting);

  ParamSet params = init ? *init : init_params(c, Rng::splitmix(opt.seed));
  check_shapes(params, c);
  TrainResult res;
  res.params = params;
  if (opt.epochs == 0)
    return res;

  AdamW adam(opt.lr, opt.weight_decay);
  Rng order_rng(Rng::splitmix(opt.seed + 1));
  std::vector<GraphInstance> graphs;
  if (!c.augment)
    for (const auto &s : train_set)
      graphs.push_back(build_graph(s.mol, c.graph));

  for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = adam.lr();
    rec.seed = opt.seed;
    std::vector<Sample> rotated;
    const std::vector<Sample> *src = &train_set;
    if (c.augment) {
      rec.rotation_seed = rotation_seed(opt.seed, epoch);
      Rng rot(rec.rotation_seed);
      rotated.reserve(train_set.size());
      graphs.clear();
      for (const auto &s : train_set) {
        rotated.push_back(augment(s, sample_rotation(rot)));
        graphs.push_back(build_graph(rotated.back().mol, c.graph));
      }
      src = &rotated;
    }
    std::vector<std::size_t> order(src->size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    order_rng.shuffle(order);
    double sum = 0, weight = 0;
    try {
      for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(opt.batch_size)) {
        std::vector<const Sample *> batch;
        std::vector<std::size_t> which;
        for (std::size_t k = b; k < std::min(order.size(), b + static_cast<std::size_t>(opt.batch_size)); ++k) {
          batch.push_back(&(*src)[order[k]]);
          which.push_back(order[k]);
        }
        auto [in, y] = make_batch(batch, c, &graphs, &which);
        const auto w = batch_weights(c, in, y, kind, wz);
        auto lg = loss_and_gradient(params, c, in, y, w);
        if (!std::isfinite(lg.loss))
          throw NumericError("non-finite loss");
        adam.step(params, lg.grads);
        sum += lg.loss * static_cast<double>(y.rows());
        weight += static_cast<double>(y.rows());
      }
      if (!params.all_finite())
        throw NumericError("non-finite parameters");
      rec.train_loss = sum / weight;
      rec.val_loss = val.empty() ? rec.train_loss : evaluate_loss(params, c, val, kind, wz, opt.batch_size);
      if (!std::isfinite(rec.val_loss))
        throw NumericError("non-finite validation loss");
    } catch (const NumericError &e) {
      throw NumericError("training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
    }
    res.history.push_back(rec);
    if (on_epoch)
      on_epoch(rec);
    if (rec.val_loss < res.best_val_loss) {
      res.best_val_loss = rec.val_loss;
      res.best_epoch = epoch;
      res.params = params;
    }
  }
  return res;
}

// ---- checkpoints ----

inline constexpr const char *kCheckpointSchema = "qta-checkpoint";
inline constexpr int kCheckpointVersion = 1;

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

struct Checkpoint {
  ModelConfig config;
  ParamSet params;
  std::optional<TargetStats> stats;
  nlohmann::ordered_json extra = nlohmann::ordered_json::object();
};

inline nlohmann::ordered_json to_json(const Checkpoint &ck, const nlohmann::ordered_json &provenance = {}) {
  nlohmann::ordered_json j;
  j["schema"] = kCheckpointSchema;
  j["version"] = kCheckpointVersion;
  j["config"] = to_json(ck.config);
  j["config_hash"] = hex64(config_hash(ck.config));
  j["stats"] = ck.stats ? to_json(*ck.stats) : nlohmann::ordered_json(nullptr);
  j["extra"] = ck.extra;
  auto &ps = j["params"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < ck.params.size(); ++i) {
    const auto &m = ck.params.values[i];
    ps.push_back({{"name", ck.params.names[i]},
                  {"shape", {m.rows(), m.cols()}},
                  {"data", std::vector<double>(m.data(), m.data() + m.size())}});
  }
  if (!provenance.is_null())
    j["provenance"] = provenance;
  return j;
}

inline Checkpoint checkpoint_from_json(const nlohmann::ordered_json &j) {
  try {
    if (j.at("schema").get<std::string>() != kCheckpointSchema || j.at("version").get<int>() != kCheckpointVersion)
      throw ParseError("checkpoint: unsupported schema or version");
    Checkpoint ck;
    ck.config = model_config_from_json(j.at("config"));
    if (j.at("config_hash").get<std::string>() != hex64(config_hash(ck.config)))
      throw ParseError("checkpoint: config hash does not match the stored configuration");
    if (!j.at("stats").is_null())
      ck.stats = target_stats_from_json(j.at("stats"));
    if (j.contains("extra"))
      ck.extra = j.at("extra");
    for (const auto &p : j.at("params")) {
      const auto rows = p.at("shape").at(0).get<Eigen::Index>(), cols = p.at("shape").at(1).get<Eigen::Index>();
      const auto data = p.at("data").get<std::vector<double>>();
      if (rows < 0 || cols < 0 || static_cast<std::size_t>(rows * cols) != data.size())
        throw ParseError("checkpoint: parameter '" + p.at("name").get<std::string>() + "' data/shape mismatch");
      ck.params.names.push_back(p.at("name").get<std::string>());
      ck.params.values.push_back(Eigen::Map<const ad::Mat>(data.data(), rows, cols));
    }
    check_shapes(ck.params, ck.config);
    return ck;
  } catch (const nlohmann::json::exception &e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const std::string &path, const Checkpoint &ck,
                            const nlohmann::ordered_json &provenance = {}) {
  std::ofstream os(path);
  if (!os)
    throw Error("cannot write checkpoint " + path);
  os << to_json(ck, provenance).dump() << '\n';
}

inline Checkpoint load_checkpoint(const std::string &path) {
  std::ifstream is(path);
  if (!is)
    throw MissingArtifactError("checkpoint not found: " + path);
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(is);
  } catch (const nlohmann::json::exception &e) {
    throw ParseError("checkpoint " + path + ": " + e.what());
  }
  return checkpoint_from_json(j);
}

/// Atomic training samples with targets normalized by `stats`.
inline std::vector<Sample> atomic_samples(const Dataset &ds, const std::vector<std::string> &ids,
                                          const TargetStats &stats) {
  std::vector<Sample> out;
  for (const auto &id : ids) {
    const Molecule *m = ds.find(id);
    if (!m)
      throw ValidationError("molecule '" + id + "' is not in the dataset");
    if (!m->targets)
      throw ValidationError("molecule '" + id + "' has no per-atom targets");
    out.push_back({m->record, stats.apply(target_matrix(*m->targets)), {}});
  }
  return out;
}

/// Stacked raw targets of the listed molecules.
inline ad::Mat stacked_targets(const Dataset &ds, const std::vector<std::string> &ids) {
  std::vector<AtomTargets> all;
  for (const auto &id : ids) {
    const Molecule *m = ds.find(id);
    if (!m || !m->targets)
      throw ValidationError("molecule '" + id + "' is missing or has no targets");
    all.insert(all.end(), m->targets->begin(), m->targets->end());
  }
  return target_matrix(all);
}

} // namespace qta
