#pragma once

// Pipeline stages behind the command-line tool. Every stage reads and writes
// files under one output directory and stamps each artifact with provenance.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "qta/dataset_io.hpp"
#include "qta/downstream.hpp"
#include "qta/environments.hpp"
#include "qta/ingest.hpp"
#include "qta/report.hpp"
#include "qta/splits.hpp"
#include "qta/stats.hpp"
#include "qta/sumviz.hpp"
#include "qta/synthetic.hpp"
#include "qta/xyz.hpp"

#ifndef QTA_VERSION
#define QTA_VERSION "0.0.0"
#endif

namespace qta::pipeline {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;
using KeyValues = std::vector<std::pair<std::string, std::string>>;

/// Bad command line or configuration keys.
class UsageError : public ValidationError {
public:
  using ValidationError::ValidationError;
};

inline ojson default_config() {
  return ojson::parse(R"({
  "seed": 7,
  "source": "synth",
  "stages": {"synth": true, "ingest": false, "cluster": true, "split": true, "train": true, "eval": true,
             "stats": true, "infer": true, "dipole": true, "molecular": false, "report": true},
  "paths": {"dataset": "dataset.jsonl", "ingest_report": "ingest_report.json", "labels": "labels.txt",
            "cluster_report": "cluster_report.json", "plan": "plan.json", "holdout": "holdout.json",
            "checkpoints": "checkpoints", "eval": "eval", "scores": "scores.csv", "stats": "stats",
            "ensemble": "ensemble", "inferred": "inferred_qta.csv", "dipoles": "dipoles.csv",
            "dipole_summary": "dipole_summary.json", "molecular": "molecular", "reports": "reports"},
  "synth": {"n_molecules": 50, "min_heavy": 2, "max_heavy": 6, "ring_probability": 0.35},
  "ingest": {"xyz": "", "sumviz": "", "exclude": "", "li_violation_is_warning": false, "geometry_tolerance": 0.001},
  "cluster": {"soap": {"cutoff": 8.0, "n_max": 8, "l_max": 6, "sigma": 0.7}, "variance_target": 0.99,
              "fixed_components": null, "min_cluster_size": 5, "min_samples": 5, "elements": {}},
  "split": {"held": [], "threshold": 0.9, "max_holdout_fraction": 0.3, "repeats": 5, "folds": 5,
            "acyclic": "shared"},
  "train": {"variants": ["SG-8-12"], "overrides": {}, "epochs": 100, "lr": 0.001, "weight_decay": 0.0001,
            "batch_size": 32, "loss": "auto"},
  "eval": {"properties": ["N", "lambda", "mu", "Q"]},
  "stats": {"metric": "ccc", "alpha": 0.05},
  "infer": {"variant": "SG-8-12", "overrides": {}, "members": 5, "aggregation": "mean", "on": "without-targets",
            "epochs": 100, "lr": 0.001, "weight_decay": 0.0001, "batch_size": 32, "loss": "auto"},
  "dipole": {"source": "inferred"},
  "molecular": {"fractions": [0.01, 0.05, 0.1, 1.0], "repeats": 5, "val_share": 0.1, "test_share": 0.2,
                "acyclic": "shared", "overrides": {}, "epochs": 100, "lr": 0.001, "weight_decay": 0.0001,
                "batch_size": 32}
})");
}

namespace detail {

// Blocks whose keys are free-form.
inline bool open_block(const std::string &path) {
  return path == "cluster.elements" || path.ends_with(".overrides");
}

inline void check_keys(const ojson &given, const ojson &ref, const std::string &path) {
  if (!given.is_object() || !ref.is_object() || open_block(path))
    return;
  for (auto it = given.begin(); it != given.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!ref.contains(it.key()))
      throw UsageError("unknown config key '" + key + "'");
    check_keys(it.value(), ref.at(it.key()), key);
  }
}

} // namespace detail

/// Merges a config file's contents over the defaults, rejecting unknown keys.
inline ojson merge_config(ojson base, const ojson &patch) {
  if (!patch.is_object())
    throw UsageError("config: top level must be an object");
  detail::check_keys(patch, base, "");
  base.merge_patch(patch);
  return base;
}

inline ojson load_config_file(const std::string &path) {
  std::ifstream is(path);
  if (!is)
    throw MissingArtifactError("config file not found: " + path);
  try {
    return ojson::parse(is, nullptr, true, true);
  } catch (const nlohmann::json::exception &e) {
    throw ParseError("config " + path + ": " + e.what());
  }
}

/// Applies "a.b.c=value"; the value is read as JSON, falling back to a string.
inline void apply_override(ojson &cfg, const std::string &assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw UsageError("--set expects key=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  ojson value;
  try {
    value = ojson::parse(text);
  } catch (const nlohmann::json::exception &) {
    value = text;
  }
  ojson *node = &cfg;
  std::string path;
  std::size_t start = 0;
  for (;;) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    path += (path.empty() ? "" : ".") + part;
    if (part.empty() || !node->is_object())
      throw UsageError("unknown config key '" + key + "'");
    if (!node->contains(part) && !detail::open_block(path.substr(0, path.rfind('.'))))
      throw UsageError("unknown config key '" + key + "'");
    node = &(*node)[part];
    if (dot == std::string::npos)
      break;
    start = dot + 1;
  }
  *node = value;
}

inline std::string hex(std::uint64_t v) { return hex64(v); }

struct Logger {
  std::ostream *os = &std::cerr;
  std::ofstream file;
  bool quiet = false;
  bool verbose = false;

  void emit(const std::string &level, const std::string &stage, const std::string &event, ojson fields = {}) {
    if (level == "debug" && !verbose)
      return;
    ojson j;
    j["level"] = level;
    j["stage"] = stage;
    j["event"] = event;
    if (fields.is_object())
      for (auto it = fields.begin(); it != fields.end(); ++it)
        j[it.key()] = it.value();
    const std::string line = j.dump();
    if (!quiet && os)
      *os << line << "\n" << std::flush;
    if (file.is_open())
      file << line << "\n" << std::flush;
  }
  void info(const std::string &s, const std::string &e, ojson f = {}) { emit("info", s, e, std::move(f)); }
  void warn(const std::string &s, const std::string &e, ojson f = {}) { emit("warning", s, e, std::move(f)); }
  void debug(const std::string &s, const std::string &e, ojson f = {}) { emit("debug", s, e, std::move(f)); }
};

struct Context {
  ojson config = default_config();
  fs::path out_dir = ".";
  bool allow_mismatch = false;
  bool force = false;
  Logger log;

  std::uint64_t seed() const { return config.at("seed").get<std::uint64_t>(); }
  const ojson &block(const std::string &name) const { return config.at(name); }
  fs::path path(const std::string &key) const { return out_dir / config.at("paths").at(key).get<std::string>(); }

  /// Stage whose output a logical dependency refers to.
  std::string resolve(const std::string &stage) const {
    if (stage == "data")
      return config.at("source").get<std::string>();
    return stage;
  }

  std::vector<std::string> upstream(const std::string &stage) const {
    if (stage == "cluster" || stage == "infer" || stage == "molecular")
      return {"data"};
    if (stage == "split")
      return {"cluster"};
    if (stage == "train")
      return {"split"};
    if (stage == "eval")
      return {"train"};
    if (stage == "stats")
      return {"eval"};
    if (stage == "dipole")
      return {block("dipole").at("source") == "truth" ? "data" : "infer"};
    return {};
  }

  /// Hash of a stage's own block chained with its upstream stage hashes.
  /// Paths are left out so that a run can be moved.
  std::string stage_hash(const std::string &logical) const {
    const std::string stage = resolve(logical);
    ojson j;
    j["stage"] = stage;
    j["seed"] = config.at("seed");
    j["block"] = config.contains(stage) ? config.at(stage) : ojson(nullptr);
    auto &up = j["upstream"] = ojson::array();
    for (const auto &u : upstream(stage))
      up.push_back(stage_hash(u));
    return hex(fnv1a(j.dump()));
  }

  std::string config_hash() const {
    ojson c = config;
    c.erase("paths");
    return hex(fnv1a(c.dump()));
  }

  ojson provenance(const std::string &stage) const {
    return {{"toolkit_version", QTA_VERSION},
            {"stage", stage},
            {"stage_hash", stage_hash(stage)},
            {"config_hash", config_hash()},
            {"seed", seed()}};
  }

  KeyValues provenance_kv(const std::string &stage) const {
    KeyValues out;
    const auto p = provenance(stage);
    for (auto it = p.begin(); it != p.end(); ++it)
      out.emplace_back(it.key(), it.value().is_string() ? it.value().get<std::string>() : it.value().dump());
    return out;
  }
};

// ---- provenance of existing artifacts ----

/// Provenance of any artifact: JSON documents carry a "provenance" member,
/// the dataset carries it in its header line, text tables in `# key=value`.
inline ojson artifact_provenance(const fs::path &p) {
  std::ifstream is(p);
  if (!is)
    throw MissingArtifactError("artifact not found: " + p.string());
  std::string first;
  std::getline(is, first);
  if (!first.empty() && first[0] == '{') {
    try {
      const auto j = ojson::parse(first);
      if (j.contains("provenance"))
        return j.at("provenance");
    } catch (const nlohmann::json::exception &) {
    }
    is.clear();
    is.seekg(0);
    try {
      const auto j = ojson::parse(is);
      return j.contains("provenance") ? j.at("provenance") : ojson(nullptr);
    } catch (const nlohmann::json::exception &e) {
      throw ParseError(p.string() + ": " + e.what());
    }
  }
  is.clear();
  is.seekg(0);
  const auto kv = report::read_provenance(is);
  if (kv.empty())
    return nullptr;
  ojson out = ojson::object();
  for (const auto &[k, v] : kv)
    out[k] = v;
  return out;
}

/// Throws unless `p` was produced by the current config's `stage`.
inline void check_input(Context &ctx, const fs::path &p, const std::string &logical, const std::string &who) {
  const auto prov = artifact_provenance(p);
  const std::string want = ctx.stage_hash(logical);
  if (!prov.is_object() || !prov.contains("stage_hash")) {
    if (!ctx.allow_mismatch)
      throw MissingArtifactError(p.string() + " carries no provenance");
    ctx.log.warn(who, "no_provenance", {{"artifact", p.string()}});
    return;
  }
  const std::string got = prov.at("stage_hash").get<std::string>();
  if (got == want)
    return;
  const std::string msg = "config-hash mismatch: " + p.string() + " was produced with stage hash " + got +
                          " but the current config expects " + want + " for stage " + ctx.resolve(logical);
  if (!ctx.allow_mismatch)
    throw MissingArtifactError(msg + "; rerun the upstream stage or pass --allow-mismatch");
  ctx.log.warn(who, "config_hash_mismatch", {{"artifact", p.string()}, {"recorded", got}, {"expected", want}});
}

/// For resumable outputs: true when `p` exists with this stage's hash.
inline bool resumable(Context &ctx, const fs::path &p, const std::string &stage) {
  if (!fs::exists(p) || ctx.force)
    return false;
  const auto prov = artifact_provenance(p);
  if (prov.is_object() && prov.value("stage_hash", "") == ctx.stage_hash(stage))
    return true;
  throw MissingArtifactError("config-hash mismatch on resume: " + p.string() +
                             " was produced under a different config; pass --force to overwrite");
}

inline std::ofstream open_out(const fs::path &p) {
  if (p.has_parent_path())
    fs::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::binary);
  if (!os)
    throw Error("cannot write " + p.string());
  return os;
}

inline void write_json(const fs::path &p, const ojson &j) { open_out(p) << j.dump(1) << "\n"; }

inline ojson read_json(const fs::path &p) {
  std::ifstream is(p);
  if (!is)
    throw MissingArtifactError("artifact not found: " + p.string());
  try {
    return ojson::parse(is);
  } catch (const nlohmann::json::exception &e) {
    throw ParseError(p.string() + ": " + e.what());
  }
}

inline Dataset load_checked_dataset(Context &ctx, const std::string &who) {
  const auto p = ctx.path("dataset");
  check_input(ctx, p, "data", who);
  return load_dataset(p.string()).dataset;
}

inline LabelTable load_labels(const fs::path &p) {
  std::ifstream is(p);
  if (!is)
    throw MissingArtifactError("labels not found: " + p.string());
  return read_labels(is);
}

inline ModelConfig model_from(const std::string &variant, const ojson &overrides) {
  ojson j = to_json(variant_config(variant));
  for (auto it = overrides.begin(); it != overrides.end(); ++it)
    if (!j.contains(it.key()) || it.key() == "variant" || it.key() == "layer_order")
      throw UsageError("unknown model override '" + it.key() + "'");
  j.merge_patch(overrides);
  return model_config_from_json(j);
}

inline TrainOptions train_options(const ojson &b) {
  TrainOptions o;
  o.epochs = b.at("epochs").get<int>();
  o.lr = b.at("lr").get<double>();
  o.weight_decay = b.at("weight_decay").get<double>();
  o.batch_size = b.at("batch_size").get<int>();
  const std::string loss = b.value("loss", "auto");
  if (loss == "v1")
    o.loss = LossKind::V1;
  else if (loss == "v2")
    o.loss = LossKind::V2;
  else if (loss != "auto")
    throw UsageError("loss must be auto, v1 or v2");
  return o;
}

inline AcyclicGrouping acyclic_from(const std::string &s) {
  if (s == "shared")
    return AcyclicGrouping::Shared;
  if (s == "per-molecule")
    return AcyclicGrouping::PerMolecule;
  throw UsageError("acyclic must be shared or per-molecule");
}

inline ojson history_json(const std::vector<EpochRecord> &h) {
  ojson a = ojson::array();
  for (const auto &r : h)
    a.push_back({r.epoch, r.train_loss, r.val_loss, r.lr});
  return a;
}

inline void write_history_rows(std::ostream &os, const std::string &prefix, const ojson &hist) {
  for (const auto &r : hist)
    os << prefix << r.at(0).get<int>() << "," << report::exact(r.at(1).get<double>()) << ","
       << report::exact(r.at(2).get<double>()) << "," << report::exact(r.at(3).get<double>()) << "\n";
}

inline std::string safe_name(std::string s) {
  for (char &c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '.')
      c = '_';
  return s;
}

// ---- stages ----

inline void stage_synth(Context &ctx) {
  const auto &b = ctx.block("synth");
  SyntheticOptions o;
  o.n_molecules = b.at("n_molecules").get<int>();
  o.min_heavy = b.at("min_heavy").get<int>();
  o.max_heavy = b.at("max_heavy").get<int>();
  o.ring_probability = b.at("ring_probability").get<double>();
  o.seed = ctx.seed();
  const Dataset ds = synthetic_dataset(o);
  auto os = open_out(ctx.path("dataset"));
  write_dataset(os, ds, ctx.provenance("synth"));
  ctx.log.info("synth", "done", {{"molecules", ds.size()}, {"atoms", ds.atom_count()}});
}

namespace detail {

inline std::vector<fs::path> files_with(const std::string &dir, const std::string &ext) {
  if (dir.empty())
    throw UsageError("ingest: input directory not configured");
  if (!fs::is_directory(dir))
    throw MissingArtifactError("input directory not found: " + dir);
  std::vector<fs::path> out;
  for (const auto &e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ext)
      out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

inline std::string slurp(const fs::path &p) {
  std::ifstream is(p, std::ios::binary);
  if (!is)
    throw MissingArtifactError("cannot read " + p.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

} // namespace detail

inline void stage_ingest(Context &ctx) {
  const auto &b = ctx.block("ingest");
  std::vector<MoleculeRecord> mols;
  for (const auto &f : detail::files_with(b.at("xyz").get<std::string>(), ".xyz")) {
    try {
      mols.push_back(parse_xyz_extended(detail::slurp(f), f.stem().string()));
    } catch (const ParseError &e) {
      throw ParseError(f.string() + ": " + e.what(), e.location());
    }
  }
  std::map<std::string, SumvizResult> atoms;
  const std::string sdir = b.at("sumviz").get<std::string>();
  if (!sdir.empty())
    for (const auto &f : detail::files_with(sdir, ".sumviz")) {
      try {
        auto r = parse_sumviz(detail::slurp(f), f.stem().string());
        const std::string id = r.geometry.id;
        if (!atoms.emplace(id, std::move(r)).second)
          throw ValidationError("ingest: duplicate atomic-property file for " + id);
      } catch (const ParseError &e) {
        throw ParseError(f.string() + ": " + e.what(), e.location());
      }
    }
  std::set<std::string> excluded;
  if (const auto ex = b.at("exclude").get<std::string>(); !ex.empty())
    excluded = parse_exclusion_list(detail::slurp(ex));
  AssemblyOptions opt;
  opt.li_violation_is_warning = b.at("li_violation_is_warning").get<bool>();
  opt.geometry_tolerance = b.at("geometry_tolerance").get<double>();
  const auto res = assemble_dataset(mols, atoms, excluded, opt);
  {
    auto os = open_out(ctx.path("dataset"));
    write_dataset(os, res.dataset, ctx.provenance("ingest"));
  }
  const auto &r = res.report;
  const ojson counts = {{"molecules_in", r.molecules_in}, {"excluded", r.excluded},
                        {"missing_props", r.missing_props}, {"li_violations", r.li_violations},
                        {"with_targets", r.with_targets}, {"retained", r.retained}};
  write_json(ctx.path("ingest_report"), {{"provenance", ctx.provenance("ingest")}, {"counts", counts}, {"log", r.log}});
  for (const auto &l : r.log)
    ctx.log.debug("ingest", "record", {{"message", l}});
  ctx.log.info("ingest", "done", counts);
}

inline void stage_cluster(Context &ctx) {
  const Dataset ds = load_checked_dataset(ctx, "cluster");
  const auto &b = ctx.block("cluster");
  std::map<Element, ElementClusterConfig> cfg;
  for (Element e : kElements) {
    ojson eb = b;
    const std::string sym(symbol(e));
    if (b.at("elements").contains(sym))
      eb.merge_patch(b.at("elements").at(sym));
    ElementClusterConfig c;
    c.soap.cutoff = eb.at("soap").at("cutoff").get<double>();
    c.soap.n_max = eb.at("soap").at("n_max").get<int>();
    c.soap.l_max = eb.at("soap").at("l_max").get<int>();
    c.soap.sigma = eb.at("soap").at("sigma").get<double>();
    c.variance_target = eb.at("variance_target").get<double>();
    if (!eb.at("fixed_components").is_null())
      c.fixed_components = eb.at("fixed_components").get<std::size_t>();
    c.cluster.min_cluster_size = eb.at("min_cluster_size").get<int>();
    c.cluster.min_samples = eb.at("min_samples").get<int>();
    c.cluster.validate();
    cfg[e] = c;
  }
  const auto [table, rep] = label_atoms(ds, cfg);
  {
    auto os = open_out(ctx.path("labels"));
    report::write_provenance(os, ctx.provenance_kv("cluster"));
    write_labels(os, table);
  }
  write_json(ctx.path("cluster_report"), {{"provenance", ctx.provenance("cluster")}, {"elements", to_json(rep)}});
  for (const auto &e : rep.elements)
    ctx.log.info("cluster", "element", {{"element", std::string(symbol(e.element))}, {"atoms", e.atoms},
                                        {"clusters", e.clusters}, {"noise_percent", e.noise_percent}});
}

namespace detail {

inline std::size_t group_count(const std::vector<std::string> &ids, const std::map<std::string, std::string> &g) {
  std::set<std::string> s;
  for (const auto &id : ids)
    s.insert(g.at(id));
  return s.size();
}

} // namespace detail

inline void stage_split(Context &ctx) {
  const Dataset ds = load_checked_dataset(ctx, "split");
  check_input(ctx, ctx.path("labels"), "cluster", "split");
  const LabelTable table = load_labels(ctx.path("labels"));
  const auto &b = ctx.block("split");
  const int repeats = b.at("repeats").get<int>(), folds = b.at("folds").get<int>();
  require(repeats >= 1, "split: repeats must be >= 1");
  const double threshold = b.at("threshold").get<double>();

  std::vector<std::pair<std::string, std::string>> smiles;
  for (const auto &m : ds.molecules)
    smiles.emplace_back(m.record.id, m.record.smiles);
  const auto groups = scaffold_groups(smiles, acyclic_from(b.at("acyclic").get<std::string>()));
  const auto co = cooccurrence(table);

  std::set<EnvLabel> seed;
  for (const auto &s : b.at("held"))
    seed.insert(parse_env_label(s.get<std::string>()));
  std::set<EnvLabel> held;
  HoldoutSplit hs;
  if (!seed.empty()) {
    held = expand_held_labels(co, seed, threshold);
    hs = build_holdout(ds, table, held);
  } else {
    // rarest label whose holdout stays small enough to leave k scaffold groups
    std::vector<std::size_t> order(co.labels.size());
    for (std::size_t i = 0; i < order.size(); ++i)
      order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto c) { return co.support[a] < co.support[c]; });
    const double cap = b.at("max_holdout_fraction").get<double>() * static_cast<double>(ds.size());
    for (auto i : order) {
      if (co.support[i] == 0)
        continue;
      const std::set<EnvLabel> s{co.labels[i]};
      const auto h = expand_held_labels(co, s, threshold);
      auto split = build_holdout(ds, table, h);
      if (static_cast<double>(split.holdout.size()) <= cap &&
          detail::group_count(split.train_pool, groups) >= static_cast<std::size_t>(folds)) {
        seed = s;
        held = h;
        hs = std::move(split);
        break;
      }
    }
    if (held.empty())
      throw ValidationError("split: no environment label gives a usable holdout; set split.held explicitly");
  }
  std::vector<std::uint64_t> seeds;
  for (int r = 0; r < repeats; ++r)
    seeds.push_back(Rng::splitmix(ctx.seed() + 0x5eed + static_cast<std::uint64_t>(r)));
  const auto plan = build_plan(hs.train_pool, hs.holdout, groups, seeds, folds);
  save_plan(ctx.path("plan").string(), plan, ctx.provenance("split"));

  auto names = [](const std::set<EnvLabel> &s) {
    std::vector<std::string> v;
    for (const auto &l : s)
      v.push_back(l.str());
    return v;
  };
  write_json(ctx.path("holdout"), {{"provenance", ctx.provenance("split")},
                                   {"seed_labels", names(seed)},
                                   {"held_labels", names(held)},
                                   {"holdout_molecules", hs.holdout.size()},
                                   {"train_pool_molecules", hs.train_pool.size()}});
  ctx.log.info("split", "done", {{"held_labels", names(held)}, {"holdout", hs.holdout.size()},
                                 {"train_pool", hs.train_pool.size()}, {"cells", repeats * folds}});
}

inline fs::path cell_path(const Context &ctx, const std::string &variant, int r, int f) {
  return ctx.path("checkpoints") / safe_name(variant) /
         ("r" + std::to_string(r + 1) + "_f" + std::to_string(f + 1) + ".json");
}

inline void stage_train(Context &ctx) {
  const Dataset ds = load_checked_dataset(ctx, "train");
  check_input(ctx, ctx.path("plan"), "split", "train");
  const FoldPlan plan = load_plan(ctx.path("plan").string());
  const auto &b = ctx.block("train");
  const TrainOptions base = train_options(b);
  for (const auto &v : b.at("variants")) {
    const std::string variant = v.get<std::string>();
    const ModelConfig c = model_from(variant, b.at("overrides"));
    std::ostringstream hist;
    report::write_provenance(hist, ctx.provenance_kv("train"));
    hist << "repeat,fold,epoch,train_loss,val_loss,lr\n";
    for (int r = 0; r < plan.repeats; ++r)
      for (int f = 0; f < plan.folds; ++f) {
        const auto p = cell_path(ctx, variant, r, f);
        const std::string prefix = std::to_string(r + 1) + "," + std::to_string(f + 1) + ",";
        if (resumable(ctx, p, "train")) {
          const auto ck = load_checkpoint(p.string());
          write_history_rows(hist, prefix, ck.extra.at("history"));
          ctx.log.info("train", "cell_reused", {{"variant", variant}, {"repeat", r + 1}, {"fold", f + 1}});
          continue;
        }
        const auto &cell = plan.cell(r, f);
        const auto stats = TargetStats::fit(stacked_targets(ds, cell.train_ids));
        TrainOptions o = base;
        o.seed = Rng::splitmix(ctx.seed() ^ fnv1a(variant) ^ (static_cast<std::uint64_t>(r) * 64 + f + 1));
        auto res = train(c, atomic_samples(ds, cell.train_ids, stats), atomic_samples(ds, cell.val_ids, stats), o,
                         std::nullopt, [&](const EpochRecord &e) {
                           ctx.log.debug("train", "epoch", {{"variant", variant}, {"repeat", r + 1}, {"fold", f + 1},
                                                            {"epoch", e.epoch}, {"train_loss", e.train_loss},
                                                            {"val_loss", e.val_loss}, {"lr", e.lr},
                                                            {"seed", e.seed}, {"rotation_seed", e.rotation_seed}});
                         });
        Checkpoint ck{c, res.params, stats, ojson::object()};
        ck.extra["repeat"] = r + 1;
        ck.extra["fold"] = f + 1;
        ck.extra["seed"] = o.seed;
        ck.extra["best_epoch"] = res.best_epoch;
        ck.extra["best_val_loss"] = res.best_val_loss;
        ck.extra["history"] = history_json(res.history);
        fs::create_directories(p.parent_path());
        save_checkpoint(p.string(), ck, ctx.provenance("train"));
        write_history_rows(hist, prefix, ck.extra["history"]);
        ctx.log.info("train", "cell_done", {{"variant", variant}, {"repeat", r + 1}, {"fold", f + 1},
                                            {"best_epoch", res.best_epoch}, {"best_val_loss", res.best_val_loss}});
      }
    open_out(ctx.path("checkpoints") / safe_name(variant) / "history.csv") << hist.str();
  }
}

namespace detail {

inline std::pair<int, int> property_columns(const std::string &p) {
  if (p == "N")
    return {0, 1};
  if (p == "lambda")
    return {1, 1};
  if (p == "mu")
    return {2, 3};
  if (p == "Q")
    return {5, 5};
  throw UsageError("unknown property '" + p + "' (expected N, lambda, mu or Q)");
}

inline const char *kColumnNames[kAtomOutputs] = {"N",    "lambda", "mu_x", "mu_y", "mu_z",
                                                 "Q_xy", "Q_xz",   "Q_yz", "Q_an", "Q_zz"};

} // namespace detail

inline void stage_eval(Context &ctx) {
  const Dataset ds = load_checked_dataset(ctx, "eval");
  check_input(ctx, ctx.path("plan"), "split", "eval");
  check_input(ctx, ctx.path("labels"), "cluster", "eval");
  const FoldPlan plan = load_plan(ctx.path("plan").string());
  const auto label_of = load_labels(ctx.path("labels")).index();
  const auto held_names = read_json(ctx.path("holdout")).at("held_labels").get<std::vector<std::string>>();
  const auto properties = ctx.block("eval").at("properties").get<std::vector<std::string>>();

  // holdout atoms, their truth rows and stratum membership
  std::vector<const Molecule *> mols;
  std::vector<std::pair<std::string, int>> atoms;
  std::vector<std::string> atom_label;
  std::vector<Element> atom_el;
  std::vector<ad::Mat> truth_parts;
  Eigen::Index total = 0;
  for (const auto &id : plan.holdout_ids) {
    const Molecule *m = ds.find(id);
    if (!m || !m->targets)
      throw ValidationError("eval: holdout molecule " + id + " is missing or lacks targets");
    mols.push_back(m);
    truth_parts.push_back(target_matrix(*m->targets));
    total += truth_parts.back().rows();
    for (std::size_t a = 0; a < m->record.size(); ++a) {
      atoms.emplace_back(id, static_cast<int>(a));
      auto it = label_of.find({id, static_cast<int>(a)});
      atom_label.push_back(it == label_of.end() ? "noise" : it->second.str());
      atom_el.push_back(m->record.elements[a]);
    }
  }
  ad::Mat truth(total, kAtomOutputs);
  for (Eigen::Index r = 0; const auto &t : truth_parts) {
    truth.middleRows(r, t.rows()) = t;
    r += t.rows();
  }
  std::vector<std::pair<std::string, std::vector<Eigen::Index>>> strata;
  for (const auto &l : held_names) {
    std::vector<Eigen::Index> rows;
    for (std::size_t i = 0; i < atom_label.size(); ++i)
      if (atom_label[i] == l)
        rows.push_back(static_cast<Eigen::Index>(i));
    if (rows.size() >= 2)
      strata.emplace_back(l, rows);
    else
      ctx.log.warn("eval", "stratum_skipped", {{"label", l}, {"atoms", rows.size()}});
  }
  {
    std::vector<Eigen::Index> all(static_cast<std::size_t>(total));
    for (Eigen::Index i = 0; i < total; ++i)
      all[static_cast<std::size_t>(i)] = i;
    strata.emplace_back("ALL", all);
  }

  stats::ScoreMatrix scores;
  for (const auto &v : ctx.block("train").at("variants")) {
    const std::string variant = v.get<std::string>();
    double best_loss = INFINITY;
    ad::Mat best_pred;
    for (int r = 0; r < plan.repeats; ++r)
      for (int f = 0; f < plan.folds; ++f) {
        const auto p = cell_path(ctx, variant, r, f);
        check_input(ctx, p, "train", "eval");
        const auto ck = load_checkpoint(p.string());
        ad::Mat pred(total, kAtomOutputs);
        Eigen::Index row = 0;
        for (const auto *m : mols) {
          const auto in = make_input(build_graph(m->record, ck.config.graph), ck.config);
          const ad::Mat out = ck.stats->invert(predict(ck.params, ck.config, in));
          pred.middleRows(row, out.rows()) = out;
          row += out.rows();
        }
        if (!pred.allFinite())
          throw NumericError("eval: non-finite prediction from " + p.string());
        for (const auto &[name, rows] : strata)
          for (const auto &prop : properties) {
            const auto [c0, nc] = detail::property_columns(prop);
            std::vector<double> x, y;
            for (auto i : rows)
              for (int k = 0; k < nc; ++k) {
                x.push_back(truth(i, c0 + k));
                y.push_back(pred(i, c0 + k));
              }
            scores.push_back({variant, r + 1, f + 1, name + "|" + prop, "ccc", stats::ccc(x, y)});
          }
        const double vl = ck.extra.at("best_val_loss").get<double>();
        if (vl < best_loss) {
          best_loss = vl;
          best_pred = pred;
        }
      }
    // parity table from the cell with the lowest validation loss
    auto os = open_out(ctx.path("eval") / ("parity_" + safe_name(variant) + ".csv"));
    report::write_provenance(os, ctx.provenance_kv("eval"));
    os << "molecule_id,atom_index,element,label,property,truth,prediction\n";
    for (std::size_t i = 0; i < atoms.size(); ++i)
      for (int k = 0; k < kAtomOutputs; ++k)
        os << atoms[i].first << "," << atoms[i].second << "," << symbol(atom_el[i]) << "," << atom_label[i] << ","
           << detail::kColumnNames[k] << "," << report::exact(truth(static_cast<Eigen::Index>(i), k)) << ","
           << report::exact(best_pred(static_cast<Eigen::Index>(i), k)) << "\n";
    ctx.log.info("eval", "model_done", {{"variant", variant}, {"holdout_atoms", total}});
  }
  auto os = open_out(ctx.path("scores"));
  report::write_scores(os, scores, ctx.provenance_kv("eval"));
}

/// Tukey tables and diagnostics for a score file. With `scores_path` the
/// file is taken as given, without a provenance check.
inline void stage_stats(Context &ctx, const std::optional<std::string> &scores_path = std::nullopt) {
  fs::path src = scores_path ? fs::path(*scores_path) : ctx.path("scores");
  if (!scores_path)
    check_input(ctx, src, "eval", "stats");
  const auto m = report::load_scores(src.string());
  const auto &b = ctx.block("stats");
  const std::string metric = b.at("metric").get<std::string>();
  const double alpha = b.at("alpha").get<double>();
  std::vector<std::string> models;
  int repeats = 0, folds = 0;
  for (const auto &e : m)
    if (e.metric == metric) {
      if (std::find(models.begin(), models.end(), e.model) == models.end())
        models.push_back(e.model);
      repeats = std::max(repeats, e.repeat);
      folds = std::max(folds, e.fold);
    }
  if (models.empty())
    throw ValidationError("stats: no scores for metric " + metric);
  const auto strata = report::strata_of(m, metric);
  std::vector<std::string> pooled;
  for (const auto &s : strata)
    if (s.rfind("ALL|", 0) != 0)
      pooled.push_back(s);
  if (pooled.empty())
    pooled = strata;
  std::vector<std::pair<std::string, std::vector<std::string>>> sets{{"pooled", pooled}};
  if (strata.size() > 1)
    for (const auto &s : strata)
      sets.push_back({safe_name(s), {s}});

  const auto dir = ctx.path("stats");
  const auto prov = ctx.provenance_kv("stats");
  ojson summary;
  summary["provenance"] = ctx.provenance("stats");
  summary["metric"] = metric;
  summary["models"] = models;
  summary["repeats"] = repeats;
  summary["folds"] = folds;
  auto &out_sets = summary["comparisons"] = ojson::array();
  if (models.size() < 2) {
    ctx.log.warn("stats", "single_model", {{"model", models.front()}});
  } else {
    for (const auto &[name, set] : sets) {
      std::vector<std::vector<double>> means;
      for (const auto &mod : models)
        means.push_back(stats::repeat_means(stats::fold_scores(m, mod, metric, set, repeats, folds)));
      const auto t = stats::rm_anova_tukey(models, means, alpha);
      {
        auto os = open_out(dir / ("tukey_" + name + ".csv"));
        report::write_provenance(os, prov);
        report::tukey_csv(os, t);
      }
      {
        auto os = open_out(dir / ("tukey_" + name + "_raw.csv"));
        report::write_provenance(os, prov);
        report::tukey_raw_csv(os, t);
      }
      open_out(dir / ("tukey_" + name + ".txt")) << report::render_tukey(t, metric + ", " + name);
      out_sets.push_back({{"name", name}, {"strata", set}, {"means", t.means}, {"ci95_half_width", t.ci_half},
                          {"msd", t.msd}, {"mse", t.mse}, {"df_error", t.df_error}, {"q_crit", t.q_crit},
                          {"f_model", t.f_model}, {"p_model", t.p_model}, {"p_raw", t.p_raw},
                          {"degenerate", t.degenerate}});
      ctx.log.info("stats", "comparison", {{"set", name}, {"msd", t.msd}, {"p_model", t.p_model}});
    }
  }
  if (repeats >= 3) {
    const auto d = report::diagnostics(m, models, metric, strata, repeats, folds);
    {
      auto os = open_out(dir / "diagnostics.csv");
      report::write_provenance(os, prov);
      report::diagnostics_csv(os, d);
    }
    open_out(dir / "diagnostics.txt") << report::render_diagnostics(d);
  } else {
    ctx.log.warn("stats", "diagnostics_skipped", {{"repeats", repeats}});
  }
  write_json(dir / "summary.json", summary);
}

inline downstream::Aggregation aggregation_from(const std::string &s) {
  if (s == "mean")
    return downstream::Aggregation::Mean;
  if (s == "median")
    return downstream::Aggregation::Median;
  throw UsageError("aggregation must be mean or median");
}

inline void stage_infer(Context &ctx) {
  const Dataset ds = load_checked_dataset(ctx, "infer");
  const auto &b = ctx.block("infer");
  const ModelConfig c = model_from(b.at("variant").get<std::string>(), b.at("overrides"));
  downstream::EnsembleSpec spec;
  spec.members = b.at("members").get<int>();
  spec.seed = Rng::splitmix(ctx.seed() + 0xe5);
  spec.aggregation = aggregation_from(b.at("aggregation").get<std::string>());
  const std::string on = b.at("on").get<std::string>();
  if (on != "all" && on != "without-targets")
    throw UsageError("infer.on must be all or without-targets");

  std::vector<std::string> ids;
  std::vector<MoleculeRecord> targets;
  for (const auto &m : ds.molecules) {
    if (m.targets)
      ids.push_back(m.record.id);
    if (on == "all" || !m.targets)
      targets.push_back(m.record);
  }
  const auto dir = ctx.path("ensemble");
  auto member_path = [&](int k) { return dir / ("member_" + std::to_string(k + 1) + ".json"); };
  bool reuse = true;
  for (int k = 0; k < spec.members; ++k)
    reuse = resumable(ctx, member_path(k), "infer") && reuse;
  std::vector<Checkpoint> members;
  if (reuse) {
    for (int k = 0; k < spec.members; ++k)
      members.push_back(load_checkpoint(member_path(k).string()));
    ctx.log.info("infer", "ensemble_reused", {{"members", spec.members}});
  } else {
    std::vector<std::vector<EpochRecord>> hist(static_cast<std::size_t>(spec.members));
    members = downstream::train_ensemble(ds, ids, c, train_options(b), spec, [&](int k, const EpochRecord &e) {
      hist[static_cast<std::size_t>(k)].push_back(e);
      ctx.log.debug("infer", "epoch", {{"member", k + 1}, {"epoch", e.epoch}, {"train_loss", e.train_loss},
                                       {"val_loss", e.val_loss}});
    });
    fs::create_directories(dir);
    for (int k = 0; k < spec.members; ++k) {
      auto &ck = members[static_cast<std::size_t>(k)];
      ck.extra["history"] = history_json(hist[static_cast<std::size_t>(k)]);
      save_checkpoint(member_path(k).string(), ck, ctx.provenance("infer"));
      ctx.log.info("infer", "member_done", {{"member", k + 1}, {"best_epoch", ck.extra["best_epoch"]},
                                            {"best_val_loss", ck.extra["best_val_loss"]}});
    }
  }
  {
    auto os = open_out(dir / "history.csv");
    report::write_provenance(os, ctx.provenance_kv("infer"));
    os << "member,epoch,train_loss,val_loss,lr\n";
    for (int k = 0; k < spec.members; ++k)
      write_history_rows(os, std::to_string(k + 1) + ",", members[static_cast<std::size_t>(k)].extra.at("history"));
  }
  const auto preds = downstream::infer_qta(members, targets, spec.aggregation);
  auto os = open_out(ctx.path("inferred"));
  downstream::write_inferred_csv(os, preds, ctx.provenance_kv("infer"));
  ctx.log.info("infer", "done", {{"molecules", preds.size()}, {"trained_on", ids.size()}});
}

inline void stage_dipole(Context &ctx) {
  const std::string source = ctx.block("dipole").at("source").get<std::string>();
  if (source != "inferred" && source != "truth")
    throw UsageError("dipole.source must be inferred or truth");
  const Dataset ds = load_checked_dataset(ctx, "dipole");
  std::vector<std::pair<std::string, std::vector<AtomTargets>>> per_mol;
  if (source == "truth") {
    for (const auto &m : ds.molecules)
      if (m.targets)
        per_mol.emplace_back(m.record.id, *m.targets);
  } else {
    check_input(ctx, ctx.path("inferred"), "infer", "dipole");
    std::ifstream is(ctx.path("inferred"));
    for (auto &p : downstream::read_inferred_csv(is))
      per_mol.emplace_back(p.id, std::move(p.mean));
  }
  auto os = open_out(ctx.path("dipoles"));
  report::write_provenance(os, ctx.provenance_kv("dipole"));
  os << "molecule_id,mu_x,mu_y,mu_z,magnitude_au,magnitude_debye,reference_debye\n";
  std::vector<double> ref, got;
  for (const auto &[id, atoms] : per_mol) {
    const Molecule *m = ds.find(id);
    if (!m)
      throw ValidationError("dipole: molecule " + id + " is not in the dataset");
    if (m->record.size() != atoms.size())
      throw ValidationError("dipole: atom count mismatch for " + id);
    const auto d = downstream::reconstruct_dipole(atoms);
    os << id << "," << report::exact(d.vector.x()) << "," << report::exact(d.vector.y()) << ","
       << report::exact(d.vector.z()) << "," << report::exact(d.magnitude) << "," << report::exact(d.debye()) << ",";
    if (auto it = m->record.props.find("mu"); it != m->record.props.end() && std::isfinite(it->second)) {
      os << report::exact(it->second);
      ref.push_back(it->second);
      got.push_back(d.debye());
    }
    os << "\n";
  }
  ojson summary;
  summary["provenance"] = ctx.provenance("dipole");
  summary["source"] = source;
  summary["molecules"] = per_mol.size();
  summary["with_reference"] = ref.size();
  summary["r2"] = nullptr;
  summary["mae_debye"] = nullptr;
  if (!ref.empty()) {
    double mae = 0;
    for (std::size_t i = 0; i < ref.size(); ++i)
      mae += std::abs(ref[i] - got[i]);
    summary["mae_debye"] = mae / static_cast<double>(ref.size());
    if (ref.size() >= 2 && stats::variance(ref) > 0)
      summary["r2"] = stats::r2(ref, got);
  }
  write_json(ctx.path("dipole_summary"), summary);
  ctx.log.info("dipole", "done", {{"molecules", per_mol.size()}, {"r2", summary["r2"]}});
}

inline void stage_molecular(Context &ctx) {
  const Dataset ds = load_checked_dataset(ctx, "molecular");
  const auto &b = ctx.block("molecular");
  const auto dir = ctx.path("molecular");
  if (resumable(ctx, dir / "scores.csv", "molecular")) {
    ctx.log.info("molecular", "reused", {});
    return;
  }
  std::vector<std::string> ids;
  std::vector<std::pair<std::string, std::string>> smiles;
  for (const auto &m : ds.molecules)
    if (m.targets) {
      ids.push_back(m.record.id);
      smiles.emplace_back(m.record.id, m.record.smiles);
    }
  const auto groups = scaffold_groups(smiles, acyclic_from(b.at("acyclic").get<std::string>()));
  downstream::ExperimentOptions opt;
  opt.grid.fractions = b.at("fractions").get<std::vector<double>>();
  opt.grid.val_share = b.at("val_share").get<double>();
  opt.grid.test_share = b.at("test_share").get<double>();
  opt.config = model_from("molecular", b.at("overrides"));
  ojson tb = b;
  tb["loss"] = "auto";
  opt.train = train_options(tb);
  opt.train.seed = Rng::splitmix(ctx.seed() + 0x301);
  opt.seeds.clear();
  const int repeats = b.at("repeats").get<int>();
  for (int r = 0; r < repeats; ++r)
    opt.seeds.push_back(Rng::splitmix(ctx.seed() + 0x300 + static_cast<std::uint64_t>(r)));
  stats::ScoreMatrix scores;
  const auto prov = ctx.provenance_kv("molecular");
  for (auto mode : {downstream::Mode::Informed, downstream::Mode::Blind}) {
    const std::string name = downstream::to_string(mode);
    const auto res = downstream::run_molecular_experiment(ds, ids, groups, mode, opt, [&](const std::string &cell) {
      ctx.log.info("molecular", "cell_done", {{"mode", name}, {"cell", cell}});
    });
    scores.insert(scores.end(), res.scores.begin(), res.scores.end());
    auto os = open_out(dir / ("parity_" + name + ".csv"));
    downstream::write_parity_csv(os, res.parity, prov);
  }
  const int folds = static_cast<int>(std::lround(1.0 / opt.grid.test_share));
  if (repeats >= 2) {
    auto os = open_out(dir / "paired.csv");
    report::write_provenance(os, prov);
    report::paired_csv(os, downstream::paired_comparison(scores, repeats, folds));
  } else {
    ctx.log.warn("molecular", "paired_skipped", {{"repeats", repeats}});
  }
  auto os = open_out(dir / "scores.csv");
  report::write_scores(os, scores, prov);
}

// ---- report ----

struct ArtifactCheck {
  std::string path;
  std::string stage;
  std::string recorded;
  std::string expected;
  bool ok = false;
};

/// Verifies the provenance chain of every artifact present and gathers the
/// tables into the reports directory. Throws after writing if any check fails.
inline std::vector<ArtifactCheck> stage_report(Context &ctx) {
  std::vector<std::pair<fs::path, std::string>> items;
  auto add = [&](const fs::path &p, const std::string &stage) {
    if (fs::exists(p))
      items.emplace_back(p, stage);
  };
  auto add_dir = [&](const fs::path &d, const std::string &stage) {
    if (!fs::is_directory(d))
      return;
    std::vector<fs::path> files;
    for (const auto &e : fs::recursive_directory_iterator(d))
      if (e.is_regular_file())
        files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto &f : files)
      if (f.extension() != ".txt")
        items.emplace_back(f, stage);
  };
  add(ctx.path("dataset"), "data");
  add(ctx.path("ingest_report"), "ingest");
  add(ctx.path("labels"), "cluster");
  add(ctx.path("cluster_report"), "cluster");
  add(ctx.path("plan"), "split");
  add(ctx.path("holdout"), "split");
  add_dir(ctx.path("checkpoints"), "train");
  add_dir(ctx.path("eval"), "eval");
  add(ctx.path("scores"), "eval");
  add_dir(ctx.path("stats"), "stats");
  add_dir(ctx.path("ensemble"), "infer");
  add(ctx.path("inferred"), "infer");
  add(ctx.path("dipoles"), "dipole");
  add(ctx.path("dipole_summary"), "dipole");
  add_dir(ctx.path("molecular"), "molecular");

  std::vector<ArtifactCheck> checks;
  bool all_ok = true;
  for (const auto &[p, stage] : items) {
    ArtifactCheck c;
    c.path = fs::relative(p, ctx.out_dir).generic_string();
    const auto prov = artifact_provenance(p);
    c.stage = prov.is_object() ? prov.value("stage", "") : "";
    c.recorded = prov.is_object() ? prov.value("stage_hash", "") : "";
    const std::string logical = stage == "data" && !c.stage.empty() ? c.stage : stage;
    c.expected = ctx.stage_hash(logical);
    c.ok = c.recorded == c.expected && (stage == "data" || c.stage == ctx.resolve(stage));
    all_ok = all_ok && c.ok;
    if (!c.ok)
      ctx.log.warn("report", "provenance_mismatch",
                   {{"artifact", c.path}, {"recorded", c.recorded}, {"expected", c.expected}});
    checks.push_back(c);
  }

  const auto out = ctx.path("reports");
  fs::create_directories(out);
  ojson pj;
  pj["provenance"] = ctx.provenance("report");
  pj["verified"] = all_ok;
  auto &arr = pj["artifacts"] = ojson::array();
  for (const auto &c : checks)
    arr.push_back({{"path", c.path}, {"stage", c.stage}, {"stage_hash", c.recorded}, {"expected", c.expected},
                   {"ok", c.ok}});
  write_json(out / "provenance.json", pj);

  auto copy = [&](const fs::path &from, const std::string &to) {
    if (fs::exists(from))
      fs::copy_file(from, out / to, fs::copy_options::overwrite_existing);
  };
  if (fs::is_directory(ctx.path("stats"))) {
    std::vector<fs::path> files;
    for (const auto &e : fs::directory_iterator(ctx.path("stats")))
      if (e.is_regular_file() && e.path().filename() != "summary.json")
        files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto &f : files)
      copy(f, f.filename().string());
  }
  std::vector<std::string> emitted;
  // learning curves across models and cells
  if (fs::is_directory(ctx.path("checkpoints"))) {
    std::ostringstream lc;
    report::write_provenance(lc, ctx.provenance_kv("report"));
    lc << "model,repeat,fold,epoch,train_loss,val_loss,lr\n";
    bool any = false;
    for (const auto &v : ctx.block("train").at("variants")) {
      const auto h = ctx.path("checkpoints") / safe_name(v.get<std::string>()) / "history.csv";
      std::ifstream is(h);
      if (!is)
        continue;
      std::string line;
      bool header = false;
      while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#')
          continue;
        if (!header) {
          header = true;
          continue;
        }
        lc << v.get<std::string>() << "," << line << "\n";
        any = true;
      }
    }
    if (any)
      open_out(out / "learning_curves.csv") << lc.str();
  }
  copy(ctx.path("ensemble") / "history.csv", "learning_curves_ensemble.csv");
  if (fs::is_directory(ctx.path("eval")))
    for (const auto &v : ctx.block("train").at("variants")) {
      const std::string f = "parity_" + safe_name(v.get<std::string>()) + ".csv";
      copy(ctx.path("eval") / f, f);
    }
  copy(ctx.path("dipoles"), "parity_dipole.csv");
  copy(ctx.path("molecular") / "paired.csv", "paired_molecular.csv");
  copy(ctx.path("molecular") / "parity_informed.csv", "parity_molecular_informed.csv");
  copy(ctx.path("molecular") / "parity_blind.csv", "parity_molecular_blind.csv");
  ctx.log.info("report", "done", {{"artifacts", checks.size()}, {"verified", all_ok}});
  if (!all_ok)
    throw MissingArtifactError("report: provenance chain broken; see " + (out / "provenance.json").string());
  return checks;
}

inline const std::vector<std::string> &stage_order() {
  static const std::vector<std::string> s{"synth", "ingest", "cluster", "split",     "train", "eval",
                                          "stats", "infer",  "dipole",  "molecular", "report"};
  return s;
}

inline void run_stage(Context &ctx, const std::string &stage) {
  ctx.log.info(stage, "start", {{"stage_hash", ctx.stage_hash(stage)}});
  if (stage == "synth")
    stage_synth(ctx);
  else if (stage == "ingest")
    stage_ingest(ctx);
  else if (stage == "cluster")
    stage_cluster(ctx);
  else if (stage == "split")
    stage_split(ctx);
  else if (stage == "train")
    stage_train(ctx);
  else if (stage == "eval")
    stage_eval(ctx);
  else if (stage == "stats")
    stage_stats(ctx);
  else if (stage == "infer")
    stage_infer(ctx);
  else if (stage == "dipole")
    stage_dipole(ctx);
  else if (stage == "molecular")
    stage_molecular(ctx);
  else if (stage == "report")
    stage_report(ctx);
  else
    throw UsageError("unknown stage '" + stage + "'");
}

/// Runs the stages switched on under "stages", in pipeline order.
inline void run_all(Context &ctx) {
  const std::string src = ctx.config.at("source").get<std::string>();
  if (src != "synth" && src != "ingest")
    throw UsageError("source must be synth or ingest");
  for (const auto &s : stage_order()) {
    if (!ctx.block("stages").value(s, false))
      continue;
    if ((s == "synth" || s == "ingest") && s != src)
      continue;
    run_stage(ctx, s);
  }
}

} // namespace qta::pipeline
