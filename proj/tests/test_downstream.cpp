#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "qta/downstream.hpp"
#include "qta/synthetic.hpp"

using namespace qta;
using namespace qta::downstream;
using Catch::Approx;

namespace {

std::vector<std::string> ids_of(const Dataset &ds) {
  std::vector<std::string> out;
  for (const auto &m : ds.molecules)
    out.push_back(m.record.id);
  return out;
}

std::map<std::string, std::string> per_molecule_groups(const Dataset &ds) {
  std::vector<std::pair<std::string, std::string>> mols;
  for (const auto &m : ds.molecules)
    mols.emplace_back(m.record.id, m.record.smiles);
  return scaffold_groups(mols, AcyclicGrouping::PerMolecule);
}

// Atomic values drawn independently of geometry; every molecular property is
// a noiseless linear function of them, invisible to a geometry-only model.
Dataset injected_dataset(int n, std::uint64_t seed) {
  SyntheticOptions o;
  o.n_molecules = n;
  o.seed = seed;
  Dataset ds = synthetic_dataset(o);
  Rng rng(seed + 100);
  for (auto &m : ds.molecules) {
    double sn = 0, sl = 0;
    for (auto &t : *m.targets) {
      t.n_e = 1 + 8 * rng.uniform();
      t.li = t.n_e * (0.3 + 0.6 * rng.uniform());
      sn += t.n_e - 5;
      sl += t.li - 3;
    }
    m.record.props["alpha"] = sn;
    m.record.props["gap"] = sl;
    m.record.props["u0"] = sn - sl;
    m.record.props["cv"] = 2 * sn + sl;
  }
  return ds;
}

ExperimentOptions small_options() {
  ExperimentOptions o;
  o.config = variant_config("molecular");
  o.config.depth = 2;
  o.config.width = 16;
  o.grid.fractions = {1.0};
  o.grid.test_share = 0.5;
  o.grid.val_share = 0.1;
  o.seeds = {3};
  o.train.epochs = 150;
  o.train.lr = 3e-3;
  o.train.batch_size = 16;
  o.train.seed = 9;
  return o;
}

} // namespace

TEST_CASE("experiment splits are disjoint, nested across fractions and shared", "[downstream]") {
  SyntheticOptions so;
  so.n_molecules = 60;
  const Dataset ds = synthetic_dataset(so);
  const auto ids = ids_of(ds);
  ExperimentGrid g;
  const auto splits = experiment_splits(ids, per_molecule_groups(ds), {1, 2}, g);
  REQUIRE(splits.size() == 10);
  for (const auto &c : splits) {
    std::set<std::string> all;
    for (const auto *part : {&c.pool, &c.val, &c.test})
      for (const auto &id : *part)
        CHECK(all.insert(id).second);
    CHECK(all.size() == ids.size());
    CHECK(c.test.size() == 12);
    CHECK(c.val.size() == 6);
    CHECK(c.pool.size() == 42);
    CHECK(c.train_at(1.0) == c.pool);
    const auto small = c.train_at(0.1), tiny = c.train_at(0.01);
    CHECK(small.size() == 4);
    CHECK(tiny.size() == 1);
    CHECK(std::equal(tiny.begin(), tiny.end(), small.begin()));
  }
  CHECK(experiment_splits(ids, per_molecule_groups(ds), {1, 2}, g) == splits);
}

TEST_CASE("informed models exploit QTA inputs that blind models cannot see", "[downstream][slow]") {
  const Dataset ds = injected_dataset(60, 17);
  const auto ids = ids_of(ds);
  const auto groups = per_molecule_groups(ds);
  const auto opt = small_options();

  const auto inf = run_molecular_experiment(ds, ids, groups, Mode::Informed, opt);
  const auto blind = run_molecular_experiment(ds, ids, groups, Mode::Blind, opt);
  CHECK(inf.splits == blind.splits);
  REQUIRE(inf.scores.size() == blind.scores.size());

  double di = 0, db = 0;
  for (std::size_t k = 0; k < inf.scores.size(); ++k) {
    di += inf.scores[k].value;
    db += blind.scores[k].value;
  }
  di /= static_cast<double>(inf.scores.size());
  db /= static_cast<double>(blind.scores.size());
  INFO("informed R2 " << di << ", blind R2 " << db);
  CHECK(di - db > 0.2);

  // blind scores do not move when the QTA values are scrambled
  Dataset scrambled = ds;
  Rng rng(5);
  for (auto &m : scrambled.molecules)
    for (auto &t : *m.targets) {
      t.n_e = 10 * rng.uniform() + 0.1;
      t.mu = Vec3(rng.normal(), rng.normal(), rng.normal());
    }
  const auto blind2 = run_molecular_experiment(scrambled, ids, groups, Mode::Blind, opt);
  REQUIRE(blind2.scores.size() == blind.scores.size());
  for (std::size_t k = 0; k < blind.scores.size(); ++k)
    CHECK(blind2.scores[k].value == blind.scores[k].value);
}

TEST_CASE("paired comparison per fraction and property", "[downstream]") {
  stats::ScoreMatrix m;
  Rng rng(8);
  std::vector<double> delta;
  for (int r = 1; r <= 5; ++r)
    for (int f = 1; f <= 5; ++f)
      for (const char *cell : {"0.1|alpha", "1|gap"}) {
        const double b = 0.7 + 0.05 * rng.normal(), d = 0.03 + 0.01 * rng.normal();
        m.push_back({"blind", r, f, cell, "r2", b});
        m.push_back({"informed", r, f, cell, "r2", b + d});
        if (std::string(cell) == "1|gap")
          delta.push_back(d);
      }
  const auto rows = paired_comparison(m, 5, 5);
  REQUIRE(rows.size() == 2);
  CHECK(rows[1].label == "1|gap");
  CHECK(rows[1].battery.mean_delta == Approx(stats::mean(delta)).epsilon(1e-12));
  CHECK(rows[1].battery.t_test.p == Approx(stats::paired_t(delta).p).epsilon(1e-9));
  CHECK(rows[1].battery.t_test.p < 1e-6);
  std::ostringstream os;
  report::paired_csv(os, rows);
  CHECK(os.str().rfind("cell,delta_mean,delta_sem,icc_delta,n_eff,sw_p,paired_t_p,wilcoxon_p,degenerate\n0.1|alpha,", 0) == 0);
}

TEST_CASE("informed mode requires QTA inputs", "[downstream]") {
  SyntheticOptions so;
  so.n_molecules = 12;
  Dataset ds = synthetic_dataset(so);
  ds.molecules[4].targets.reset();
  auto opt = small_options();
  opt.train.epochs = 1;
  CHECK_THROWS_AS(run_molecular_experiment(ds, ids_of(ds), per_molecule_groups(ds), Mode::Informed, opt),
                  ValidationError);
  CHECK_NOTHROW(run_molecular_experiment(ds, ids_of(ds), per_molecule_groups(ds), Mode::Blind, opt));
}

TEST_CASE("ensemble inference", "[downstream]") {
  SyntheticOptions so;
  so.n_molecules = 14;
  const Dataset ds = synthetic_dataset(so);
  const auto ids = ids_of(ds);
  ModelConfig c = variant_config("SG-8-12");
  c.depth = 1;
  c.width = 6;
  c.graph.max_nn = 4;
  TrainOptions to;
  to.epochs = 2;
  EnsembleSpec spec;
  spec.members = 3;
  spec.seed = 4;

  const auto parts = member_partitions(ids, 3, 4);
  std::set<std::string> seen;
  for (const auto &p : parts)
    for (const auto &id : p)
      CHECK(seen.insert(id).second);
  CHECK(seen.size() == ids.size());

  const auto members = train_ensemble(ds, ids, c, to, spec);
  REQUIRE(members.size() == 3);
  std::vector<MoleculeRecord> mols{ds.molecules[0].record, ds.molecules[1].record};

  const auto one = infer_qta({members[0]}, mols);
  const auto in0 = make_input(build_graph(mols[0], c.graph), c);
  const ad::Mat direct = members[0].stats->invert(predict(members[0].params, c, in0));
  CHECK(target_matrix(one[0].mean) == direct);
  for (double s : one[0].spread)
    CHECK(s == 0.0);

  const auto all = infer_qta(members, mols);
  const auto perm = infer_qta({members[2], members[0], members[1]}, mols);
  CHECK((target_matrix(all[1].mean) - target_matrix(perm[1].mean)).cwiseAbs().maxCoeff() < 1e-13);
  bool any_spread = false;
  for (double s : all[0].spread)
    any_spread = any_spread || s > 0;
  CHECK(any_spread);

  const auto same = infer_qta({members[1], members[1], members[1]}, mols);
  for (double s : same[0].spread)
    CHECK(s == Approx(0.0).margin(1e-28));
  CHECK((target_matrix(same[0].mean) - target_matrix(infer_qta({members[1]}, mols)[0].mean)).cwiseAbs().maxCoeff() <
        1e-13);

  const auto med = infer_qta(members, mols, Aggregation::Median);
  CHECK(med[0].mean.size() == mols[0].size());

  // de-normalization round trip
  const ad::Mat raw = target_matrix(*ds.molecules[0].targets);
  CHECK((members[0].stats->invert(members[0].stats->apply(raw)) - raw).cwiseAbs().maxCoeff() < 1e-12);

  std::ostringstream csv;
  write_inferred_csv(csv, all, {{"config_hash", "abc"}});
  std::istringstream lines(csv.str());
  std::string line;
  std::getline(lines, line);
  CHECK(line == "# config_hash=abc");
  std::getline(lines, line);
  CHECK(line == "molecule_id,atom_index,element,N,lambda,mu_x,mu_y,mu_z,Q_xy,Q_xz,Q_yz,Q_an,Q_zz,spread");
  std::getline(lines, line);
  CHECK(report::split_csv(line).size() == 14);
}

TEST_CASE("best member per repeat", "[downstream]") {
  const std::vector<std::vector<std::string>> m{{"a", "b", "c"}, {"d", "e"}};
  CHECK(best_per_repeat(m, {{0.3, 0.1, 0.2}, {0.5, 0.6}}) == std::vector<std::string>{"b", "d"});
  CHECK_THROWS_AS(best_per_repeat(m, {{0.3}}), ValidationError);
}

TEST_CASE("dipole reconstruction", "[downstream][dipole]") {
  CHECK(reconstruct_dipole(std::vector<Vec3>{Vec3(0.1, -0.2, 0.3)}).vector == Vec3(0.1, -0.2, 0.3));
  const auto zero = reconstruct_dipole(std::vector<Vec3>{Vec3(1, 2, 3), Vec3(-1, -2, -3)});
  CHECK(zero.magnitude == 0.0);
  const auto d = reconstruct_dipole(std::vector<Vec3>{Vec3(1, 0, 0), Vec3(0, 1, 0)});
  CHECK(d.debye() == Approx(std::sqrt(2.0) * 2.5417464519).epsilon(1e-15));

  Rng rng(6);
  for (int t = 0; t < 100; ++t) {
    std::vector<Vec3> mu, scaled, rotated;
    const double c = rng.normal();
    const Rotation R = sample_rotation(rng);
    for (int i = 0; i < 6; ++i) {
      mu.emplace_back(rng.normal(), rng.normal(), rng.normal());
      scaled.push_back(c * mu.back());
      rotated.push_back(rotate_vec(R, mu.back()));
    }
    const Vec3 base = reconstruct_dipole(mu).vector;
    CHECK((reconstruct_dipole(scaled).vector - c * base).norm() < 1e-12);
    CHECK((reconstruct_dipole(rotated).vector - rotate_vec(R, base)).norm() < 1e-12);
  }

  // on the synthetic set the stored molecular dipole is the atomic sum
  SyntheticOptions so;
  so.n_molecules = 10;
  for (const auto &m : synthetic_dataset(so).molecules)
    CHECK(reconstruct_dipole(*m.targets).debye() == Approx(m.record.props.at("mu")).epsilon(1e-12));
}
