#include <catch2/catch_amalgamated.hpp>

#include <functional>
#include <sstream>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/bessel.hpp>

#include "qta/environments.hpp"

#include "hdbscan_oracle.hpp"

using namespace qta;
using qta::testing::brute_hdbscan;
using Catch::Approx;

namespace {

MoleculeRecord make_mol(std::string id, std::vector<Element> el, std::vector<Vec3> pos) {
  MoleculeRecord m;
  m.id = std::move(id);
  m.elements = std::move(el);
  m.positions = std::move(pos);
  m.props = {{"alpha", 1}, {"gap", 1}, {"u0", 1}, {"cv", 1}};
  return m;
}

MoleculeRecord small_mol() {
  return make_mol("m", {Element::C, Element::H, Element::H, Element::O, Element::N},
                  {Vec3(0, 0, 0), Vec3(1.2, 1.1, 0.3), Vec3(-1.0, 1.3, -0.4), Vec3(0.2, -2.3, 0.1),
                   Vec3(2.5, -0.8, 1.7)});
}

double max_abs(const std::vector<double> &v) {
  double m = 0;
  for (double x : v)
    m = std::max(m, std::abs(x));
  return m;
}

double max_diff(const std::vector<double> &a, const std::vector<double> &b) {
  REQUIRE(a.size() == b.size());
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// Full Gauss-Legendre rule on [-1, 1] from the half rule Boost stores.
template <int N> std::pair<std::vector<double>, std::vector<double>> gl_rule() {
  using rule = boost::math::quadrature::gauss<double, N>;
  std::vector<double> x, w;
  for (std::size_t i = 0; i < rule::abscissa().size(); ++i) {
    x.push_back(rule::abscissa()[i]);
    w.push_back(rule::weights()[i]);
    if (rule::abscissa()[i] != 0) {
      x.push_back(-rule::abscissa()[i]);
      w.push_back(rule::weights()[i]);
    }
  }
  return {x, w};
}

/// Partition equality up to relabelling; noise must match exactly.
bool same_partition(const std::vector<int> &a, const std::vector<int> &b) {
  if (a.size() != b.size())
    return false;
  std::map<int, int> ab, ba;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if ((a[i] == kNoise) != (b[i] == kNoise))
      return false;
    if (a[i] == kNoise)
      continue;
    if (ab.count(a[i]) && ab[a[i]] != b[i])
      return false;
    if (ba.count(b[i]) && ba[b[i]] != a[i])
      return false;
    ab[a[i]] = b[i];
    ba[b[i]] = a[i];
  }
  return true;
}

} // namespace

TEST_CASE("soap dimension", "[soap]") {
  SoapParams p;
  CHECK(soap_dimension(p, 4) == 3696);
  const SoapCalculator calc(p, {Element::H, Element::C, Element::N, Element::O});
  CHECK(calc.descriptor(small_mol(), 0).size() == 3696);
  SoapParams bad = p;
  bad.sigma = 0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("scaled modified spherical Bessel functions", "[soap]") {
  for (double x : {1e-4, 0.01, 0.5, 1.0, 3.7, 10.0, 29.9, 30.0, 30.1, 55.0, 130.0}) {
    const auto v = scaled_sph_bessel_i(8, x);
    for (int l = 0; l <= 8; ++l) {
      const double ref = std::exp(-x) * std::sqrt(M_PI / (2 * x)) * boost::math::cyl_bessel_i(l + 0.5, x);
      INFO("x=" << x << " l=" << l);
      CHECK(v[l] == Approx(ref).epsilon(1e-10).margin(1e-300));
    }
  }
  const auto z = scaled_sph_bessel_i(3, 0.0);
  CHECK(z == std::vector<double>{1, 0, 0, 0});
}

TEST_CASE("real spherical harmonics are orthonormal", "[soap]") {
  const auto [ct, wt] = gl_rule<20>();
  const int nphi = 32;
  const int lmax = 6, nlm = (lmax + 1) * (lmax + 1);
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(nlm, nlm);
  for (std::size_t i = 0; i < ct.size(); ++i)
    for (int k = 0; k < nphi; ++k) {
      const double phi = 2 * M_PI * k / nphi;
      const double st = std::sqrt(1 - ct[i] * ct[i]);
      const auto y = real_sph_harm(lmax, Vec3(st * std::cos(phi), st * std::sin(phi), ct[i]));
      const double w = wt[i] * 2 * M_PI / nphi;
      for (int a = 0; a < nlm; ++a)
        for (int b = 0; b < nlm; ++b)
          G(a, b) += w * y[a] * y[b];
    }
  CHECK((G - Eigen::MatrixXd::Identity(nlm, nlm)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("radial basis is orthonormal on the cutoff sphere", "[soap]") {
  SoapParams p;
  const SoapCalculator calc(p, {Element::H});
  for (int a = 0; a < p.n_max; ++a)
    for (int b = 0; b <= a; ++b) {
      auto f = [&](double r) { return r * r * calc.radial(a, r) * calc.radial(b, r); };
      const double v = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 0.0, p.cutoff, 15, 1e-13);
      CHECK(v == Approx(a == b ? 1.0 : 0.0).margin(1e-9));
    }
}

TEST_CASE("soap expansion matches direct integration of the density", "[soap]") {
  SoapParams p{6.0, 4, 4, 0.7};
  const std::vector<Element> species{Element::C, Element::H};
  const SoapCalculator calc(p, species);
  const auto mol = make_mol("x", {Element::C, Element::H, Element::H},
                            {Vec3(0, 0, 0), Vec3(1.1, 1.2, 0.8), Vec3(-0.5, -2.1, 2.4)});
  const auto c = calc.coefficients(mol, 0);

  // density on a spherical product grid inside the cutoff
  const auto [ct, wt] = gl_rule<30>();
  const int nphi = 64;
  const int panels = 30;
  const auto [rx, rw] = gl_rule<10>();
  const int nlm = (p.l_max + 1) * (p.l_max + 1);
  std::vector<Vec3> dirs;
  std::vector<double> dw;
  std::vector<std::vector<double>> Y;
  for (std::size_t i = 0; i < ct.size(); ++i)
    for (int k = 0; k < nphi; ++k) {
      const double phi = 2 * M_PI * k / nphi;
      const double st = std::sqrt(1 - ct[i] * ct[i]);
      dirs.emplace_back(st * std::cos(phi), st * std::sin(phi), ct[i]);
      dw.push_back(wt[i] * 2 * M_PI / nphi);
      Y.push_back(real_sph_harm(p.l_max, dirs.back()));
    }
  std::vector<std::vector<std::vector<double>>> ref(
      2, std::vector<std::vector<double>>(p.n_max, std::vector<double>(nlm, 0.0)));
  const double h = p.cutoff / panels;
  for (int pn = 0; pn < panels; ++pn)
    for (std::size_t q = 0; q < rx.size(); ++q) {
      const double r = (pn + 0.5) * h + 0.5 * h * rx[q];
      const double wr = 0.5 * h * rw[q] * r * r;
      std::vector<double> g(p.n_max);
      for (int n = 0; n < p.n_max; ++n)
        g[n] = calc.radial(n, r);
      for (std::size_t d = 0; d < dirs.size(); ++d) {
        const Vec3 x = r * dirs[d];
        double rho[2] = {0, 0};
        for (std::size_t j = 0; j < mol.size(); ++j) {
          const double rj = mol.positions[j].norm();
          const double fc = 0.5 * (std::cos(M_PI * rj / p.cutoff) + 1);
          const int s = mol.elements[j] == Element::C ? 0 : 1;
          rho[s] += fc * std::exp(-(x - mol.positions[j]).squaredNorm() / (2 * p.sigma * p.sigma));
        }
        for (int s = 0; s < 2; ++s)
          for (int n = 0; n < p.n_max; ++n) {
            const double f = wr * dw[d] * rho[s] * g[n];
            for (int k = 0; k < nlm; ++k)
              ref[s][n][k] += f * Y[d][k];
          }
      }
    }
  double scale = 0, worst = 0;
  for (int s = 0; s < 2; ++s)
    for (int n = 0; n < p.n_max; ++n)
      for (int k = 0; k < nlm; ++k) {
        scale = std::max(scale, std::abs(ref[s][n][k]));
        worst = std::max(worst, std::abs(ref[s][n][k] - c[s][n][k]));
      }
  CHECK(worst < 1e-6 * scale);
}

TEST_CASE("soap is rotation, translation and permutation invariant", "[soap]") {
  const SoapCalculator calc(SoapParams{}, {Element::H, Element::C, Element::N, Element::O});
  const auto mol = small_mol();
  const auto ref = calc.descriptor(mol, 0);
  const double scale = std::max(1.0, max_abs(ref));
  Rng rng(31);
  double worst = 0;
  for (int k = 0; k < 100; ++k) {
    const auto R = sample_rotation(rng);
    auto rot = mol;
    for (auto &x : rot.positions)
      x = rotate_vec(R, x);
    worst = std::max(worst, max_diff(calc.descriptor(rot, 0), ref));
  }
  CHECK(worst < 1e-8 * scale);

  auto moved = mol;
  for (auto &x : moved.positions)
    x += Vec3(3.3, -7.1, 0.25);
  CHECK(max_diff(calc.descriptor(moved, 0), ref) < 1e-10 * scale);

  auto swapped = mol;
  std::swap(swapped.positions[1], swapped.positions[2]);
  CHECK(max_diff(calc.descriptor(swapped, 0), ref) < 1e-10 * scale);
  // the swapped hydrogen keeps its own descriptor
  CHECK(max_diff(calc.descriptor(swapped, 2), calc.descriptor(mol, 1)) < 1e-10 * scale);
}

TEST_CASE("soap of an isolated atom and of a rotated cluster", "[soap]") {
  const SoapCalculator calc(SoapParams{}, {Element::H, Element::C});
  const auto lone = make_mol("a", {Element::C}, {Vec3(1, 2, 3)});
  const auto d = calc.descriptor(lone, 0);
  // only the centre contributes: every feature of an H index vanishes
  CHECK(max_abs(d) > 0);
  auto star = make_mol("b", {Element::C, Element::H, Element::H, Element::H},
                       {Vec3(0, 0, 0), Vec3(2, 0, 0), Vec3(0, 2.1, 0.3), Vec3(-0.4, 0.2, 1.9)});
  Rng rng(4);
  auto turned = star;
  const auto R = sample_rotation(rng);
  for (auto &x : turned.positions)
    x = rotate_vec(R, x);
  const auto a = calc.descriptor(star, 0), b = calc.descriptor(turned, 0);
  CHECK(max_diff(a, b) < 1e-8 * std::max(1.0, max_abs(a)));
  CHECK(max_diff(a, d) > 1e-3);
}

TEST_CASE("pca recovers a planted subspace", "[pca]") {
  Rng rng(8);
  const int n = 200, d = 10;
  Eigen::MatrixXd B(3, d);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < d; ++j)
      B(i, j) = rng.normal();
  RowMatrix X(n, d);
  for (int i = 0; i < n; ++i) {
    Eigen::RowVector3d z(rng.normal(), 2 * rng.normal(), 0.5 * rng.normal());
    X.row(i) = z * B + Eigen::RowVectorXd::Constant(d, 4.0);
  }
  const auto m = pca_fit(X, 0.99);
  CHECK(m.k() == 3);
  CHECK(m.explained() == Approx(1.0).epsilon(1e-10));
  CHECK((m.components.transpose() * m.components - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-8);

  // inner products of centred data survive projection onto the subspace
  const RowMatrix Z = pca_transform(m, X);
  const Eigen::MatrixXd Xc = X.rowwise() - m.mean.transpose();
  CHECK((Z * Z.transpose() - Xc * Xc.transpose()).cwiseAbs().maxCoeff() < 1e-8 * Xc.squaredNorm() / n);
}

TEST_CASE("pca on isotropic data keeps every direction", "[pca]") {
  Rng rng(12);
  RowMatrix X(500, 5);
  for (int i = 0; i < X.rows(); ++i)
    for (int j = 0; j < 5; ++j)
      X(i, j) = rng.normal();
  const auto m = pca_fit(X, 0.99);
  CHECK(m.k() == 5);
  // the smallest sample eigenvalue still carries more than 1% of the variance
  CHECK(m.explained_ratio(4) > 0.01);
}

TEST_CASE("pca fixed component count and the Gram path", "[pca]") {
  Rng rng(13);
  RowMatrix X(15, 40);
  for (int i = 0; i < X.rows(); ++i)
    for (int j = 0; j < X.cols(); ++j)
      X(i, j) = rng.normal() * (1.0 + j % 4);
  const auto m20 = pca_fit(X, 0.5, 20);
  CHECK(m20.k() == 20);
  CHECK((m20.components.transpose() * m20.components - Eigen::MatrixXd::Identity(20, 20)).cwiseAbs().maxCoeff() <
        1e-8);
  // samples span at most 14 directions after centring
  CHECK(m20.variances.tail(6).cwiseAbs().maxCoeff() == 0.0);
  CHECK(m20.explained() == Approx(1.0).epsilon(1e-10));

  // Gram and covariance routes agree on the retained variances
  const auto gram = pca_fit(X, 0.9);
  RowMatrix Xd(X.rows() * 3, X.cols());
  Xd << X, X, X;
  const auto cov = pca_fit(Xd, 0.9);
  REQUIRE(gram.k() == cov.k());
  const double ratio = 3.0 * (X.rows() - 1.0) / (3.0 * X.rows() - 1.0);
  for (std::size_t i = 0; i < gram.k(); ++i)
    CHECK(cov.variances(i) == Approx(gram.variances(i) * ratio).epsilon(1e-9));
  CHECK_THROWS_AS(pca_fit(X.topRows(1), 0.9), ValidationError);
  CHECK_THROWS_AS(pca_fit(X, 1.5), ValidationError);
}

TEST_CASE("hdbscan degenerate inputs", "[hdbscan]") {
  RowMatrix X(3, 2);
  X << 0, 0, 1, 1, 2, 2;
  const auto r = hdbscan_cluster(X, ClusterParams{5, 2});
  CHECK(r.labels == std::vector<int>{kNoise, kNoise, kNoise});
  CHECK(r.n_clusters == 0);
  RowMatrix same = RowMatrix::Zero(8, 2);
  CHECK(hdbscan_cluster(same, ClusterParams{3, 2}).n_clusters == 0);
  CHECK_THROWS_AS(hdbscan_cluster(X, ClusterParams{2, 3}), ValidationError);
}

TEST_CASE("hdbscan separates two distant blobs", "[hdbscan]") {
  Rng rng(21);
  RowMatrix X(400, 2);
  for (int i = 0; i < 400; ++i) {
    const double off = i < 200 ? 0.0 : 20.0;
    X(i, 0) = off + rng.normal();
    X(i, 1) = rng.normal();
  }
  const auto r = hdbscan_cluster(X, ClusterParams{50, 10});
  CHECK(r.n_clusters == 2);
  int noise = 0;
  for (int i = 0; i < 400; ++i) {
    if (r.labels[i] == kNoise) {
      ++noise;
      continue;
    }
    CHECK(r.labels[i] == (i < 200 ? 0 : 1));
  }
  CHECK(noise < 20);
}

TEST_CASE("hdbscan matches exhaustive threshold-graph labelling on tiny inputs", "[hdbscan]") {
  Rng rng(77);
  int compared = 0, with_clusters = 0;
  for (int trial = 0; trial < 400; ++trial) {
    const int n = 4 + static_cast<int>(rng.below(9));
    const int mcs = 2 + static_cast<int>(rng.below(3));
    const int ms = 1 + static_cast<int>(rng.below(mcs));
    RowMatrix X(n, 2);
    const int centres = 1 + static_cast<int>(rng.below(3));
    for (int i = 0; i < n; ++i) {
      const int c = static_cast<int>(rng.below(centres));
      X(i, 0) = 5.0 * c + rng.normal();
      X(i, 1) = 3.0 * (c % 2) + rng.normal();
    }
    const auto got = hdbscan_cluster(X, ClusterParams{mcs, ms}).labels;
    const auto want = brute_hdbscan(X, mcs, ms);
    INFO("trial " << trial << " n=" << n << " mcs=" << mcs << " ms=" << ms);
    CHECK(got == want);
    ++compared;
    with_clusters += *std::max_element(want.begin(), want.end()) >= 0;
  }
  CHECK(compared == 400);
  CHECK(with_clusters > 200);
}

TEST_CASE("hdbscan is permutation invariant up to relabelling", "[hdbscan]") {
  Rng rng(5);
  RowMatrix X(120, 3);
  for (int i = 0; i < 120; ++i)
    for (int j = 0; j < 3; ++j)
      X(i, j) = 6.0 * (i % 3 == j) + rng.normal();
  const auto base = hdbscan_cluster(X, ClusterParams{15, 5}).labels;
  for (int rep = 0; rep < 5; ++rep) {
    std::vector<std::size_t> perm(120);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    RowMatrix P(120, 3);
    for (int i = 0; i < 120; ++i)
      P.row(i) = X.row(static_cast<Eigen::Index>(perm[i]));
    const auto got = hdbscan_cluster(P, ClusterParams{15, 5}).labels;
    std::vector<int> back(120);
    for (int i = 0; i < 120; ++i)
      back[perm[i]] = got[i];
    CHECK(same_partition(base, back));
  }
}

namespace {

Dataset toy_environments() {
  Rng rng(3);
  Dataset ds;
  for (int k = 0; k < 6; ++k) {
    auto jitter = [&](Vec3 v) { return v + 0.03 * Vec3(rng.normal(), rng.normal(), rng.normal()); };
    const double b = 2.05;
    Molecule ch4;
    ch4.record = make_mol("methane" + std::to_string(k), {Element::C, Element::H, Element::H, Element::H, Element::H},
                          {Vec3(0, 0, 0), jitter(Vec3(b, b, b) / std::sqrt(3.0)),
                           jitter(Vec3(-b, -b, b) / std::sqrt(3.0)), jitter(Vec3(-b, b, -b) / std::sqrt(3.0)),
                           jitter(Vec3(b, -b, -b) / std::sqrt(3.0))});
    Molecule h2o;
    h2o.record = make_mol("water" + std::to_string(k), {Element::O, Element::H, Element::H},
                          {Vec3(0, 0, 0.22), jitter(Vec3(0, 1.43, -0.88)), jitter(Vec3(0, -1.43, -0.88))});
    ds.molecules.push_back(ch4);
    ds.molecules.push_back(h2o);
  }
  return ds;
}

std::map<Element, ElementClusterConfig> toy_config() {
  ElementClusterConfig c;
  c.soap = SoapParams{6.0, 4, 3, 0.7};
  c.cluster = ClusterParams{7, 3};
  return {{Element::H, c}};
}

} // namespace

TEST_CASE("label_atoms separates two hydrogen environments", "[environments]") {
  const auto ds = toy_environments();
  const auto [table, report] = label_atoms(ds, toy_config());
  REQUIRE(table.rows.size() == 6 * 8);
  std::set<int> methane_h, water_h;
  for (const auto &r : table.rows) {
    if (r.label.element != Element::H)
      continue;
    (r.molecule_id.rfind("methane", 0) == 0 ? methane_h : water_h).insert(r.label.cluster);
  }
  REQUIRE(report.elements.size() == 1);
  CHECK(report.elements[0].atoms == 36);
  CHECK(report.elements[0].clusters == 2);
  CHECK(methane_h.size() == 1);
  CHECK(water_h.size() == 1);
  CHECK(*methane_h.begin() != *water_h.begin());
  CHECK(*methane_h.begin() != kNoise);

  const auto again = label_atoms(ds, toy_config());
  CHECK(again.first.rows == table.rows);
}

namespace {

LabelTable table_from(const std::vector<std::pair<std::string, std::vector<EnvLabel>>> &mols) {
  LabelTable t;
  for (const auto &[id, labels] : mols)
    for (std::size_t a = 0; a < labels.size(); ++a)
      t.rows.push_back({id, static_cast<int>(a), labels[a]});
  return t;
}

} // namespace

TEST_CASE("cooccurrence on a counted toy", "[environments]") {
  const EnvLabel A{Element::H, 0}, B{Element::C, 0}, C{Element::N, 1}, Z{Element::O, 0}, noise{Element::H, kNoise};
  const auto t = table_from({{"m1", {A, B, noise}},
                             {"m2", {A, B, C}},
                             {"m3", {A, C}},
                             {"m4", {B}},
                             {"m5", {A, A, B}}});
  const auto co = cooccurrence(t, {Z});
  CHECK(co(A, A) == 1.0);
  CHECK(co(A, B) == 0.75);
  CHECK(co(A, C) == 0.5);
  CHECK(co(B, A) == 0.75);
  CHECK(co(C, A) == 1.0);
  CHECK(co(C, B) == 0.5);
  CHECK(co(B, C) == 0.25);
  CHECK(co.zero_support == std::vector<EnvLabel>{Z});
  CHECK(co.p.row(static_cast<Eigen::Index>(co.index_of(Z))).isZero());
  CHECK(co.labels.size() == 4);

  const auto disjoint = cooccurrence(table_from({{"a", {A}}, {"b", {B}}}));
  CHECK(disjoint(A, B) == 0.0);
  CHECK(disjoint(B, A) == 0.0);
  const auto everywhere = cooccurrence(table_from({{"a", {A, B}}, {"b", {A}}, {"c", {A, C}}}));
  CHECK(everywhere(B, A) == 1.0);
  CHECK(everywhere(C, A) == 1.0);

  CHECK(expand_held_labels(co, {C}) == std::set<EnvLabel>{A, C});
  CHECK(expand_held_labels(co, {C}, 0.4) == std::set<EnvLabel>{A, B, C});
}

TEST_CASE("build_holdout is leakage free", "[environments]") {
  const EnvLabel A{Element::H, 0}, B{Element::C, 0}, C{Element::N, 1};
  Dataset ds;
  for (const char *id : {"m1", "m2", "m3"}) {
    Molecule m;
    m.record.id = id;
    ds.molecules.push_back(m);
  }
  const auto t = table_from({{"m1", {B}}, {"m2", {A, B}}, {"m3", {C}}});
  const auto s = build_holdout(ds, t, {A});
  CHECK(s.holdout == std::vector<std::string>{"m2"});
  CHECK(s.train_pool == std::vector<std::string>{"m1", "m3"});
  CHECK_THROWS_AS(build_holdout(ds, t, {EnvLabel{Element::O, 4}}), ValidationError);

  // exhaustive check on random tables
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    Dataset d;
    std::vector<std::pair<std::string, std::vector<EnvLabel>>> mols;
    for (int m = 0; m < 30; ++m) {
      Molecule mm;
      mm.record.id = "x" + std::to_string(m);
      d.molecules.push_back(mm);
      std::vector<EnvLabel> ls;
      for (int a = 0; a < 5; ++a)
        ls.push_back({kElements[rng.below(4)], static_cast<int>(rng.below(4)) - 1});
      mols.emplace_back(mm.record.id, ls);
    }
    const auto tab = table_from(mols);
    const auto co = cooccurrence(tab);
    std::set<EnvLabel> held{co.labels[rng.below(co.labels.size())]};
    const auto split = build_holdout(d, tab, held);
    CHECK(split.train_pool.size() + split.holdout.size() == 30);
    const auto per = tab.by_molecule();
    for (const auto &id : split.train_pool)
      for (const auto &l : per.at(id))
        CHECK(!held.count(l));
    for (const auto &id : split.holdout) {
      bool hit = false;
      for (const auto &l : per.at(id))
        hit |= held.count(l) > 0;
      CHECK(hit);
    }
  }
}

TEST_CASE("labels file round trip and errors", "[environments]") {
  const auto t = table_from({{"gdb_1", {{Element::C, 3}, {Element::H, kNoise}}}, {"gdb_2", {{Element::O, 10}}}});
  std::stringstream ss;
  write_labels(ss, t);
  CHECK(ss.str() == "gdb_1 0 C 3\ngdb_1 1 H -1\ngdb_2 0 O 10\n");
  CHECK(read_labels(ss).rows == t.rows);
  std::stringstream bad("gdb_1 0 C\n");
  CHECK_THROWS_AS(read_labels(bad), ParseError);
  std::stringstream fl("gdb_1 0 F 2\n");
  CHECK_THROWS_AS(read_labels(fl), ParseError);
  CHECK(parse_env_label("N_13") == EnvLabel{Element::N, 13});
  CHECK(EnvLabel{Element::H, 10}.str() == "H_10");
  CHECK_THROWS_AS(parse_env_label("N13"), ParseError);
}
