#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <sstream>

#include "qta/ingest.hpp"
#include "qta/smiles.hpp"

using namespace qta;
using Catch::Approx;

namespace {

std::string slurp(const std::string &name) {
  std::ifstream is(std::string(QTA_TEST_DATA) + "/fixtures/" + name);
  REQUIRE(is);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

/// Independent token counter for the SMILES subset: atoms are letters outside
/// brackets or whole bracket groups; bonds are chain links plus half the
/// ring-closure labels.
struct TokenCounts {
  int atoms = 0;
  int bonds = 0;
};

TokenCounts count_tokens(const std::string &s) {
  TokenCounts c;
  int closures = 0;
  int components = 1;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char ch = s[i];
    if (ch == '[') {
      ++c.atoms;
      i = s.find(']', i);
    } else if (std::isalpha(static_cast<unsigned char>(ch))) {
      ++c.atoms;
    } else if (std::isdigit(static_cast<unsigned char>(ch))) {
      ++closures;
    } else if (ch == '%') {
      ++closures;
      i += 2;
    } else if (ch == '.') {
      ++components;
    }
  }
  c.bonds = c.atoms - components + closures / 2;
  return c;
}

MolGraph random_graph(Rng &rng) {
  MolGraph g;
  const int n = 1 + static_cast<int>(rng.below(12));
  for (int i = 0; i < n; ++i) {
    GraphAtom a;
    a.element = kElements[1 + rng.below(3)];
    g.atoms.push_back(a);
    if (i > 0) {
      GraphBond b;
      b.i = static_cast<int>(rng.below(i));
      b.j = i;
      b.order = rng.uniform() < 0.2 ? BondOrder::Double : BondOrder::Single;
      g.bonds.push_back(b);
    }
  }
  const int extra = static_cast<int>(rng.below(3));
  for (int k = 0; k < extra && n > 3; ++k) {
    int i = static_cast<int>(rng.below(n)), j = static_cast<int>(rng.below(n));
    if (i == j)
      continue;
    bool dup = false;
    for (const auto &b : g.bonds)
      dup |= (b.i == i && b.j == j) || (b.i == j && b.j == i);
    if (!dup)
      g.bonds.push_back({i, j, BondOrder::Single, false});
  }
  return g;
}

} // namespace

TEST_CASE("parse_sumviz golden fixture", "[ingest]") {
  const auto r = parse_sumviz(slurp("water.sumviz"));
  REQUIRE(r.targets.size() == 3);
  CHECK(r.geometry.id == "water_001");
  CHECK(r.geometry.elements == std::vector<Element>{Element::O, Element::H, Element::H});
  CHECK(r.geometry.positions[1].y() == 1.43);
  CHECK(r.geometry.positions[2].z() == -0.885);

  const auto &o = r.targets[0];
  CHECK(o.n_e == 9.2);
  CHECK(o.li == 8.6);
  CHECK(o.mu == Vec3(0.0, 0.0, 0.15));
  CHECK(o.quad[0] == 0.0);
  CHECK(o.quad[1] == 0.0);
  CHECK(o.quad[2] == 0.0);
  CHECK(o.quad[3] == Approx(-0.4).epsilon(1e-15));
  CHECK(o.quad[4] == Approx(0.2).epsilon(1e-15));

  const auto &h = r.targets[1];
  CHECK(h.n_e == 0.4);
  CHECK(h.li == 0.2);
  CHECK(h.mu == Vec3(0.0, -0.12, 0.09));
  CHECK(h.quad[2] == 0.05);
  CHECK(h.quad[3] == Approx(0.2).epsilon(1e-15));
  CHECK(h.quad[4] == Approx(0.2).epsilon(1e-15));
  CHECK(r.targets[2].quad[2] == -0.05);
}

TEST_CASE("parse_sumviz error paths", "[ingest]") {
  CHECK_THROWS_AS(parse_sumviz(""), ParseError);
  CHECK_THROWS_AS(parse_sumviz("   \n\n"), ParseError);

  std::string text = slurp("water.sumviz");
  SECTION("missing columns are named") {
    const std::string only_n =
        "Molecule: x\nNuclear Charges and Cartesian Coordinates:\n  Atom Charge X Y Z\n"
        "  H1 1.0 0 0 0\n\nSome Atomic Properties:\n  Atom N\n  H1 1.0\n\n"
        "Atomic Multipole Moments:\n  Atom Mu_x Mu_y Mu_z Q_xy Q_xz Q_yz Q_an Q_zz\n"
        "  H1 0 0 0 0 0 0 0 0\n";
    try {
      parse_sumviz(only_n);
      FAIL("expected ParseError");
    } catch (const ParseError &e) {
      CHECK(std::string(e.what()).find("LI") != std::string::npos);
      CHECK(e.location() == 7);
    }
  }
  SECTION("missing section") {
    auto cut = text.substr(0, text.find("Atomic Multipole Moments"));
    CHECK_THROWS_AS(parse_sumviz(cut), ParseError);
  }
  SECTION("malformed number reports its line") {
    std::string bad = text;
    bad.replace(bad.find("9.2000000000E+00"), 16, "9.2x00000000E+00");
    try {
      parse_sumviz(bad);
      FAIL("expected ParseError");
    } catch (const ParseError &e) {
      CHECK(e.location() == 15);
    }
  }
  SECTION("atom count mismatch") {
    std::string bad = text;
    const auto p = bad.rfind("  H3    0.0");
    bad.erase(p);
    CHECK_THROWS_AS(parse_sumviz(bad), ParseError);
  }
}

TEST_CASE("sumviz writer round trip", "[ingest]") {
  const auto r = parse_sumviz(slurp("water.sumviz"));
  const auto again = parse_sumviz(write_sumviz(r.geometry, r.targets));
  CHECK(again.geometry.elements == r.geometry.elements);
  for (std::size_t a = 0; a < 3; ++a) {
    CHECK(again.targets[a].n_e == Approx(r.targets[a].n_e).epsilon(1e-12));
    for (int k = 0; k < 5; ++k)
      CHECK(again.targets[a].quad[k] == Approx(r.targets[a].quad[k]).epsilon(1e-11).margin(1e-14));
  }
}

TEST_CASE("parse_xyz_extended", "[ingest]") {
  SECTION("single atom at origin") {
    const auto m = parse_xyz_extended("1\nid=h units=bohr\nH 0 0 0\n");
    REQUIRE(m.size() == 1);
    CHECK(m.positions[0] == Vec3::Zero());
  }
  SECTION("angstrom input is scaled to bohr") {
    const auto m = parse_xyz_extended(slurp("methane_ang.xyz"));
    REQUIRE(m.size() == 5);
    CHECK(m.id == "methane_001");
    CHECK(m.smiles == "C");
    CHECK(m.positions[0].y() == Approx(1.0858041578 * 1.8897261254578281).epsilon(1e-15));
    CHECK(m.positions[2].x() == Approx(1.0117308433 * 1.8897261254578281).epsilon(1e-15));
    CHECK(m.props.at("alpha") == 13.21);
  }
  SECTION("native QM9 layout") {
    const auto m = parse_xyz_extended(slurp("gdb_1.xyz"));
    CHECK(m.id == "gdb_1");
    CHECK(m.smiles == "C");
    CHECK(m.props.at("alpha") == 13.21);
    CHECK(m.props.at("gap") == 0.5048);
    CHECK(m.props.at("u0") == -40.47893);
    CHECK(m.props.at("cv") == 6.469);
    CHECK(m.positions[1].x() == Approx(0.002150416 * kBohrPerAngstrom).epsilon(1e-15));
  }
  SECTION("fluorine is rejected") {
    CHECK_THROWS_AS(parse_xyz_extended("2\nid=f units=bohr\nC 0 0 0\nF 0 0 2.5\n"),
                    UnsupportedElementError);
  }
  SECTION("errors") {
    CHECK_THROWS_AS(parse_xyz_extended("3\nid=a units=bohr\nC 0 0 0\n"), ParseError);
    CHECK_THROWS_AS(parse_xyz_extended("1\nid=a units=bohr\nC 0 zero 0\n"), ParseError);
    CHECK_THROWS_AS(parse_xyz_extended("1\nid=a units=bohr\nC 0 0 0\nC 0 0 1\n"), ParseError);
    CHECK_THROWS_AS(parse_xyz_extended("x\nid=a\nC 0 0 0\n"), ParseError);
  }
  SECTION("QM9 exponent form") {
    const auto m = parse_xyz_extended("1\nid=e units=bohr\nH 2.1997*^-6 0 0\n");
    CHECK(m.positions[0].x() == Approx(2.1997e-6).epsilon(1e-15));
  }
}

TEST_CASE("canonical text round trip is stable on 12-digit decimals", "[ingest]") {
  const auto m = parse_xyz_extended(slurp("methane_ang.xyz"));
  const std::string once = write_xyz_extended(m);
  const std::string twice = write_xyz_extended(parse_xyz_extended(once));
  CHECK(once == twice);
}

TEST_CASE("dataset JSON lines round trip is exact", "[ingest]") {
  Rng rng(17);
  Dataset ds;
  for (int k = 0; k < 5; ++k) {
    Molecule m;
    m.record.id = "mol" + std::to_string(k);
    m.record.smiles = "CO";
    m.record.props = {{"alpha", rng.normal()}, {"gap", rng.uniform()}, {"u0", -100 * rng.uniform()},
                      {"cv", rng.uniform()}};
    const int n = 1 + static_cast<int>(rng.below(6));
    std::vector<AtomTargets> ts;
    for (int a = 0; a < n; ++a) {
      m.record.elements.push_back(kElements[rng.below(4)]);
      m.record.positions.emplace_back(rng.normal(), rng.normal(), rng.normal());
      AtomTargets t;
      t.n_e = 1 + rng.uniform();
      t.li = t.n_e * rng.uniform();
      t.mu = Vec3(rng.normal(), rng.normal(), rng.normal());
      for (int q = 0; q < 5; ++q)
        t.quad[q] = rng.normal() * 1e-3;
      ts.push_back(t);
    }
    if (k % 2 == 0)
      m.targets = ts;
    ds.molecules.push_back(m);
  }
  std::stringstream ss;
  write_dataset(ss, ds);
  const auto back = read_dataset(ss);
  REQUIRE(back.dataset.size() == ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i)
    CHECK(back.dataset.molecules[i] == ds.molecules[i]);

  std::stringstream again;
  write_dataset(again, back.dataset);
  std::stringstream first;
  write_dataset(first, ds);
  CHECK(again.str() == first.str());
}

TEST_CASE("assemble_dataset joins, excludes and drops", "[ingest]") {
  const auto water = parse_sumviz(slurp("water.sumviz"));
  MoleculeRecord w = water.geometry;
  w.props = {{"alpha", 6.3}, {"gap", 0.3}, {"u0", -76.4}, {"cv", 6.0}};
  MoleculeRecord a = w, b = w, c = w;
  a.id = "a";
  b.id = "b";
  c.id = "c";

  SECTION("exclusion list") {
    const auto r = assemble_dataset({a, b, c}, {}, {"b"});
    CHECK(r.dataset.size() == 2);
    CHECK(r.report.excluded == 1);
  }
  SECTION("missing property is dropped and logged") {
    MoleculeRecord d = a;
    d.id = "d";
    d.props.erase("alpha");
    const auto r = assemble_dataset({a, d}, {}, {});
    CHECK(r.dataset.size() == 1);
    CHECK(r.report.missing_props == 1);
    REQUIRE(!r.report.log.empty());
    CHECK(r.report.log.back().find("alpha") != std::string::npos);
  }
  SECTION("targets are attached by id") {
    const auto r = assemble_dataset({a, b}, {{"a", water}}, {});
    CHECK(r.dataset.molecules[0].targets.has_value());
    CHECK(!r.dataset.molecules[1].targets.has_value());
    CHECK(r.report.with_targets == 1);
  }
  SECTION("duplicate ids") {
    CHECK_THROWS_AS(assemble_dataset({a, a}, {}, {}), ValidationError);
  }
  SECTION("atom-count mismatch") {
    MoleculeRecord e = a;
    e.elements.pop_back();
    e.positions.pop_back();
    CHECK_THROWS_AS(assemble_dataset({e}, {{"a", water}}, {}), ValidationError);
  }
  SECTION("localization index above the population is rejected or downgraded") {
    auto broken = water;
    broken.targets[1].li = 0.5;
    CHECK_THROWS_AS(assemble_dataset({a}, {{"a", broken}}, {}), ValidationError);
    AssemblyOptions opt;
    opt.li_violation_is_warning = true;
    const auto r = assemble_dataset({a, b}, {{"a", broken}}, {}, opt);
    CHECK(r.dataset.size() == 1);
    CHECK(r.report.li_violations == 1);
  }
}

TEST_CASE("exclusion list parsing", "[ingest]") {
  const auto ids = parse_exclusion_list("gdb_1\n\n# comment\n  gdb_7  \ngdb_9");
  CHECK(ids == std::set<std::string>{"gdb_1", "gdb_7", "gdb_9"});
}

TEST_CASE("parse_smiles examples", "[smiles]") {
  const auto a = parse_smiles("CC(=O)NC=N");
  CHECK(a.atom_count() == 6);
  CHECK(a.bond_count() == 5);
  CHECK(a.ring_count() == 0);

  const auto benz = parse_smiles("c1ccccc1");
  CHECK(benz.atom_count() == 6);
  CHECK(benz.bond_count() == 6);
  CHECK(benz.ring_count() == 1);
  for (const auto &at : benz.atoms)
    CHECK((at.aromatic && at.in_ring));
  for (const auto &b : benz.bonds)
    CHECK(b.order == BondOrder::Aromatic);

  const auto cp = parse_smiles("C1CC1C");
  CHECK(cp.atom_count() == 4);
  CHECK(cp.bond_count() == 4);
  CHECK(cp.ring_count() == 1);
  CHECK(!cp.atoms[3].in_ring);

  const auto other = parse_smiles("CCOC(=N)C#N");
  CHECK(other.atom_count() == 7);
  CHECK(other.bonds.back().order == BondOrder::Triple);

  const auto pct = parse_smiles("C%12CC%12");
  CHECK(pct.ring_count() == 1);
  const auto br = parse_smiles("c1cc[nH]c1");
  CHECK(br.atoms[3].explicit_h == 1);
  CHECK(parse_smiles("C.O").component_count() == 2);
}

TEST_CASE("parse_smiles rejects unsupported input with a position", "[smiles]") {
  auto pos_of = [](const std::string &s) {
    try {
      parse_smiles(s);
    } catch (const ParseError &e) {
      return e.location();
    }
    return std::size_t{0};
  };
  CHECK(pos_of("CC(C") == 4);
  CHECK(pos_of("CC)C") == 3);
  CHECK(pos_of("C1CC") == 2);
  CHECK(pos_of("CCF") == 3);
  CHECK(pos_of("C[NH3+]") > 0);
  CHECK(pos_of("C[C@H](O)N") > 0);
  CHECK(pos_of("C/C=C/C") == 2);
  CHECK(pos_of("CCl") == 2);
  CHECK(pos_of("C=") == 2);
  CHECK_THROWS_AS(parse_smiles(""), ParseError);
}

TEST_CASE("parse_smiles counts agree with a token-counting oracle", "[smiles]") {
  Rng rng(99);
  std::vector<std::string> corpus{"CC(=O)NC=N", "CCOC(=N)C#N", "COCC(N)=O", "c1ccccc1",
                                  "C1CC1C",     "c1ccncc1",    "O=C1CCC(=O)N1", "C1CC2CC1C2",
                                  "N#CC#N",     "OC1COC1"};
  while (corpus.size() < 100)
    corpus.push_back(write_smiles(random_graph(rng)));
  for (const auto &s : corpus) {
    INFO(s);
    const auto g = parse_smiles(s);
    const auto c = count_tokens(s);
    CHECK(static_cast<int>(g.atom_count()) == c.atoms);
    CHECK(static_cast<int>(g.bond_count()) == c.bonds);
  }
}

TEST_CASE("write_smiles round trips graphs", "[smiles]") {
  Rng rng(5);
  for (int k = 0; k < 50; ++k) {
    const auto g = random_graph(rng);
    const auto back = parse_smiles(write_smiles(g));
    CHECK(back.atom_count() == g.atom_count());
    CHECK(back.bond_count() == g.bond_count());
    CHECK(back.ring_count() == g.ring_count());
  }
}
