#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "qta/report.hpp"

using namespace qta;
using Catch::Approx;

TEST_CASE("score tables round-trip exactly", "[report]") {
  stats::ScoreMatrix m{{"a", 1, 1, "N_13|N", "ccc", 0.1 + 0.2}, {"b", 5, 5, "ALL", "r2", -1e-300}};
  std::stringstream ss;
  report::write_scores(ss, m, {{"config_hash", "00ff"}, {"seed", "3"}});
  CHECK(ss.str().rfind("# config_hash=00ff\n# seed=3\nmodel,repeat,fold,stratum,metric,value\n", 0) == 0);
  CHECK(report::read_scores(ss) == m);
}

TEST_CASE("malformed score tables", "[report]") {
  auto parse = [](const std::string &s) {
    std::istringstream is(s);
    return report::read_scores(is);
  };
  CHECK_THROWS_AS(parse(""), ParseError);
  CHECK_THROWS_AS(parse("model,fold\n"), ParseError);
  try {
    parse("model,repeat,fold,stratum,metric,value\na,1,1,ALL,ccc,0.5\na,1,x,ALL,ccc,0.5\n");
    FAIL("expected a parse error");
  } catch (const ParseError &e) {
    CHECK(e.location() == 3);
  }
  CHECK_THROWS_AS(parse("model,repeat,fold,stratum,metric,value\na,0,1,ALL,ccc,0.5\n"), ParseError);
  CHECK_THROWS_AS(parse("model,repeat,fold,stratum,metric,value\na,1,1,ALL,ccc\n"), ParseError);
  CHECK_THROWS_AS(parse("model,repeat,fold,stratum,metric,value\na,1,1,ALL,ccc,nan\n"), NumericError);
  CHECK_THROWS_AS(report::load_scores("/nonexistent/scores.csv"), MissingArtifactError);
}

TEST_CASE("bundled score fixture gives the hand-checked Tukey matrix", "[report][tukey]") {
  const auto m = report::load_scores(std::string(QTA_TEST_DATA) + "/fixtures/scores_toy.csv");
  CHECK(m.size() == 75);
  const auto models = report::models_of(m);
  REQUIRE(models == std::vector<std::string>{"SG-8-12", "SG-8-5", "SFC2"});
  const auto t = report::compare(m, models, "ccc");
  // reference values from an independent studentized-range implementation
  CHECK(t.mse == Approx(5.8333333333333075e-05).epsilon(1e-9));
  CHECK(t.msd == Approx(0.013802767257295637).epsilon(1e-6));
  CHECK(t.p_reported[0][1] == Approx(0.008096).margin(2e-6));
  CHECK(t.p_reported[0][2] == 0.001);
  CHECK(t.p_reported[1][2] == 0.001);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(t.p_reported[i][i] == 1.0);
    CHECK(t.ci_half[i] == Approx(0.019632).margin(1e-6));
    for (std::size_t j = 0; j < 3; ++j)
      CHECK(t.p_reported[i][j] == t.p_reported[j][i]);
  }
  std::ostringstream csv;
  report::tukey_csv(csv, t);
  CHECK(csv.str().rfind("model,SG-8-12,SG-8-5,SFC2,mean,ci95_half_width\n"
                        "SG-8-12,1.0000,0.0081,0.0010,0.800000,0.019632\n",
                        0) == 0);
  const auto text = report::render_tukey(t);
  CHECK(text.find("MSD = 0.0138") != std::string::npos);
}

TEST_CASE("diagnostics table", "[report]") {
  const auto m = report::load_scores(std::string(QTA_TEST_DATA) + "/fixtures/scores_toy.csv");
  const auto d = report::diagnostics(m, report::models_of(m), "ccc", {"ALL"});
  REQUIRE(d.size() == 3);
  // each repeat holds the same five fold deviations, so ICC is identical across models
  const auto f = stats::fold_scores(m, "SG-8-12", "ccc");
  CHECK(d[0].icc_mean == Approx(stats::icc1(f).icc).epsilon(1e-12));
  CHECK(d[0].icc_mean == Approx(d[2].icc_mean).epsilon(1e-9));
  CHECK(d[0].n_eff_mean == Approx(stats::n_eff(stats::icc1(f).icc)).epsilon(1e-12));
  CHECK(d[0].strata == 1);
  std::ostringstream os;
  report::diagnostics_csv(os, d);
  CHECK(os.str().rfind("model,icc_mean,icc_sd,n_eff,sw_pass_pct,levene_pass_pct,strata\n", 0) == 0);
}
