#include <gtest/gtest.h>

#include <sstream>

#include "sglpanel/config.hpp"
#include "sglpanel/io.hpp"
#include "sglpanel/simulate.hpp"

using namespace sglpanel;

namespace {

const char* kHeader = "entity,period,subperiod,variable,value\n";

std::string tiny_csv() {
  std::ostringstream os;
  os << kHeader;
  for (int i = 1; i <= 2; ++i)
    for (int t = 2001; t <= 2003; ++t) {
      os << "e" << i << "," << t << ",1,y," << i * 10 + t - 2000 << "\n";
      for (int s = 1; s <= 3; ++s) os << "e" << i << "," << t << "," << s << ",x," << i + 0.1 * s + t - 2000 << "\n";
      os << "e" << i << "," << t << ",1,z," << -i << "\n";
    }
  return os.str();
}

std::string error_of(const std::string& text) {
  std::istringstream in(text);
  try {
    io::read_panel_csv(in);
  } catch (const InputError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(PanelCsv, ReadsLongFormat) {
  std::istringstream in(tiny_csv());
  const auto d = io::read_panel_csv(in, 0, 1);
  EXPECT_EQ(d.N(), 2);
  EXPECT_EQ(d.T(), 3);
  EXPECT_EQ(d.entities, (std::vector<std::string>{"e1", "e2"}));
  EXPECT_EQ(d.periods, (std::vector<long long>{2001, 2002, 2003}));
  ASSERT_EQ(d.covariates.size(), 2u);
  EXPECT_EQ(d.covariates[0].name, "x");
  EXPECT_EQ(d.covariates[0].m, 3);
  EXPECT_EQ(d.covariates[1].m, 1);
  EXPECT_EQ(d.y(1, 2), 23.0);
  EXPECT_DOUBLE_EQ(d.covariates[0].lags[1](0, 2), 2.0 + 0.3 + 1.0);
  EXPECT_EQ(d.response_lags, 1);
}

TEST(PanelCsv, RowOrderIrrelevant) {
  std::istringstream a(tiny_csv());
  std::string body = tiny_csv().substr(std::string(kHeader).size());
  std::vector<std::string> lines;
  std::istringstream bs(body);
  for (std::string l; std::getline(bs, l);) lines.push_back(l);
  std::reverse(lines.begin(), lines.end());
  std::string rev = kHeader;
  for (const auto& l : lines) rev += l + "\n";
  std::istringstream b(rev);
  const auto x = io::read_panel_csv(a);
  const auto y = io::read_panel_csv(b);
  EXPECT_EQ(y.periods, x.periods);
  // entities and variables keep first-appearance order
  EXPECT_EQ(y.entities.front(), "e2");
  EXPECT_EQ(y.covariates[0].name, "z");
  EXPECT_EQ(y.y.row(0), x.y.row(1));
  EXPECT_EQ(y.covariates[1].lags[0], x.covariates[0].lags[1]);
  EXPECT_EQ(y.covariates[0].lags[1], x.covariates[1].lags[0]);
}

TEST(PanelCsv, RoundTrip) {
  DgpConfig c;
  c.N = 3;
  c.T = 6;
  c.K = 2;
  c.m = 3;
  c.seed = 4;
  const auto d = simulate_panel(c);
  std::ostringstream out;
  io::write_panel_csv(out, d);
  std::istringstream in(out.str());
  const auto e = io::read_panel_csv(in, 0, 1);
  EXPECT_EQ(e.y, d.y);
  for (int k = 0; k < 2; ++k)
    for (int i = 0; i < 3; ++i) EXPECT_EQ(e.covariates[k].lags[i], d.covariates[k].lags[i]);
  std::ostringstream again;
  io::write_panel_csv(again, e);
  EXPECT_EQ(again.str(), out.str());
}

TEST(PanelCsv, ErrorsNameTheLine) {
  const std::string good = tiny_csv();
  EXPECT_EQ(error_of(""), "empty input: no header");
  EXPECT_NE(error_of("a,b,c\n").find("line 1"), std::string::npos);
  EXPECT_NE(error_of(std::string(kHeader) + "e1,2001,1,y\n").find("line 2"), std::string::npos);
  EXPECT_NE(error_of(std::string(kHeader) + "e1,2001,1,y,1\ne1,x,1,z,1\n").find("line 3: period"), std::string::npos);
  EXPECT_NE(error_of(std::string(kHeader) + "e1,1,0,x,1\n").find("subperiod"), std::string::npos);
  EXPECT_NE(error_of(std::string(kHeader) + "e1,1,1,y,nan\n").find("finite"), std::string::npos);
  EXPECT_NE(error_of(std::string(kHeader) + "e1,1,2,y,1\n").find("response"), std::string::npos);
  EXPECT_NE(error_of(good + "e1,2001,1,y,5\n").find("duplicate cell (e1, 2001, y, 1)"), std::string::npos);
  const std::string dropped = good.substr(0, good.rfind("e2,2003,3,x"));
  EXPECT_NE(error_of(dropped).find("missing (e2, 2003, x, 3)"), std::string::npos);
}

TEST(Artifacts, FitRoundTrip) {
  DesignProblem p;
  p.N = 2;
  p.T = 3;
  p.X = Eigen::MatrixXd::Random(6, 3);
  p.y = Eigen::VectorXd::Random(6);
  p.groups = GroupStructure::contiguous({2, 1});
  p.blocks = p.groups;
  p.column_names = {"a", "b", "c"};
  p.column_scales = Eigen::VectorXd::Ones(3);
  const auto f = fit_pooled(p, 0.01, 0.4);
  const auto art = io::make_fit_artifact(p, f, "pooled-sgl");
  EXPECT_EQ(art.coefficients.size(), 3u);
  EXPECT_EQ(art.coefficients[2].group, p.groups.labels[1]);
  EXPECT_EQ(art.groups[0].columns, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(art.residuals.n, 6);
  const auto text = io::to_json_text(art);
  EXPECT_EQ(io::from_json_text<io::FitArtifact>(text), art);
  EXPECT_EQ(io::to_json_text(io::from_json_text<io::FitArtifact>(text)), text);
}

TEST(Artifacts, SchemaChecked) {
  io::CvArtifact a;
  a.table.push_back({0.1, 0.5, 2.0, {1.0, 3.0}});
  auto j = nlohmann::json::parse(io::to_json_text(a));
  EXPECT_EQ(io::from_json_text<io::CvArtifact>(j.dump()), a);
  j["schema_version"] = 2;
  EXPECT_THROW(io::from_json_text<io::CvArtifact>(j.dump()), InputError);
  EXPECT_THROW(io::from_json_text<io::CvArtifact>("{"), InputError);
  EXPECT_THROW(io::from_json_text<io::CvArtifact>("{\"schema_version\":1}"), InputError);
}

TEST(Artifacts, TestTable) {
  io::TestArtifact a;
  io::TestCell c;
  c.covariate = "x1";
  c.kernel = "parzen";
  c.bandwidth = 10;
  c.status = "ok";
  c.p_value = 0.25;
  a.cells.push_back(c);
  c.kernel = "qs";
  c.status = "singular";
  a.cells.push_back(c);
  const auto t = io::test_table(a);
  EXPECT_NE(t.find("parzen/10"), std::string::npos);
  EXPECT_NE(t.find("0.250"), std::string::npos);
  EXPECT_NE(t.find("sing."), std::string::npos);
  EXPECT_EQ(io::from_json_text<io::TestArtifact>(io::to_json_text(a)), a);
}

TEST(Config, DefaultsParse) {
  const auto c = config::parse(config::defaults());
  EXPECT_FALSE(c.seed);
  EXPECT_EQ(c.estimator, "pooled-sgl");
  EXPECT_EQ(c.grid.dgp.N, 30);
  EXPECT_EQ(c.grid.dgp.relevant_covariate, 0);
  ASSERT_EQ(c.grid.scales.size(), 4u);
  EXPECT_EQ(c.grid.scales[3], 1.0 / 3.0);
  EXPECT_EQ(c.grid.replications, 500);
}

TEST(Config, SetOverrides) {
  auto t = config::defaults();
  config::apply_set(t, "simulate.dgp.N=7");
  config::apply_set(t, "model.estimator=lasso-umidas");
  config::apply_set(t, "simulate.scales=[\"1/4\", 0.5]");
  config::apply_set(t, "cv.gammas=[0.25]");
  config::apply_set(t, "model.lambda=\"1/8\"");
  config::apply_set(t, "test.covariates=[x2, x3]");
  config::apply_set(t, "test.bandwidths=[5,1/2]");
  const auto c = config::parse(t);
  EXPECT_EQ(c.grid.dgp.N, 7);
  EXPECT_EQ(c.estimator, "lasso-umidas");
  EXPECT_EQ(c.grid.scales, (std::vector<double>{0.25, 0.5}));
  EXPECT_EQ(c.cv.gammas, (std::vector<double>{0.25}));
  EXPECT_EQ(*c.lambda, 0.125);
  EXPECT_EQ(c.test_covariates, (std::vector<std::string>{"x2", "x3"}));
  EXPECT_EQ(c.bandwidths, (std::vector<double>{5.0, 0.5}));
}

TEST(Config, RejectsUnknownAndBadValues) {
  auto t = config::defaults();
  EXPECT_THROW(config::apply_set(t, "model.lamda=1"), InputError);
  EXPECT_THROW(config::apply_set(t, "nothing"), InputError);
  EXPECT_THROW(config::merge(t, nlohmann::json{{"simulate", {{"dgp", {{"Q", 1}}}}}}), InputError);
  auto u = config::defaults();
  config::apply_set(u, "model.estimator=ols");
  EXPECT_THROW(config::parse(u), InputError);
  auto v = config::defaults();
  config::apply_set(v, "simulate.scales=[\"1/x\"]");
  EXPECT_THROW(config::parse(v), InputError);
  auto w = config::defaults();
  config::apply_set(w, "cv.n_folds=1");
  EXPECT_THROW(config::parse(w), InputError);
  EXPECT_THROW(config::load_file("/nonexistent/config.json"), InputError);
}
