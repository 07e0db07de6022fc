#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "covclt/io.hpp"
#include "covclt/model.hpp"

using namespace covclt;
using namespace covclt::io;

TEST(Csv, EscapesPerRfc4180) {
  EXPECT_EQ(csv_escape("plain"), "plain");
  EXPECT_EQ(csv_escape("a,b"), "\"a,b\"");
  EXPECT_EQ(csv_escape("say \"hi\""), "\"say \"\"hi\"\"\"");
  EXPECT_EQ(csv_escape("two\nlines"), "\"two\nlines\"");
}

TEST(Csv, WriterUsesCrlf) {
  const auto path = std::filesystem::temp_directory_path() / "covclt_csv_test.csv";
  {
    CsvWriter w(path.string());
    w.row({"x", "f(x)"});
    w.row({"1", "poly(1;2,0,4)"});
  }
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  EXPECT_EQ(ss.str(), "x,f(x)\r\n1,\"poly(1;2,0,4)\"\r\n");
  std::filesystem::remove(path);
}

TEST(Format, ShortestRoundTrip) {
  for (double x : {0.1, 1.0 / 3.0, -2.5e-300, 12345.678}) EXPECT_EQ(std::stod(fmt(x)), x);
  EXPECT_EQ(fmt(0.5), "0.5");
}

TEST(Grid, ParsesAndRejects) {
  const auto g = parse_grid("0:4:5");
  ASSERT_EQ(g.size(), 5u);
  EXPECT_DOUBLE_EQ(g[1], 1.0);
  EXPECT_TRUE(parse_grid("0:1:0").empty());
  EXPECT_THROW(parse_grid("0:1"), std::invalid_argument);
  EXPECT_THROW(parse_grid("1:0:5"), std::invalid_argument);
  EXPECT_THROW(parse_grid("a:b:c"), std::invalid_argument);
}

TEST(Config, RoundTripsThroughJson) {
  ExperimentConfig c;
  c.population = "two_atom(1,3,0.5)";
  c.N = 120;
  c.kappa = -1.0;
  c.z = {{1.0, 0.5}, {2.0, -0.1}};
  const auto back = ExperimentConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json().dump(), c.to_json().dump());
}

TEST(Config, RatioSetsDimensions) {
  const auto c = ExperimentConfig::from_json(Json::parse(R"({"N": 100, "c": 0.5})"));
  EXPECT_EQ(c.N, 100);
  EXPECT_EQ(c.n, 200);
  const auto d = ExperimentConfig::from_json(Json::parse(R"({"n": 100, "c": 2})"));
  EXPECT_EQ(d.N, 200);
}

TEST(Config, RejectsBadInput) {
  EXPECT_THROW(ExperimentConfig::from_json(Json::parse(R"({"Nn": 3})")), std::invalid_argument);
  ExperimentConfig c;
  c.method = "magic";
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.z = {{1.0, 0.0}};
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.population = "file:/nonexistent/model.json";
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Population, ParsesDescriptors) {
  EXPECT_EQ(parse_population("identity", 10, 20).c(), 0.5);
  const auto t = parse_population("two_atom(1,3,0.25)", 8, 8);
  EXPECT_EQ((t.eigenvalues().array() == 1.0).count(), 2);
  // Inline values repeat cyclically to fill N.
  EXPECT_EQ(parse_population("inline:1,2,3", 6, 12).eigenvalues()(4), 2.0);
  EXPECT_THROW(parse_population("banana", 10, 10), std::invalid_argument);
}

TEST(Population, ModelFileRoundTrip) {
  const auto path = (std::filesystem::temp_directory_path() / "covclt_model.json").string();
  Eigen::MatrixXcd r(2, 2);
  r << 2.0, Complex(0.0, 0.5), Complex(0.0, -0.5), 1.0;
  const auto m = PopulationModel::from_matrix(r, 5);
  save_model_file(m, path);
  const auto back = load_model_file(path);
  EXPECT_EQ(back.n(), 5);
  EXPECT_LT((back.matrix() - r).norm(), 1e-14);
  std::filesystem::remove(path);
}
