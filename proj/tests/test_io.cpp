#include "gkf/io.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <sstream>

using gkf::Mat;
using gkf::Vec;
namespace io = gkf::io;

namespace {

gkf::Trajectory small_trajectory() {
  gkf::ExperimentConfig c;
  c.horizon = 25;
  return gkf::simulate_experiment(c);
}

}  // namespace

TEST(TrajectoryCsv, HeaderAndEmptyCells) {
  std::ostringstream os;
  io::write_trajectory_csv(os, small_trajectory());
  std::istringstream is(os.str());
  std::string header, first, second;
  std::getline(is, header);
  std::getline(is, first);
  std::getline(is, second);
  EXPECT_EQ(header, "t,x_0,x_1,x_2,u_0,y_0,y_1,y_2");
  EXPECT_EQ(first.substr(first.size() - 3), ",,,");  // no observation of x_0
  EXPECT_EQ(os.str().back(), '\n');
  EXPECT_EQ(os.str().find('\r'), std::string::npos);
}

TEST(TrajectoryCsv, RoundTripIsBitExact) {
  const auto t = small_trajectory();
  std::ostringstream os;
  io::write_trajectory_csv(os, t);
  std::istringstream is(os.str());
  const auto back = io::read_trajectory_csv(is, t.seed);
  EXPECT_EQ(back.states, t.states);
  EXPECT_EQ(back.controls, t.controls);
  EXPECT_EQ(back.observations, t.observations);
}

TEST(TrajectoryCsv, MalformedInputs) {
  auto read = [](const std::string& text) {
    std::istringstream is(text);
    return io::read_trajectory_csv(is);
  };
  EXPECT_THROW(read(""), io::FormatError);
  EXPECT_THROW(read("x,x_0\n"), io::FormatError);
  EXPECT_THROW(read("t,x_0,u_0,y_0\n0,1,2,\n"), io::FormatError);                 // one row
  EXPECT_THROW(read("t,x_0,u_0,y_0\n0,1,2,\n1,1,,abc\n"), io::FormatError);       // bad number
  EXPECT_THROW(read("t,x_0,u_0,y_0\n0,1,2,\n1,1,\n"), io::FormatError);           // short row
  EXPECT_THROW(read("t,x_0,u_0,y_0\n0,1,2,\n2,1,,3\n"), io::FormatError);         // t gap
  EXPECT_THROW(read("t,u_0,x_0,y_0\n0,1,2,\n1,1,,3\n"), io::FormatError);         // order
  EXPECT_NO_THROW(read("t,x_0,u_0,y_0\n0,1,2,\n1,1,,3\n"));
}

TEST(ParseDouble, Strict) {
  EXPECT_EQ(io::parse_double(" 0.5 "), 0.5);
  EXPECT_TRUE(std::isinf(io::parse_double("inf")));
  EXPECT_THROW(io::parse_double("1.5x"), io::FormatError);
  EXPECT_THROW(io::parse_double(""), io::FormatError);
}

TEST(ResultsCsv, ColumnsAndRows) {
  gkf::ExperimentConfig c;
  c.horizon = 30;
  const auto r = gkf::run_tracking(c);
  std::ostringstream os;
  io::write_results_csv(os, r);
  std::istringstream is(os.str());
  std::string header, line;
  std::getline(is, header);
  EXPECT_EQ(header,
            "t,x_true_0,x_true_1,x_true_2,y_0,y_1,y_2,mu_kf_0,mu_kf_1,mu_kf_2,mu_gkf_0,mu_gkf_1,mu_gkf_2,loss");
  std::size_t rows = 0;
  while (std::getline(is, line)) {
    ++rows;
    EXPECT_EQ(io::split(line, ',').size(), 14u);
  }
  EXPECT_EQ(rows, 30u);
  EXPECT_EQ(io::results_file_name(c), "results_none_seed1_n5.csv");
}

TEST(BaselinesCsv, DivergedBaselineLeavesEmptyCells) {
  gkf::ExperimentResult r;
  r.records.push_back({1, Vec::Zero(1), Vec::Zero(1), Vec::Zero(1), Vec::Zero(1), 0.0});
  r.baselines.push_back({"frozen_random", {}, 1, INFINITY});
  r.baselines.push_back({"true_matrices", {Vec::Constant(1, 0.25)}, std::nullopt, 0.0});
  std::ostringstream os;
  io::write_baselines_csv(os, r);
  EXPECT_EQ(os.str(), "t,mu_frozen_random_0,mu_true_matrices_0\n1,,0.25\n");
}

TEST(MatrixDump, RoundTrip) {
  oracles::Rng g(1);
  const std::vector<io::NamedMatrix> ms = {{"A_hat_initial", g.matrix(3, 3)}, {"B_hat_final", g.matrix(3, 1)}};
  std::ostringstream os;
  io::write_matrices(os, ms);
  std::istringstream is(os.str());
  const auto back = io::read_matrices(is);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].name, "A_hat_initial");
  EXPECT_EQ(back[0].value, ms[0].value);
  EXPECT_EQ(back[1].value, ms[1].value);
  EXPECT_EQ(os.str().substr(0, 16), "A_hat_initial 3 ");

  std::istringstream bad("X 2 2\n1 2 3\n");
  EXPECT_THROW(io::read_matrices(bad), io::FormatError);
}

TEST(KeyValues, ParsesCommentsAndBlankLines) {
  std::istringstream is("# header\n\nseed = 7\nq_std=0.3  # inline\n  c_mode = random\n");
  const auto kv = io::parse_key_values(is);
  ASSERT_EQ(kv.size(), 3u);
  EXPECT_EQ(kv[0], (std::pair<std::string, std::string>{"seed", "7"}));
  EXPECT_EQ(kv[1], (std::pair<std::string, std::string>{"q_std", "0.3"}));
  EXPECT_EQ(kv[2], (std::pair<std::string, std::string>{"c_mode", "random"}));
}

TEST(KeyValues, Errors) {
  std::istringstream missing("seed 7\n");
  EXPECT_THROW(io::parse_key_values(missing), io::FormatError);
  std::istringstream empty_key(" = 7\n");
  EXPECT_THROW(io::parse_key_values(empty_key), io::FormatError);
}

TEST(KeyValues, WriteThenParse) {
  const io::KeyValues kv = {{"a", "1"}, {"b_c", "x y"}};
  std::ostringstream os;
  io::write_key_values(os, kv);
  EXPECT_EQ(os.str(), "a = 1\nb_c = x y\n");
  std::istringstream is(os.str());
  EXPECT_EQ(io::parse_key_values(is), kv);
}
