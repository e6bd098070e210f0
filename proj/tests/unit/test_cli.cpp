#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "bnf/error.hpp"
#include "commands.hpp"
#include "config.hpp"

using namespace bnf;
using namespace bnf::cli;
namespace fs = std::filesystem;

namespace {

const char* kTinyToml = R"(
[system]
kind = "vanderpol"
dt = 0.3
mu = 1.0

[init]
mean = [0.2, 0.1]
cov = [[0.2, 0.0], [0.0, 0.2]]

[data]
initials = 300
trajectories = 100
horizon = 4
seed = 1
test_samples = 500
test_seed = 9

[initial]
degree = 5
epochs = 15
degree_raise = 3
seed = 11

[transition]
degree = 4
epochs = 3
batch_size = 256
seed = 12

[propagate]
horizon = 3

[export]
x1 = [-3.0, 3.0]
x2 = [-3.0, 3.0]
nx = 8
ny = 6
mc_samples = 10000
mc_seed = 5

[evaluate]
k = 2
boxes = [[[-1.0, 1.0], ["-inf", "inf"]]]
)";

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() /
            ("bnf_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
    fs::create_directories(root_);
    config_ = root_ / "tiny.toml";
    std::ofstream(config_) << kTinyToml;
  }
  void TearDown() override { fs::remove_all(root_); }

  int run(std::vector<std::string> args) {
    args.insert(args.begin(), "bnf");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    out_.str("");
    err_.str("");
    return run_cli(static_cast<int>(argv.size()), argv.data(), out_, err_);
  }
  int run_pipeline(const fs::path& dir) {
    return run({"-c", config_.string(), "-o", dir.string(), "-q", "--log-every", "0", "run"});
  }

  fs::path root_;
  fs::path config_;
  std::ostringstream out_;
  std::ostringstream err_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t count_lines(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

}  // namespace

TEST_F(CliTest, RunWritesAllArtifacts) {
  const fs::path dir = root_ / "a";
  ASSERT_EQ(run_pipeline(dir), 0) << err_.str();
  RunPaths p{dir};
  for (const auto& f : {p.train(), p.test(0), p.test(3), p.model(ModelRole::Initial), p.model(ModelRole::Transition),
                        p.training_log(ModelRole::Initial), p.belief(0), p.belief(3), p.grid(3), p.mc_grid(3),
                        p.metrics(), p.manifest("generate"), p.manifest("propagate")})
    EXPECT_TRUE(fs::exists(f)) << f;
  EXPECT_FALSE(fs::exists(p.belief(4)));
  EXPECT_FALSE(fs::exists(p.test(4)));
  // header, window line and 8 x 6 grid rows
  EXPECT_EQ(count_lines(slurp(p.grid(3))), 2u + 48u);
  EXPECT_EQ(count_lines(slurp(p.metrics())), 5u);
}

TEST_F(CliTest, RerunIsBitwiseIdentical) {
  ASSERT_EQ(run_pipeline(root_ / "a"), 0) << err_.str();
  ASSERT_EQ(run_pipeline(root_ / "b"), 0) << err_.str();
  RunPaths a{root_ / "a"}, b{root_ / "b"};
  EXPECT_EQ(slurp(a.train()), slurp(b.train()));
  EXPECT_EQ(slurp(a.test(2)), slurp(b.test(2)));
  EXPECT_EQ(slurp(a.model(ModelRole::Initial)), slurp(b.model(ModelRole::Initial)));
  EXPECT_EQ(slurp(a.model(ModelRole::Transition)), slurp(b.model(ModelRole::Transition)));
  EXPECT_EQ(slurp(a.belief(3)), slurp(b.belief(3)));
  EXPECT_EQ(slurp(a.grid(2)), slurp(b.grid(2)));
  EXPECT_EQ(slurp(a.mc_grid(2)), slurp(b.mc_grid(2)));
}

TEST_F(CliTest, EvaluateWholeSpaceIsOne) {
  const fs::path dir = root_ / "a";
  ASSERT_EQ(run_pipeline(dir), 0) << err_.str();
  ASSERT_EQ(run({"-c", config_.string(), "-o", dir.string(), "evaluate", "--box", "-inf,inf,-inf,inf"}), 0)
      << err_.str();
  std::istringstream lines(out_.str());
  std::string header, row;
  std::getline(lines, header);
  std::getline(lines, row);
  EXPECT_EQ(header.rfind("box,probability", 0), 0u);
  const double prob = std::stod(row.substr(row.rfind(',') + 1));
  EXPECT_NEAR(prob, 1.0, 1e-9);
}

TEST_F(CliTest, SampleAndKs) {
  const fs::path dir = root_ / "a";
  ASSERT_EQ(run_pipeline(dir), 0) << err_.str();
  RunPaths p{dir};
  ASSERT_EQ(run({"sample", "--model", p.model(ModelRole::Initial).string(), "-n", "17", "--seed", "4"}), 0);
  EXPECT_EQ(count_lines(out_.str()), 18u);
  const std::string first = out_.str();
  ASSERT_EQ(run({"sample", "--model", p.model(ModelRole::Initial).string(), "-n", "17", "--seed", "4"}), 0);
  EXPECT_EQ(out_.str(), first);

  ASSERT_EQ(run({"sample", "--model", p.model(ModelRole::Transition).string(), "-n", "5", "--given", "0.5,-1"}), 0);
  EXPECT_EQ(count_lines(out_.str()), 6u);
  EXPECT_EQ(run({"sample", "--model", p.model(ModelRole::Transition).string(), "-n", "5"}), 2);

  ASSERT_EQ(run({"sample", "--model", p.belief(2).string(), "-n", "9"}), 0);
  EXPECT_EQ(count_lines(out_.str()), 10u);

  ASSERT_EQ(run({"ks", "--model", p.model(ModelRole::Initial).string(), "-n", "20000", "--threshold", "0.02"}), 0)
      << out_.str() << err_.str();
  EXPECT_EQ(count_lines(out_.str()), 3u);
  ASSERT_EQ(run({"ks", "--model", p.belief(3).string(), "-n", "20000", "--threshold", "0.02"}), 0)
      << out_.str() << err_.str();
}

TEST_F(CliTest, ExitCodes) {
  EXPECT_EQ(run({"--no-such-flag", "run"}), 2);
  EXPECT_EQ(run({"-c", config_.string(), "--set", "initial.nonsense=1", "generate"}), 2);
  EXPECT_EQ(run({"-c", config_.string(), "--set", "initial.degree=0", "generate"}), 2);
  EXPECT_EQ(run({"-c", (root_ / "missing.toml").string(), "generate"}), 4);
  EXPECT_EQ(run({"sample", "--model", (root_ / "missing.json").string()}), 4);
  EXPECT_EQ(run({"-c", config_.string(), "-o", (root_ / "empty").string(), "fit", "initial"}), 4);

  const fs::path dir = root_ / "a";
  ASSERT_EQ(run_pipeline(dir), 0) << err_.str();
  RunPaths p{dir};
  std::string text = slurp(p.model(ModelRole::Initial));
  text[text.size() / 2] = text[text.size() / 2] == '1' ? '2' : '1';
  const fs::path corrupt = root_ / "corrupt.json";
  std::ofstream(corrupt, std::ios::binary) << text;
  EXPECT_EQ(run({"sample", "--model", corrupt.string()}), 4);
  EXPECT_EQ(run({"-c", config_.string(), "-o", dir.string(), "evaluate", "--box", "1,0,-inf,inf"}), 2);
  EXPECT_EQ(run({"-c", config_.string(), "-o", dir.string(), "evaluate", "--box", "0,1"}), 2);
  // the tiny model is far from the true k = 2 distribution
  EXPECT_EQ(run({"-c", config_.string(), "-o", dir.string(), "evaluate", "--box", "-0.5,0.5,-0.5,0.5", "--mc-check"}), 3);
}

TEST(Config, TomlAndJsonAgree) {
  const fs::path dir = fs::temp_directory_path() / "bnf_cli_config";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::ofstream(dir / "c.toml") << kTinyToml;
  const json tree = read_config_tree(dir / "c.toml");
  std::ofstream(dir / "c.json") << tree.dump(2);
  const ExperimentConfig a = load_config(dir / "c.toml", {});
  const ExperimentConfig b = load_config(dir / "c.json", {});
  EXPECT_EQ(a.source, b.source);
  EXPECT_EQ(a.initial.degree, b.initial.degree);
  EXPECT_EQ(a.boxes.size(), 1u);
  EXPECT_EQ(a.boxes[0].sides[1].hi, std::numeric_limits<double>::infinity());
  fs::remove_all(dir);
}

TEST(Config, OverridesApplyBeforeDecoding) {
  const ExperimentConfig c =
      load_config({}, {"initial.epochs=7", "system.kind=\"oscillator\"", "output.dir=somewhere", "transition.degree=[3,5]"});
  EXPECT_EQ(c.initial.train.epochs, 7);
  EXPECT_EQ(c.system.kind, SystemKind::StableOscillator);
  EXPECT_EQ(c.output_dir, fs::path("somewhere"));
  EXPECT_EQ(c.transition.degree, (DegreeVector{3, 5}));
  EXPECT_THROW(load_config({}, {"bogus.key=1"}), ConfigError);
  EXPECT_THROW(load_config({}, {"initial.epochs"}), ConfigError);
  EXPECT_THROW(load_config({}, {"initial.learning_rate=-1"}), ConfigError);
}
