#include <exception>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "bnf/error.hpp"
#include "commands.hpp"

namespace bnf::cli {

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitIo = 4;

StateBox parse_box(const std::string& text) {
  // "lo,hi,lo,hi,..." with inf/-inf allowed.
  std::vector<double> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("--box '" + text + "': '" + item + "' is not a number");
    }
  }
  if (v.empty() || v.size() % 2) throw ConfigError("--box needs lo,hi pairs, one per state dimension");
  StateBox b;
  for (std::size_t i = 0; i < v.size(); i += 2) {
    if (!(v[i] <= v[i + 1])) throw ConfigError("--box '" + text + "': lo must not exceed hi");
    b.sides.push_back({v[i], v[i + 1]});
  }
  return b;
}

std::vector<double> parse_list(const std::string& text, const std::string& flag) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      v.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ConfigError(flag + " '" + text + "' is not a comma-separated list of numbers");
    }
  }
  return v;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bernstein normalizing flow Markov models: fit, propagate and evaluate beliefs.", "bnf"};
  app.set_version_flag("--version", BNF_VERSION);
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
  int log_every = 50;
  bool quiet = false;
  app.add_option("-c,--config", config_path, "Experiment config (.toml or .json)");
  app.add_option("--set", overrides, "Override a config value, e.g. --set initial.epochs=10 (repeatable)");
  app.add_option("-o,--out", out_dir, "Output directory (overrides output.dir; BNF_OUTPUT_ROOT prefixes relative paths)");
  app.add_option("--log-every", log_every, "Print training progress every N epochs (0 disables)");
  app.add_flag("-q,--quiet", quiet, "Suppress progress output");

  auto* gen = app.add_subcommand("generate", "Simulate the system and write training and held-out data");
  auto* fit = app.add_subcommand("fit", "Fit the initial or the transition model");
  std::string which;
  fit->add_option("which", which, "initial | transition")->required()->check(CLI::IsMember({"initial", "transition"}));
  auto* prop = app.add_subcommand("propagate", "Propagate beliefs for propagate.horizon steps and export grids");
  auto* eval_cmd = app.add_subcommand("evaluate", "Probability of state boxes under a belief");
  std::string belief_path;
  std::vector<std::string> box_texts;
  bool mc_check = false;
  eval_cmd->add_option("--belief", belief_path, "Belief file (default: the run's belief at evaluate.k)");
  eval_cmd->add_option("--box", box_texts, "Box as lo,hi per dimension, e.g. -1,1,-inf,0 (repeatable)");
  eval_cmd->add_flag("--mc-check", mc_check, "Compare with Monte Carlo frequencies of the true system");
  auto* samp = app.add_subcommand("sample", "Draw state-space samples from a model or belief file");
  SampleOptions so;
  std::string given_text, sample_out;
  samp->add_option("--model", so.model, "Flow, transition model or belief file")->required();
  samp->add_option("-n,--count", so.count, "Number of samples");
  samp->add_option("--seed", so.seed, "Random seed");
  samp->add_option("--given", given_text, "Conditioning state for a transition model, e.g. 0.5,-1");
  samp->add_option("--output", sample_out, "CSV file (default: stdout)");
  auto* ks = app.add_subcommand("ks", "Kolmogorov-Smirnov check of the sampler against exact marginal CDFs");
  KsOptions ko;
  ks->add_option("--model", ko.model, "Flow model or belief file")->required();
  ks->add_option("-n,--count", ko.count, "Number of samples");
  ks->add_option("--seed", ko.seed, "Random seed");
  ks->add_option("--threshold", ko.threshold, "Fail when a statistic reaches this value");
  auto* run = app.add_subcommand("run", "generate, fit initial, fit transition and propagate");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  std::ostringstream null_sink;
  std::string command_line;
  for (int i = 0; i < argc; ++i) command_line += (i ? " " : "") + std::string(argv[i]);
  Context ctx{out, quiet ? static_cast<std::ostream&>(null_sink) : err, log_every, command_line};

  try {
    auto config = [&] {
      std::vector<std::string> all = overrides;
      if (!out_dir.empty()) all.push_back("output.dir=" + nlohmann::json(out_dir).dump());
      return load_config(config_path, all);
    };
    if (*gen) cmd_generate(config(), ctx);
    if (*fit) cmd_fit(config(), which == "initial" ? ModelRole::Initial : ModelRole::Transition, ctx);
    if (*prop) cmd_propagate(config(), ctx);
    if (*eval_cmd) {
      EvaluateOptions eo;
      if (!belief_path.empty()) eo.belief = belief_path;
      for (const auto& t : box_texts) eo.boxes.push_back(parse_box(t));
      eo.mc_check = mc_check;
      cmd_evaluate(config(), eo, ctx);
    }
    if (*samp) {
      if (!given_text.empty()) so.given = parse_list(given_text, "--given");
      if (!sample_out.empty()) so.output = sample_out;
      cmd_sample(so, ctx);
    }
    if (*ks) cmd_ks(ko, ctx);
    if (*run) cmd_run(config(), ctx);
  } catch (const ConfigError& e) {
    err << "bnf: config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    err << "bnf: io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const NumericalError& e) {
    err << "bnf: numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const ContractError& e) {
    err << "bnf: invariant failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "bnf: io error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitOk;
}

}  // namespace bnf::cli
