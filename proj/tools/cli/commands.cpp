#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include "bnf/error.hpp"
#include "bnf/io.hpp"

namespace bnf::cli {

namespace fs = std::filesystem;

namespace {

std::string role_name(ModelRole r) { return r == ModelRole::Initial ? "initial" : "transition"; }

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string short_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void write_training_log(const fs::path& path, const std::vector<EpochRecord>& history) {
  fs::create_directories(path.parent_path());
  std::string csv = "epoch,mean_nll,penalty,wall_time_s\n";
  for (const auto& r : history)
    csv += std::to_string(r.epoch) + "," + num(r.mean_nll) + "," + num(r.penalty) + "," + num(r.wall_seconds) + "\n";
  std::ofstream f(path, std::ios::binary);
  f << csv;
  if (!f) throw IoError("cannot write '" + path.string() + "'");
}

// Files that exist among `rel` plus any binary sidecars, relative to root.
std::vector<std::string> existing(const fs::path& root, const std::vector<fs::path>& files) {
  std::vector<std::string> out;
  for (const auto& f : files) {
    const fs::path rel = fs::relative(f, root);
    out.push_back(rel.generic_string());
    fs::path bin = f;
    bin += ".bin";
    if (fs::exists(bin)) out.push_back(fs::relative(bin, root).generic_string());
  }
  return out;
}

void manifest(const RunPaths& p, const std::string& step, const ExperimentConfig& cfg, const Context& ctx,
              std::map<std::string, std::uint64_t> seeds, const std::vector<fs::path>& files) {
  RunManifest m;
  m.tool_version = BNF_VERSION;
  m.command = ctx.command_line;
  m.config_json = cfg.source.dump();
  m.seeds = std::move(seeds);
  m.created = utc_timestamp();
  write_manifest(p.manifest(step), std::move(m), existing(p.root, files));
}

UnitData unit_data(const DiagonalTransform& t, const PointSet& target, const PointSet* given) {
  UnitData d{map_points(t, target).u, given ? map_points(t, *given).u : PointSet()};
  return d;
}

double mean_log_det(const DiagonalTransform& t, const PointSet& x) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += t.log_det_jacobian(x[i]);
  return s / static_cast<double>(x.size());
}

// First `limit` points of a set.
PointSet head(const PointSet& p, std::size_t limit) {
  const std::size_t n = std::min(limit, p.size());
  return PointSet(p.dim(), std::vector<double>(p.data().begin(), p.data().begin() + static_cast<std::ptrdiff_t>(n * static_cast<std::size_t>(p.dim()))));
}

constexpr std::size_t kHeldOutLimit = 2000;

std::string box_text(const StateBox& b) {
  std::string s;
  for (const auto& side : b.sides) s += (s.empty() ? "" : ";") + short_num(side.lo) + ":" + short_num(side.hi);
  return s;
}

bool inside(const StateBox& b, std::span<const double> x) {
  for (std::size_t i = 0; i < b.sides.size(); ++i)
    if (!(x[i] >= b.sides[i].lo && x[i] <= b.sides[i].hi)) return false;
  return true;
}

}  // namespace

fs::path RunPaths::test(int k) const { return root / "data" / ("test_k" + std::to_string(k) + ".csv"); }
fs::path RunPaths::model(ModelRole role) const { return root / "models" / (role_name(role) + ".json"); }
fs::path RunPaths::training_log(ModelRole role) const { return root / "logs" / ("fit_" + role_name(role) + ".csv"); }
fs::path RunPaths::belief(int k) const { return root / "beliefs" / ("belief_k" + std::to_string(k) + ".json"); }
fs::path RunPaths::grid(int k) const { return root / "grids" / ("bnf_k" + std::to_string(k) + ".csv"); }
fs::path RunPaths::mc_grid(int k) const { return root / "grids" / ("mc_k" + std::to_string(k) + ".csv"); }

void cmd_generate(const ExperimentConfig& cfg, Context& ctx) {
  const RunPaths p{resolve_output(cfg.output_dir)};
  const auto t0 = std::chrono::steady_clock::now();
  const Dataset d = generate(cfg.system, cfg.data);
  save_dataset(p.train(), d);
  std::vector<fs::path> files{p.train(), fs::path(p.train().string() + ".meta.json")};

  // Held-out Monte Carlo states for k = 0..max(horizon, evaluate.k), index-aligned across k.
  const int last = std::max(cfg.horizon, cfg.evaluate_k);
  const auto test = mc_trajectories(cfg.system, cfg.data.init, last, cfg.test_samples, cfg.test_seed);
  for (int k = 0; k <= last; ++k) {
    write_points_csv(p.test(k), test[static_cast<std::size_t>(k)]);
    files.push_back(p.test(k));
  }
  manifest(p, "generate", cfg, ctx, {{"data", cfg.data.seed}, {"test", cfg.test_seed}}, files);
  ctx.out << "generated " << d.initials.size() << " initial states and " << d.from.size() << " transition pairs ("
          << to_string(cfg.system.kind) << ", seed " << cfg.data.seed << ") plus " << cfg.test_samples
          << " held-out trajectories in " << short_num(seconds_since(t0)) << " s\n";
  ctx.out << "wrote " << p.train().string() << "\n";
}

void cmd_fit(const ExperimentConfig& cfg, ModelRole role, Context& ctx) {
  const RunPaths p{resolve_output(cfg.output_dir)};
  const Dataset d = load_dataset(p.train());
  const DiagonalTransform t = build_transform(cfg, d.all_states());
  const ModelConfig& mc = role == ModelRole::Initial ? cfg.initial : cfg.transition;
  const std::string name = role_name(role);

  ctx.log << "fitting " << name << " model, degree " << mc.degree[0];
  for (std::size_t i = 1; i < mc.degree.size(); ++i) ctx.log << "x" << mc.degree[i];
  ctx.log << ", " << mc.train.epochs << " epochs" << (mc.train.relaxed() ? " (relaxed)" : "") << "\n";
  const EpochCallback progress = [&](const EpochRecord& r) {
    if (ctx.log_every > 0 && (r.epoch % ctx.log_every == 0 || r.epoch == 1 || r.epoch == mc.train.epochs))
      ctx.log << "  " << name << " epoch " << r.epoch << "  nll " << short_num(r.mean_nll) << "  penalty "
              << short_num(r.penalty) << "  " << short_num(r.wall_seconds) << " s\n";
  };

  const fs::path model_path = p.model(role);
  std::vector<EpochRecord> history;
  std::size_t clamped = 0;
  double heldout = std::numeric_limits<double>::quiet_NaN();
  if (role == ModelRole::Initial) {
    auto r = train_relaxed_initial(d.initials, t, mc.degree, mc.train, progress);
    save_model(model_path, r.model, t, SaveOptions{cfg.binary_payload});
    history = std::move(r.history);
    clamped = r.clamped_points;
    if (fs::exists(p.test(0))) {
      const PointSet x = head(read_points_csv(p.test(0)), kHeldOutLimit);
      heldout = -mean_nll(r.model.layout(), r.model.factors(), unit_data(t, x, nullptr)) + mean_log_det(t, x);
    }
  } else {
    auto r = train_relaxed_transition(d.from, d.to, t, mc.degree, mc.train, progress);
    save_model(model_path, r.model, t, SaveOptions{cfg.binary_payload});
    history = std::move(r.history);
    clamped = r.clamped_points;
    // Held-out transitions are consecutive states of the test trajectories.
    double total = 0.0;
    int steps = 0;
    for (int k = 0; fs::exists(p.test(k + 1)); ++k) {
      const PointSet a = head(read_points_csv(p.test(k)), kHeldOutLimit);
      const PointSet b = head(read_points_csv(p.test(k + 1)), kHeldOutLimit);
      total += -mean_nll(r.model.layout(), r.model.factors(), unit_data(t, b, &a)) + mean_log_det(t, b);
      ++steps;
    }
    if (steps > 0) heldout = total / steps;
  }
  write_training_log(p.training_log(role), history);
  manifest(p, "fit_" + name, cfg, ctx, {{"train", mc.train.seed}, {"data", cfg.data.seed}},
           {model_path, p.training_log(role)});

  const double first = history.empty() ? 0.0 : history.front().mean_nll;
  const double final_nll = history.empty() ? 0.0 : history.back().mean_nll;
  ctx.out << name << " model: epoch-1 nll " << short_num(first) << ", final nll " << short_num(final_nll)
          << ", held-out mean log-likelihood " << short_num(heldout) << ", clamped training points " << clamped << "\n";
  ctx.out << "wrote " << model_path.string() << "\n";
}

void cmd_propagate(const ExperimentConfig& cfg, Context& ctx) {
  const RunPaths p{resolve_output(cfg.output_dir)};
  const StoredFlow init = load_flow(p.model(ModelRole::Initial));
  const StoredConditionalFlow tr = load_conditional_flow(p.model(ModelRole::Transition));
  if (!(init.transform == tr.transform))
    throw FormatError("initial and transition models were fitted with different transforms");
  if (tr.model.cond_dims() != init.model.dims()) throw FormatError("transition model does not match the initial model");

  const auto t0 = std::chrono::steady_clock::now();
  const TransitionOperator op(tr.model);
  const double build_s = seconds_since(t0);
  ctx.log << "transition tensor " << op.tensor().size() << " coefficients built in " << short_num(build_s) << " s\n";
  const Propagation pr = propagate(initial_belief(init.model, init.transform), op, cfg.horizon);

  std::vector<PointSet> mc;
  if (cfg.mc_grid_samples > 0) mc = mc_trajectories(cfg.system, cfg.data.init, cfg.horizon, cfg.mc_grid_samples, cfg.mc_seed);

  std::vector<MetricsRow> rows;
  std::vector<fs::path> files;
  for (const Belief& b : pr.beliefs) {
    const int k = b.k;
    save_belief(p.belief(k), b, SaveOptions{cfg.binary_payload});
    write_grid_csv(p.grid(k), belief_grid(b, cfg.window));
    files.push_back(p.belief(k));
    files.push_back(p.grid(k));
    if (!mc.empty()) {
      write_grid_csv(p.mc_grid(k), histogram_grid(mc[static_cast<std::size_t>(k)], cfg.window));
      files.push_back(p.mc_grid(k));
    }
    MetricsRow row{k, std::numeric_limits<double>::quiet_NaN(), b.certificate.mass_residual,
                   pr.step_seconds[static_cast<std::size_t>(k)]};
    if (fs::exists(p.test(k))) {
      const LikelihoodSummary s = log_likelihood(b, read_points_csv(p.test(k)));
      row.test_loglik = s.mean;
      if (s.nonpositive > 0) ctx.log << "  k=" << k << ": " << s.nonpositive << " test points with zero density\n";
    }
    rows.push_back(row);
    ctx.out << "k=" << k << "  degree " << b.density.degree(0);
    for (int a = 1; a < b.dims(); ++a) ctx.out << "x" << b.density.degree(a);
    ctx.out << "  test loglik " << short_num(row.test_loglik) << "  mass residual " << short_num(row.mass_residual)
            << "  " << short_num(row.wall_time_s) << " s\n";
  }
  write_metrics_csv(p.metrics(), rows);
  files.push_back(p.metrics());
  manifest(p, "propagate", cfg, ctx, {{"mc", cfg.mc_seed}, {"test", cfg.test_seed}}, files);
  ctx.out << "wrote " << pr.beliefs.size() << " beliefs and " << p.metrics().string() << "\n";
}

void cmd_evaluate(const ExperimentConfig& cfg, const EvaluateOptions& opts, Context& ctx) {
  const RunPaths p{resolve_output(cfg.output_dir)};
  const Belief b = load_belief(opts.belief.value_or(p.belief(cfg.evaluate_k)));
  std::vector<StateBox> boxes = !opts.boxes.empty() ? opts.boxes : cfg.boxes;
  if (boxes.empty()) boxes.push_back(StateBox::everywhere(b.dims()));
  for (const auto& box : boxes)
    if (box.dims() != b.dims()) throw ConfigError("box dimension does not match the belief");

  PointSet mc;
  if (opts.mc_check) {
    mc = std::move(mc_trajectories(cfg.system, cfg.data.init, b.k, cfg.evaluate_mc_samples, cfg.evaluate_mc_seed)
                       .back());
    ctx.out << "box,probability,mc_frequency,standard_error,within_3se\n";
  } else {
    ctx.out << "box,probability\n";
  }
  int misses = 0;
  for (const auto& box : boxes) {
    const double prob = evaluate(b, box);
    ctx.out << box_text(box) << "," << num(prob);
    if (opts.mc_check) {
      std::size_t hits = 0;
      for (std::size_t i = 0; i < mc.size(); ++i) hits += inside(box, mc[i]);
      const double n = static_cast<double>(mc.size());
      const double freq = static_cast<double>(hits) / n;
      // Standard error under the predicted probability, floored at one count.
      const double se = std::max(std::sqrt(prob * (1.0 - prob) / n), 1.0 / n);
      const bool ok = std::abs(freq - prob) <= 3.0 * se;
      misses += !ok;
      ctx.out << "," << num(freq) << "," << num(se) << "," << (ok ? "yes" : "no");
    }
    ctx.out << "\n";
  }
  if (misses > 0)
    throw NumericalError(std::to_string(misses) + " box(es) differ from Monte Carlo by more than 3 standard errors");
}

void cmd_sample(const SampleOptions& opts, Context& ctx) {
  const std::string kind = stored_kind(opts.model);
  Rng rng(opts.seed);
  PointSet x;
  if (kind == "flow") {
    const StoredFlow s = load_flow(opts.model);
    const PointSet u = sample(s.model, rng, opts.count);
    x = PointSet(u.dim());
    for (std::size_t i = 0; i < u.size(); ++i) x.push_back(s.transform.inverse(u[i]));
  } else if (kind == "conditional_flow") {
    const StoredConditionalFlow s = load_conditional_flow(opts.model);
    if (static_cast<int>(opts.given.size()) != s.model.cond_dims())
      throw ConfigError("sampling a transition model needs --given with one value per state dimension");
    const auto w = s.transform.forward(opts.given);
    const PointSet u = conditional_sample(s.model, w, rng, opts.count);
    x = PointSet(u.dim());
    for (std::size_t i = 0; i < u.size(); ++i) x.push_back(s.transform.inverse(u[i]));
  } else {
    x = sample_belief(load_belief(opts.model), rng, opts.count);
  }
  if (opts.output) {
    write_points_csv(*opts.output, x);
    ctx.out << "wrote " << x.size() << " samples to " << opts.output->string() << "\n";
  } else {
    ctx.out << "x1";
    for (int a = 1; a < x.dim(); ++a) ctx.out << ",x" << a + 1;
    ctx.out << "\n";
    for (std::size_t i = 0; i < x.size(); ++i) {
      for (int a = 0; a < x.dim(); ++a) ctx.out << (a ? "," : "") << num(x[i][static_cast<std::size_t>(a)]);
      ctx.out << "\n";
    }
  }
}

std::vector<double> cmd_ks(const KsOptions& opts, Context& ctx) {
  const std::string kind = stored_kind(opts.model);
  Rng rng(opts.seed);
  BernsteinTensor density;
  PointSet u;
  if (kind == "flow") {
    const FlowModel m = load_flow(opts.model).model;
    density = to_tensor(m);
    u = sample(m, rng, opts.count);
  } else if (kind == "belief") {
    const Belief b = load_belief(opts.model);
    density = b.density;
    u = sample_belief_unit(b, rng, opts.count);
  } else {
    throw ConfigError("ks needs a flow model or a belief file");
  }
  const double critical = 1.628 / std::sqrt(static_cast<double>(u.size()));
  ctx.out << "axis,ks,critical_0.01\n";
  std::vector<double> stats;
  for (int axis = 0; axis < density.dims(); ++axis) {
    // Exact marginal CDF of this axis from the density tensor.
    BernsteinTensor marg = density;
    for (int other = density.dims() - 1; other >= 0; --other)
      if (other != axis) marg = marginalize_axis(marg, other);
    const BernsteinTensor cdf = antiderivative_axis(marg, 0);
    std::vector<double> v(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) v[i] = u[i][static_cast<std::size_t>(axis)];
    std::sort(v.begin(), v.end());
    const double n = static_cast<double>(v.size());
    double ks = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double F = eval(cdf, std::span<const double>(&v[i], 1));
      ks = std::max({ks, std::abs(F - static_cast<double>(i) / n), std::abs(F - static_cast<double>(i + 1) / n)});
    }
    stats.push_back(ks);
    ctx.out << axis + 1 << "," << num(ks) << "," << num(critical) << "\n";
  }
  if (opts.threshold > 0.0)
    for (double ks : stats)
      if (ks >= opts.threshold)
        throw NumericalError("KS statistic " + short_num(ks) + " is not below " + short_num(opts.threshold));
  return stats;
}

void cmd_run(const ExperimentConfig& cfg, Context& ctx) {
  cmd_generate(cfg, ctx);
  cmd_fit(cfg, ModelRole::Initial, ctx);
  cmd_fit(cfg, ModelRole::Transition, ctx);
  cmd_propagate(cfg, ctx);
}

}  // namespace bnf::cli
