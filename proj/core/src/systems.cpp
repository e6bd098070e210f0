#include "bnf/systems.hpp"

#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "bnf/error.hpp"

namespace bnf {

using detail::require;

namespace {

Eigen::MatrixXd to_matrix(const std::vector<std::vector<double>>& m, int dims) {
  require(static_cast<int>(m.size()) == dims, "covariance has the wrong number of rows");
  Eigen::MatrixXd out(dims, dims);
  for (int i = 0; i < dims; ++i) {
    require(static_cast<int>(m[static_cast<std::size_t>(i)].size()) == dims, "covariance must be square");
    for (int j = 0; j < dims; ++j) out(i, j) = m[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  return out;
}

Eigen::MatrixXd cholesky(const std::vector<std::vector<double>>& cov, int dims) {
  const Eigen::MatrixXd m = to_matrix(cov, dims);
  require(m.allFinite(), "covariance must be finite");
  require((m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + m.cwiseAbs().maxCoeff()),
          "covariance must be symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  require(llt.info() == Eigen::Success, "covariance must be positive definite");
  return llt.matrixL();
}

// Gaussian draw through a precomputed Cholesky factor.
struct GaussianSampler {
  Eigen::VectorXd mean;
  Eigen::MatrixXd lower;

  GaussianSampler(const std::vector<double>& mu, const std::vector<std::vector<double>>& cov, int dims)
      : mean(Eigen::Map<const Eigen::VectorXd>(mu.data(), static_cast<Eigen::Index>(mu.size()))),
        lower(cholesky(cov, dims)) {
    require(static_cast<int>(mu.size()) == dims, "mean has the wrong dimension");
  }

  void draw(Rng& rng, std::span<double> out) const {
    const auto n = mean.size();
    Eigen::VectorXd z(n);
    for (Eigen::Index i = 0; i < n; ++i) z[i] = rng.normal();
    const Eigen::VectorXd x = mean + lower * z;
    for (Eigen::Index i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = x[i];
  }
};

class NoiseSampler {
 public:
  NoiseSampler(const NoiseSpec& spec, int dims) : dims_(dims) {
    spec.validate(dims);
    double acc = 0.0;
    for (const auto& c : spec.components) {
      parts_.emplace_back(c.mean, c.cov, dims);
      acc += c.weight;
      thresholds_.push_back(acc);
    }
  }

  void draw(Rng& rng, std::span<double> out) const {
    if (parts_.empty()) {
      std::fill(out.begin(), out.end(), 0.0);
      return;
    }
    std::size_t c = 0;
    if (parts_.size() > 1) {
      const double u = rng.uniform() * thresholds_.back();
      while (c + 1 < parts_.size() && u >= thresholds_[c]) ++c;
    }
    parts_[c].draw(rng, out);
  }

  int dims() const { return dims_; }

 private:
  int dims_;
  std::vector<GaussianSampler> parts_;
  std::vector<double> thresholds_;
};

void advance(const SystemSpec& spec, std::span<const double> x, std::span<const double> v, std::span<double> out) {
  const double dt = spec.dt;
  switch (spec.kind) {
    case SystemKind::VanDerPol:
      out[0] = x[0] + dt * x[1] + v[0];
      out[1] = x[1] + dt * (spec.mu * (1.0 - x[0] * x[0]) * x[1] - x[0]) + v[1];
      return;
    case SystemKind::StableOscillator:
      out[0] = x[0] + dt * (x[0] - x[0] * x[0] * x[0] - 0.5 * x[1]) + x[0] * v[0];
      out[1] = x[1] + dt * (x[1] - x[1] * x[1] * x[1] - 0.5 * x[0]) + x[1] * v[1];
      return;
    case SystemKind::Custom:
      spec.custom(x, v, out);
      return;
  }
}

void run_trajectory(const SystemSpec& spec, const NoiseSampler& noise, std::span<double> x, Rng& rng,
                    std::vector<double>& v, std::vector<double>& next) {
  noise.draw(rng, v);
  advance(spec, x, v, next);
  std::copy(next.begin(), next.end(), x.begin());
}

}  // namespace

std::string to_string(SystemKind kind) {
  switch (kind) {
    case SystemKind::VanDerPol: return "vanderpol";
    case SystemKind::StableOscillator: return "oscillator";
    case SystemKind::Custom: return "custom";
  }
  return "custom";
}

SystemKind system_kind_from_string(const std::string& name) {
  if (name == "vanderpol") return SystemKind::VanDerPol;
  if (name == "oscillator") return SystemKind::StableOscillator;
  if (name == "custom") return SystemKind::Custom;
  throw ConfigError("unknown system '" + name + "'");
}

NoiseSpec NoiseSpec::gaussian(std::vector<double> mean, std::vector<std::vector<double>> cov) {
  return NoiseSpec{{GaussianComponent{1.0, std::move(mean), std::move(cov)}}};
}

void NoiseSpec::validate(int dims) const {
  if (components.empty()) return;
  double total = 0.0;
  for (const auto& c : components) {
    require(c.weight > 0.0 && std::isfinite(c.weight), "mixture weights must be positive");
    require(static_cast<int>(c.mean.size()) == dims, "noise mean has the wrong dimension");
    cholesky(c.cov, dims);
    total += c.weight;
  }
  require(std::abs(total - 1.0) <= 1e-12, "mixture weights must sum to 1");
}

std::vector<double> NoiseSpec::sample(Rng& rng) const {
  const int dims = components.empty() ? 0 : static_cast<int>(components.front().mean.size());
  std::vector<double> out(static_cast<std::size_t>(dims));
  NoiseSampler(*this, dims).draw(rng, out);
  return out;
}

SystemSpec SystemSpec::vanderpol(double mu) {
  SystemSpec s;
  s.kind = SystemKind::VanDerPol;
  s.mu = mu;
  s.noise = NoiseSpec::gaussian({0.0, 0.0}, {{0.1, 0.0}, {0.0, 0.1}});
  return s;
}

SystemSpec SystemSpec::oscillator() {
  SystemSpec s;
  s.kind = SystemKind::StableOscillator;
  s.noise.components = {
      GaussianComponent{0.6, {0.0, 0.0}, {{0.03, 0.006}, {0.006, 0.03}}},
      GaussianComponent{0.4, {0.5, 0.5}, {{0.03, -0.006}, {-0.006, 0.03}}},
  };
  return s;
}

void SystemSpec::validate() const {
  require(dt > 0.0 && std::isfinite(dt), "dt must be positive");
  require(std::isfinite(mu), "mu must be finite");
  if (kind == SystemKind::Custom)
    require(static_cast<bool>(custom) && dims >= 1, "custom system needs a step function");
  else
    require(dims == 2, "built-in systems are two-dimensional");
  noise.validate(dims);
}

void GaussianInit::validate(int dims) const {
  require(static_cast<int>(mean.size()) == dims, "initial mean has the wrong dimension");
  cholesky(cov, dims);
}

std::vector<double> GaussianInit::sample(Rng& rng) const {
  const int dims = static_cast<int>(mean.size());
  std::vector<double> out(static_cast<std::size_t>(dims));
  GaussianSampler(mean, cov, dims).draw(rng, out);
  return out;
}

std::vector<double> step_with_noise(const SystemSpec& spec, std::span<const double> x, std::span<const double> v) {
  require(static_cast<int>(x.size()) == spec.dims && static_cast<int>(v.size()) == spec.dims,
          "step: state dimension mismatch");
  for (double c : x) require(std::isfinite(c), "step: state must be finite");
  std::vector<double> out(x.size());
  advance(spec, x, v, out);
  return out;
}

std::vector<double> step(const SystemSpec& spec, std::span<const double> x, Rng& rng) {
  std::vector<double> v(static_cast<std::size_t>(spec.dims), 0.0);
  if (!spec.noise.components.empty()) NoiseSampler(spec.noise, spec.dims).draw(rng, v);
  return step_with_noise(spec, x, v);
}

PointSet Dataset::all_states() const {
  PointSet out(initials.dim());
  out.reserve(initials.size() + from.size() + to.size());
  for (const PointSet* s : {&initials, &from, &to})
    for (std::size_t i = 0; i < s->size(); ++i) out.push_back((*s)[i]);
  return out;
}

void Dataset::validate() const {
  require(initials.dim() >= 1, "dataset has no initial states");
  require(from.dim() == initials.dim() && to.dim() == initials.dim(), "dataset dimensions differ");
  require(from.size() == to.size(), "dataset pair counts differ");
  require(meta.initials == initials.size(), "dataset metadata disagrees with the initial count");
  require(meta.trajectories * static_cast<std::size_t>(meta.horizon) == from.size(),
          "dataset metadata disagrees with the pair count");
  for (const PointSet* s : {&initials, &from, &to})
    for (double v : s->data()) require(std::isfinite(v), "dataset contains a non-finite entry");
}

Dataset generate(const SystemSpec& spec, const GenerateOptions& opts) {
  spec.validate();
  opts.init.validate(spec.dims);
  require(opts.initials > 0 && opts.trajectories > 0 && opts.horizon > 0, "generate: counts must be positive");
  const NoiseSampler noise(spec.noise, spec.dims);
  const GaussianSampler init(opts.init.mean, opts.init.cov, spec.dims);

  Dataset d{PointSet(spec.dims), PointSet(spec.dims), PointSet(spec.dims),
            DatasetMeta{to_string(spec.kind), opts.seed, opts.initials, opts.trajectories, opts.horizon}};
  std::vector<double> x(static_cast<std::size_t>(spec.dims));
  std::vector<double> v(x.size());
  std::vector<double> next(x.size());

  Rng init_rng = Rng::derive(opts.seed, 0);
  d.initials.reserve(opts.initials);
  for (std::size_t i = 0; i < opts.initials; ++i) {
    init.draw(init_rng, x);
    d.initials.push_back(x);
  }
  const std::size_t pairs = opts.trajectories * static_cast<std::size_t>(opts.horizon);
  d.from.reserve(pairs);
  d.to.reserve(pairs);
  for (std::size_t t = 0; t < opts.trajectories; ++t) {
    Rng rng = Rng::derive(opts.seed, 1 + t);
    init.draw(rng, x);
    for (int k = 0; k < opts.horizon; ++k) {
      d.from.push_back(x);
      run_trajectory(spec, noise, x, rng, v, next);
      d.to.push_back(x);
    }
  }
  return d;
}

std::vector<PointSet> mc_trajectories(const SystemSpec& spec, const GaussianInit& init, int horizon,
                                      std::size_t samples, std::uint64_t seed) {
  spec.validate();
  init.validate(spec.dims);
  require(horizon >= 0, "mc_trajectories: horizon must be >= 0");
  const NoiseSampler noise(spec.noise, spec.dims);
  const GaussianSampler start(init.mean, init.cov, spec.dims);
  std::vector<PointSet> out(static_cast<std::size_t>(horizon) + 1, PointSet(spec.dims));
  for (auto& p : out) p.reserve(samples);
  std::vector<double> x(static_cast<std::size_t>(spec.dims));
  std::vector<double> v(x.size());
  std::vector<double> next(x.size());
  for (std::size_t s = 0; s < samples; ++s) {
    Rng rng = Rng::derive(seed, s);
    start.draw(rng, x);
    out[0].push_back(x);
    for (int k = 1; k <= horizon; ++k) {
      run_trajectory(spec, noise, x, rng, v, next);
      out[static_cast<std::size_t>(k)].push_back(x);
    }
  }
  return out;
}

DensityGrid histogram_grid(const PointSet& points, const GridWindow& window) {
  window.validate();
  require(points.dim() == 2, "histogram_grid: points must be two-dimensional");
  DensityGrid g{window, std::vector<double>(static_cast<std::size_t>(window.nx) * window.ny, 0.0)};
  if (points.empty()) return g;
  const double w1 = (window.x1.hi - window.x1.lo) / window.nx;
  const double w2 = (window.x2.hi - window.x2.lo) / window.ny;
  for (std::size_t s = 0; s < points.size(); ++s) {
    const auto p = points[s];
    if (!(p[0] >= window.x1.lo && p[0] < window.x1.hi && p[1] >= window.x2.lo && p[1] < window.x2.hi)) continue;
    const int i = std::min(window.nx - 1, static_cast<int>((p[0] - window.x1.lo) / w1));
    const int j = std::min(window.ny - 1, static_cast<int>((p[1] - window.x2.lo) / w2));
    g.values[static_cast<std::size_t>(i) * window.ny + j] += 1.0;
  }
  const double scale = 1.0 / (static_cast<double>(points.size()) * window.cell_area());
  for (double& v : g.values) v *= scale;
  return g;
}

DensityGrid mc_belief_grid(const SystemSpec& spec, const GaussianInit& init, int k, std::size_t samples,
                           const GridWindow& window, std::uint64_t seed) {
  require(samples >= 10000, "mc_belief_grid needs at least 1e4 samples");
  require(k >= 0, "mc_belief_grid: step must be >= 0");
  const auto states = mc_trajectories(spec, init, k, samples, seed);
  return histogram_grid(states.back(), window);
}

}  // namespace bnf
