#include "impactlab/fitting.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <limits>

#include "impactlab/error.hpp"
#include "impactlab/text.hpp"

namespace impactlab {

double eval_model(double theta, double tau_scale, double gamma, double tau) {
  if (!(gamma > 0)) throw Error(Errc::domain_error, "gamma must be positive");
  if (tau == 0) return theta;
  if (tau_scale == 0) throw Error(Errc::domain_error, "tau_scale is 0 at nonzero tau");
  const double q = tau / tau_scale;
  return theta * std::pow(1.0 + q * q, -gamma / 2.0);
}

std::array<double, 3> model_gradient(const ModelParams& p, double tau) {
  if (tau == 0) return {1.0, 0.0, 0.0};
  const double q = tau / p.tau_scale;
  const double u = 1.0 + q * q;
  const double base = std::pow(u, -p.gamma / 2.0);
  const double f = p.theta * base;
  return {base, p.theta * p.gamma * q * q / p.tau_scale * base / u, -0.5 * f * std::log(u)};
}

namespace {

struct Problem {
  std::span<const double> tau;
  std::span<const double> value;
  std::vector<double> weight;
};

double ssr_of(const Problem& pb, const ModelParams& p) {
  double s = 0;
  for (std::size_t k = 0; k < pb.tau.size(); ++k) {
    const double r = pb.value[k] - eval_model(p, pb.tau[k]);
    s += pb.weight[k] * r * r;
  }
  return s;
}

bool admissible(const ModelParams& p) {
  return std::isfinite(p.theta) && std::isfinite(p.tau_scale) && std::isfinite(p.gamma) &&
         p.gamma > 0 && p.tau_scale != 0;
}

struct Run {
  ModelParams params;
  double ssr = 0;
  bool converged = false;
  int iterations = 0;
};

// Levenberg-Marquardt with Marquardt's diagonal scaling.
Run levenberg_marquardt(const Problem& pb, ModelParams p, const FitOptions& opt) {
  Run run;
  run.params = p;
  run.ssr = ssr_of(pb, p);
  double lambda = 1e-3;
  const std::size_t n = pb.tau.size();
  for (int it = 0; it < opt.max_iterations; ++it) {
    run.iterations = it + 1;
    if (run.ssr == 0) {
      run.converged = true;
      return run;
    }
    Eigen::Matrix3d jtj = Eigen::Matrix3d::Zero();
    Eigen::Vector3d jtr = Eigen::Vector3d::Zero();
    for (std::size_t k = 0; k < n; ++k) {
      const auto g = model_gradient(run.params, pb.tau[k]);
      const Eigen::Vector3d jk(g[0], g[1], g[2]);
      const double r = pb.value[k] - eval_model(run.params, pb.tau[k]);
      jtj.noalias() += pb.weight[k] * jk * jk.transpose();
      jtr += pb.weight[k] * r * jk;
    }
    const double diag_floor = 1e-12 * std::max(1.0, jtj.diagonal().maxCoeff());
    bool improved = false;
    while (!improved) {
      Eigen::Matrix3d a = jtj;
      for (int d = 0; d < 3; ++d) a(d, d) += lambda * std::max(jtj(d, d), diag_floor);
      const Eigen::Vector3d delta = a.ldlt().solve(jtr);
      const double cur[3] = {run.params.theta, run.params.tau_scale, run.params.gamma};
      bool small = true;
      for (int d = 0; d < 3; ++d)
        if (!(std::abs(delta[d]) <= opt.step_tolerance * (std::abs(cur[d]) + 1e-300))) small = false;
      ModelParams trial{cur[0] + delta[0], cur[1] + delta[1], cur[2] + delta[2]};
      double trial_ssr = std::numeric_limits<double>::infinity();
      if (admissible(trial)) trial_ssr = ssr_of(pb, trial);
      if (std::isfinite(trial_ssr) && trial_ssr <= run.ssr) {
        run.params = trial;
        run.ssr = trial_ssr;
        lambda = std::max(lambda / 3.0, 1e-15);
        improved = true;
      } else {
        lambda *= 4.0;
      }
      if (small || !delta.allFinite()) {
        run.converged = small;
        return run;
      }
      if (lambda > 1e30) {
        run.converged = false;
        return run;
      }
    }
  }
  return run;
}

std::vector<ModelParams> starts(double theta0, const FitOptions& opt) {
  std::vector<ModelParams> s;
  if (opt.init) s.push_back(*opt.init);
  for (double gamma : {0.5, 1.0, 1.5, 2.0})
    for (double tau_scale : {1.0, 100.0}) s.push_back({theta0, tau_scale, gamma});
  return s;
}

}  // namespace

FitResult fit_points(std::span<const double> tau, std::span<const double> value,
                     const FitOptions& opt) {
  if (tau.size() != value.size()) throw Error(Errc::domain_error, "tau and value lengths differ");
  if (tau.size() < 4)
    throw Error(Errc::insufficient_data, "need at least 4 points, have " + std::to_string(tau.size()));
  Problem pb{tau, value, opt.weights};
  if (pb.weight.empty()) pb.weight.assign(tau.size(), 1.0);
  if (pb.weight.size() != tau.size()) throw Error(Errc::domain_error, "weights length differs");

  std::size_t first = 0;
  for (std::size_t k = 1; k < tau.size(); ++k)
    if (tau[k] < tau[first]) first = k;

  FitResult best;
  bool have = false;
  for (const auto& p0 : starts(value[first], opt)) {
    if (!admissible(p0)) continue;
    auto run = levenberg_marquardt(pb, p0, opt);
    if (!std::isfinite(run.ssr)) continue;
    if (!have || run.ssr < best.ssr) {
      best.params = run.params;
      best.ssr = run.ssr;
      best.converged = run.converged;
      best.iterations = run.iterations;
      have = true;
    }
  }
  if (!have) throw Error(Errc::domain_error, "no admissible starting point");
  best.n_pts = static_cast<int>(tau.size());
  best.chi2_norm = best.ssr / static_cast<double>(best.n_pts - 3);
  return best;
}

namespace {

FitResult fit_window(const LagCurve& curve, int lo, int hi, const FitOptions& opt, std::string window) {
  std::vector<double> tau, value, weight;
  for (std::size_t k = 0; k < curve.size(); ++k) {
    if (!curve.defined(k) || curve.lags[k] < lo || curve.lags[k] > hi) continue;
    tau.push_back(curve.lags[k]);
    value.push_back(curve.value[k]);
    if (!opt.weights.empty()) weight.push_back(opt.weights.at(k));
  }
  FitOptions local = opt;
  local.weights = std::move(weight);
  auto fit = fit_points(tau, value, local);
  const bool self = curve.meta.aggregate.empty() ? curve.meta.pair.is_self()
                                                 : curve.meta.aggregate.find("self") != std::string::npos;
  fit.kind = self ? "self" : "cross";
  fit.mode = curve.meta.mode;
  fit.window = std::move(window);
  return fit;
}

}  // namespace

FitResult fit_powerlaw(const LagCurve& curve, const FitOptions& opt) {
  return fit_window(curve, std::numeric_limits<int>::min(), std::numeric_limits<int>::max(), opt, "all");
}

TwoWindowFit fit_two_windows(const LagCurve& curve, int split, const FitOptions& opt) {
  TwoWindowFit out;
  out.split = split;
  const auto s = std::to_string(split);
  out.short_lags = fit_window(curve, std::numeric_limits<int>::min(), split, opt, "tau<=" + s);
  out.long_lags = fit_window(curve, split + 1, std::numeric_limits<int>::max(), opt, "tau>" + s);
  return out;
}

MemoryClass classify_memory(const FitResult& fit) {
  const double g = fit.params.gamma;
  if (g < 1) return {Memory::long_memory, false};
  return {Memory::short_memory, g == 1};
}

std::string_view to_string(Memory m) {
  return m == Memory::long_memory ? "long_memory" : "short_memory";
}

nlohmann::ordered_json fit_report(const FitResult& f) {
  nlohmann::ordered_json j;
  j["kind"] = f.kind;
  j["mode"] = to_string(f.mode);
  j["theta"] = f.params.theta;
  j["tau_scale"] = f.params.tau_scale;
  j["gamma"] = f.params.gamma;
  j["chi2_norm"] = f.chi2_norm;
  j["n_pts"] = f.n_pts;
  j["converged"] = f.converged;
  j["window"] = f.window;
  j["ssr"] = f.ssr;
  j["iterations"] = f.iterations;
  auto mc = classify_memory(f);
  j["memory"] = to_string(mc.memory);
  j["memory_boundary"] = mc.boundary;
  return j;
}

FitResult parse_fit_report(const nlohmann::json& j) {
  try {
    FitResult f;
    f.kind = j.at("kind").get<std::string>();
    f.mode = parse_sign_mode(j.at("mode").get<std::string>());
    f.params = {j.at("theta").get<double>(), j.at("tau_scale").get<double>(), j.at("gamma").get<double>()};
    f.chi2_norm = j.at("chi2_norm").get<double>();
    f.n_pts = j.at("n_pts").get<int>();
    f.converged = j.at("converged").get<bool>();
    f.window = j.at("window").get<std::string>();
    f.ssr = j.value("ssr", 0.0);
    f.iterations = j.value("iterations", 0);
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::format_error, std::string("bad fit report: ") + e.what());
  }
}

}  // namespace impactlab
