#pragma once

// Power-law model for averaged sign correlators,
//   Theta(tau) = theta / (1 + (tau/tau_scale)^2)^(gamma/2),
// fitted by damped least squares from deterministic starting points.

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "impactlab/estimators.hpp"
#include "json.hpp"

namespace impactlab {

struct ModelParams {
  double theta = 0;
  double tau_scale = 1;
  double gamma = 1;
};

/// Throws domain_error when gamma <= 0 or when tau_scale == 0 and tau != 0.
double eval_model(double theta, double tau_scale, double gamma, double tau);
inline double eval_model(const ModelParams& p, double tau) {
  return eval_model(p.theta, p.tau_scale, p.gamma, tau);
}

/// d model / d(theta, tau_scale, gamma).
std::array<double, 3> model_gradient(const ModelParams& p, double tau);

struct FitOptions {
  std::optional<ModelParams> init;  // tried before the default starts
  std::vector<double> weights;      // per point; empty means all 1
  int max_iterations = 500;
  double step_tolerance = 1e-10;
};

struct FitResult {
  std::string kind = "self";  // self | cross
  SignMode mode = SignMode::include_zero;
  ModelParams params;
  double ssr = 0;
  double chi2_norm = 0;  // ssr / (n_pts - 3)
  int n_pts = 0;
  bool converged = false;
  int iterations = 0;
  std::string window = "all";
};

/// Least squares over the given points. Throws insufficient_data with
/// fewer than 4 points. A start that exhausts its iterations leaves
/// converged = false on the returned best fit rather than throwing.
FitResult fit_points(std::span<const double> tau, std::span<const double> value,
                     const FitOptions& options = {});

/// Fits the defined lags of a curve; kind and mode come from its metadata.
FitResult fit_powerlaw(const LagCurve& curve, const FitOptions& options = {});

struct TwoWindowFit {
  int split = 300;
  FitResult short_lags;  // tau <= split
  FitResult long_lags;   // tau > split
};

TwoWindowFit fit_two_windows(const LagCurve& curve, int split = 300, const FitOptions& options = {});

enum class Memory { long_memory, short_memory };

struct MemoryClass {
  Memory memory = Memory::short_memory;
  bool boundary = false;  // gamma exactly 1
};

/// gamma < 1 is long memory; gamma >= 1 short memory.
MemoryClass classify_memory(const FitResult& fit);
std::string_view to_string(Memory m);

nlohmann::ordered_json fit_report(const FitResult& fit);
FitResult parse_fit_report(const nlohmann::json& j);

}  // namespace impactlab
