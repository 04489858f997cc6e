#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "nfps/geometry.hpp"

namespace nfps {

enum class IntegrationMode { least_squares, l1_admm };

struct IntegratorConfig {
  double lambda = 1e-6;
  IntegrationMode mode = IntegrationMode::l1_admm;
  double admm_penalty = 1.0;    // initial value; adapted by residual balancing
  int max_iters = 20000;        // conjugate-gradient iterations per solve
  double tol = 1e-9;            // CG relative residual
  int admm_max_iters = 300;     // outer ADMM iterations
  double admm_tol = 1e-3;       // relative primal/dual residual
  int admm_inner_iters = 30;    // CG iterations per ADMM w-update (warm-started)

  void validate() const;
};

/// Perspective log-depth gradients p = d(log z)/du, q = d(log z)/dv.
struct LogGradients {
  Grid<double> p;
  Grid<double> q;
  Mask mask;
};

/// p = -n1/d, q = -n2/d with d = (u-u0) n1 + (v-v0) n2 + f n3. Pixels with
/// |d| < 1e-6 f (normals grazing the line of sight) are unmasked.
LogGradients normals_to_log_gradients(const NormalMap& normals,
                                      const CameraIntrinsics& intrinsics);

struct IntegrationResult {
  DepthMap depth;
  bool converged = false;
  int iterations = 0;
  double residual = 0.0;
  /// ADMM only: |Dw - g - r| after every outer iteration.
  std::vector<double> primal_residuals;
};

/// Recovers log-depth w on the gradient mask by minimizing
///   sum_edges phi((w_j - w_i) - g_ij) + lambda sum_i (w_i - log z0_i)^2
/// with phi = square (least_squares) or abs (l1_admm). Edges join 4-adjacent
/// masked pixels; g_ij averages the two endpoint gradients. Returns exp(w).
/// `initial_log_depth`, if given, replaces log z0 as the starting iterate.
IntegrationResult integrate(const LogGradients& gradients, const DepthMap& prior,
                            const IntegratorConfig& config,
                            const Grid<double>* initial_log_depth = nullptr);

struct RobustnessComparison {
  double least_squares_mm = 0.0;
  double l1_mm = 0.0;
  std::size_t corrupted = 0;
};

/// Corrupts `fraction` of the masked gradient pixels with gross outliers and
/// integrates with both modes; errors are mean |z - truth| in mm.
RobustnessComparison outlier_robustness_demo(const LogGradients& clean, const DepthMap& truth,
                                             const DepthMap& prior, double fraction,
                                             const IntegratorConfig& config,
                                             std::uint64_t seed);

namespace detail {

/// Masked 4-neighbour grid graph used by the solvers.
struct IntegrationDomain {
  int width = 0;
  int height = 0;
  std::vector<int> pixel;        // node -> flat pixel index
  std::vector<int> node;         // flat pixel index -> node or -1
  std::vector<int> right;        // node -> right neighbour node or -1
  std::vector<int> down;         // node -> lower neighbour node or -1
  std::vector<int> left;
  std::vector<int> up;

  explicit IntegrationDomain(const Mask& mask);
  std::size_t nodes() const noexcept { return pixel.size(); }
};

/// out = alpha * L x + gamma * x with L the graph Laplacian D^T D.
void apply_normal_operator(const IntegrationDomain& domain, double alpha, double gamma,
                           const std::vector<double>& x, std::vector<double>& out);

namespace reference {
void apply_normal_operator(const IntegrationDomain& domain, double alpha, double gamma,
                           const std::vector<double>& x, std::vector<double>& out);
}  // namespace reference

/// Blocked dot product whose summation order does not depend on the number
/// of threads.
double dot(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace detail

}  // namespace nfps
