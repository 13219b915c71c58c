#pragma once

#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include <opticenter/formulations.hpp>
#include <opticenter/prox.hpp>

namespace opticenter {

/// Optional regularization term psi_r(V_r x) for the primal-dual solver.
struct Regularizer {
  LinearMap map;  // V_r
  /// prox_{gamma psi_r}
  std::function<Eigen::VectorXd(const Eigen::VectorXd&, double)> prox;
  /// psi_r itself, for objective reporting.
  std::function<double(const Eigen::VectorXd&)> eval;
};

struct PrimalDualConfig {
  /// Step size. Unset: 0.9 / ||[H; V_1; ...; V_R]|| (power iteration).
  /// Explicit values must be positive (StepSizeNotPositive otherwise).
  std::optional<double> gamma;
  int max_iterations = 20000;
  double relative_tolerance = 1e-8;
  std::vector<Regularizer> regularizers;
  /// Box for the center coordinates; unset means unconstrained.
  std::optional<BoxConstraint> constraint;
  bool record_trace = false;
  /// Warm-start overrides. Defaults: x0 from the closed-form WLS center
  /// (with d_i = n_i^T(a_i - c0) for Model 2), duals at zero.
  std::optional<Eigen::VectorXd> x0;
  std::optional<Eigen::VectorXd> v0;
};

/// Exact minimizer of sum_i ||H_i c - y_i||^2 via the 3x3 normal equations.
/// Model 1 systems only. Throws SingularNormalMatrix when the normal matrix
/// has condition number above 1e12 (all lines near-parallel).
Solution solve_wls_closed_form(const LinearSystem& system);

/// Primal-dual proximal splitting for min Phi(Hx - y) + i_C(x) + sum psi_r(V_r x).
/// Returns the feasible candidate with the best objective seen; diagnostics
/// carry the iteration count, resolved step size and Huber threshold, and
/// the objective trace when requested.
Solution solve_primal_dual(const LinearSystem& system, const LossSpec& loss,
                           const PrimalDualConfig& config = {});

/// Classical total least squares on the augmented matrix [H | y], with
/// unit column equilibration: the smallest-singular-vector fit minimizing
/// the combined perturbation of H and y measured in column-normalized
/// units. Exact on consistent systems; invariant under joint rescaling of
/// H and y.
Solution solve_tls(const LinearSystem& system);

/// TLS core on an explicit dense system; exposed for direct testing.
Eigen::VectorXd solve_tls_raw(const Eigen::MatrixXd& h, const Eigen::VectorXd& y);

/// Spectral norm of the vertical stack of the given maps, by power
/// iteration on sum A_i^T A_i (100 iterations, tolerance 1e-10).
double estimate_operator_norm(const std::vector<LinearMap>& maps);

/// Closed-form WLS center from raw observation data; used for warm starts
/// regardless of the assembled layout.
Point3 wls_center(const std::vector<Point3>& anchors,
                  const std::vector<Vec3>& directions,
                  const std::vector<double>& weights);

}  // namespace opticenter
