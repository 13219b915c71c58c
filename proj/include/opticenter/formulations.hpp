#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include <opticenter/geometry.hpp>

namespace opticenter {

enum class ModelLayout { Model1, Model2 };

/// Matrix-free linear operator: forward and transpose application plus
/// shape. The solvers and the operator-norm estimator work through this.
struct LinearMap {
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)> apply;
  std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)> apply_transpose;

  static LinearMap from_dense(const Eigen::MatrixXd& m);
};

/// Assembled observation system H x = y + error.
///
/// Model 1: row block i is w_i (I - n_i n_i^T), unknown x = c (3 columns),
/// y_i = H_i a_i. Stored dense (3N x 3 is small).
///
/// Model 2: H = [C D] with C the 3N x 3 stack of w_i I and D block-sparse
/// with column i holding w_i n_i in rows 3i..3i+2; y_i = w_i a_i and
/// x = [c; d]. D is kept in factored form (weights and directions); the
/// dense 3N x N block is only materialized on demand (TLS, debug dumps).
/// Sign convention: H x = y reads w_i (c + d_i n_i) = w_i a_i, so the
/// recovered d_i equals n_i^T (a_i - c). The center estimate is unaffected.
class LinearSystem {
 public:
  ModelLayout layout() const noexcept { return layout_; }
  int n_obs() const noexcept { return n_; }
  Eigen::Index rows() const noexcept { return 3 * static_cast<Eigen::Index>(n_); }
  Eigen::Index cols() const noexcept {
    return layout_ == ModelLayout::Model1 ? 3 : 3 + static_cast<Eigen::Index>(n_);
  }

  const Eigen::VectorXd& y() const noexcept { return y_; }
  const std::vector<double>& weights() const noexcept { return weights_; }
  const std::vector<Vec3>& directions() const noexcept { return directions_; }
  const std::vector<Point3>& anchors() const noexcept { return anchors_; }

  /// Model 1 stacked matrix (3N x 3). Only valid for Model 1.
  const Eigen::MatrixXd& model1_matrix() const;

  void apply(const Eigen::VectorXd& x, Eigen::VectorXd& out) const;
  void apply_transpose(const Eigen::VectorXd& v, Eigen::VectorXd& out) const;
  LinearMap as_map() const;

  /// Materializes H (including the Model 2 D block).
  Eigen::MatrixXd dense() const;

  /// Writes H and y as MatrixMarket array files <prefix>_H.mtx and
  /// <prefix>_y.mtx for external verification.
  void dump_matrix_market(const std::string& prefix) const;

  friend LinearSystem build_model1(const ObservationSet& obs);
  friend LinearSystem build_model2(const ObservationSet& obs);

 private:
  LinearSystem() = default;

  ModelLayout layout_ = ModelLayout::Model1;
  int n_ = 0;
  std::vector<double> weights_;
  std::vector<Vec3> directions_;
  std::vector<Point3> anchors_;
  Eigen::MatrixXd h1_;  // Model 1 only
  Eigen::VectorXd y_;
};

LinearSystem build_model1(const ObservationSet& obs);
LinearSystem build_model2(const ObservationSet& obs);

struct SolveDiagnostics {
  enum class Termination { ClosedForm, Converged, MaxIterations };

  int iterations = 0;
  double objective = 0.0;
  double residual_norm = 0.0;
  Termination termination = Termination::ClosedForm;
  double gamma = 0.0;        // step actually used (primal-dual only)
  double huber_t = 0.0;      // threshold actually used (Huber losses only)
  std::vector<double> objective_trace;  // filled when requested

  static const char* termination_name(Termination t);
};

struct Solution {
  Point3 center = Point3::Zero();
  /// Signed distances d_i = n_i^T (a_i - c); present iff layout == Model2.
  std::optional<Eigen::VectorXd> aux_distances;
  SolveDiagnostics diagnostics;
};

/// Maps a solver output vector back onto the center estimate (and the
/// auxiliary distances for Model 2). Throws DimensionMismatch when x does
/// not match the system's column count.
Solution extract_solution(const LinearSystem& system, const Eigen::VectorXd& x);

}  // namespace opticenter
