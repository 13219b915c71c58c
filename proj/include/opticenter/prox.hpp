#pragma once

#include <functional>
#include <limits>
#include <string>

#include <Eigen/Core>

#include <opticenter/errors.hpp>
#include <opticenter/geometry.hpp>

namespace opticenter {

/// Error measures available for the data-fidelity term. Block kinds act on
/// consecutive 3-blocks (one per observed line).
enum class LossKind {
  Abs,                 // sum_j |u_j|
  GlobalNorm,          // ||u|| over the full stacked vector
  BlockNorm,           // sum_i ||u_i|| over 3-blocks
  HuberComponentwise,  // sum_j L_t(u_j)
  HuberGlobalNorm,     // L_t(||u||)
  BlockHuberNorm,      // sum_i L_t(||u_i||)
  SquaredBlocks,       // sum_i ||u_i||^2 (closed-form path)
};

struct LossSpec {
  LossKind kind = LossKind::SquaredBlocks;
  /// Huber knee t. Values <= 0 mean "resolve automatically at solve time"
  /// from the scale of the warm-start residual.
  double huber_threshold = 0.0;

  bool needs_threshold() const {
    return kind == LossKind::HuberComponentwise ||
           kind == LossKind::HuberGlobalNorm ||
           kind == LossKind::BlockHuberNorm;
  }

  /// Grammar: l1 | l2 | block-l2 | huber[:t=<v>] | huber-norm[:t=<v>] |
  /// block-huber[:t=<v>] | sq. Throws UsageError otherwise.
  static LossSpec parse(const std::string& text);
  std::string describe() const;
};

/// Axis-aligned box for the optical-center coordinates. Infinite bounds
/// leave an axis unconstrained.
struct BoxConstraint {
  Vec3 lower = Vec3::Constant(-std::numeric_limits<double>::infinity());
  Vec3 upper = Vec3::Constant(std::numeric_limits<double>::infinity());

  static BoxConstraint unbounded() { return {}; }
  bool valid() const { return (lower.array() <= upper.array()).all(); }
};

/// Huber function: u^2/2 inside the knee, t(|u| - t/2) beyond it.
double huber(double u, double t);

/// Soft threshold, prox of gamma |.|.
double prox_abs(double x, double gamma);
Eigen::VectorXd prox_abs(const Eigen::VectorXd& x, double gamma);

/// Block soft threshold, prox of gamma ||.|| on the whole vector.
Eigen::VectorXd prox_norm(const Eigen::VectorXd& x, double gamma);

/// Prox of gamma L_t. Closed form derived from the variational definition:
/// x/(1+gamma) when |x| <= t(1+gamma), else x - gamma t sign(x).
double prox_huber(double x, double t, double gamma);

/// Radial extension of prox_huber: scales x to prox_huber(||x||) along x.
Eigen::VectorXd prox_huber_of_norm(const Eigen::VectorXd& x, double t,
                                   double gamma);

/// Applies block_prox independently to each block of block_size entries and
/// concatenates the results.
Eigen::VectorXd prox_separable(
    const Eigen::VectorXd& x, int block_size,
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& block_prox);

/// Componentwise clamp of the leading three coordinates.
Vec3 project_box(const Vec3& x, const BoxConstraint& box);

/// Componentwise clamp with per-coordinate bounds.
Eigen::VectorXd project_box(const Eigen::VectorXd& x,
                            const Eigen::VectorXd& lower,
                            const Eigen::VectorXd& upper);

/// Phi(u) for the configured loss. Block kinds require length % 3 == 0.
double eval_loss(const LossSpec& spec, const Eigen::VectorXd& u);

/// prox_{gamma Phi}(x) for the configured loss.
Eigen::VectorXd prox_loss(const LossSpec& spec, const Eigen::VectorXd& x,
                          double gamma);

}  // namespace opticenter
