#include <opticenter/solvers.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <opticenter/format.hpp>
#include <opticenter/rng.hpp>

namespace opticenter {

namespace {

constexpr double kConditionLimit = 1e12;

Eigen::Matrix3d normal_matrix(const std::vector<Vec3>& directions,
                              const std::vector<double>& weights) {
  Eigen::Matrix3d a = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < directions.size(); ++i) {
    const Vec3& n = directions[i];
    const Eigen::Matrix3d proj =
        Eigen::Matrix3d::Identity() - n * n.transpose();
    // H_i^T H_i = w_i^2 P_i since P_i is an orthogonal projection.
    a += weights[i] * weights[i] * proj;
  }
  return a;
}

}  // namespace

Point3 wls_center(const std::vector<Point3>& anchors,
                  const std::vector<Vec3>& directions,
                  const std::vector<double>& weights) {
  const Eigen::Matrix3d a = normal_matrix(directions, weights);
  Vec3 b = Vec3::Zero();
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const Vec3& n = directions[i];
    const Eigen::Matrix3d proj =
        Eigen::Matrix3d::Identity() - n * n.transpose();
    b += weights[i] * weights[i] * (proj * anchors[i]);
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(a);
  const double lmin = es.eigenvalues()(0);
  const double lmax = es.eigenvalues()(2);
  if (!(lmin > 0.0) || lmax > kConditionLimit * lmin) {
    throw SingularNormalMatrix(
        "normal matrix condition exceeds 1e12; the line bundle is "
        "near-parallel");
  }
  return a.ldlt().solve(b);
}

Solution solve_wls_closed_form(const LinearSystem& system) {
  if (system.layout() != ModelLayout::Model1) {
    throw DimensionMismatch("closed-form WLS expects a Model 1 system");
  }
  const Point3 center =
      wls_center(system.anchors(), system.directions(), system.weights());
  Solution sol = extract_solution(system, center);
  Eigen::VectorXd residual;
  system.apply(center, residual);
  residual -= system.y();
  sol.diagnostics.iterations = 0;
  sol.diagnostics.objective = residual.squaredNorm();
  sol.diagnostics.residual_norm = residual.norm();
  sol.diagnostics.termination = SolveDiagnostics::Termination::ClosedForm;
  return sol;
}

double estimate_operator_norm(const std::vector<LinearMap>& maps) {
  if (maps.empty()) throw DimensionMismatch("operator norm of an empty stack");
  const Eigen::Index cols = maps.front().cols;
  for (const LinearMap& m : maps) {
    if (m.cols != cols) {
      throw DimensionMismatch("stacked maps must share a column count");
    }
  }

  // Fixed pseudo-random start so estimates are reproducible.
  Rng rng(0xB5297A4D0C1E5F3Dull);
  Eigen::VectorXd z(cols);
  for (Eigen::Index j = 0; j < cols; ++j) z[j] = rng.normal();
  const double z0 = z.norm();
  if (z0 == 0.0) z.setOnes();
  z /= z.norm();

  double lambda = 0.0;
  double prev = -1.0;
  Eigen::VectorXd forward, back, acc(cols);
  for (int iter = 0; iter < 100; ++iter) {
    acc.setZero();
    for (const LinearMap& m : maps) {
      m.apply(z, forward);
      m.apply_transpose(forward, back);
      acc += back;
    }
    lambda = z.dot(acc);  // Rayleigh quotient of sum A^T A at unit z
    const double norm = acc.norm();
    if (norm == 0.0) return 0.0;
    z = acc / norm;
    if (iter > 0 && std::abs(lambda - prev) <= 1e-10 * std::max(lambda, 1.0)) {
      break;
    }
    prev = lambda;
  }
  return std::sqrt(std::max(lambda, 0.0));
}

namespace {

Eigen::VectorXd default_warm_start(const LinearSystem& system) {
  Point3 c0 = Point3::Zero();
  try {
    c0 = wls_center(system.anchors(), system.directions(), system.weights());
  } catch (const SingularNormalMatrix&) {
    // Degenerate bundle: start from the origin and let the iteration work.
  }
  if (system.layout() == ModelLayout::Model1) return c0;
  Eigen::VectorXd x(system.cols());
  x.head<3>() = c0;
  for (int i = 0; i < system.n_obs(); ++i) {
    x[3 + i] = system.directions()[i].dot(system.anchors()[i] - c0);
  }
  return x;
}

/// Scale-aware Huber knee: 1.345 * sigma_hat with sigma_hat the normalized
/// median absolute residual of the WLS warm start.
double resolve_huber_threshold(const LinearSystem& system) {
  const Eigen::VectorXd x0 = default_warm_start(system);
  Eigen::VectorXd r;
  system.apply(x0, r);
  r -= system.y();
  Eigen::VectorXd a = r.cwiseAbs();
  std::vector<double> values(a.data(), a.data() + a.size());
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  double median = values[mid];
  if (values.size() % 2 == 0) {
    std::nth_element(values.begin(), values.begin() + mid - 1, values.end());
    median = 0.5 * (median + values[mid - 1]);
  }
  const double t = 1.345 * median / 0.6745;
  return t > 0.0 ? t : 1.0;
}

void project_center(const std::optional<BoxConstraint>& box,
                    Eigen::VectorXd& x) {
  if (!box) return;
  x.head<3>() = project_box(Vec3(x.head<3>()), *box);
}

}  // namespace

Solution solve_primal_dual(const LinearSystem& system, const LossSpec& loss_in,
                           const PrimalDualConfig& config) {
  if (config.max_iterations < 1) {
    throw Error("max_iterations must be at least 1");
  }
  if (!(config.relative_tolerance > 0.0)) {
    throw Error("relative_tolerance must be positive");
  }
  if (config.gamma && !(*config.gamma > 0.0)) {
    throw StepSizeNotPositive("step size must be positive, got " +
                              format_double(*config.gamma));
  }
  if (config.constraint && !config.constraint->valid()) {
    throw Error("box constraint has lower > upper");
  }

  LossSpec loss = loss_in;
  if (loss.needs_threshold() && !(loss.huber_threshold > 0.0)) {
    loss.huber_threshold = resolve_huber_threshold(system);
  }

  const Eigen::Index rows = system.rows();
  const Eigen::Index cols = system.cols();
  const Eigen::VectorXd& y = system.y();
  const auto& regs = config.regularizers;

  double gamma = 0.0;
  if (config.gamma) {
    gamma = *config.gamma;
  } else {
    std::vector<LinearMap> stack;
    stack.push_back(system.as_map());
    for (const Regularizer& reg : regs) stack.push_back(reg.map);
    gamma = 0.9 / estimate_operator_norm(stack);
  }

  Eigen::VectorXd x = config.x0 ? *config.x0 : default_warm_start(system);
  if (x.size() != cols) {
    throw DimensionMismatch("x0 has length " + std::to_string(x.size()) +
                            ", system expects " + std::to_string(cols));
  }
  Eigen::VectorXd v_data =
      config.v0 ? *config.v0 : Eigen::VectorXd::Zero(rows).eval();
  if (v_data.size() != rows) {
    throw DimensionMismatch("v0 has length " + std::to_string(v_data.size()) +
                            ", system expects " + std::to_string(rows));
  }
  std::vector<Eigen::VectorXd> v_reg;
  v_reg.reserve(regs.size());
  for (const Regularizer& reg : regs) {
    v_reg.push_back(Eigen::VectorXd::Zero(reg.map.rows));
  }

  SolveDiagnostics diag;
  diag.gamma = gamma;
  diag.huber_t = loss.huber_threshold;
  diag.termination = SolveDiagnostics::Termination::MaxIterations;

  double best_objective = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_x = x;
  const double inv_gamma = 1.0 / gamma;

  Eigen::VectorXd ht_v(cols), hx(rows), hp1(rows), ht_p20(cols);
  Eigen::VectorXd vr_x, vr_p1;

  int iterations = 0;
  for (int k = 0; k < config.max_iterations; ++k) {
    iterations = k + 1;

    system.apply_transpose(v_data, ht_v);
    Eigen::VectorXd y1 = x - gamma * ht_v;
    for (std::size_t r = 0; r < regs.size(); ++r) {
      regs[r].map.apply_transpose(v_reg[r], ht_v);
      y1 -= gamma * ht_v;
    }
    Eigen::VectorXd p1 = y1;
    project_center(config.constraint, p1);

    system.apply(x, hx);
    Eigen::VectorXd y20 = v_data + gamma * hx;
    Eigen::VectorXd p20 =
        y20 - gamma * (prox_loss(loss, inv_gamma * y20 - y, inv_gamma) + y);
    system.apply(p1, hp1);
    v_data += p20 + gamma * hp1 - y20;  // v <- v - y20 + q20

    std::vector<Eigen::VectorXd> p2r(regs.size());
    for (std::size_t r = 0; r < regs.size(); ++r) {
      regs[r].map.apply(x, vr_x);
      Eigen::VectorXd y2r = v_reg[r] + gamma * vr_x;
      p2r[r] = y2r - gamma * regs[r].prox(inv_gamma * y2r, inv_gamma);
      regs[r].map.apply(p1, vr_p1);
      v_reg[r] += p2r[r] + gamma * vr_p1 - y2r;
    }

    system.apply_transpose(p20, ht_p20);
    Eigen::VectorXd q1 = p1 - gamma * ht_p20;
    for (std::size_t r = 0; r < regs.size(); ++r) {
      regs[r].map.apply_transpose(p2r[r], ht_v);
      q1 -= gamma * ht_v;
    }
    const Eigen::VectorXd x_next = x - y1 + q1;

    double objective = eval_loss(loss, hp1 - y);
    for (std::size_t r = 0; r < regs.size(); ++r) {
      regs[r].map.apply(p1, vr_p1);
      objective += regs[r].eval(vr_p1);
    }
    if (config.record_trace) diag.objective_trace.push_back(objective);
    if (objective < best_objective) {
      best_objective = objective;
      best_x = p1;
    }

    if (!x_next.allFinite()) {
      throw NonFiniteIterate("primal-dual iterate became non-finite at "
                             "iteration " +
                             std::to_string(iterations));
    }

    const double step = (x_next - x).norm();
    const double scale = std::max(x.norm(), 1.0);
    x = x_next;
    if (step < config.relative_tolerance * scale) {
      diag.termination = SolveDiagnostics::Termination::Converged;
      break;
    }
  }

  Solution sol = extract_solution(system, best_x);
  Eigen::VectorXd residual;
  system.apply(best_x, residual);
  residual -= y;
  diag.iterations = iterations;
  diag.objective = best_objective;
  diag.residual_norm = residual.norm();
  sol.diagnostics = std::move(diag);
  return sol;
}

namespace {

struct TlsResult {
  Eigen::VectorXd x;
  double smin = 0.0;
};

TlsResult tls_core(const Eigen::MatrixXd& h, const Eigen::VectorXd& y) {
  if (h.rows() != y.size()) {
    throw DimensionMismatch("H and y row counts differ");
  }
  if (h.rows() <= h.cols()) {
    throw DimensionMismatch("TLS requires more rows than columns");
  }
  const Eigen::Index cols = h.cols();
  Eigen::MatrixXd augmented(h.rows(), cols + 1);
  augmented.leftCols(cols) = h;
  augmented.col(cols) = y;

  // Unit column equilibration, the standard diagonal scaling of the
  // augmented matrix. The observation block, the direction block and the
  // data column live on wildly different scales here (1 vs ~1e3); without
  // this the perturbation budget concentrates on the small-norm columns
  // and the recovered distances pick up a systematic inflation.
  Eigen::VectorXd scale(cols + 1);
  for (Eigen::Index j = 0; j <= cols; ++j) {
    const double norm = augmented.col(j).norm();
    scale[j] = norm > 0.0 ? norm : 1.0;
    augmented.col(j) /= scale[j];
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> rank_check(
      augmented.leftCols(cols));
  rank_check.setThreshold(1e-10);
  if (rank_check.rank() < cols) {
    throw RankDeficient("H is rank-deficient beyond tolerance");
  }

  Eigen::BDCSVD<Eigen::MatrixXd> svd(augmented, Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();  // descending
  const Eigen::Index last = sv.size() - 1;
  const double smax = sv(0);
  if (!(smax > 0.0)) throw RankDeficient("system matrix is zero");

  Eigen::VectorXd v = svd.matrixV().col(last);
  if (sv(last - 1) - sv(last) < 1e-10 * std::max(smax, 1.0)) {
    // Near-tie: prefer the candidate with the larger last component.
    const Eigen::VectorXd alt = svd.matrixV().col(last - 1);
    if (std::abs(alt(cols)) > std::abs(v(cols))) v = alt;
  }
  const double v_last = v(cols);
  if (std::abs(v_last) < 1e-12) {
    throw NongenericTLS("no classical TLS solution: the smallest right "
                        "singular vector has a vanishing last component");
  }
  Eigen::VectorXd x =
      -(v.head(cols).cwiseQuotient(scale.head(cols))) * (scale[cols] / v_last);
  return {std::move(x), sv(last)};
}

}  // namespace

Eigen::VectorXd solve_tls_raw(const Eigen::MatrixXd& h,
                              const Eigen::VectorXd& y) {
  return tls_core(h, y).x;
}

Solution solve_tls(const LinearSystem& system) {
  const Eigen::MatrixXd h = system.dense();
  const TlsResult tls = tls_core(h, system.y());
  Solution sol = extract_solution(system, tls.x);
  const Eigen::VectorXd residual = h * tls.x - system.y();
  sol.diagnostics.iterations = 0;
  // Minimal perturbation energy equals sigma_min([H | y])^2.
  sol.diagnostics.objective = tls.smin * tls.smin;
  sol.diagnostics.residual_norm = residual.norm();
  sol.diagnostics.termination = SolveDiagnostics::Termination::ClosedForm;
  return sol;
}

}  // namespace opticenter
