#include <opticenter/formulations.hpp>

#include <fstream>

#include <opticenter/errors.hpp>
#include <opticenter/format.hpp>

namespace opticenter {

LinearMap LinearMap::from_dense(const Eigen::MatrixXd& m) {
  LinearMap map;
  map.rows = m.rows();
  map.cols = m.cols();
  map.apply = [m](const Eigen::VectorXd& x, Eigen::VectorXd& out) {
    out.noalias() = m * x;
  };
  map.apply_transpose = [m](const Eigen::VectorXd& v, Eigen::VectorXd& out) {
    out.noalias() = m.transpose() * v;
  };
  return map;
}

namespace {

void require_nonempty(const ObservationSet& obs) {
  if (obs.empty()) {
    throw DimensionMismatch("cannot assemble a system from zero observations");
  }
}

}  // namespace

LinearSystem build_model1(const ObservationSet& obs) {
  require_nonempty(obs);
  LinearSystem sys;
  sys.layout_ = ModelLayout::Model1;
  sys.n_ = obs.count();
  sys.h1_.resize(3 * sys.n_, 3);
  sys.y_.resize(3 * sys.n_);
  sys.weights_.reserve(sys.n_);
  sys.directions_.reserve(sys.n_);
  sys.anchors_.reserve(sys.n_);
  for (int i = 0; i < sys.n_; ++i) {
    const LineObservation& line = obs.items[i];
    const Vec3& n = line.direction.vec();
    const Eigen::Matrix3d block =
        line.weight * (Eigen::Matrix3d::Identity() - n * n.transpose());
    sys.h1_.block<3, 3>(3 * i, 0) = block;
    sys.y_.segment<3>(3 * i) = block * line.anchor;
    sys.weights_.push_back(line.weight);
    sys.directions_.push_back(n);
    sys.anchors_.push_back(line.anchor);
  }
  return sys;
}

LinearSystem build_model2(const ObservationSet& obs) {
  require_nonempty(obs);
  LinearSystem sys;
  sys.layout_ = ModelLayout::Model2;
  sys.n_ = obs.count();
  sys.y_.resize(3 * sys.n_);
  sys.weights_.reserve(sys.n_);
  sys.directions_.reserve(sys.n_);
  sys.anchors_.reserve(sys.n_);
  for (int i = 0; i < sys.n_; ++i) {
    const LineObservation& line = obs.items[i];
    sys.y_.segment<3>(3 * i) = line.weight * line.anchor;
    sys.weights_.push_back(line.weight);
    sys.directions_.push_back(line.direction.vec());
    sys.anchors_.push_back(line.anchor);
  }
  return sys;
}

const Eigen::MatrixXd& LinearSystem::model1_matrix() const {
  if (layout_ != ModelLayout::Model1) {
    throw DimensionMismatch("model1_matrix() called on a Model 2 system");
  }
  return h1_;
}

void LinearSystem::apply(const Eigen::VectorXd& x, Eigen::VectorXd& out) const {
  if (x.size() != cols()) {
    throw DimensionMismatch("apply: expected length " + std::to_string(cols()) +
                            ", got " + std::to_string(x.size()));
  }
  out.resize(rows());
  if (layout_ == ModelLayout::Model1) {
    out.noalias() = h1_ * x;
    return;
  }
  const Vec3 c = x.head<3>();
  for (int i = 0; i < n_; ++i) {
    out.segment<3>(3 * i) = weights_[i] * (c + x[3 + i] * directions_[i]);
  }
}

void LinearSystem::apply_transpose(const Eigen::VectorXd& v,
                                   Eigen::VectorXd& out) const {
  if (v.size() != rows()) {
    throw DimensionMismatch("apply_transpose: expected length " +
                            std::to_string(rows()) + ", got " +
                            std::to_string(v.size()));
  }
  out.resize(cols());
  if (layout_ == ModelLayout::Model1) {
    out.noalias() = h1_.transpose() * v;
    return;
  }
  Vec3 head = Vec3::Zero();
  for (int i = 0; i < n_; ++i) {
    const Eigen::Vector3d block = v.segment<3>(3 * i);
    head += weights_[i] * block;
    out[3 + i] = weights_[i] * directions_[i].dot(block);
  }
  out.head<3>() = head;
}

LinearMap LinearSystem::as_map() const {
  LinearMap map;
  map.rows = rows();
  map.cols = cols();
  map.apply = [this](const Eigen::VectorXd& x, Eigen::VectorXd& out) {
    apply(x, out);
  };
  map.apply_transpose = [this](const Eigen::VectorXd& v, Eigen::VectorXd& out) {
    apply_transpose(v, out);
  };
  return map;
}

Eigen::MatrixXd LinearSystem::dense() const {
  if (layout_ == ModelLayout::Model1) return h1_;
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(rows(), cols());
  for (int i = 0; i < n_; ++i) {
    h.block<3, 3>(3 * i, 0) = weights_[i] * Eigen::Matrix3d::Identity();
    h.block<3, 1>(3 * i, 3 + i) = weights_[i] * directions_[i];
  }
  return h;
}

namespace {

void write_matrix_market(const Eigen::MatrixXd& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write matrix file '" + path + "'");
  out << "%%MatrixMarket matrix array real general\n";
  out << m.rows() << ' ' << m.cols() << '\n';
  for (Eigen::Index col = 0; col < m.cols(); ++col) {
    for (Eigen::Index row = 0; row < m.rows(); ++row) {
      out << format_double(m(row, col)) << '\n';
    }
  }
}

}  // namespace

void LinearSystem::dump_matrix_market(const std::string& prefix) const {
  write_matrix_market(dense(), prefix + "_H.mtx");
  write_matrix_market(y_, prefix + "_y.mtx");
}

const char* SolveDiagnostics::termination_name(Termination t) {
  switch (t) {
    case Termination::ClosedForm:
      return "closed_form";
    case Termination::Converged:
      return "converged";
    case Termination::MaxIterations:
      return "max_iterations";
  }
  return "?";
}

Solution extract_solution(const LinearSystem& system, const Eigen::VectorXd& x) {
  if (x.size() != system.cols()) {
    throw DimensionMismatch("solution vector has length " +
                            std::to_string(x.size()) + ", system expects " +
                            std::to_string(system.cols()));
  }
  Solution sol;
  sol.center = x.head<3>();
  if (system.layout() == ModelLayout::Model2) {
    sol.aux_distances = x.tail(system.n_obs());
  }
  return sol;
}

}  // namespace opticenter
