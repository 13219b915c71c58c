#include <opticenter/prox.hpp>

#include <algorithm>
#include <cmath>

#include <opticenter/format.hpp>

namespace opticenter {

namespace {

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

void require_blocks(const Eigen::VectorXd& u) {
  if (u.size() % 3 != 0) {
    throw DimensionMismatch("block loss needs a length divisible by 3, got " +
                            std::to_string(u.size()));
  }
}

double require_threshold(const LossSpec& spec) {
  if (!(spec.huber_threshold > 0.0)) {
    throw Error("Huber loss used with unresolved threshold t=" +
                format_double(spec.huber_threshold));
  }
  return spec.huber_threshold;
}

}  // namespace

double huber(double u, double t) {
  const double a = std::abs(u);
  if (a <= t) return 0.5 * u * u;
  return t * (a - 0.5 * t);
}

double prox_abs(double x, double gamma) {
  const double a = std::abs(x);
  return a >= gamma ? (a - gamma) * sign(x) : 0.0;
}

Eigen::VectorXd prox_abs(const Eigen::VectorXd& x, double gamma) {
  Eigen::VectorXd out(x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) out[j] = prox_abs(x[j], gamma);
  return out;
}

Eigen::VectorXd prox_norm(const Eigen::VectorXd& x, double gamma) {
  const double norm = x.norm();
  if (norm <= gamma) return Eigen::VectorXd::Zero(x.size());
  return x * (1.0 - gamma / norm);
}

double prox_huber(double x, double t, double gamma) {
  if (std::abs(x) <= t * (1.0 + gamma)) return x / (1.0 + gamma);
  return x - gamma * t * sign(x);
}

Eigen::VectorXd prox_huber_of_norm(const Eigen::VectorXd& x, double t,
                                   double gamma) {
  const double norm = x.norm();
  if (norm == 0.0) return Eigen::VectorXd::Zero(x.size());
  const double shrunk = prox_huber(norm, t, gamma);
  return x * (shrunk / norm);
}

Eigen::VectorXd prox_separable(
    const Eigen::VectorXd& x, int block_size,
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& block_prox) {
  if (block_size <= 0 || x.size() % block_size != 0) {
    throw DimensionMismatch("vector length " + std::to_string(x.size()) +
                            " is not divisible by block size " +
                            std::to_string(block_size));
  }
  Eigen::VectorXd out(x.size());
  for (Eigen::Index start = 0; start < x.size(); start += block_size) {
    out.segment(start, block_size) = block_prox(x.segment(start, block_size));
  }
  return out;
}

Vec3 project_box(const Vec3& x, const BoxConstraint& box) {
  return x.cwiseMax(box.lower).cwiseMin(box.upper);
}

Eigen::VectorXd project_box(const Eigen::VectorXd& x,
                            const Eigen::VectorXd& lower,
                            const Eigen::VectorXd& upper) {
  if (x.size() != lower.size() || x.size() != upper.size()) {
    throw DimensionMismatch("box bounds must match the vector length");
  }
  return x.cwiseMax(lower).cwiseMin(upper);
}

double eval_loss(const LossSpec& spec, const Eigen::VectorXd& u) {
  switch (spec.kind) {
    case LossKind::Abs:
      return u.lpNorm<1>();
    case LossKind::GlobalNorm:
      return u.norm();
    case LossKind::BlockNorm: {
      require_blocks(u);
      double total = 0.0;
      for (Eigen::Index i = 0; i < u.size(); i += 3)
        total += u.segment<3>(i).norm();
      return total;
    }
    case LossKind::HuberComponentwise: {
      const double t = require_threshold(spec);
      double total = 0.0;
      for (Eigen::Index j = 0; j < u.size(); ++j) total += huber(u[j], t);
      return total;
    }
    case LossKind::HuberGlobalNorm:
      return huber(u.norm(), require_threshold(spec));
    case LossKind::BlockHuberNorm: {
      require_blocks(u);
      const double t = require_threshold(spec);
      double total = 0.0;
      for (Eigen::Index i = 0; i < u.size(); i += 3)
        total += huber(u.segment<3>(i).norm(), t);
      return total;
    }
    case LossKind::SquaredBlocks:
      return u.squaredNorm();
  }
  throw Error("unhandled loss kind");
}

Eigen::VectorXd prox_loss(const LossSpec& spec, const Eigen::VectorXd& x,
                          double gamma) {
  switch (spec.kind) {
    case LossKind::Abs:
      return prox_abs(x, gamma);
    case LossKind::GlobalNorm:
      return prox_norm(x, gamma);
    case LossKind::BlockNorm: {
      require_blocks(x);
      Eigen::VectorXd out(x.size());
      for (Eigen::Index i = 0; i < x.size(); i += 3) {
        const Eigen::Vector3d block = x.segment<3>(i);
        const double norm = block.norm();
        out.segment<3>(i) =
            norm <= gamma ? Eigen::Vector3d::Zero().eval()
                          : (block * (1.0 - gamma / norm)).eval();
      }
      return out;
    }
    case LossKind::HuberComponentwise: {
      const double t = require_threshold(spec);
      Eigen::VectorXd out(x.size());
      for (Eigen::Index j = 0; j < x.size(); ++j)
        out[j] = prox_huber(x[j], t, gamma);
      return out;
    }
    case LossKind::HuberGlobalNorm:
      return prox_huber_of_norm(x, require_threshold(spec), gamma);
    case LossKind::BlockHuberNorm: {
      require_blocks(x);
      const double t = require_threshold(spec);
      Eigen::VectorXd out(x.size());
      for (Eigen::Index i = 0; i < x.size(); i += 3) {
        const Eigen::Vector3d block = x.segment<3>(i);
        const double norm = block.norm();
        if (norm == 0.0) {
          out.segment<3>(i).setZero();
        } else {
          out.segment<3>(i) = block * (prox_huber(norm, t, gamma) / norm);
        }
      }
      return out;
    }
    case LossKind::SquaredBlocks:
      return x / (1.0 + 2.0 * gamma);
  }
  throw Error("unhandled loss kind");
}

namespace {

const char* kLossGrammar =
    "l1 | l2 | block-l2 | huber[:t=<v>] | huber-norm[:t=<v>] | "
    "block-huber[:t=<v>] | sq";

double parse_threshold(const std::string& text, const std::string& rest) {
  if (rest.empty()) return 0.0;  // resolve automatically
  if (rest.rfind(":t=", 0) != 0 || rest.size() <= 3) {
    throw UsageError("invalid loss '" + text + "'; expected " + kLossGrammar);
  }
  const std::string value = rest.substr(3);
  if (value == "auto") return 0.0;
  try {
    const double t = parse_double(value, "huber threshold");
    if (!(t > 0.0)) {
      throw UsageError("huber threshold must be positive, got '" + value + "'");
    }
    return t;
  } catch (const ParseError&) {
    throw UsageError("invalid huber threshold '" + value + "'; expected " +
                     std::string(kLossGrammar));
  }
}

}  // namespace

LossSpec LossSpec::parse(const std::string& text) {
  LossSpec spec;
  if (text == "l1") {
    spec.kind = LossKind::Abs;
  } else if (text == "l2") {
    spec.kind = LossKind::GlobalNorm;
  } else if (text == "block-l2") {
    spec.kind = LossKind::BlockNorm;
  } else if (text == "sq") {
    spec.kind = LossKind::SquaredBlocks;
  } else if (text.rfind("huber-norm", 0) == 0) {
    spec.kind = LossKind::HuberGlobalNorm;
    spec.huber_threshold = parse_threshold(text, text.substr(10));
  } else if (text.rfind("block-huber", 0) == 0) {
    spec.kind = LossKind::BlockHuberNorm;
    spec.huber_threshold = parse_threshold(text, text.substr(11));
  } else if (text.rfind("huber", 0) == 0) {
    spec.kind = LossKind::HuberComponentwise;
    spec.huber_threshold = parse_threshold(text, text.substr(5));
  } else {
    throw UsageError("unknown loss '" + text + "'; expected " + kLossGrammar);
  }
  return spec;
}

std::string LossSpec::describe() const {
  const auto with_t = [this](const char* base) {
    if (huber_threshold > 0.0) {
      return std::string(base) + ":t=" + format_double(huber_threshold);
    }
    return std::string(base);
  };
  switch (kind) {
    case LossKind::Abs:
      return "l1";
    case LossKind::GlobalNorm:
      return "l2";
    case LossKind::BlockNorm:
      return "block-l2";
    case LossKind::HuberComponentwise:
      return with_t("huber");
    case LossKind::HuberGlobalNorm:
      return with_t("huber-norm");
    case LossKind::BlockHuberNorm:
      return with_t("block-huber");
    case LossKind::SquaredBlocks:
      return "sq";
  }
  return "?";
}

}  // namespace opticenter
