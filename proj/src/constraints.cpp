#include "cgan/constraints.hpp"

#include <cmath>

namespace cgan {

const char* constraint_kind_name(ConstraintKind kind) {
  switch (kind) {
    case ConstraintKind::FinalStep: return "final-step";
    case ConstraintKind::IntermediateStep: return "intermediate-step";
    case ConstraintKind::CircleInterp: return "circle-interp";
    case ConstraintKind::CircleExtrap: return "circle-extrap";
  }
  return "?";
}

const char* state_mode_name(StateMode mode) {
  return mode == StateMode::StateRate ? "state_rate" : "state_only";
}

ConstraintSpec ConstraintSpec::final_step() {
  ConstraintSpec s;
  s.kind = ConstraintKind::FinalStep;
  return s;
}

ConstraintSpec ConstraintSpec::intermediate(bool generate_inner) {
  ConstraintSpec s;
  s.kind = ConstraintKind::IntermediateStep;
  s.generate_inner = generate_inner;
  return s;
}

ConstraintSpec ConstraintSpec::circle_interp(double radius, double lo, double hi) {
  ConstraintSpec s;
  s.kind = ConstraintKind::CircleInterp;
  s.radius = radius;
  s.domain_lo = lo;
  s.domain_hi = hi;
  return s;
}

ConstraintSpec ConstraintSpec::circle_extrap(double radius, double step, StateMode mode,
                                             double lo, double hi) {
  ConstraintSpec s;
  s.kind = ConstraintKind::CircleExtrap;
  s.radius = radius;
  s.step = step;
  s.mode = mode;
  s.domain_lo = lo;
  s.domain_hi = hi;
  return s;
}

Index ConstraintSpec::generator_input_width() const {
  if (kind == ConstraintKind::CircleExtrap) return mode == StateMode::StateRate ? 4 : 2;
  return 1;
}

Index ConstraintSpec::generator_output_width() const {
  switch (kind) {
    case ConstraintKind::FinalStep:
    case ConstraintKind::IntermediateStep: return 1;
    case ConstraintKind::CircleInterp: return 2;
    case ConstraintKind::CircleExtrap: return mode == StateMode::StateRate ? 4 : 2;
  }
  return 0;
}

Index ConstraintSpec::residual_width() const {
  if (kind == ConstraintKind::CircleExtrap && mode == StateMode::StateRate) return 2;
  return 1;
}

double target_final(double z) {
  const double t = 2.0 * z - 1.0;
  return 1.0 - t * t;
}

IntermediateTarget target_intermediate(double z) {
  const double y = target_final(z);
  return {y, z * y};
}

CirclePoint circle_state(double z, double radius) {
  return {radius - std::sin(z), radius - std::cos(z)};
}

Eigen::Vector4d circle_full_state(double z, double radius) {
  const double s = std::sin(z);
  const double c = std::cos(z);
  return {radius - s, -c, radius - c, s};
}

Vector exact_target(const ConstraintSpec& spec, double z) {
  switch (spec.kind) {
    case ConstraintKind::FinalStep: return Vector::Constant(1, target_final(z));
    case ConstraintKind::IntermediateStep: {
      const auto t = target_intermediate(z);
      return Vector::Constant(1, spec.generate_inner ? t.y : t.x);
    }
    case ConstraintKind::CircleInterp: {
      const auto p = circle_state(z, spec.radius);
      return Eigen::Vector2d(p.x1, p.x2);
    }
    case ConstraintKind::CircleExtrap: {
      const Eigen::Vector4d s = circle_full_state(z, spec.radius);
      if (spec.mode == StateMode::StateRate) return s;
      return Eigen::Vector2d(s(0), s(2));
    }
  }
  return {};
}

namespace {

void check_shapes(const ConstraintSpec& spec, Index input_rows, Index data_rows) {
  if (input_rows != spec.generator_input_width() || data_rows != spec.generator_output_width())
    throw std::invalid_argument(std::string("residual: shape mismatch for ") +
                                constraint_kind_name(spec.kind));
  if (spec.kind == ConstraintKind::IntermediateStep && !spec.generate_inner)
    throw std::invalid_argument("residual: intermediate-step residual needs the inner output y");
}

double position_residual(double x1, double x2, double radius) {
  const double a = x1 - radius;
  const double b = x2 - radius;
  return a * a + b * b - 1.0;
}

}  // namespace

Matrix residual_batch(const ConstraintSpec& spec, const Eigen::Ref<const Matrix>& inputs,
                      const Eigen::Ref<const Matrix>& data) {
  check_shapes(spec, inputs.rows(), data.rows());
  const Index n = data.cols();
  Matrix out(spec.residual_width(), n);
  for (Index j = 0; j < n; ++j) {
    switch (spec.kind) {
      case ConstraintKind::FinalStep: out(0, j) = data(0, j) - target_final(inputs(0, j)); break;
      case ConstraintKind::IntermediateStep:
        out(0, j) = data(0, j) - target_final(inputs(0, j));
        break;
      case ConstraintKind::CircleInterp:
        out(0, j) = position_residual(data(0, j), data(1, j), spec.radius);
        break;
      case ConstraintKind::CircleExtrap:
        if (spec.mode == StateMode::StateRate) {
          out(0, j) = position_residual(data(0, j), data(2, j), spec.radius);
          out(1, j) = data(1, j) * data(1, j) + data(3, j) * data(3, j) - 1.0;
        } else {
          out(0, j) = position_residual(data(0, j), data(1, j), spec.radius);
        }
        break;
    }
  }
  return out;
}

Vector residual(const ConstraintSpec& spec, const Eigen::Ref<const Vector>& input,
                const Eigen::Ref<const Vector>& data) {
  return residual_batch(spec, input, data).col(0);
}

Matrix residual_vjp(const ConstraintSpec& spec, const Eigen::Ref<const Matrix>& inputs,
                    const Eigen::Ref<const Matrix>& data,
                    const Eigen::Ref<const Matrix>& residual_grad) {
  check_shapes(spec, inputs.rows(), data.rows());
  if (residual_grad.rows() != spec.residual_width() || residual_grad.cols() != data.cols())
    throw std::invalid_argument("residual_vjp: gradient shape mismatch");
  const double R = spec.radius;
  Matrix out = Matrix::Zero(data.rows(), data.cols());
  for (Index j = 0; j < data.cols(); ++j) {
    switch (spec.kind) {
      case ConstraintKind::FinalStep:
      case ConstraintKind::IntermediateStep: out(0, j) = residual_grad(0, j); break;
      case ConstraintKind::CircleInterp:
        out(0, j) = 2.0 * (data(0, j) - R) * residual_grad(0, j);
        out(1, j) = 2.0 * (data(1, j) - R) * residual_grad(0, j);
        break;
      case ConstraintKind::CircleExtrap:
        if (spec.mode == StateMode::StateRate) {
          out(0, j) = 2.0 * (data(0, j) - R) * residual_grad(0, j);
          out(2, j) = 2.0 * (data(2, j) - R) * residual_grad(0, j);
          out(1, j) = 2.0 * data(1, j) * residual_grad(1, j);
          out(3, j) = 2.0 * data(3, j) * residual_grad(1, j);
        } else {
          out(0, j) = 2.0 * (data(0, j) - R) * residual_grad(0, j);
          out(1, j) = 2.0 * (data(1, j) - R) * residual_grad(0, j);
        }
        break;
    }
  }
  return out;
}

namespace {

std::pair<double, double> unit_scale(double a, double b, const char* what) {
  const double norm = std::hypot(a, b);
  if (!std::isfinite(norm))
    throw DegenerateProjection(std::string(what) + ": non-finite input");
  if (norm < std::numeric_limits<double>::min())
    throw DegenerateProjection(std::string(what) + ": zero-norm input has no projection");
  return {a / norm, b / norm};
}

}  // namespace

CirclePoint project_position(double x1, double x2, double radius) {
  const auto [u, v] = unit_scale(x1 - radius, x2 - radius, "project_position");
  return {radius + u, radius + v};
}

std::pair<double, double> project_rate(double v1, double v2) {
  return unit_scale(v1, v2, "project_rate");
}

}  // namespace cgan
