#pragma once

// Target functions, constraint residuals and closed-form projections for the
// four experiment families.

#include <stdexcept>
#include <string>
#include <utility>

#include "cgan/nn.hpp"

namespace cgan {

enum class ConstraintKind { FinalStep, IntermediateStep, CircleInterp, CircleExtrap };

// What the extrapolation map carries: position and rate (4-vector) or
// position only (2-vector).
enum class StateMode { StateRate, StateOnly };

const char* constraint_kind_name(ConstraintKind kind);
const char* state_mode_name(StateMode mode);

struct ConstraintSpec {
  ConstraintKind kind = ConstraintKind::FinalStep;
  double radius = 0.0;     // circle centre offset R
  double step = 0.0;       // extrapolation step dz
  double domain_lo = 0.0;
  double domain_hi = 1.0;
  StateMode mode = StateMode::StateRate;
  // IntermediateStep only: the generator produces y = g(z) (true) and the
  // final sample is z * y, or it produces x = z * g(z) directly (false).
  bool generate_inner = true;

  static ConstraintSpec final_step();
  static ConstraintSpec intermediate(bool generate_inner);
  static ConstraintSpec circle_interp(double radius, double lo, double hi);
  static ConstraintSpec circle_extrap(double radius, double step, StateMode mode, double lo,
                                      double hi);

  Index generator_input_width() const;
  Index generator_output_width() const;
  Index residual_width() const;
};

// 1 - (2z - 1)^2
double target_final(double z);

struct IntermediateTarget {
  double y;
  double x;
};
IntermediateTarget target_intermediate(double z);

struct CirclePoint {
  double x1;
  double x2;
};
// (R - sin z, R - cos z)
CirclePoint circle_state(double z, double radius);

// (R - sin z, -cos z, R - cos z, sin z)
Eigen::Vector4d circle_full_state(double z, double radius);

// Exact generator target for input coordinate z (interpolation kinds) or the
// exact state at z (CircleExtrap, width per mode).
Vector exact_target(const ConstraintSpec& spec, double z);

// Constraint residual of a data vector paired with its input. For the
// interpolation kinds the input is (z); for CircleExtrap the input is the
// current state and the residual is evaluated on the data (next state).
Vector residual(const ConstraintSpec& spec, const Eigen::Ref<const Vector>& input,
                const Eigen::Ref<const Vector>& data);

// Residual of a generator output (epsilon').
inline Vector residual_generated(const ConstraintSpec& spec, const Eigen::Ref<const Vector>& input,
                                 const Eigen::Ref<const Vector>& gen_out) {
  return residual(spec, input, gen_out);
}

// Residual of an exact sample before any noise (epsilon).
inline Vector residual_true(const ConstraintSpec& spec, const Eigen::Ref<const Vector>& input,
                            const Eigen::Ref<const Vector>& sample) {
  return residual(spec, input, sample);
}

// Column-wise residuals for a batch.
Matrix residual_batch(const ConstraintSpec& spec, const Eigen::Ref<const Matrix>& inputs,
                      const Eigen::Ref<const Matrix>& data);

// Back-propagates d(loss)/d(residual) to d(loss)/d(data), one column per sample.
Matrix residual_vjp(const ConstraintSpec& spec, const Eigen::Ref<const Matrix>& inputs,
                    const Eigen::Ref<const Matrix>& data,
                    const Eigen::Ref<const Matrix>& residual_grad);

// Raised when a projection receives the circle centre (or zero rate).
class DegenerateProjection : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Rescales (x1 - R, x2 - R) to unit length.
CirclePoint project_position(double x1, double x2, double radius);

// Rescales (v1, v2) to unit length.
std::pair<double, double> project_rate(double v1, double v2);

}  // namespace cgan
