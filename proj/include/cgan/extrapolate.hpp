#pragma once

// Iterated application of a trained generator as an explicit one-step map,
// with optional projection back onto the circle constraints after each step.

#include <optional>
#include <string>
#include <vector>

#include "cgan/constraints.hpp"
#include "cgan/nn.hpp"

namespace cgan {

struct RolloutConfig {
  StateMode mode = StateMode::StateRate;
  bool projection = true;
  Index n_steps = 200;
  double step = 0.05;
  double radius = 1.6;
  Vector initial;  // empty means the exact state at z = 0

  Index state_width() const { return mode == StateMode::StateRate ? 4 : 2; }
};

struct TrajectoryPoint {
  double z = 0.0;
  Vector predicted;                 // raw generator output (initial state at step 0)
  std::optional<Vector> projected;  // present when projection is on
  Vector exact;
  double pos_residual = 0.0;                  // of the raw prediction
  std::optional<double> rate_residual;        // state_rate mode only

  // State carried to the next step.
  const Vector& state() const { return projected ? *projected : predicted; }
};

struct Trajectory {
  StateMode mode = StateMode::StateRate;
  bool projection = false;
  double radius = 0.0;
  std::vector<TrajectoryPoint> points;  // n_steps + 1, starting at z = 0
};

// Raised on a non-finite prediction or degenerate projection; names the step.
class RolloutError : public std::runtime_error {
 public:
  RolloutError(const std::string& what, Index step)
      : std::runtime_error(what + " at step " + std::to_string(step)), step_(step) {}
  Index step() const { return step_; }

 private:
  Index step_;
};

// Applies the one-step map, projecting if enabled. Used by rollout().
template <typename StepFn>
Trajectory rollout_with(StepFn&& step_fn, const RolloutConfig& cfg);

Trajectory rollout(const Mlp<double>& generator, const RolloutConfig& cfg);

// Maps a raw state onto both circles (position only in state_only mode).
Vector project_state(const Eigen::Ref<const Vector>& state, StateMode mode, double radius);

struct ChannelError {
  double max = 0.0;
  double mean = 0.0;
  Index counted = 0;
};

struct TrajectoryErrorSummary {
  std::vector<ChannelError> channels;  // x1, dx1, x2, dx2 or x1, x2

  // Largest max error over the position channels.
  double max_position() const;
};

// Per-channel |state - exact| / |exact| over every step, skipping steps whose
// exact value is below the 1e-8 guard.
TrajectoryErrorSummary trajectory_error(const Trajectory& traj);

// |position residual| of the raw prediction per step.
std::vector<double> constraint_violation_series(const Trajectory& traj);

// step,z,x1_pred,dx1_pred,x2_pred,dx2_pred,x1_proj,...,x1_exact,...,pos_residual,rate_residual
void write_trajectory_csv(const Trajectory& traj, const std::string& path);

// ---------------------------------------------------------------------------

template <typename StepFn>
Trajectory rollout_with(StepFn&& step_fn, const RolloutConfig& cfg) {
  const Index w = cfg.state_width();
  auto exact_at = [&](double z) -> Vector {
    const Eigen::Vector4d s = circle_full_state(z, cfg.radius);
    if (cfg.mode == StateMode::StateRate) return s;
    return Eigen::Vector2d(s(0), s(2));
  };
  auto residuals = [&](TrajectoryPoint& p) {
    const Vector& v = p.predicted;
    const double a = v(0) - cfg.radius;
    const double b = (cfg.mode == StateMode::StateRate ? v(2) : v(1)) - cfg.radius;
    p.pos_residual = a * a + b * b - 1.0;
    if (cfg.mode == StateMode::StateRate) p.rate_residual = v(1) * v(1) + v(3) * v(3) - 1.0;
  };

  Trajectory traj;
  traj.mode = cfg.mode;
  traj.projection = cfg.projection;
  traj.radius = cfg.radius;
  traj.points.reserve(static_cast<std::size_t>(cfg.n_steps + 1));

  TrajectoryPoint start;
  start.z = 0.0;
  start.exact = exact_at(0.0);
  start.predicted = cfg.initial.size() == 0 ? start.exact : cfg.initial;
  if (start.predicted.size() != w) throw std::invalid_argument("rollout: initial state width mismatch");
  residuals(start);
  if (cfg.projection) start.projected = project_state(start.predicted, cfg.mode, cfg.radius);
  traj.points.push_back(std::move(start));

  for (Index k = 1; k <= cfg.n_steps; ++k) {
    TrajectoryPoint p;
    p.z = static_cast<double>(k) * cfg.step;
    p.exact = exact_at(p.z);
    p.predicted = step_fn(traj.points.back().state());
    if (p.predicted.size() != w) throw RolloutError("rollout: map output width mismatch", k);
    if (!p.predicted.allFinite()) throw RolloutError("rollout: non-finite prediction", k);
    residuals(p);
    if (cfg.projection) {
      try {
        p.projected = project_state(p.predicted, cfg.mode, cfg.radius);
      } catch (const DegenerateProjection& e) {
        throw RolloutError(e.what(), k);
      }
    }
    traj.points.push_back(std::move(p));
  }
  return traj;
}

}  // namespace cgan
