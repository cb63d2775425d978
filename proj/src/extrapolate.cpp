#include "cgan/extrapolate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "cgan/csv.hpp"

namespace cgan {

Vector project_state(const Eigen::Ref<const Vector>& state, StateMode mode, double radius) {
  Vector out = state;
  if (mode == StateMode::StateRate) {
    const auto pos = project_position(state(0), state(2), radius);
    const auto [v1, v2] = project_rate(state(1), state(3));
    out << pos.x1, v1, pos.x2, v2;
  } else {
    const auto pos = project_position(state(0), state(1), radius);
    out << pos.x1, pos.x2;
  }
  return out;
}

Trajectory rollout(const Mlp<double>& generator, const RolloutConfig& cfg) {
  if (generator.input_width() != cfg.state_width() || generator.output_width() != cfg.state_width())
    throw std::invalid_argument("rollout: generator widths do not match the state mode");
  return rollout_with([&](const Vector& s) -> Vector { return predict(generator, s); }, cfg);
}

double TrajectoryErrorSummary::max_position() const {
  if (channels.size() == 4) return std::max(channels[0].max, channels[2].max);
  if (channels.size() == 2) return std::max(channels[0].max, channels[1].max);
  return 0.0;
}

TrajectoryErrorSummary trajectory_error(const Trajectory& traj) {
  TrajectoryErrorSummary summary;
  if (traj.points.empty()) return summary;
  const Index w = traj.points.front().exact.size();
  summary.channels.resize(static_cast<std::size_t>(w));
  std::vector<double> sums(static_cast<std::size_t>(w), 0.0);
  for (const auto& p : traj.points) {
    const Vector& s = p.state();
    for (Index c = 0; c < w; ++c) {
      const double den = std::abs(p.exact(c));
      if (den < 1e-8) continue;
      const double e = std::abs(s(c) - p.exact(c)) / den;
      auto& ch = summary.channels[static_cast<std::size_t>(c)];
      ch.max = std::max(ch.max, e);
      sums[static_cast<std::size_t>(c)] += e;
      ++ch.counted;
    }
  }
  for (std::size_t c = 0; c < summary.channels.size(); ++c) {
    auto& ch = summary.channels[c];
    ch.mean = ch.counted > 0 ? sums[c] / static_cast<double>(ch.counted) : 0.0;
  }
  return summary;
}

std::vector<double> constraint_violation_series(const Trajectory& traj) {
  std::vector<double> out;
  out.reserve(traj.points.size());
  for (const auto& p : traj.points) out.push_back(std::abs(p.pos_residual));
  return out;
}

void write_trajectory_csv(const Trajectory& traj, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "step,z,x1_pred,dx1_pred,x2_pred,dx2_pred,x1_proj,dx1_proj,x2_proj,dx2_proj,"
         "x1_exact,dx1_exact,x2_exact,dx2_exact,pos_residual,rate_residual\n";
  const bool full = traj.mode == StateMode::StateRate;
  // Four columns in x1,dx1,x2,dx2 order; rates are blank in state_only mode.
  auto write4 = [&](const Vector* v) {
    for (int c = 0; c < 4; ++c) {
      out << ',';
      if (!v) continue;
      if (full) {
        out << format_real((*v)(c));
      } else if (c == 0 || c == 2) {
        out << format_real((*v)(c / 2));
      }
    }
  };
  for (std::size_t k = 0; k < traj.points.size(); ++k) {
    const auto& p = traj.points[k];
    out << k << ',' << format_real(p.z);
    write4(&p.predicted);
    write4(p.projected ? &*p.projected : nullptr);
    write4(&p.exact);
    out << ',' << format_real(p.pos_residual) << ',' << format_optional(p.rate_residual) << '\n';
  }
}

}  // namespace cgan
