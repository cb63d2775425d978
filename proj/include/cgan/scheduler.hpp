#pragma once

// Parcel-based learning-rate schedule driven by the monitored relative error.
//
// Training is split into parcels of n_check iterations. At the end of each
// parcel three checks run on the recorded RE_m series; if any fires the
// learning rate is divided by alpha. Training stops once at least half of a
// parcel's values are at or below tol, or once the rate falls below lr_min.

#include <array>
#include <cstddef>
#include <span>

namespace cgan {

struct SchedulerConfig {
  std::size_t n_check = 2000;
  double r_lower = 0.20;
  double r_upper = 0.80;
  double r_drop = 0.25;
  double alpha = 2.0;
  double lr_min = 1e-12;
  double tol = 0.052;

  void validate() const;
};

enum class RateAction { KeepRate, ReduceRate };

struct ParcelDecision {
  RateAction action = RateAction::KeepRate;
  // [0] minimum inside the band, [1] last > first, [2] drop beyond r_drop.
  std::array<bool, 3> fired{};
};

ParcelDecision evaluate_parcel(std::span<const double> re_series, const SchedulerConfig& cfg);

double apply_decision(double lr, const ParcelDecision& decision, const SchedulerConfig& cfg);

bool check_converged(std::span<const double> re_series, const SchedulerConfig& cfg);

bool check_stalled(double lr, const SchedulerConfig& cfg);

}  // namespace cgan
