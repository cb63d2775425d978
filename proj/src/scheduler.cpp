#include "cgan/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace cgan {

void SchedulerConfig::validate() const {
  if (n_check == 0) throw std::invalid_argument("scheduler: n_check must be positive");
  if (!(0.0 < r_lower && r_lower < r_upper && r_upper < 1.0))
    throw std::invalid_argument("scheduler: need 0 < r_lower < r_upper < 1");
  if (!(r_drop > 0.0 && r_drop < 1.0)) throw std::invalid_argument("scheduler: r_drop in (0, 1)");
  if (!(alpha > 1.0)) throw std::invalid_argument("scheduler: alpha must exceed 1");
  if (!(lr_min > 0.0)) throw std::invalid_argument("scheduler: lr_min must be positive");
  if (!(tol > 0.0)) throw std::invalid_argument("scheduler: tol must be positive");
}

namespace {

void check_series(std::span<const double> series, const SchedulerConfig& cfg) {
  if (series.size() != cfg.n_check)
    throw std::invalid_argument("scheduler: series length " + std::to_string(series.size()) +
                                " != n_check " + std::to_string(cfg.n_check));
}

}  // namespace

ParcelDecision evaluate_parcel(std::span<const double> re_series, const SchedulerConfig& cfg) {
  check_series(re_series, cfg);
  for (double v : re_series)
    if (!std::isfinite(v)) throw std::invalid_argument("evaluate_parcel: non-finite RE_m");

  const double n = static_cast<double>(cfg.n_check);
  // Inclusive index band; the epsilon absorbs representation error in r * n.
  const auto band_lo = static_cast<std::size_t>(std::ceil(cfg.r_lower * n - 1e-9));
  const auto band_hi = static_cast<std::size_t>(std::floor(cfg.r_upper * n + 1e-9));
  const auto argmin = static_cast<std::size_t>(
      std::min_element(re_series.begin(), re_series.end()) - re_series.begin());

  const double first = re_series.front();
  const double last = re_series.back();

  ParcelDecision d;
  d.fired[0] = argmin >= band_lo && argmin <= band_hi;
  d.fired[1] = last > first;
  d.fired[2] = (first - last) > cfg.r_drop * first;
  d.action = (d.fired[0] || d.fired[1] || d.fired[2]) ? RateAction::ReduceRate : RateAction::KeepRate;
  return d;
}

double apply_decision(double lr, const ParcelDecision& decision, const SchedulerConfig& cfg) {
  return decision.action == RateAction::ReduceRate ? lr / cfg.alpha : lr;
}

bool check_converged(std::span<const double> re_series, const SchedulerConfig& cfg) {
  check_series(re_series, cfg);
  const auto hits = std::count_if(re_series.begin(), re_series.end(),
                                  [&](double v) { return v <= cfg.tol; });
  return 2 * static_cast<std::size_t>(hits) >= cfg.n_check;
}

bool check_stalled(double lr, const SchedulerConfig& cfg) { return lr < cfg.lr_min; }

}  // namespace cgan
