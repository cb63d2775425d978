#pragma once

// Adversarial training with optional constraint-residual augmentation of the
// discriminator input, monitored by RE_m and governed by the parcel
// scheduler.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cgan/constraints.hpp"
#include "cgan/datagen.hpp"
#include "cgan/nn.hpp"
#include "cgan/scheduler.hpp"

namespace cgan {

struct GanConfig {
  ConstraintSpec spec;
  std::vector<Index> generator_hidden;
  std::vector<Index> discriminator_hidden;
  Index samples = 10000;  // M
  Index batch = 1000;     // m
  double initial_lr = 1e-2;
  double residual_noise_c = 0.01;
  bool enforce_constraint = true;
  bool noisy_cloud = false;
  // Residual noise is redrawn every iteration unless this is false, in which
  // case one draw per training sample is fixed for the whole run.
  bool resample_residual_noise = true;
  CloudConfig cloud;
  std::uint64_t seed = 1;
  std::size_t max_iter = 200000;
  SchedulerConfig scheduler;

  std::vector<Index> generator_widths() const;
  std::vector<Index> discriminator_widths() const;
  Index discriminator_input_width() const;
  void validate() const;
};

struct IterationRecord {
  double re_m = 0.0;
  double d_loss_abs = 0.0;
  double g_loss_abs = 0.0;
  double lr = 0.0;  // rate used for this iteration's updates
};

struct ParcelRecord {
  std::size_t parcel = 0;
  ParcelDecision decision;
  double lr_after = 0.0;
  bool converged = false;
};

struct TrainingState {
  std::size_t iteration = 0;
  double lr = 0.0;
  std::vector<IterationRecord> history;
  std::vector<ParcelRecord> parcels;
  Mlp<double> generator;
  Mlp<double> discriminator;
};

struct BatchReport {
  double re_m = 0.0;
  double d_loss = 0.0;
  double g_loss = 0.0;
};

enum class Outcome { Converged, Stalled, MaxIter };

const char* outcome_name(Outcome outcome);

// Independent streams derived from one run seed.
enum class RngStream : std::uint64_t { Data = 1, Init = 2, Train = 3, Monitor = 4, Noise = 5 };
std::uint64_t derive_seed(std::uint64_t seed, RngStream stream);

// Builds the dataset the configuration trains on (interpolation samples or
// noisy clouds).
Dataset build_dataset(const GanConfig& config);

// Fresh generator and discriminator at the configured learning rate.
TrainingState init_training(const GanConfig& config);

// Discriminator input columns: [input; data; residual]. The residual block is
// present iff enforce is set.
Matrix build_disc_input(const ConstraintSpec& spec, bool enforce,
                        const Eigen::Ref<const Matrix>& inputs, const Eigen::Ref<const Matrix>& data,
                        const std::optional<Matrix>& residual);

// -[mean log D(true) + mean log(1 - D(gen))]
double discriminator_loss(const Eigen::Ref<const Matrix>& d_true, const Eigen::Ref<const Matrix>& d_gen);

// -mean log D(gen)
double generator_loss(const Eigen::Ref<const Matrix>& d_gen);

// Gradient of generator_loss with respect to the generator output, including
// the path through the generated-sample residual when enforce is set.
Matrix generator_output_gradient(const Mlp<double>& discriminator, const ConstraintSpec& spec,
                                 bool enforce, const Eigen::Ref<const Matrix>& inputs,
                                 const Eigen::Ref<const Matrix>& gen_out, double* loss = nullptr);

// Relative error of generator outputs against exact targets for the
// constraint variant. Terms whose exact denominator is below 1e-8 in
// magnitude are left out.
double relative_error(const ConstraintSpec& spec, const Eigen::Ref<const Matrix>& outputs,
                      const Eigen::Ref<const Matrix>& targets, const Eigen::Ref<const Vector>& z);

// relative_error of the generator's predictions on a batch.
double compute_re_m(const Mlp<double>& generator, const ConstraintSpec& spec,
                    const Eigen::Ref<const Matrix>& inputs, const Eigen::Ref<const Matrix>& targets,
                    const Eigen::Ref<const Vector>& z);

inline constexpr double kDenominatorGuard = 1e-8;

struct DiscriminatorStep {
  double loss = 0.0;
  GradientBundle<double> grads;
};

// Loss and parameter gradients of the discriminator on a true batch and a
// generated batch. Residuals must be present iff enforce is set.
DiscriminatorStep discriminator_gradient(const Mlp<double>& discriminator, const ConstraintSpec& spec,
                                         bool enforce, const Eigen::Ref<const Matrix>& true_in,
                                         const Eigen::Ref<const Matrix>& true_data,
                                         const std::optional<Matrix>& true_res,
                                         const Eigen::Ref<const Matrix>& gen_in,
                                         const Eigen::Ref<const Matrix>& gen_out,
                                         const std::optional<Matrix>& gen_res);

// Trains one iteration: a discriminator step, then a generator step. The
// report's re_m is left at zero; monitoring is separate.
BatchReport train_step(TrainingState& state, const GanConfig& config, const Dataset& data,
                       Random& rng, const Matrix* fixed_noise = nullptr);

struct TrainHooks {
  // Replaces the RE_m monitor when set.
  std::function<double(const Mlp<double>& generator, std::size_t iteration)> monitor;
  // Parcel outcomes replayed instead of evaluated when set.
  const std::vector<ParcelRecord>* decision_tape = nullptr;
  std::function<void(const TrainingState&, const ParcelRecord&)> on_parcel;
};

struct TrainResult {
  TrainingState state;
  Outcome outcome = Outcome::MaxIter;
};

TrainResult train(const GanConfig& config, const Dataset& data, const TrainHooks& hooks = {});
TrainResult train(const GanConfig& config, const TrainHooks& hooks = {});

// iter,re_m,d_loss_abs,g_loss_abs,lr
void write_trace_csv(const TrainingState& state, const std::string& path);
// parcel,check1,check2,check3,decision,lr_after,converged
void write_decisions_csv(const TrainingState& state, const std::string& path);

}  // namespace cgan
