#include "cgan/gan.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "cgan/csv.hpp"

namespace cgan {

const char* outcome_name(Outcome outcome) {
  switch (outcome) {
    case Outcome::Converged: return "converged";
    case Outcome::Stalled: return "stalled";
    case Outcome::MaxIter: return "max_iter";
  }
  return "?";
}

std::uint64_t derive_seed(std::uint64_t seed, RngStream stream) {
  // splitmix64 finaliser over (seed, stream)
  std::uint64_t x = seed + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(stream) + 1);
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::vector<Index> GanConfig::generator_widths() const {
  std::vector<Index> w{spec.generator_input_width()};
  w.insert(w.end(), generator_hidden.begin(), generator_hidden.end());
  w.push_back(spec.generator_output_width());
  return w;
}

std::vector<Index> GanConfig::discriminator_widths() const {
  std::vector<Index> w{discriminator_input_width()};
  w.insert(w.end(), discriminator_hidden.begin(), discriminator_hidden.end());
  w.push_back(1);
  return w;
}

Index GanConfig::discriminator_input_width() const {
  return spec.generator_input_width() + spec.generator_output_width() +
         (enforce_constraint ? spec.residual_width() : 0);
}

void GanConfig::validate() const {
  scheduler.validate();
  if (samples <= 0 || batch <= 0) throw std::invalid_argument("config: sizes must be positive");
  if (spec.kind == ConstraintKind::CircleExtrap) {
    if (cloud.n_cloud < 1 || samples % cloud.n_cloud != 0)
      throw std::invalid_argument("config: n_cloud must divide the sample count");
    if (batch > (samples / cloud.n_cloud) * cloud_split_sizes(cloud.n_cloud)[2])
      throw std::invalid_argument("config: batch larger than a split");
  } else {
    if (batch > samples / 3) throw std::invalid_argument("config: batch must not exceed M/3");
  }
  if (!(initial_lr >= 0.0)) throw std::invalid_argument("config: learning rate must be >= 0");
  if (!(residual_noise_c >= 0.0)) throw std::invalid_argument("config: residual noise c must be >= 0");
  if (enforce_constraint && spec.kind == ConstraintKind::IntermediateStep && !spec.generate_inner)
    throw std::invalid_argument("config: enforcing the intermediate constraint needs the inner output");
  for (Index w : generator_hidden)
    if (w <= 0) throw std::invalid_argument("config: generator widths must be positive");
  for (Index w : discriminator_hidden)
    if (w <= 0) throw std::invalid_argument("config: discriminator widths must be positive");
}

Dataset build_dataset(const GanConfig& config) {
  Random rng(derive_seed(config.seed, RngStream::Data));
  if (config.spec.kind == ConstraintKind::CircleExtrap) {
    CloudConfig cloud = config.cloud;
    if (!config.noisy_cloud) {
      cloud.r_range = 0.0;
      cloud.v_range = 0.0;
    }
    return build_extrap_dataset(config.spec, cloud, config.samples, rng);
  }
  return build_interp_dataset(config.spec, config.samples, rng);
}

TrainingState init_training(const GanConfig& config) {
  config.validate();
  Random rng(derive_seed(config.seed, RngStream::Init));
  TrainingState state;
  state.lr = config.initial_lr;
  state.generator = init_params<double>(config.generator_widths(), Activation::Linear, rng);
  state.discriminator = init_params<double>(config.discriminator_widths(), Activation::Sigmoid, rng);
  return state;
}

Matrix build_disc_input(const ConstraintSpec& spec, bool enforce,
                        const Eigen::Ref<const Matrix>& inputs, const Eigen::Ref<const Matrix>& data,
                        const std::optional<Matrix>& residual) {
  if (enforce != residual.has_value())
    throw std::invalid_argument("build_disc_input: residual must be present iff enforcing");
  if (inputs.rows() != spec.generator_input_width() || data.rows() != spec.generator_output_width() ||
      inputs.cols() != data.cols())
    throw std::invalid_argument("build_disc_input: input/data shape mismatch");
  const Index res_w = enforce ? spec.residual_width() : 0;
  if (enforce && (residual->rows() != res_w || residual->cols() != data.cols()))
    throw std::invalid_argument("build_disc_input: residual shape mismatch");
  Matrix out(inputs.rows() + data.rows() + res_w, data.cols());
  out.topRows(inputs.rows()) = inputs;
  out.middleRows(inputs.rows(), data.rows()) = data;
  if (enforce) out.bottomRows(res_w) = *residual;
  return out;
}

double discriminator_loss(const Eigen::Ref<const Matrix>& d_true, const Eigen::Ref<const Matrix>& d_gen) {
  if (d_true.size() == 0 || d_gen.size() == 0)
    throw std::invalid_argument("discriminator_loss: empty batch");
  return -(d_true.array().log().mean() + (1.0 - d_gen.array()).log().mean());
}

double generator_loss(const Eigen::Ref<const Matrix>& d_gen) {
  if (d_gen.size() == 0) throw std::invalid_argument("generator_loss: empty batch");
  return -d_gen.array().log().mean();
}

Matrix generator_output_gradient(const Mlp<double>& discriminator, const ConstraintSpec& spec,
                                 bool enforce, const Eigen::Ref<const Matrix>& inputs,
                                 const Eigen::Ref<const Matrix>& gen_out, double* loss) {
  std::optional<Matrix> res;
  if (enforce) res = residual_batch(spec, inputs, gen_out);
  const Matrix d_in = build_disc_input(spec, enforce, inputs, gen_out, res);
  const auto fwd = forward(discriminator, d_in);
  const double n = static_cast<double>(gen_out.cols());
  if (loss) *loss = generator_loss(fwd.output);
  const Matrix out_grad = (-1.0 / n) * fwd.output.array().inverse().matrix();
  const auto grads = backward(discriminator, fwd.cache, out_grad);
  Matrix g = grads.input.middleRows(inputs.rows(), gen_out.rows());
  if (enforce)
    g += residual_vjp(spec, inputs, gen_out, grads.input.bottomRows(spec.residual_width()));
  return g;
}

double relative_error(const ConstraintSpec& spec, const Eigen::Ref<const Matrix>& out,
                      const Eigen::Ref<const Matrix>& targets, const Eigen::Ref<const Vector>& z) {
  if (out.cols() == 0) throw std::invalid_argument("relative_error: empty batch");
  if (out.rows() != targets.rows() || out.cols() != targets.cols() || z.size() != out.cols())
    throw std::invalid_argument("relative_error: shape mismatch");
  double total = 0.0;
  Index count = 0;
  auto add = [&](double num, double den) {
    if (std::abs(den) < kDenominatorGuard) return;
    total += std::abs(num) / std::abs(den);
    ++count;
  };
  for (Index j = 0; j < out.cols(); ++j) {
    if (spec.kind == ConstraintKind::IntermediateStep && spec.generate_inner) {
      // final sample is z * y
      add(z(j) * out(0, j) - z(j) * targets(0, j), z(j) * targets(0, j));
    } else {
      for (Index r = 0; r < out.rows(); ++r) add(out(r, j) - targets(r, j), targets(r, j));
    }
  }
  if (count == 0) return 0.0;
  // The circle-interpolation error sums its two channels; the others average.
  const double scale = spec.kind == ConstraintKind::CircleInterp ? 2.0 : 1.0;
  return scale * total / static_cast<double>(count);
}

double compute_re_m(const Mlp<double>& generator, const ConstraintSpec& spec,
                    const Eigen::Ref<const Matrix>& inputs, const Eigen::Ref<const Matrix>& targets,
                    const Eigen::Ref<const Vector>& z) {
  if (inputs.cols() == 0) throw std::invalid_argument("compute_re_m: empty batch");
  return relative_error(spec, predict(generator, inputs), targets, z);
}

DiscriminatorStep discriminator_gradient(const Mlp<double>& discriminator, const ConstraintSpec& spec,
                                         bool enforce, const Eigen::Ref<const Matrix>& true_in,
                                         const Eigen::Ref<const Matrix>& true_data,
                                         const std::optional<Matrix>& true_res,
                                         const Eigen::Ref<const Matrix>& gen_in,
                                         const Eigen::Ref<const Matrix>& gen_out,
                                         const std::optional<Matrix>& gen_res) {
  const Index n_true = true_data.cols();
  const Index n_gen = gen_out.cols();
  Matrix d_in(discriminator.input_width(), n_true + n_gen);
  d_in.leftCols(n_true) = build_disc_input(spec, enforce, true_in, true_data, true_res);
  d_in.rightCols(n_gen) = build_disc_input(spec, enforce, gen_in, gen_out, gen_res);

  const auto fwd = forward(discriminator, d_in);
  const auto d_true = fwd.output.leftCols(n_true);
  const auto d_gen = fwd.output.rightCols(n_gen);
  DiscriminatorStep step;
  step.loss = discriminator_loss(d_true, d_gen);

  Matrix out_grad(1, n_true + n_gen);
  out_grad.leftCols(n_true) = (-1.0 / static_cast<double>(n_true)) * d_true.array().inverse().matrix();
  out_grad.rightCols(n_gen) =
      (1.0 / static_cast<double>(n_gen)) * (1.0 - d_gen.array()).inverse().matrix();
  step.grads = backward(discriminator, fwd.cache, out_grad);
  return step;
}

namespace {

Matrix gather(const Matrix& src, const std::vector<Index>& idx) {
  Matrix out(src.rows(), static_cast<Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) out.col(static_cast<Index>(k)) = src.col(idx[k]);
  return out;
}

std::vector<Index> draw_indices(Random& rng, Index n, Index from) {
  std::vector<Index> idx(static_cast<std::size_t>(n));
  for (auto& i : idx) i = static_cast<Index>(rng.index(static_cast<std::size_t>(from)));
  return idx;
}

void require_finite(double v, const char* what, std::size_t iteration) {
  if (!std::isfinite(v))
    throw DivergenceError(std::string(what) + " is non-finite at iteration " +
                          std::to_string(iteration));
}

}  // namespace

BatchReport train_step(TrainingState& state, const GanConfig& config, const Dataset& data,
                       Random& rng, const Matrix* fixed_noise) {
  const ConstraintSpec& spec = config.spec;
  const bool enforce = config.enforce_constraint;
  const Index m = config.batch;
  const SampleSet& train = data.train;
  const double lr = state.lr;
  BatchReport report;

  // Discriminator step on a true batch and an independently drawn generated batch.
  {
    const auto true_idx = draw_indices(rng, m, train.size());
    const auto gen_idx = draw_indices(rng, m, train.size());
    const Matrix true_in = gather(train.inputs, true_idx);
    const Matrix true_data = gather(train.targets, true_idx);
    const Matrix gen_in = gather(train.inputs, gen_idx);
    const Matrix gen_out = predict(state.generator, gen_in);

    std::optional<Matrix> true_res;
    std::optional<Matrix> gen_res;
    if (enforce) {
      true_res = residual_batch(spec, true_in, true_data);
      if (fixed_noise) {
        for (Index k = 0; k < m; ++k) true_res->col(k) += fixed_noise->col(true_idx[static_cast<std::size_t>(k)]);
      } else {
        for (Index k = 0; k < true_res->size(); ++k)
          true_res->data()[k] += residual_noise(rng, config.residual_noise_c, config.samples);
      }
      gen_res = residual_batch(spec, gen_in, gen_out);
    }
    const auto step = discriminator_gradient(state.discriminator, spec, enforce, true_in, true_data,
                                             true_res, gen_in, gen_out, gen_res);
    report.d_loss = step.loss;
    require_finite(report.d_loss, "discriminator loss", state.iteration);
    sgd_step(state.discriminator, step.grads, lr);
  }

  // Generator step against the updated discriminator.
  {
    const auto idx = draw_indices(rng, m, train.size());
    const Matrix in = gather(train.inputs, idx);
    const auto fwd = forward(state.generator, in);
    const Matrix g_out = generator_output_gradient(state.discriminator, spec, enforce, in,
                                                   fwd.output, &report.g_loss);
    require_finite(report.g_loss, "generator loss", state.iteration);
    const auto grads = backward(state.generator, fwd.cache, g_out);
    sgd_step(state.generator, grads, lr);
  }
  return report;
}

TrainResult train(const GanConfig& config, const Dataset& data, const TrainHooks& hooks) {
  TrainResult result{init_training(config), Outcome::MaxIter};
  TrainingState& state = result.state;
  const SchedulerConfig& sched = config.scheduler;

  Random rng(derive_seed(config.seed, RngStream::Train));
  Random monitor_rng(derive_seed(config.seed, RngStream::Monitor));

  std::optional<Matrix> fixed_noise;
  if (config.enforce_constraint && !config.resample_residual_noise) {
    Random noise_rng(derive_seed(config.seed, RngStream::Noise));
    fixed_noise = Matrix(config.spec.residual_width(), data.train.size());
    for (Index k = 0; k < fixed_noise->size(); ++k)
      fixed_noise->data()[k] = residual_noise(noise_rng, config.residual_noise_c, config.samples);
  }

  const SampleSet& val = data.val;
  std::vector<double> parcel_re;
  parcel_re.reserve(sched.n_check);
  state.history.reserve(std::min<std::size_t>(config.max_iter, 1u << 20));

  while (state.iteration < config.max_iter) {
    const double lr_used = state.lr;
    BatchReport report = train_step(state, config, data, rng, fixed_noise ? &*fixed_noise : nullptr);
    if (hooks.monitor) {
      report.re_m = hooks.monitor(state.generator, state.iteration);
    } else {
      const auto idx = draw_indices(monitor_rng, config.batch, val.size());
      const Matrix in = gather(val.inputs, idx);
      const Matrix tgt = gather(val.targets, idx);
      Vector z(config.batch);
      for (Index k = 0; k < config.batch; ++k) z(k) = val.z(idx[static_cast<std::size_t>(k)]);
      report.re_m = compute_re_m(state.generator, config.spec, in, tgt, z);
    }
    require_finite(report.re_m, "RE_m", state.iteration);
    state.history.push_back({report.re_m, std::abs(report.d_loss), std::abs(report.g_loss), lr_used});
    parcel_re.push_back(report.re_m);
    ++state.iteration;

    if (parcel_re.size() < sched.n_check) continue;

    ParcelRecord rec;
    rec.parcel = state.parcels.size();
    if (hooks.decision_tape) {
      if (rec.parcel >= hooks.decision_tape->size()) break;
      rec = (*hooks.decision_tape)[rec.parcel];
      state.lr = rec.lr_after;
    } else {
      rec.converged = check_converged(parcel_re, sched);
      if (!rec.converged) {
        rec.decision = evaluate_parcel(parcel_re, sched);
        state.lr = apply_decision(state.lr, rec.decision, sched);
      }
      rec.lr_after = state.lr;
    }
    state.parcels.push_back(rec);
    parcel_re.clear();
    if (hooks.on_parcel) hooks.on_parcel(state, rec);
    if (rec.converged) {
      result.outcome = Outcome::Converged;
      break;
    }
    if (check_stalled(state.lr, sched)) {
      result.outcome = Outcome::Stalled;
      break;
    }
  }
  return result;
}

TrainResult train(const GanConfig& config, const TrainHooks& hooks) {
  config.validate();
  const Dataset data = build_dataset(config);
  return train(config, data, hooks);
}

void write_trace_csv(const TrainingState& state, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "iter,re_m,d_loss_abs,g_loss_abs,lr\n";
  for (std::size_t i = 0; i < state.history.size(); ++i) {
    const auto& h = state.history[i];
    out << i << ',' << format_real(h.re_m) << ',' << format_real(h.d_loss_abs) << ','
        << format_real(h.g_loss_abs) << ',' << format_real(h.lr) << '\n';
  }
}

void write_decisions_csv(const TrainingState& state, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "parcel,check1,check2,check3,decision,lr_after,converged\n";
  for (const auto& p : state.parcels) {
    out << p.parcel << ',' << p.decision.fired[0] << ',' << p.decision.fired[1] << ','
        << p.decision.fired[2] << ','
        << (p.decision.action == RateAction::ReduceRate ? "reduce" : "keep") << ','
        << format_real(p.lr_after) << ',' << p.converged << '\n';
  }
}

}  // namespace cgan
