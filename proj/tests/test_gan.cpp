#include <doctest.h>

#include <cmath>
#include <numbers>

#include "cgan/gan.hpp"

using namespace cgan;

namespace {

GanConfig small_config(ConstraintSpec spec, bool enforce) {
  GanConfig c;
  c.spec = spec;
  c.generator_hidden = {6, 6};
  c.discriminator_hidden = {6};
  c.samples = 300;
  c.batch = 30;
  c.enforce_constraint = enforce;
  c.scheduler.n_check = 20;
  c.max_iter = 100;
  c.seed = 3;
  return c;
}

GanConfig small_extrap_config(StateMode mode, bool enforce) {
  // 60 samples in clouds of 3 gives 20 grid points over [0, 1].
  GanConfig c = small_config(ConstraintSpec::circle_extrap(1.6, 0.05, mode, 0.0, 1.0), enforce);
  c.samples = 60;
  c.batch = 10;
  c.cloud = CloudConfig{0.01, 0.01, 3};
  c.noisy_cloud = true;
  return c;
}

Matrix random_matrix(Index rows, Index cols, Random& rng, double lo, double hi) {
  Matrix m(rows, cols);
  for (Index k = 0; k < m.size(); ++k) m.data()[k] = rng.uniform(lo, hi);
  return m;
}

}  // namespace

TEST_CASE("discriminator input assembly") {
  const auto fs = ConstraintSpec::final_step();
  Matrix z(1, 2), x(1, 2), e(1, 2);
  z << 0.1, 0.2;
  x << 0.3, 0.4;
  e << 0.5, 0.6;
  const Matrix on = build_disc_input(fs, true, z, x, e);
  CHECK(on.rows() == 3);
  CHECK(on(0, 1) == 0.2);
  CHECK(on(1, 1) == 0.4);
  CHECK(on(2, 1) == 0.6);
  CHECK(build_disc_input(fs, false, z, x, std::nullopt).rows() == 2);
  CHECK_THROWS_AS(build_disc_input(fs, false, z, x, e), std::invalid_argument);
  CHECK_THROWS_AS(build_disc_input(fs, true, z, x, std::nullopt), std::invalid_argument);

  auto cfg = small_extrap_config(StateMode::StateRate, true);
  CHECK(cfg.discriminator_input_width() == 10);
  cfg.enforce_constraint = false;
  CHECK(cfg.discriminator_input_width() == 8);
  CHECK(small_config(fs, true).discriminator_input_width() == 3);
  CHECK(small_config(fs, false).discriminator_input_width() == 2);
  CHECK(small_extrap_config(StateMode::StateOnly, false).discriminator_input_width() == 4);
}

TEST_CASE("game losses") {
  const Matrix half = Matrix::Constant(1, 8, 0.5);
  CHECK(discriminator_loss(half, half) == doctest::Approx(std::log(4.0)).epsilon(1e-15));
  CHECK(std::log(4.0) == doctest::Approx(1.3863).epsilon(1e-4));
  CHECK(generator_loss(half) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(std::log(2.0) == doctest::Approx(0.6931).epsilon(1e-4));

  const Matrix near_one = Matrix::Constant(1, 4, 1.0 - 1e-12);
  const Matrix near_zero = Matrix::Constant(1, 4, 1e-12);
  CHECK(discriminator_loss(near_one, near_zero) < 1e-11);
  CHECK(discriminator_loss(near_one, near_zero) > 0.0);
  CHECK(generator_loss(Matrix::Ones(1, 3)) == 0.0);
  CHECK_THROWS_AS(generator_loss(Matrix(1, 0)), std::invalid_argument);
}

TEST_CASE("relative error examples") {
  const auto fs = ConstraintSpec::final_step();
  Random rng(2);
  const Index n = 50;
  Vector z(n);
  Matrix target(1, n);
  for (Index j = 0; j < n; ++j) {
    z(j) = rng.uniform(0.01, 0.99);
    target(0, j) = target_final(z(j));
  }
  CHECK(relative_error(fs, target, target, z) == 0.0);
  CHECK(relative_error(fs, 1.052 * target, target, z) == doctest::Approx(0.052).epsilon(1e-12));

  // Terms with a vanishing exact value are dropped.
  Matrix t2 = target;
  Matrix o2 = 1.1 * target;
  t2(0, 0) = 0.0;
  o2(0, 0) = 5.0;
  CHECK(relative_error(fs, o2, t2, z) == doctest::Approx(0.1).epsilon(1e-12));

  // Intermediate: compares z * y against z * g(z).
  const auto inter = ConstraintSpec::intermediate(true);
  Matrix y(1, 2), yt(1, 2);
  Vector zz(2);
  zz << 0.5, 0.25;
  yt << target_final(0.5), target_final(0.25);
  y << 1.2 * yt(0, 0), 0.9 * yt(0, 1);
  CHECK(relative_error(inter, y, yt, zz) == doctest::Approx(0.15).epsilon(1e-12));

  // Circle interpolation sums its two channels.
  const auto circle = ConstraintSpec::circle_interp(1.1, 0.0, 10.0);
  Matrix ct(2, 1), co(2, 1);
  Vector cz(1);
  cz << 0.3;
  const auto p = circle_state(0.3, 1.1);
  ct << p.x1, p.x2;
  co << 1.1 * p.x1, 1.3 * p.x2;
  CHECK(relative_error(circle, co, ct, cz) == doctest::Approx(0.4).epsilon(1e-12));

  // Extrapolation averages its four channels; the zero rate channel at z = 0 is dropped.
  const auto rate = ConstraintSpec::circle_extrap(1.6, 0.05, StateMode::StateRate, 0.0, 10.0);
  Matrix et(4, 1), eo(4, 1);
  Vector ez(1);
  ez << 0.0;
  et.col(0) = circle_full_state(0.0, 1.6);
  eo = et;
  CHECK(relative_error(rate, eo, et, ez) == 0.0);
  eo(0, 0) *= 1.3;
  CHECK(relative_error(rate, eo, et, ez) == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("generator output gradient matches finite differences") {
  Random rng(21);
  struct Case {
    ConstraintSpec spec;
    bool enforce;
  };
  const Case cases[] = {
      {ConstraintSpec::final_step(), true},
      {ConstraintSpec::final_step(), false},
      {ConstraintSpec::circle_interp(1.1, 0.0, 10.0), true},
      {ConstraintSpec::circle_extrap(1.6, 0.05, StateMode::StateRate, 0.0, 10.0), true},
      {ConstraintSpec::circle_extrap(1.6, 0.05, StateMode::StateOnly, 0.0, 10.0), true},
  };
  for (const auto& c : cases) {
    const Index in_w = c.spec.generator_input_width();
    const Index out_w = c.spec.generator_output_width();
    const Index d_w = in_w + out_w + (c.enforce ? c.spec.residual_width() : 0);
    const auto disc = init_params<double>({d_w, 8, 8, 1}, Activation::Sigmoid, rng);
    const Matrix inputs = random_matrix(in_w, 4, rng, 0.0, 1.0);
    const Matrix out = random_matrix(out_w, 4, rng, -1.0, 2.0);
    double loss = 0.0;
    const Matrix g = generator_output_gradient(disc, c.spec, c.enforce, inputs, out, &loss);
    auto loss_at = [&](const Matrix& o) {
      std::optional<Matrix> res;
      if (c.enforce) res = residual_batch(c.spec, inputs, o);
      return generator_loss(predict(disc, build_disc_input(c.spec, c.enforce, inputs, o, res)));
    };
    CHECK(loss == doctest::Approx(loss_at(out)).epsilon(1e-14));
    const double h = 1e-6;
    for (Index k = 0; k < out.size(); ++k) {
      Matrix p = out, m = out;
      p.data()[k] += h;
      m.data()[k] -= h;
      const double fd = (loss_at(p) - loss_at(m)) / (2.0 * h);
      CHECK(g.data()[k] == doctest::Approx(fd).epsilon(1e-6).scale(1e-6));
    }
  }
}

TEST_CASE("residual path contributes through the residual input weight") {
  // One sigmoid layer on (z, x, eps): dL/dx = -(1 - D) (w_x + w_eps) / n.
  const auto fs = ConstraintSpec::final_step();
  DenseLayer<double> l;
  l.weight.resize(1, 3);
  l.weight << 0.3, -0.7, 1.9;
  l.bias = Vector::Constant(1, 0.1);
  l.activation = Activation::Sigmoid;
  Matrix z(1, 2), x(1, 2);
  z << 0.2, 0.6;
  x << 0.5, 0.9;

  auto expected = [&](const DenseLayer<double>& layer) {
    Matrix g(1, 2);
    for (Index j = 0; j < 2; ++j) {
      const double eps = x(0, j) - target_final(z(0, j));
      const double d = sigmoid(layer.weight(0, 0) * z(0, j) + layer.weight(0, 1) * x(0, j) +
                               layer.weight(0, 2) * eps + layer.bias(0));
      g(0, j) = -(1.0 - d) * (layer.weight(0, 1) + layer.weight(0, 2)) / 2.0;
    }
    return g;
  };
  const Matrix with = generator_output_gradient(Mlp<double>({l}), fs, true, z, x);
  CHECK((with - expected(l)).norm() < 1e-15);

  DenseLayer<double> cut = l;
  cut.weight(0, 2) = 0.0;
  const Matrix without = generator_output_gradient(Mlp<double>({cut}), fs, true, z, x);
  CHECK((without - expected(cut)).norm() < 1e-15);
  for (Index j = 0; j < 2; ++j) {
    const double d = sigmoid(0.3 * z(0, j) - 0.7 * x(0, j) + 0.1);
    CHECK(without(0, j) == doctest::Approx(-(1.0 - d) * -0.7 / 2.0).epsilon(1e-14));
  }
}

TEST_CASE("discriminator gradient and descent") {
  Random rng(31);
  const auto fs = ConstraintSpec::final_step();
  auto disc = init_params<double>({3, 7, 7, 1}, Activation::Sigmoid, rng);
  const Matrix tin = random_matrix(1, 20, rng, 0.0, 1.0);
  Matrix tdata(1, 20);
  for (Index j = 0; j < 20; ++j) tdata(0, j) = target_final(tin(0, j));
  const Matrix gin = random_matrix(1, 20, rng, 0.0, 1.0);
  const Matrix gout = random_matrix(1, 20, rng, -0.5, 1.5);
  const std::optional<Matrix> tres = residual_batch(fs, tin, tdata);
  const std::optional<Matrix> gres = residual_batch(fs, gin, gout);

  const auto step = discriminator_gradient(disc, fs, true, tin, tdata, tres, gin, gout, gres);
  auto loss_of = [&](const Mlp<double>& d) {
    return discriminator_gradient(d, fs, true, tin, tdata, tres, gin, gout, gres).loss;
  };
  const double h = 1e-6;
  for (std::size_t layer = 0; layer < disc.depth(); ++layer) {
    for (Index k = 0; k < disc.layer(layer).weight.size(); k += 3) {
      Mlp<double> p = disc, m = disc;
      p.weight(layer).data()[k] += h;
      m.weight(layer).data()[k] -= h;
      const double fd = (loss_of(p) - loss_of(m)) / (2.0 * h);
      CHECK(step.grads.weight[layer].data()[k] == doctest::Approx(fd).epsilon(1e-6).scale(1e-6));
    }
  }

  Mlp<double> stepped = disc;
  sgd_step(stepped, step.grads, 1e-6);
  CHECK(loss_of(stepped) < step.loss);
}

TEST_CASE("train_step with zero learning rate leaves parameters unchanged") {
  auto cfg = small_config(ConstraintSpec::final_step(), true);
  cfg.initial_lr = 0.0;
  const Dataset data = build_dataset(cfg);
  TrainingState state = init_training(cfg);
  const auto g0 = state.generator.layer(1).weight;
  const auto d0 = state.discriminator.layer(0).weight;
  Random rng(1);
  const auto report = train_step(state, cfg, data, rng);
  CHECK(std::isfinite(report.d_loss));
  CHECK(std::isfinite(report.g_loss));
  CHECK(state.generator.layer(1).weight == g0);
  CHECK(state.discriminator.layer(0).weight == d0);
}

TEST_CASE("training is deterministic for a fixed seed") {
  for (auto cfg : {small_config(ConstraintSpec::final_step(), true),
                   small_config(ConstraintSpec::circle_interp(1.1, 0.0, 10.0), false),
                   small_extrap_config(StateMode::StateRate, true)}) {
    const auto a = train(cfg);
    const auto b = train(cfg);
    REQUIRE(a.state.history.size() == b.state.history.size());
    for (std::size_t i = 0; i < a.state.history.size(); ++i) {
      CHECK(a.state.history[i].re_m == b.state.history[i].re_m);
      CHECK(a.state.history[i].d_loss_abs == b.state.history[i].d_loss_abs);
      CHECK(a.state.history[i].g_loss_abs == b.state.history[i].g_loss_abs);
    }
    for (std::size_t i = 0; i < a.state.generator.depth(); ++i)
      CHECK(a.state.generator.layer(i).weight == b.state.generator.layer(i).weight);
  }
}

TEST_CASE("monitoring does not influence the parameter trajectory") {
  auto cfg = small_config(ConstraintSpec::final_step(), true);
  cfg.max_iter = 120;
  const auto reference = train(cfg);
  REQUIRE(reference.state.parcels.size() == 6);

  TrainHooks hooks;
  hooks.monitor = [](const Mlp<double>&, std::size_t) { return 0.25; };
  hooks.decision_tape = &reference.state.parcels;
  const auto replay = train(cfg, hooks);
  REQUIRE(replay.state.iteration == reference.state.iteration);
  for (std::size_t i = 0; i < replay.state.history.size(); ++i) {
    CHECK(replay.state.history[i].re_m == 0.25);
    CHECK(replay.state.history[i].lr == reference.state.history[i].lr);
  }
  for (std::size_t i = 0; i < cfg.generator_widths().size() - 1; ++i) {
    CHECK(replay.state.generator.layer(i).weight == reference.state.generator.layer(i).weight);
    CHECK(replay.state.generator.layer(i).bias == reference.state.generator.layer(i).bias);
  }
  for (std::size_t i = 0; i < cfg.discriminator_widths().size() - 1; ++i)
    CHECK(replay.state.discriminator.layer(i).weight == reference.state.discriminator.layer(i).weight);
}

TEST_CASE("training loop bookkeeping") {
  auto cfg = small_config(ConstraintSpec::final_step(), true);
  cfg.max_iter = 0;
  const auto none = train(cfg);
  CHECK(none.outcome == Outcome::MaxIter);
  CHECK(none.state.history.empty());

  cfg.max_iter = 70;
  const auto r = train(cfg);
  CHECK(r.state.history.size() == r.state.iteration);
  CHECK(r.state.parcels.size() == r.state.iteration / cfg.scheduler.n_check);
  for (std::size_t i = 1; i < r.state.history.size(); ++i) {
    const double ratio = r.state.history[i - 1].lr / r.state.history[i].lr;
    CHECK((ratio == 1.0 || ratio == cfg.scheduler.alpha));
  }

  // A tolerance nobody can miss converges at the first parcel boundary.
  cfg.scheduler.tol = 1e9;
  const auto easy = train(cfg);
  CHECK(easy.outcome == Outcome::Converged);
  CHECK(easy.state.iteration == cfg.scheduler.n_check);

  // A floor above the initial rate stalls at the first reduction.
  cfg.scheduler.tol = 1e-30;
  cfg.scheduler.lr_min = cfg.initial_lr;
  cfg.max_iter = 10000;
  const auto stalled = train(cfg);
  CHECK(stalled.outcome == Outcome::Stalled);
  CHECK(stalled.state.lr < cfg.initial_lr);
}

TEST_CASE("fixed residual noise mode is deterministic and differs from resampling") {
  auto cfg = small_config(ConstraintSpec::final_step(), true);
  cfg.max_iter = 40;
  cfg.resample_residual_noise = false;
  const auto a = train(cfg);
  const auto b = train(cfg);
  CHECK(a.state.history.back().d_loss_abs == b.state.history.back().d_loss_abs);
  cfg.resample_residual_noise = true;
  const auto c = train(cfg);
  CHECK(a.state.history.back().d_loss_abs != c.state.history.back().d_loss_abs);
}

TEST_CASE("config validation") {
  auto cfg = small_config(ConstraintSpec::final_step(), true);
  cfg.batch = 101;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = small_config(ConstraintSpec::intermediate(false), true);
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.enforce_constraint = false;
  CHECK_NOTHROW(cfg.validate());
  auto ex = small_extrap_config(StateMode::StateRate, false);
  ex.samples = 61;
  CHECK_THROWS_AS(ex.validate(), std::invalid_argument);
}
