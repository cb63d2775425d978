#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "cgan/nn.hpp"
#include "grad_check.hpp"

using namespace cgan;

TEST_CASE("elu values and smoothness at zero") {
  CHECK(elu(0.0) == 0.0);
  CHECK(elu(2.0) == 2.0);
  CHECK(elu(-1.0) == doctest::Approx(std::exp(-1.0) - 1.0).epsilon(1e-15));
  CHECK(elu(-1.0) == doctest::Approx(-0.6321205588).epsilon(1e-10));
  CHECK(elu_derivative(0.0) == 1.0);
  CHECK(elu_derivative(-1e-12) == doctest::Approx(1.0).epsilon(1e-11));
  CHECK(std::abs(elu(-1e-12) - elu(1e-12)) < 3e-12);
}

TEST_CASE("vectorised elu in forward matches the scalar definition") {
  DenseLayer<double> l;
  l.weight = Matrix::Identity(1, 1);
  l.bias = Vector::Zero(1);
  l.activation = Activation::Elu;
  DenseLayer<double> out;
  out.weight = Matrix::Identity(1, 1);
  out.bias = Vector::Zero(1);
  out.activation = Activation::Linear;
  Mlp<double> net({l, out});
  Matrix x(1, 7);
  x << -30.0, -2.5, -1.0, -1e-9, 0.0, 1e-9, 3.0;
  const Matrix y = predict(net, x);
  for (Index j = 0; j < x.cols(); ++j)
    CHECK(y(0, j) == doctest::Approx(elu(x(0, j))).epsilon(1e-15));
}

TEST_CASE("sigmoid stays strictly inside the unit interval") {
  CHECK(sigmoid(0.0) == 0.5);
  for (double x : {0.3, 1.7, 12.0, 40.0}) CHECK(sigmoid(-x) == doctest::Approx(1.0 - sigmoid(x)).epsilon(1e-12));
  for (double x : {-700.0, -50.0, 50.0, 700.0, 1e6, -1e6}) {
    const double s = sigmoid(x);
    CHECK(s > 0.0);
    CHECK(s < 1.0);
    CHECK(std::isfinite(std::log(s)));
    CHECK(std::isfinite(std::log(1.0 - s)));
  }
}

TEST_CASE("init_params is deterministic with zero biases") {
  Random a(42), b(42);
  const auto n1 = init_params<double>({1, 10, 10, 1}, Activation::Linear, a);
  const auto n2 = init_params<double>({1, 10, 10, 1}, Activation::Linear, b);
  for (std::size_t i = 0; i < n1.depth(); ++i) {
    CHECK(n1.layer(i).weight == n2.layer(i).weight);
    CHECK(n1.layer(i).bias.isZero(0.0));
  }
  CHECK(n1.layer(0).activation == Activation::Elu);
  CHECK(n1.layer(2).activation == Activation::Linear);
  CHECK(n1.parameter_count() == 10 + 10 + 100 + 10 + 10 + 1);
}

TEST_CASE("init_params weight statistics and bounds") {
  Random rng(7);
  const auto net = init_params<double>({20, 20, 1}, Activation::Sigmoid, rng);
  const Matrix& w = net.layer(0).weight;
  const double s = std::sqrt(6.0 / 40.0);
  CHECK(w.maxCoeff() <= s);
  CHECK(w.minCoeff() >= -s);
  // Uniform[-s, s] has standard deviation s / sqrt(3); the mean of 400 draws
  // has standard deviation s / sqrt(1200).
  CHECK(std::abs(w.mean()) <= 3.0 * s / std::sqrt(1200.0));
}

TEST_CASE("init_params rejects bad widths") {
  Random rng(1);
  CHECK_THROWS_AS(init_params<double>({3}, Activation::Linear, rng), std::invalid_argument);
  CHECK_THROWS_AS(init_params<double>({3, 0, 1}, Activation::Linear, rng), std::invalid_argument);
  CHECK_THROWS_AS(init_params<double>({3, -2, 1}, Activation::Linear, rng), std::invalid_argument);
}

TEST_CASE("forward examples") {
  Random rng(3);
  auto net = init_params<double>({2, 5, 5, 3}, Activation::Sigmoid, rng);
  for (std::size_t i = 0; i < net.depth(); ++i) {
    net.weight(i).setZero();
    net.bias(i).setZero();
  }
  const Matrix x = Matrix::Random(2, 4);
  const auto f = forward(net, x);
  CHECK(f.output.isConstant(0.5, 0.0));

  DenseLayer<double> id;
  id.weight = Matrix::Identity(3, 3);
  id.bias = Vector::Zero(3);
  id.activation = Activation::Linear;
  Mlp<double> identity({id});
  const Matrix y = Matrix::Random(3, 5);
  CHECK(predict(identity, y) == y);

  auto net2 = init_params<double>({2, 5, 5, 3}, Activation::Sigmoid, rng);
  CHECK(forward(net2, x).output == forward(net2, x).output);
  CHECK(predict(net2, x) == forward(net2, x).output);
  CHECK_THROWS_AS(forward(net2, Matrix::Zero(3, 2)), std::invalid_argument);
}

TEST_CASE("backward of a single linear layer") {
  DenseLayer<double> l;
  l.weight.resize(2, 3);
  l.weight << 1, 2, 3, 4, 5, 6;
  l.bias = Vector::Constant(2, 0.5);
  l.activation = Activation::Linear;
  Mlp<double> net({l});
  Matrix x(3, 1);
  x << 0.1, -0.2, 0.3;
  Matrix g(2, 1);
  g << 1.5, -2.0;
  const auto f = forward(net, x);
  const auto grads = backward(net, f.cache, g);
  CHECK((grads.weight[0] - g * x.transpose()).norm() == 0.0);
  CHECK((grads.bias[0] - g.col(0)).norm() == 0.0);
  CHECK((grads.input - l.weight.transpose() * g).norm() < 1e-15);

  const auto zero = backward(net, f.cache, Matrix::Zero(2, 1));
  CHECK(zero.weight[0].isZero(0.0));
  CHECK(zero.input.isZero(0.0));
}

TEST_CASE("backward matches central finite differences") {
  Random rng(11);
  for (const auto& widths : {std::vector<Index>{3, 7, 5, 2}, std::vector<Index>{4, 6, 6, 6, 4}}) {
    for (Activation out : {Activation::Linear, Activation::Sigmoid}) {
      auto net = init_params<double>(widths, out, rng);
      for (std::size_t i = 0; i < net.depth(); ++i)
        for (Index r = 0; r < net.bias(i).size(); ++r) net.bias(i)(r) = rng.uniform(-0.5, 0.5);
      const Matrix x = Matrix::Random(widths.front(), 6);
      const auto result = testing::check_gradients(net, x, rng, 1e-5, 200);
      INFO("max relative error " << result.max_rel);
      CHECK(result.checked >= 100);
      CHECK(result.max_rel <= 1e-4);
    }
  }
}

TEST_CASE("backward rejects a stale cache") {
  Random rng(5);
  auto net = init_params<double>({2, 4, 1}, Activation::Sigmoid, rng);
  const Matrix x = Matrix::Random(2, 3);
  const auto f = forward(net, x);
  net.bias(0)(0) += 0.1;
  CHECK_THROWS_AS(backward(net, f.cache, Matrix::Ones(1, 3)), std::logic_error);
  auto f2 = forward(net, x);
  CHECK_THROWS_AS(backward(net, f2.cache, Matrix::Ones(2, 3)), std::invalid_argument);
}

TEST_CASE("forward and backward leave the network untouched") {
  Random rng(6);
  auto net = init_params<double>({2, 4, 1}, Activation::Sigmoid, rng);
  const auto before = net.layer(1).weight;
  const auto rev = net.revision();
  const auto f = forward(net, Matrix::Random(2, 3));
  backward(net, f.cache, Matrix::Ones(1, 3));
  CHECK(net.revision() == rev);
  CHECK(net.layer(1).weight == before);
}

TEST_CASE("sgd_step arithmetic") {
  DenseLayer<double> l;
  l.weight = Matrix::Constant(1, 1, 1.0);
  l.bias = Vector::Zero(1);
  l.activation = Activation::Linear;
  Mlp<double> net({l});
  GradientBundle<double> g;
  g.weight = {Matrix::Constant(1, 1, 2.0)};
  g.bias = {Vector::Zero(1)};
  sgd_step(net, g, 0.1);
  CHECK(net.layer(0).weight(0, 0) == doctest::Approx(0.8).epsilon(1e-15));

  const double before = net.layer(0).weight(0, 0);
  sgd_step(net, g, 0.0);
  CHECK(net.layer(0).weight(0, 0) == before);

  g.weight[0](0, 0) = std::nan("");
  CHECK_THROWS_AS(sgd_step(net, g, 0.1), DivergenceError);
  g.weight = {Matrix::Zero(2, 1)};
  CHECK_THROWS_AS(sgd_step(net, g, 0.1), std::invalid_argument);
}

TEST_CASE("sequential steps differ from one step on the summed initial gradients") {
  // loss = p^2 / 2 has gradient p. Two steps from p = 1 with lr 0.1 land on
  // 0.81; one step with twice the initial gradient lands on 0.8.
  DenseLayer<double> l;
  l.weight = Matrix::Constant(1, 1, 1.0);
  l.bias = Vector::Zero(1);
  l.activation = Activation::Linear;
  Mlp<double> seq({l});
  Mlp<double> once({l});
  auto grad_of = [](const Mlp<double>& n) {
    GradientBundle<double> g;
    g.weight = {n.layer(0).weight};
    g.bias = {Vector::Zero(1)};
    return g;
  };
  sgd_step(seq, grad_of(seq), 0.1);
  sgd_step(seq, grad_of(seq), 0.1);
  auto doubled = grad_of(once);
  doubled.weight[0] *= 2.0;
  sgd_step(once, doubled, 0.1);
  CHECK(seq.layer(0).weight(0, 0) == doctest::Approx(0.81).epsilon(1e-14));
  CHECK(once.layer(0).weight(0, 0) == doctest::Approx(0.8).epsilon(1e-14));
  CHECK(seq.layer(0).weight(0, 0) != once.layer(0).weight(0, 0));
}

TEST_CASE("snapshot round trip is exact") {
  Random rng(9);
  const auto net = init_params<double>({4, 20, 20, 4}, Activation::Linear, rng);
  const auto path = std::filesystem::temp_directory_path() / "cgan_snapshot_test.txt";
  save_snapshot(net, path.string());
  const auto back = load_snapshot<double>(path.string());
  std::filesystem::remove(path);
  REQUIRE(back.depth() == net.depth());
  for (std::size_t i = 0; i < net.depth(); ++i) {
    CHECK(back.layer(i).weight == net.layer(i).weight);
    CHECK(back.layer(i).bias == net.layer(i).bias);
    CHECK(back.layer(i).activation == net.layer(i).activation);
  }
  CHECK_THROWS(load_snapshot<double>("/nonexistent/snapshot.txt"));
}
