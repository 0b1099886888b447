#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>

#include "fedcomp/error.hpp"
#include "fedcomp/model.hpp"
#include "fedcomp/reference.hpp"

using namespace fedcomp;

namespace {

/// Hand count of an affine stack input -> sizes -> input.
Eigen::Index count_by_hand(Eigen::Index in, std::vector<Eigen::Index> sizes) {
  Eigen::Index prev = in, total = 0;
  sizes.push_back(in);
  for (auto s : sizes) {
    total += prev * s + s;
    prev = s;
  }
  return total;
}

std::vector<reference::Layer> to_reference(const ParameterVector& p) {
  std::vector<reference::Layer> out;
  for (std::size_t l = 0; l < p.layer_count(); ++l) {
    const auto w = p.weight(l);
    reference::Layer layer{static_cast<std::size_t>(w.rows()), static_cast<std::size_t>(w.cols()), {}, {}};
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) layer.weight.push_back(w(r, c));
    }
    for (Eigen::Index r = 0; r < w.rows(); ++r) layer.bias.push_back(p.bias(l)[r]);
    out.push_back(std::move(layer));
  }
  return out;
}

WindowSet random_windows(Eigen::Index dim, Eigen::Index n, unsigned seed, double missing = 0.0) {
  std::mt19937 gen(seed);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> ud;
  WindowSet ws{Matrix(dim, n), BoolMatrix(dim, n)};
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < dim; ++i) {
      ws.windows(i, j) = std::sin(0.4 * i + 0.1 * j) + 0.1 * nd(gen);
      ws.masks(i, j) = ud(gen) >= missing;
      if (!ws.masks(i, j)) ws.windows(i, j) = 0.0;
    }
  }
  return ws;
}

/// Zero biases put dead units exactly on the rectifier kink; finite differences need
/// every preactivation away from 0.
ParameterVector with_random_biases(ParameterVector p, unsigned seed) {
  std::mt19937 gen(seed);
  std::normal_distribution<double> nd(0.0, 0.3);
  for (std::size_t l = 0; l < p.layer_count(); ++l) {
    for (auto& b : p.bias(l)) b = nd(gen);
  }
  return p;
}

}  // namespace

TEST_CASE("parameter counts") {
  CHECK(param_count(50, {{64, 32, 32, 64}}) == count_by_hand(50, {64, 32, 32, 64}));
  CHECK(param_count(50, {{64, 32, 32, 64}}) == 11762);
  CHECK(param_count(24 * 50, {{128, 64, 64, 128}}) == count_by_hand(1200, {128, 64, 64, 128}));
  CHECK(param_count(1, {{1}}) == 4);
  CHECK(param_count(6, {{5, 3}}) == count_by_hand(6, {5, 3}));
  CHECK(init_model(50, {{64, 32, 32, 64}}, 1).size() == 11762);
  CHECK_THROWS_AS(architecture(0, {{4}}), Error);
  CHECK_THROWS_AS(architecture(4, {{0}}), Error);
}

TEST_CASE("init_model is deterministic and bounded") {
  const auto a = init_model(20, {{8, 4, 8}}, 5);
  CHECK(a == init_model(20, {{8, 4, 8}}, 5));
  CHECK_FALSE(a == init_model(20, {{8, 4, 8}}, 6));
  for (std::size_t l = 0; l < a.layer_count(); ++l) {
    const auto w = a.weight(l);
    const double bound = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    CHECK(w.cwiseAbs().maxCoeff() <= bound);
    CHECK(a.bias(l).isZero());
  }
}

TEST_CASE("forward agrees with the serial reference") {
  for (unsigned seed = 1; seed <= 3; ++seed) {
    const auto model = init_model(12, {{7, 3, 7}}, seed);
    Vector x = Vector::LinSpaced(12, -1.5, 2.0) * static_cast<double>(seed);
    const Vector out = forward(model, x);
    const auto ref = reference::forward(to_reference(model), std::vector<double>(x.data(), x.data() + x.size()));
    REQUIRE(ref.size() == 12);
    for (Eigen::Index i = 0; i < 12; ++i) CHECK(out[i] == doctest::Approx(ref[static_cast<std::size_t>(i)]).epsilon(1e-12));
    Matrix batch(12, 2);
    batch << x, -x;
    const Matrix outs = forward_batch(model, batch);
    CHECK((outs.col(0) - out).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((outs.col(1) - forward(model, -x)).cwiseAbs().maxCoeff() < 1e-12);
  }
  CHECK_THROWS_AS(forward(init_model(4, {{2}}, 1), Vector::Zero(5)), DimensionError);
}

TEST_CASE("identity-like network reproduces its input") {
  // 2 -> 4 -> 2 with W1 = [I; -I], W2 = [I, -I] computes relu(x) - relu(-x) = x.
  auto p = ParameterVector(architecture(2, {{4}}));
  p.weight(0) << 1, 0, 0, 1, -1, 0, 0, -1;
  p.weight(1) << 1, 0, -1, 0, 0, 1, 0, -1;
  Vector x(2);
  x << 0.7, -2.5;
  CHECK((forward(p, x) - x).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("masked_loss") {
  Vector x(4), xh(4);
  x << 1, 2, 3, 4;
  xh << 1, 0, 3, 100;
  SparsityMask::Bits m(4);
  m << true, true, true, false;
  const auto l = masked_loss(x, xh, m);
  CHECK(l.value == doctest::Approx(4.0 / 3.0));
  CHECK(l.observed == 3);

  SUBCASE("unobserved reconstruction values do not matter") {
    Vector other = xh;
    other[3] = -1e9;
    CHECK(masked_loss(x, other, m).value == l.value);
  }
  SUBCASE("nothing observed") {
    const auto none = masked_loss(x, xh, SparsityMask::Bits::Constant(4, false));
    CHECK(none.no_observed());
    CHECK(none.value == 0.0);
  }
}

TEST_CASE("gradient matches central finite differences") {
  for (unsigned seed = 1; seed <= 5; ++seed) {
  const auto model = with_random_biases(init_model(6, {{5, 3, 5}}, seed), seed);
  const auto ws = random_windows(6, 4, seed + 100, 0.3);
  auto global = model;
  global.flat().array() += 0.05;
  for (ProximalTerm prox : {ProximalTerm{}, ProximalTerm{&global, 0.3, 2.0}, ProximalTerm{&global, 0.3, 1.0}}) {
    const auto g = gradient(model, ws.windows, ws.masks, prox);
    CHECK(g.loss == doctest::Approx(objective(model, ws.windows, ws.masks, prox)).epsilon(1e-12));
    const double h = 1e-6;
    double worst = 0.0;
    for (Eigen::Index i = 0; i < model.size(); ++i) {
      auto plus = model, minus = model;
      plus.flat()[i] += h;
      minus.flat()[i] -= h;
      const double fd = (objective(plus, ws.windows, ws.masks, prox) - objective(minus, ws.windows, ws.masks, prox)) / (2 * h);
      worst = std::max(worst, std::abs(fd - g.grad.flat()[i]) / std::max(1.0, std::abs(fd)));
    }
    CHECK(worst < 1e-6);
  }
  }
}

TEST_CASE("data gradient vanishes at a perfect reconstruction") {
  // relu(x) - relu(-x) = x, so this 2 -> 4 -> 2 network is an exact identity.
  auto p = ParameterVector(architecture(2, {{4}}));
  p.weight(0) << 1, 0, 0, 1, -1, 0, 0, -1;
  p.weight(1) << 1, 0, -1, 0, 0, 1, 0, -1;
  Matrix x(2, 3);
  x << 0.5, -1.0, 2.0, 0.25, 3.0, -0.75;
  const auto g = gradient(p, x, BoolMatrix::Constant(2, 3, true), ProximalTerm{});
  CHECK(g.loss == 0.0);
  CHECK(g.grad.flat().isZero());
}

TEST_CASE("proximal term value and gradient") {
  // With an empty batch, only (factor/2) mu ||theta - g||^2 remains.
  auto model = ParameterVector(architecture(1, {{1}}));
  model.flat() << 1.0, 2.0, 3.0, 4.0;
  auto global = model.zeros_like();
  const Matrix empty(1, 0);
  const BoolMatrix no_mask(1, 0);
  const ProximalTerm full{&global, 0.5, 2.0};
  CHECK(objective(model, empty, no_mask, full) == doctest::Approx(0.5 * 30.0));
  const auto g = gradient(model, empty, no_mask, full);
  CHECK((g.grad.flat() - model.flat()).cwiseAbs().maxCoeff() < 1e-15);  // 2 * mu * theta with mu 0.5
  const ProximalTerm half{&global, 0.5, 1.0};
  CHECK(objective(model, empty, no_mask, half) == doctest::Approx(0.25 * 30.0));
}

TEST_CASE("local_train") {
  const auto ws = random_windows(10, 64, 7, 0.2);
  const auto start = init_model(10, {{8, 4, 8}}, 2);
  ProximalConfig cfg;
  cfg.learning_rate = 0.02;
  cfg.batch_size = 8;
  cfg.epochs = 1;

  SUBCASE("deterministic given the seed") {
    CHECK(local_train(start, ws, start, cfg, nullptr, 9).model == local_train(start, ws, start, cfg, nullptr, 9).model);
  }
  SUBCASE("zero epochs are rejected") {
    cfg.epochs = 0;
    CHECK_THROWS_AS(local_train(start, ws, start, cfg, nullptr, 1), Error);
  }
  SUBCASE("small learning rate decreases the local objective") {
    cfg.learning_rate = 1e-3;
    cfg.batch_size = 64;
    const ProximalTerm prox{&start, cfg.mu, cfg.prox_factor};
    double prev = objective(start, ws.windows, ws.masks, prox);
    auto m = start;
    for (int e = 0; e < 10; ++e) {
      m = local_train(m, ws, start, cfg, nullptr, static_cast<std::uint64_t>(e)).model;
      const double now = objective(m, ws.windows, ws.masks, prox);
      CHECK(now < prev);
      prev = now;
    }
  }
  SUBCASE("masked coordinates stay exactly fixed") {
    auto sparse = start;
    SparsityMask::Bits bits(sparse.size());
    for (Eigen::Index i = 0; i < bits.size(); ++i) bits[i] = i % 3 == 0;
    const SparsityMask mask(bits);
    mask.apply(sparse.flat());
    cfg.epochs = 3;
    const auto out = local_train(sparse, ws, sparse, cfg, &mask, 4).model;
    Eigen::Index moved = 0;
    for (Eigen::Index i = 0; i < out.size(); ++i) {
      if (!mask[i]) {
        CHECK(out.flat()[i] == 0.0);
      } else if (out.flat()[i] != sparse.flat()[i]) {
        ++moved;
      }
    }
    CHECK(moved > 0);
  }
  SUBCASE("larger mu keeps the update closer to the global model") {
    auto global = start;
    global.flat().array() += 0.5;
    cfg.epochs = 5;
    double prev = std::numeric_limits<double>::infinity();
    for (double mu : {0.0, 0.5, 5.0}) {
      cfg.mu = mu;
      const auto out = local_train(start, ws, global, cfg, nullptr, 3).model;
      const double dist = (out.flat() - global.flat()).norm();
      CHECK(dist < prev);
      prev = dist;
    }
  }
  SUBCASE("lr 0 and an all-false mask leave the model unchanged") {
    auto zero_lr = cfg;
    zero_lr.learning_rate = 0.0;
    CHECK(local_train(start, ws, start, zero_lr, nullptr, 1).model == start);
    const auto frozen = SparsityMask::all(start.size(), false);
    CHECK(local_train(start, ws, start, cfg, &frozen, 1).model == start);
  }
  SUBCASE("one batch of one epoch is a single gradient step") {
    auto global = start;
    global.flat().array() -= 0.1;
    cfg.batch_size = 64;
    const auto g = gradient(start, ws.windows, ws.masks, ProximalTerm{&global, cfg.mu, cfg.prox_factor});
    const auto out = local_train(start, ws, global, cfg, nullptr, 1).model;
    CHECK((out.flat() - (start.flat() - cfg.learning_rate * g.grad.flat())).cwiseAbs().maxCoeff() < 1e-9);
  }
  SUBCASE("a tiny step does not increase the full-batch objective") {
    cfg.learning_rate = 1e-6;
    cfg.batch_size = 64;
    for (unsigned seed = 0; seed < 5; ++seed) {
      const auto m = init_model(10, {{8, 4, 8}}, seed);
      auto global = m;
      global.flat().array() += 0.2;
      const ProximalTerm prox{&global, cfg.mu, cfg.prox_factor};
      const auto after = local_train(m, ws, global, cfg, nullptr, seed).model;
      CHECK(objective(after, ws.windows, ws.masks, prox) <= objective(m, ws.windows, ws.masks, prox));
    }
  }
  SUBCASE("without observed data the proximal term pulls toward the global model") {
    WindowSet blind = ws;
    blind.masks.setConstant(false);
    auto global = start;
    global.flat().array() += 1.0;
    cfg.mu = 0.5;
    cfg.learning_rate = 0.1;  // lr * 2 mu < 1
    auto m = start;
    double prev = (m.flat() - global.flat()).norm();
    for (int step = 0; step < 5; ++step) {
      m = local_train(m, blind, global, cfg, nullptr, static_cast<std::uint64_t>(step)).model;
      const double dist = (m.flat() - global.flat()).norm();
      CHECK(dist < prev);
      prev = dist;
    }
  }
  SUBCASE("empty training set is an error") {
    WindowSet none{Matrix(10, 0), BoolMatrix(10, 0)};
    CHECK_THROWS_AS(local_train(start, none, start, cfg, nullptr, 1), Error);
  }
}

TEST_CASE("serialization round trip is bit exact") {
  auto p = init_model(7, {{5, 2, 5}}, 3);
  p.flat()[0] = -0.0;
  p.flat()[1] = 1e-310;
  std::stringstream ss;
  p.write(ss);
  CHECK(ParameterVector::read(ss) == p);

  const auto path = std::filesystem::temp_directory_path() / "fedcomp_test_model.bin";
  p.save(path);
  CHECK(ParameterVector::load(path) == p);
  CHECK(std::filesystem::file_size(path) == 8 + 16 * p.layer_count() + 8 * static_cast<std::size_t>(p.size()));

  SUBCASE("truncated input fails") {
    std::string bytes;
    {
      std::stringstream s2;
      p.write(s2);
      bytes = s2.str();
    }
    std::stringstream cut(bytes.substr(0, bytes.size() - 3));
    CHECK_THROWS_AS(ParameterVector::read(cut), Error);
  }
  SUBCASE("mask round trip") {
    SparsityMask::Bits b(5);
    b << true, false, false, true, true;
    std::stringstream s3;
    SparsityMask(b).write(s3);
    CHECK(SparsityMask::read(s3) == SparsityMask(b));
  }
}
