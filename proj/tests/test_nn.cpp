#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "drsac/nn/adam.hpp"
#include "drsac/nn/checkpoint.hpp"
#include "drsac/nn/gaussian_head.hpp"
#include "drsac/nn/gradcheck.hpp"
#include "drsac/nn/mlp.hpp"
#include "drsac/nn/tape.hpp"

namespace nn = drsac::nn;
using drsac::Matrix;
using drsac::Rng;
using nn::Var;

namespace {

constexpr double kRelTol = 1e-4;

// Inputs bounded away from the kinks of relu/min/clamp.
Matrix away_from_zero(Rng& rng, Eigen::Index r, Eigen::Index c) {
  Matrix m = drsac::uniform(rng, r, c, 0.1, 2.0);
  Matrix sign = drsac::uniform(rng, r, c, -1.0, 1.0);
  return m.cwiseProduct(sign.unaryExpr([](double s) { return s < 0 ? -1.0 : 1.0; }));
}

// Reduces a matrix Var to a scalar with fixed random weights so every entry
// of the Jacobian enters the check.
Var project(const Var& x, std::uint64_t seed) {
  Rng rng(seed);
  return nn::sum(x * x.tape().constant(drsac::uniform(rng, x.rows(), x.cols(), -1.0, 1.0)));
}

}  // namespace

TEST_CASE("every primitive passes central differences over 100 seeds") {
  using F = std::function<Var(nn::Tape&, const std::vector<Var>&)>;
  using Shape = std::pair<Eigen::Index, Eigen::Index>;
  struct Case {
    const char* name;
    F f;
    std::vector<Shape> shapes;
    bool positive = false;
  };
  const std::vector<Case> cases = {
      {"matmul", [](nn::Tape&, const std::vector<Var>& v) { return project(nn::matmul(v[0], v[1]), 1); }, {{5, 4}, {4, 3}}},
      {"add_bias", [](nn::Tape&, const std::vector<Var>& v) { return project(nn::add_bias(v[0], v[1]), 2); }, {{5, 4}, {1, 4}}},
      {"add/sub/mul", [](nn::Tape&, const std::vector<Var>& v) { return project((v[0] + v[1]) * (v[0] - v[1]) * v[0], 3); }, {{5, 4}, {5, 4}}},
      {"scale/add_scalar", [](nn::Tape&, const std::vector<Var>& v) { return project(2.5 * v[0] + 1.5, 4); }, {{5, 4}}},
      {"mul_scalar", [](nn::Tape&, const std::vector<Var>& v) { return project(nn::mul_scalar(v[1], v[0]), 5); }, {{5, 4}, {1, 1}}},
      {"mul_col", [](nn::Tape&, const std::vector<Var>& v) { return project(nn::mul_col(v[0], v[1]), 6); }, {{5, 4}, {5, 1}}},
      {"div_col", [](nn::Tape&, const std::vector<Var>& v) { return project(nn::div_col(v[0], v[1]), 7); }, {{5, 4}, {5, 1}}, true},
      {"tanh", [](nn::Tape&, const std::vector<Var>& v) { return project(nn::tanh(v[0]), 8); }, {{5, 4}}},
      {"relu", [](nn::Tape&, const std::vector<Var>& v) { return project(nn::relu(v[0]), 9); }, {{5, 4}}},
      {"sigmoid", [](nn::Tape&, const std::vector<Var>& v) { return project(nn::sigmoid(v[0]), 10); }, {{5, 4}}},
      {"exp", [](nn::Tape&, const std::vector<Var>& v) { return project(nn::exp(v[0]), 11); }, {{5, 4}}},
      {"log", [](nn::Tape&, const std::vector<Var>& v) { return project(nn::log(v[0]), 12); }, {{5, 4}}, true},
      {"softplus", [](nn::Tape&, const std::vector<Var>& v) { return project(nn::softplus(3.0 * v[0]), 13); }, {{5, 4}}},
      {"square", [](nn::Tape&, const std::vector<Var>& v) { return project(nn::square(v[0]), 14); }, {{5, 4}}},
      {"minimum", [](nn::Tape&, const std::vector<Var>& v) { return project(nn::minimum(v[0], v[1]), 15); }, {{5, 4}, {5, 4}}},
      {"clamp", [](nn::Tape&, const std::vector<Var>& v) { return project(nn::clamp(v[0], -1.05, 1.05), 16); }, {{5, 4}}},
      {"mean", [](nn::Tape&, const std::vector<Var>& v) { return nn::mean(nn::square(v[0])); }, {{5, 4}}},
      {"row_sum", [](nn::Tape&, const std::vector<Var>& v) { return project(nn::row_sum(nn::square(v[0])), 17); }, {{5, 4}}},
      {"concat/slice", [](nn::Tape&, const std::vector<Var>& v) { return project(nn::slice_cols(nn::concat_cols({v[0], nn::square(v[1])}), 2, 4), 18); }, {{5, 4}, {5, 3}}},
      {"logmeanexp", [](nn::Tape&, const std::vector<Var>& v) { return project(nn::logmeanexp_rows(3.0 * v[0]), 19); }, {{5, 4}}},
  };
  for (const auto& c : cases) {
    const std::string name = c.name;
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      Rng rng(seed);
      std::vector<Matrix> inputs;
      for (const auto& [r, k] : c.shapes) {
        Matrix m = away_from_zero(rng, r, k);
        if (c.positive) m = m.cwiseAbs();
        inputs.push_back(m);
      }
      if (name == "minimum") {
        // Keep the two arguments apart so no entry sits on the kink.
        inputs[1] = inputs[0] + away_from_zero(rng, 5, 4);
      }
      if (name == "clamp") {
        inputs[0] = inputs[0].unaryExpr([](double x) { return std::abs(std::abs(x) - 1.05) < 0.02 ? 0.5 * x : x; });
      }
      worst = std::max(worst, nn::check_input_gradients(c.f, inputs).max_rel_error);
    }
    INFO(name << " worst relative error " << worst);
    CHECK(worst <= kRelTol);
  }
}

TEST_CASE("detach stops the gradient") {
  nn::Tape t;
  Matrix a(1, 2), b(1, 2);
  a << 1.5, -2.0;
  b << 0.5, 3.0;
  const Var x = t.input(a);
  const Var y = t.input(b);
  t.backward(nn::sum(x * nn::detach(y) + nn::square(y)));
  CHECK(t.gradient(x) == b);
  CHECK(t.gradient(y) == 2.0 * b);
}

TEST_CASE("logexpectation with unequal weights") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    Matrix w = drsac::uniform(rng, 6, 5, 0.0, 1.0);
    w(0, 1) = 0.0;
    for (Eigen::Index i = 0; i < w.rows(); ++i) w.row(i) /= w.row(i).sum();
    const auto r = nn::check_input_gradients(
        [&](nn::Tape&, const std::vector<Var>& v) { return project(nn::log_expectation_rows(v[0], w), 30); },
        {drsac::uniform(rng, 6, 5, -20.0, 20.0)});
    CHECK(r.max_rel_error <= kRelTol);
  }
}

TEST_CASE("backward examples") {
  SUBCASE("sum of squared parameters") {
    nn::ParameterStore store;
    auto& p = store.add("p", 3, 2);
    p.value << 1, -2, 3, 0.5, -0.25, 4;
    nn::Tape t;
    const Var loss = nn::sum(nn::square(t.parameter(p)));
    t.backward(loss);
    CHECK((p.grad - 2.0 * p.value).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("composed tanh layer") {
    Rng rng(4);
    nn::ParameterStore store;
    nn::Mlp net(store, "net", {3, {8}, 2, nn::Activation::kTanh});
    net.initialize(rng);
    const Matrix x = drsac::uniform(rng, 7, 3, -1.0, 1.0);
    const auto r = nn::check_parameter_gradients(
        [&](nn::Tape& t) { return project(net.forward(t, t.constant(x)), 40); }, store);
    CHECK(r.max_rel_error <= kRelTol);
  }
  SUBCASE("logmeanexp node") {
    Rng rng(5);
    const auto r = nn::check_input_gradients(
        [](nn::Tape&, const std::vector<Var>& v) { return nn::sum(nn::logmeanexp_rows(v[0])); },
        {drsac::uniform(rng, 4, 10, -3.0, 3.0)});
    CHECK(r.max_rel_error <= kRelTol);
  }
}

TEST_CASE("tape misuse is rejected") {
  nn::Tape a;
  nn::Tape b;
  const Var x = a.input(Matrix::Ones(2, 2));
  const Var y = b.input(Matrix::Ones(2, 2));
  CHECK_THROWS_AS(nn::add(x, y), std::logic_error);
  CHECK_THROWS_AS(a.backward(x), std::logic_error);  // not 1x1
  const Var s = nn::sum(x);
  a.backward(s);
  CHECK_THROWS_AS(a.backward(s), std::logic_error);
  CHECK_THROWS_AS(nn::square(x), std::logic_error);  // recording after backward
  a.reset();
  CHECK_THROWS_AS(x.value(), std::logic_error);  // stale
  CHECK_THROWS_AS(Var().value(), std::logic_error);
  nn::Tape c;
  CHECK_THROWS_AS(nn::matmul(c.constant(Matrix::Ones(2, 3)), c.constant(Matrix::Ones(2, 3))),
                  std::invalid_argument);
}

TEST_CASE("mlp forward") {
  Rng rng(1);
  SUBCASE("zero parameters give zero output") {
    nn::ParameterStore store;
    nn::Mlp net(store, "z", {4, {16, 16}, 3});
    CHECK(net.predict(drsac::uniform(rng, 5, 4, -1, 1)).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("identity linear layer passes the input through") {
    nn::ParameterStore store;
    nn::Mlp net(store, "id", {3, {}, 3});
    net.weight(0).value = Matrix::Identity(3, 3);
    const Matrix x = drsac::uniform(rng, 4, 3, -1, 1);
    CHECK(net.predict(x) == x);
  }
  SUBCASE("tape forward equals predict, Jacobian matches differences") {
    nn::ParameterStore store;
    nn::Mlp net(store, "n", {3, {16, 16}, 2});
    net.initialize(rng);
    const Matrix x = away_from_zero(rng, 6, 3);
    nn::Tape t;
    CHECK((net.forward(t, t.constant(x)).value() - net.predict(x)).cwiseAbs().maxCoeff() < 1e-14);
    const auto r = nn::check_input_gradients(
        [&](nn::Tape& t, const std::vector<Var>& v) { return project(net.forward(t, v[0], false), 50); },
        {x});
    CHECK(r.max_rel_error <= kRelTol);
  }
  SUBCASE("shape mismatch") {
    nn::ParameterStore store;
    nn::Mlp net(store, "n", {3, {4}, 2});
    CHECK_THROWS(net.predict(Matrix::Zero(2, 4)));
  }
  SUBCASE("bind reuses an existing layout") {
    nn::ParameterStore store;
    nn::Mlp net(store, "n", {3, {4}, 2});
    net.initialize(rng);
    const auto again = nn::Mlp::bind(store, "n", {3, {4}, 2});
    const Matrix x = drsac::uniform(rng, 2, 3, -1, 1);
    CHECK(again.predict(x) == net.predict(x));
    CHECK_THROWS(nn::Mlp::bind(store, "n", {3, {5}, 2}));
  }
}

TEST_CASE("gaussian head") {
  SUBCASE("vanishing std gives the squashed mean") {
    nn::GaussianHead head{2, 2.0, true};
    Matrix out(1, 4);
    out << 0.3, -0.7, -20.0, -20.0;
    Rng rng(2);
    const auto s = head.sample_values(out, drsac::standard_normal(rng, 1, 2));
    CHECK(s.action(0, 0) == doctest::Approx(2.0 * std::tanh(0.3)).epsilon(1e-8));
    CHECK(s.action(0, 1) == doctest::Approx(2.0 * std::tanh(-0.7)).epsilon(1e-8));
  }
  SUBCASE("standard normal density at the mode") {
    nn::GaussianHead head{3, 1.0, false};
    const auto s = head.sample_values(Matrix::Zero(1, 6), Matrix::Zero(1, 3));
    CHECK(s.log_prob(0, 0) == doctest::Approx(-1.5 * std::log(2.0 * std::numbers::pi)));
  }
  SUBCASE("squashed density integrates to one") {
    nn::GaussianHead head{1, 2.0, true};
    for (auto [mu, log_std] : {std::pair{0.0, 0.0}, {0.8, -1.0}, {-1.5, 0.7}}) {
      Matrix out(1, 2);
      out << mu, log_std;
      const int n = 200000;
      double total = 0.0;
      for (int k = 0; k < n; ++k) {
        Matrix a(1, 1);
        a << -2.0 + 4.0 * (k + 0.5) / n;
        total += std::exp(head.log_prob_of(out, a)(0, 0)) * 4.0 / n;
      }
      CHECK(std::abs(total - 1.0) <= 1e-2);
    }
  }
  SUBCASE("tape sample agrees with value path and inverse density") {
    nn::GaussianHead head{2, 2.0, true};
    Rng rng(3);
    const Matrix out = drsac::uniform(rng, 5, 4, -1.0, 1.0);
    const Matrix eps = drsac::standard_normal(rng, 5, 2);
    nn::Tape t;
    const auto s = head.sample(t.constant(out), eps);
    const auto v = head.sample_values(out, eps);
    CHECK((s.action.value() - v.action).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((s.log_prob.value() - v.log_prob).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((head.log_prob_of(out, v.action) - v.log_prob).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(v.action.cwiseAbs().maxCoeff() <= 2.0);
  }
  SUBCASE("log-prob and action gradients") {
    nn::GaussianHead head{2, 2.0, true};
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng rng(seed);
      const Matrix eps = drsac::standard_normal(rng, 4, 2);
      const auto r = nn::check_input_gradients(
          [&](nn::Tape&, const std::vector<Var>& v) {
            const auto s = head.sample(v[0], eps);
            return nn::sum(s.log_prob) + project(s.action, 60);
          },
          {drsac::uniform(rng, 4, 4, -1.0, 1.0)});
      CHECK(r.max_rel_error <= kRelTol);
    }
  }
}

TEST_CASE("adam") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    nn::ParameterStore store;
    auto& p = store.add("p", 2, 2);
    p.value << 1, 2, 3, 4;
    const Matrix before = p.value;
    nn::adam_step(store, {});
    CHECK(p.value == before);
  }
  SUBCASE("first step has magnitude lr") {
    nn::ParameterStore store;
    auto& p = store.add("p", 1, 3);
    p.grad << 0.5, -3.0, 100.0;
    nn::adam_step(store, {0.01});
    CHECK(p.value(0, 0) == doctest::Approx(-0.01).epsilon(1e-6));
    CHECK(p.value(0, 1) == doctest::Approx(0.01).epsilon(1e-6));
    CHECK(p.value(0, 2) == doctest::Approx(-0.01).epsilon(1e-6));
    CHECK(p.grad.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("quadratic bowl") {
    nn::ParameterStore store;
    auto& p = store.add("p", 1, 4);
    p.value << 3, -2, 0.5, 7;
    Matrix target(1, 4);
    target << 1, 1, -1, 2;
    int steps = 0;
    for (; steps < 5000; ++steps) {
      if ((p.value - target).cwiseAbs().maxCoeff() < 1e-6) break;
      p.grad = 2.0 * (p.value - target);
      nn::adam_step(store, {0.05});
    }
    CHECK(steps < 5000);
  }
  SUBCASE("non-finite gradient skips the update") {
    nn::ParameterStore store;
    auto& p = store.add("p", 1, 2);
    auto& q = store.add("q", 1, 1);
    p.grad << 1.0, std::nan("");
    q.grad << 1.0;
    const auto report = nn::adam_step(store, {});
    CHECK_FALSE(report.applied);
    REQUIRE(report.non_finite.size() == 1);
    CHECK(report.non_finite[0] == "p");
    CHECK(q.value(0, 0) == 0.0);
    CHECK(store.optimizer_step == 0);
  }
}

TEST_CASE("training is deterministic under a seed") {
  auto run = [](std::uint64_t seed) {
    Rng rng(seed);
    nn::ParameterStore store;
    nn::Mlp net(store, "n", {2, {8, 8}, 1});
    net.initialize(rng);
    for (int step = 0; step < 50; ++step) {
      const Matrix x = drsac::uniform(rng, 16, 2, -1, 1);
      const Matrix y = x.rowwise().sum().array().sin();
      nn::Tape t;
      const Var loss = nn::mean(nn::square(net.forward(t, t.constant(x)) - t.constant(y)));
      t.backward(loss);
      nn::adam_step(store, {1e-2});
    }
    return store.get("n.w1").value;
  };
  CHECK(run(9) == run(9));
  CHECK(run(9) != run(10));
}

TEST_CASE("soft update") {
  nn::ParameterStore online;
  nn::ParameterStore target;
  online.add("w", 2, 2).value.setOnes();
  target.add("w", 2, 2);
  target.soft_update_from(online, 0.005);
  CHECK(target.get("w").value(0, 0) == doctest::Approx(0.005).epsilon(1e-15));
  target.soft_update_from(online, 1.0);
  CHECK(target.get("w").value == online.get("w").value);
  target.get("w").value.setZero();
  for (int k = 1; k <= 100; ++k) {
    target.soft_update_from(online, 0.05);
    CHECK(target.max_abs_diff(online) == doctest::Approx(std::pow(0.95, k)).epsilon(1e-12));
  }
}

TEST_CASE("checkpoint round trip") {
  Rng rng(6);
  nn::ParameterStore store;
  nn::Mlp net(store, "net", {3, {5}, 2});
  net.initialize(rng);
  for (auto* p : store.parameters()) p->grad = drsac::uniform(rng, p->value.rows(), p->value.cols(), -1, 1);
  nn::adam_step(store, {});

  nn::Checkpoint ck;
  ck.put_store("policy", store, true);
  ck.put_text("rng", drsac::rng_state(rng));
  ck.put_tensor("alpha", Matrix::Constant(1, 1, 0.1 / 3.0));
  const auto path = (std::filesystem::temp_directory_path() / "drsac_ckpt_test.bin").string();
  ck.save(path);
  const auto back = nn::Checkpoint::load(path);
  std::filesystem::remove(path);
  CHECK(back.serialize() == ck.serialize());

  nn::ParameterStore restored;
  nn::Mlp copy(restored, "net", {3, {5}, 2});
  back.get_store("policy", restored);
  CHECK(restored.max_abs_diff(store) == 0.0);
  CHECK(restored.optimizer_step == 1);
  CHECK(restored.get("net.w0").adam_v == store.get("net.w0").adam_v);
  Rng other;
  drsac::set_rng_state(other, back.text("rng"));
  CHECK(other() == rng());

  std::string bytes = ck.serialize();
  CHECK_THROWS(nn::Checkpoint::deserialize(bytes.substr(0, bytes.size() - 3)));
  bytes[0] = 'X';
  CHECK_THROWS(nn::Checkpoint::deserialize(bytes));
  CHECK_THROWS(nn::Checkpoint::load("/nonexistent/ckpt.bin"));
}
