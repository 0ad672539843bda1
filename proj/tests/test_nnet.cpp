#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "fdw2s/errors.hpp"
#include "fdw2s/nnet.hpp"

using namespace fdw2s;

namespace {

std::vector<double> random_vec(std::mt19937_64& rng, std::size_t n, double sd = 1.0) {
  std::normal_distribution<double> d(0.0, sd);
  std::vector<double> v(n);
  for (double& e : v) e = d(rng);
  return v;
}

ProbVector random_target(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 0.95);
  return ProbVector::binary(u(rng));
}

double entropy_term(const ProbVector& t) {
  double h = 0.0;
  for (double e : t) h += e * std::log(e);
  return h;
}

}  // namespace

TEST_CASE("forward pass") {
  auto m = make_linear_model(3);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 5; ++i) {
    const auto x = random_vec(rng, 3);
    CHECK(predict(m, x) == ProbVector({0.5, 0.5}));
  }

  auto f = make_feature_model(FrozenBackbone::random(3, 16, Activation::Tanh, 2));
  f.head.weights = random_vec(rng, 32, 3.0);
  for (int i = 0; i < 1000; ++i) {
    const auto x = random_vec(rng, 3, 4.0);
    const auto p = predict(f, x);
    CHECK(p == predict(f, x));
    CHECK(p[0] >= f.clamp_eps * (1 - 1e-12));
    CHECK(p[1] >= f.clamp_eps * (1 - 1e-12));
  }
  const std::vector<double> wrong(4, 0.0);
  CHECK_THROWS_AS(predict(f, wrong), ShapeError);
}

TEST_CASE("backbone initialization") {
  const auto b = FrozenBackbone::random(400, 50, Activation::Relu, 3);
  CHECK(b == FrozenBackbone::random(400, 50, Activation::Relu, 3));
  double ss = 0.0;
  for (double w : b.projection) ss += w * w;
  CHECK(ss / b.projection.size() == doctest::Approx(2.0 / 400).epsilon(0.05));
  for (double c : b.bias) CHECK(c == 0.0);
  CHECK(parse_activation("relu") == Activation::Relu);
  CHECK_FALSE(parse_activation("gelu").has_value());
}

TEST_CASE("loss and gradient") {
  std::mt19937_64 rng(4);
  auto m = make_feature_model(FrozenBackbone::random(3, 8, Activation::Tanh, 5));
  m.head.weights = random_vec(rng, 16, 0.5);
  std::vector<std::vector<double>> xs;
  for (int i = 0; i < 6; ++i) xs.push_back(random_vec(rng, 3));

  SUBCASE("targets equal to predictions give a zero minimum") {
    std::vector<ProbVector> ts;
    for (const auto& x : xs) ts.push_back(predict(m, x));
    std::vector<Example> batch;
    for (std::size_t i = 0; i < xs.size(); ++i) batch.push_back({xs[i], &ts[i]});
    for (auto k : kTrainableKinds) {
      const auto lg = loss_and_gradient(m, batch, k, true);
      CHECK(std::abs(lg.loss) < 1e-10);
      CHECK(lg.gradient.max_abs() < 1e-10);
    }
  }

  SUBCASE("KL loss equals cross-entropy minus target entropy") {
    for (int rep = 0; rep < 10; ++rep) {
      std::vector<ProbVector> ts;
      for (std::size_t i = 0; i < xs.size(); ++i) ts.push_back(random_target(rng));
      std::vector<Example> batch;
      for (std::size_t i = 0; i < xs.size(); ++i) batch.push_back({xs[i], &ts[i]});
      double ent = 0.0;
      for (const auto& t : ts) ent += entropy_term(t);
      ent /= static_cast<double>(ts.size());
      const auto kl = loss_and_gradient(m, batch, DivergenceKind::KL);
      const auto ce = cross_entropy_loss_and_gradient(m, batch);
      CHECK(kl.loss == doctest::Approx(ce.loss + ent).epsilon(1e-10));
      for (std::size_t j = 0; j < kl.gradient.head_weights.size(); ++j)
        CHECK(kl.gradient.head_weights[j] == doctest::Approx(ce.gradient.head_weights[j]).epsilon(1e-10));
    }
  }

  SUBCASE("head gradients match finite differences") {
    for (auto k : kTrainableKinds)
      for (int rep = 0; rep < 20; ++rep) {
        auto mm = m;
        mm.head.weights = random_vec(rng, 16, 0.7);
        mm.head.bias = random_vec(rng, 2, 0.3);
        std::vector<ProbVector> ts;
        for (std::size_t i = 0; i < xs.size(); ++i) ts.push_back(random_target(rng));
        std::vector<Example> batch;
        for (std::size_t i = 0; i < xs.size(); ++i) batch.push_back({xs[i], &ts[i]});
        const auto g = loss_and_gradient(mm, batch, k).gradient;
        CHECK(g.backbone_projection.empty());
        double scale = 1e-8;
        for (double e : g.head_weights) scale = std::max(scale, std::abs(e));
        for (std::size_t j = 0; j < mm.head.weights.size(); ++j) {
          auto up = mm, down = mm;
          up.head.weights[j] += 1e-5;
          down.head.weights[j] -= 1e-5;
          const double fd =
              (loss_and_gradient(up, batch, k).loss - loss_and_gradient(down, batch, k).loss) / 2e-5;
          CHECK(std::abs(fd - g.head_weights[j]) / scale < 1e-4);
        }
      }
  }
}

TEST_CASE("Adam") {
  auto m = make_linear_model(1, 2);
  OptimizerState opt;
  const auto before = m;
  opt.step(m, Gradient::zeros_like(m, false));
  CHECK(m == before);

  // 1-D quadratic in one head weight.
  auto loss = [](const ModelPredictor& mm) { return (mm.head.weights[0] - 3.0) * (mm.head.weights[0] - 3.0); };
  OptimizerState opt2(AdamConfig{0.1});
  const double l0 = loss(m);
  for (int i = 0; i < 10; ++i) {
    auto g = Gradient::zeros_like(m, false);
    g.head_weights[0] = 2.0 * (m.head.weights[0] - 3.0);
    opt2.step(m, g);
  }
  CHECK(loss(m) < l0);
  CHECK(opt2.steps() == 10);

  auto run = [] {
    std::mt19937_64 rng(8);
    auto mm = make_feature_model(FrozenBackbone::random(2, 4, Activation::Tanh, 1));
    OptimizerState o;
    std::vector<std::vector<double>> xs;
    std::vector<ProbVector> ts;
    for (int i = 0; i < 8; ++i) {
      xs.push_back(random_vec(rng, 2));
      ts.push_back(random_target(rng));
    }
    std::vector<Example> batch;
    for (std::size_t i = 0; i < xs.size(); ++i) batch.push_back({xs[i], &ts[i]});
    for (int s = 0; s < 50; ++s) o.step(mm, loss_and_gradient(mm, batch, DivergenceKind::JensenShannon).gradient);
    return mm;
  };
  CHECK(run() == run());
}

TEST_CASE("checkpoint round-trip") {
  std::mt19937_64 rng(6);
  auto m = make_feature_model(FrozenBackbone::random(3, 5, Activation::Relu, 9));
  m.head.weights = random_vec(rng, 10);
  m.head.bias = random_vec(rng, 2);
  const auto path = std::filesystem::temp_directory_path() / "fdw2s_test_model.json";
  save_model(m, path);
  CHECK(load_model(path) == m);

  auto lin = make_linear_model(4);
  lin.head.weights = random_vec(rng, 8);
  save_model(lin, path);
  CHECK(load_model(path) == lin);
  std::filesystem::remove(path);
  CHECK_THROWS(load_model(path));
}
