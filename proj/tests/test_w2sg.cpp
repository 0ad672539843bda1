#include <doctest.h>

#include <cmath>
#include <random>

#include "fdw2s/errors.hpp"
#include "fdw2s/w2sg.hpp"

using namespace fdw2s;

namespace {

const Task& default_task() {
  static const Task task = [] {
    TaskSpec s;
    s.seed = 1;
    return generate_task(s);
  }();
  return task;
}

DataSplit small_split(std::uint64_t seed) {
  TaskSpec s;
  s.seed = seed;
  s.samples_per_split = 800;
  return generate_task(s).split;
}

}  // namespace

TEST_CASE("loss names") {
  CHECK(parse_loss("CE") == TrainLoss::cross_entropy());
  CHECK(parse_loss("chi2") == TrainLoss::of(DivergenceKind::PearsonChi2));
  CHECK_FALSE(parse_loss("TotalVariation").has_value());
  CHECK(TrainLoss::cross_entropy().name() == "CE");
  CHECK(TrainLoss::cross_entropy().reporting_kind() == DivergenceKind::KL);
}

TEST_CASE("config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.threshold = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.beta_final = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.learning_rate = -1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("beta schedule") {
  CHECK(beta_schedule(0, 100, 0.5, 0.5) == 0.0);
  CHECK(beta_schedule(25, 100, 0.5, 0.5) == doctest::Approx(0.25));
  CHECK(beta_schedule(80, 100, 0.5, 0.5) == 0.5);
  CHECK(beta_schedule(50, 100, 0.5, 0.5) == 0.5);
  CHECK(beta_schedule(10, 100, 0.5, 0.0) == 0.5);
}

TEST_CASE("auxiliary loss") {
  const ProbVector weak({0.6, 0.4});
  const auto at0 = aux_loss(weak, ProbVector({0.7, 0.3}), 0.5, 0.0);
  CHECK(at0.loss == doctest::Approx(-std::log(0.7)).epsilon(1e-12));
  CHECK(at0.loss == doctest::Approx(0.356675).epsilon(1e-6));

  std::mt19937_64 rng(3);
  std::normal_distribution<double> n01;
  for (int i = 0; i < 20; ++i) {
    const double z[] = {n01(rng), n01(rng)};
    const auto pred = clamp(softmax(z));
    const auto a = aux_loss(weak, pred, 0.5, 1.0);
    const auto g = reference_gradient(DivergenceKind::KL, clamp(weak), pred);
    for (std::size_t j = 0; j < 2; ++j) CHECK(a.logit_gradient[j] == doctest::Approx(g[j]).epsilon(1e-9));
    double h = 0.0;
    for (double e : clamp(weak)) h += e * std::log(e);
    CHECK(a.loss + h == doctest::Approx(divergence(DivergenceKind::KL, clamp(weak), pred)).epsilon(1e-9));
  }

  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int accepted = 0; accepted < 50;) {
    std::vector<double> z = {2 * n01(rng), 2 * n01(rng)};
    const double t = 0.2 + 0.6 * u(rng), beta = u(rng);
    if (std::abs(clamp(softmax(z))[1] - t) < 1e-3) continue;
    ++accepted;
    const auto a = aux_loss(weak, clamp(softmax(z)), t, beta);
    for (std::size_t j = 0; j < 2; ++j) {
      auto up = z, down = z;
      up[j] += 1e-5;
      down[j] -= 1e-5;
      const double fd = (aux_loss(weak, clamp(softmax(up)), t, beta).loss -
                         aux_loss(weak, clamp(softmax(down)), t, beta).loss) / 2e-5;
      CHECK(std::abs(fd - a.logit_gradient[j]) / std::max(1e-6, std::abs(fd)) < 1e-4);
    }
  }
}

TEST_CASE("weak teacher") {
  SUBCASE("separable toy problem") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n01;
    DataSplit split;
    for (int i = 0; i < 2000; ++i) {
      const double x0 = n01(rng), x1 = n01(rng);
      const double p1 = 1.0 / (1.0 + std::exp(-20.0 * (x0 - 0.5 * x1)));
      split.ground_truth.push_back({{x0, x1}, ProbVector::binary(p1)});
    }
    TrainConfig cfg;
    cfg.seed = 1;
    cfg.epochs = 5;
    const auto m = train_weak(split, cfg);
    CHECK(accuracy(m, split.ground_truth) > 0.95);
    CHECK(train_weak(split, cfg) == m);
  }

  SUBCASE("default task is learnable but not solved") {
    TrainConfig cfg;
    cfg.seed = 1;
    const auto m = train_weak(default_task().split, cfg);
    const double acc = accuracy(m, default_task().split.test);
    CHECK(acc > 0.5);
    CHECK(acc < 1.0);
  }
}

TEST_CASE("pseudo-labels") {
  const auto split = small_split(2);
  const auto zero = make_linear_model(split.weak_supervision.front().x.size());
  for (const auto& y : weak_label(zero, split)) CHECK(y == ProbVector({0.5, 0.5}));

  // A teacher whose logit is a huge multiple of its own pseudo-label direction
  // saturates at the clamp boundary on the corresponding point.
  auto fit = zero;
  const auto& x = split.weak_supervision.front().x;
  for (std::size_t i = 0; i < x.size(); ++i) fit.head.weights[i * 2 + 1] = 1e3 * x[i];
  const auto y = weak_label(fit, split).front();
  CHECK(std::abs(y[1] - (1.0 - fit.clamp_eps)) <= 1e-15);
  for (const auto& p : weak_label(fit, split)) CHECK(p[0] >= fit.clamp_eps * (1 - 1e-12));
}

TEST_CASE("strong student") {
  const auto split = small_split(3);
  TrainConfig cfg;
  cfg.seed = 3;
  cfg.strong_width = 64;
  const auto teacher = train_weak(split, cfg);
  const auto labels = weak_label(teacher, split);

  SUBCASE("KL and cross-entropy follow the same trajectory") {
    TrainConfig ce = cfg;
    ce.loss = TrainLoss::cross_entropy();
    const auto a = train_strong(split, labels, cfg);
    const auto b = train_strong(split, labels, ce);
    REQUIRE(a.backbone == b.backbone);
    for (std::size_t i = 0; i < a.head.weights.size(); ++i)
      CHECK(std::abs(a.head.weights[i] - b.head.weights[i]) < 1e-10);
  }

  SUBCASE("objective decreases and the backbone stays frozen") {
    std::optional<FrozenBackbone> first;
    for (auto k : kTrainableKinds) {
      TrainConfig c = cfg;
      c.loss = TrainLoss::of(k);
      TrainHistory h;
      const auto m = train_strong(split, labels, c, &h);
      REQUIRE(h.objective.size() >= 2);
      CHECK(h.objective.back() < h.objective.front());
      if (!first) first = m.backbone;
      CHECK(m.backbone == first);
    }
    TrainConfig c = cfg;
    c.train_backbone = true;
    CHECK(train_strong(split, labels, c).backbone != first);
  }

  SUBCASE("aux warm-up is recorded") {
    TrainConfig c = cfg;
    c.aux_enabled = true;
    TrainHistory h;
    train_strong(split, labels, c, &h);
    REQUIRE(h.supervision_weight.size() == 50);
    CHECK(h.supervision_weight.front() == 0.0);
    CHECK(h.supervision_weight.back() == 0.5);
    CHECK(h.supervision_weight[12] == doctest::Approx(0.5 * 12 / 25));
  }

  SUBCASE("misaligned labels") {
    const std::vector<ProbVector> few(labels.begin(), labels.begin() + 10);
    CHECK_THROWS_AS(train_strong(split, few, cfg), InvalidInput);
  }
}

TEST_CASE("evaluation") {
  const auto& task = default_task();
  TrainConfig cfg;
  cfg.seed = 1;
  const auto weak = train_weak(task.split, cfg);

  const auto same = evaluate(weak, weak, task.split, DivergenceKind::KL);
  CHECK(same.strong_vs_weak.value == 0.0);
  CHECK(same.strong_test_accuracy == same.weak_test_accuracy);
  CHECK(same.bound.residual >= 0.0);

  // Labels permuted independently of the inputs: a model can only guess.
  std::vector<Sample> shuffled = task.split.test;
  std::mt19937_64 rng(1);
  std::vector<ProbVector> labels;
  for (const auto& s : shuffled) labels.push_back(s.label);
  std::shuffle(labels.begin(), labels.end(), rng);
  for (std::size_t i = 0; i < shuffled.size(); ++i) shuffled[i].label = labels[i];
  CHECK(accuracy(weak, shuffled) == doctest::Approx(0.5).epsilon(0.04));

  for (auto k : kTrainableKinds) {
    TrainConfig c = cfg;
    c.loss = TrainLoss::of(k);
    c.strong_width = 32;
    const auto r = run_student(task.split, weak, c, 0.2);
    CHECK(r.strong_vs_truth.value >= 0.0);
    CHECK(r.weak_vs_truth.value >= 0.0);
    CHECK(r.strong_vs_weak.value >= 0.0);
    CHECK(r.bound.residual >= -1e-12);
  }
}

TEST_CASE("capacity ordering on true labels") {
  const auto& task = default_task();
  TrainConfig cfg;
  cfg.seed = 1;
  cfg.epochs = 3;
  cfg.strong_activation = Activation::Relu;
  const auto weak = train_weak(task.split, cfg);
  const auto strong = train_strong(task.split, labels_of(task.split.weak_supervision), cfg);
  CHECK(accuracy(strong, task.split.test) >= accuracy(weak, task.split.test));
}

TEST_CASE("tanh features with a zero-bias backbone give an odd logit margin") {
  // Every teacher nonlinearity is even in x, out of reach for this family.
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n01;
  auto m = make_feature_model(FrozenBackbone::random(5, 32, Activation::Tanh, 3));
  for (double& w : m.head.weights) w = n01(rng);
  for (int i = 0; i < 20; ++i) {
    std::vector<double> x(5), neg(5);
    for (std::size_t j = 0; j < 5; ++j) neg[j] = -(x[j] = n01(rng));
    const auto a = forward(m, x).logits, b = forward(m, neg).logits;
    CHECK(a[1] - a[0] == doctest::Approx(-(b[1] - b[0])).epsilon(1e-12));
  }
}
