#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "eogstage/common/error.hpp"
#include "eogstage/common/io.hpp"
#include "eogstage/common/rng.hpp"
#include "eogstage/tensor/grad_check.hpp"
#include "eogstage/tensor/ops.hpp"
#include "eogstage/tensor/tape.hpp"
#include "eogstage/train/adam.hpp"
#include "eogstage/train/crossval.hpp"
#include "eogstage/train/loss.hpp"
#include "eogstage/train/trainer.hpp"

#include "harness.hpp"

using namespace eogstage;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("eogstage_train_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST(NllLoss, PerfectPredictionIsZero) {
  Tensor<double> lp(Shape{2, 5}, -50.0);
  lp.at({0, 3}) = 0;
  lp.at({1, 0}) = 0;
  EXPECT_EQ(nll_loss(lp, {3, 0}).item(), 0.0);
}

TEST(NllLoss, UniformIsLogFive) {
  Tensor<double> lp(Shape{4, 5}, -std::log(5.0));
  EXPECT_NEAR(nll_loss(lp, {0, 1, 2, 4}).item(), 1.6094379124341003, 1e-15);
}

TEST(NllLoss, AveragesTwoSamples) {
  Tensor<double> lp(Shape{2, 5}, -3.0);
  lp.at({0, 1}) = -0.25;
  lp.at({1, 4}) = -2.0;
  EXPECT_DOUBLE_EQ(nll_loss(lp, {1, 4}).item(), (0.25 + 2.0) / 2);
  const std::vector<double> w{1, 3, 1, 1, 1};
  // Weighted: (3 * 0.25 + 1 * 2) / 4
  EXPECT_DOUBLE_EQ(nll_loss(lp, {1, 4}, std::span<const double>(w)).item(), 2.75 / 4);
}

TEST(NllLoss, RejectsBadTargets) {
  Tensor<double> lp(Shape{2, 5}, -1.0);
  EXPECT_THROW(nll_loss(lp, {0, 5}), DataError);
  EXPECT_THROW(nll_loss(lp, {0}), ShapeError);
}

TEST(NllLoss, GradientMatchesFiniteDifferences) {
  Rng rng(11);
  Tensor<double> x(Shape{6, 5});
  for (auto& v : x.data()) v = rng.normal();
  x.set_requires_grad(true);
  const std::vector<std::size_t> y{0, 4, 2, 2, 1, 3};
  const std::vector<double> w{0.5, 2, 1, 1, 3};
  auto f = [&] { return nll_loss(ops::log_softmax(x), y, std::span<const double>(w)); };
  auto r = grad_check_leaves(f, {x});
  EXPECT_LT(r.max_relative_error, 1e-7);
}

// Independent scalar Adam.
struct ScalarAdam {
  double lr, b1, b2, eps, m = 0, v = 0;
  int t = 0;
  double step(double x, double g) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mhat = m / (1 - std::pow(b1, t));
    const double vhat = v / (1 - std::pow(b2, t));
    return x - lr * mhat / (std::sqrt(vhat) + eps);
  }
};

TEST(Adam, MatchesScalarReference) {
  Rng rng(5);
  for (int problem = 0; problem < 20; ++problem) {
    const std::size_t n = 1 + rng.below(6);
    AdamConfig cfg{rng.uniform(1e-4, 1e-1), rng.uniform(0.5, 0.95), rng.uniform(0.9, 0.9999), 1e-8};
    Tensor<double> p(Shape{n});
    std::vector<double> a(n), b(n), ref(n);
    for (std::size_t i = 0; i < n; ++i) {
      p.data()[i] = ref[i] = rng.normal();
      a[i] = rng.uniform(0.1, 3);
      b[i] = rng.normal();
    }
    Adam<double> opt({{"p", p}}, cfg);
    std::vector<ScalarAdam> scalar(n, ScalarAdam{cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps});
    for (int step = 0; step < 100; ++step) {
      auto g = p.ensure_grad();
      for (std::size_t i = 0; i < n; ++i) {
        g[i] = 2 * a[i] * (p.data()[i] - b[i]);
        ref[i] = scalar[i].step(ref[i], 2 * a[i] * (ref[i] - b[i]));
      }
      opt.step();
      opt.zero_grad();
      for (std::size_t i = 0; i < n; ++i) ASSERT_NEAR(p.data()[i], ref[i], 1e-12);
    }
    EXPECT_EQ(opt.steps(), 100u);
  }
}

TEST(Adam, FirstStepWithUnitGradient) {
  Tensor<double> p(Shape{3}, 2.0);
  p.ensure_grad();
  for (auto& g : p.grad()) g = 1;
  Adam<double> opt({{"p", p}}, {});
  opt.step();
  for (double v : p.data()) EXPECT_NEAR(v - 2.0, -0.001 / (1 + 1e-8), 1e-15);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  Tensor<double> p(Shape{4}, 0.5);
  p.ensure_grad();
  Adam<double> opt({{"p", p}}, {});
  for (int i = 0; i < 5; ++i) opt.step();
  for (double v : p.data()) EXPECT_EQ(v, 0.5);
}

TEST(Adam, NonFiniteGradientNamesParameter) {
  Tensor<float> a(Shape{2}, 1.0f), b(Shape{3}, 1.0f);
  a.ensure_grad();
  b.ensure_grad()[2] = std::numeric_limits<float>::quiet_NaN();
  Adam<float> opt({{"layer.a", a}, {"layer.b", b}}, {});
  try {
    opt.step();
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("layer.b"), std::string::npos);
  }
  for (float v : a.data()) EXPECT_EQ(v, 1.0f);
  EXPECT_EQ(opt.steps(), 0u);
}

TEST(Adam, RejectsBadConfig) {
  EXPECT_THROW(AdamConfig({0.0}).validate(), ConfigError);
  EXPECT_THROW(AdamConfig({1e-3, 1.0}).validate(), ConfigError);
}

TEST(TrainConfig, JsonRoundTripAndValidation) {
  TrainConfig c;
  c.seed = 42;
  c.class_weights = true;
  c.max_steps = 17;
  auto back = train_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_THROW(train_config_from_json({{"learnign_rate", 0.1}}), ConfigError);
  EXPECT_THROW(train_config_from_json({{"learning_rate", -1}}), ConfigError);
  EXPECT_THROW(train_config_from_json({{"batch_size", 0}}), ConfigError);
  EXPECT_THROW(train_config_from_json({{"train_stride", 0}}), ConfigError);
  EXPECT_THROW(train_config_from_json({{"batch_size", "big"}}), ConfigError);
}

TEST(Train, InverseFrequencyWeights) {
  std::vector<ContextWindow> w(10);
  for (std::size_t i = 0; i < 10; ++i) w[i].label = i < 8 ? Stage::N2 : Stage::W;
  auto weights = inverse_frequency_weights(w);
  EXPECT_FLOAT_EQ(weights[0], 10.0f / (5 * 2));
  EXPECT_FLOAT_EQ(weights[2], 10.0f / (5 * 8));
  EXPECT_EQ(weights[1], 0.0f);
}

TEST(Train, EmptyTrainingSetIsAnError) {
  Dataset empty;
  EXPECT_THROW(train_fold(empty, nullptr, tiny_config(), harness::overfit_train_config(1)), DataError);
}

TEST(Train, InitialLossNearLogFive) {
  auto set = harness::overfit_set(7);
  auto model_cfg = tiny_config();
  SleepStager<float> model(model_cfg, 7);
  auto [x, y] = set.data.batch(set.data.windows(model_cfg.window_size, 1), model_cfg.window_size);
  autograd::NoGradGuard guard;
  const double loss = nll_loss(model.forward(x, true), y).item();
  EXPECT_NEAR(loss, std::log(5.0), 0.2);
}

TEST(Train, TokenCacheEvaluationMatchesFullForward) {
  auto set = harness::overfit_set(3, 20);
  auto cfg = tiny_config();
  SleepStager<float> model(cfg, 3);
  auto eval = evaluate(model, set.data, 1, 7);
  auto windows = set.data.windows(cfg.window_size, 1);
  ASSERT_EQ(eval.predictions.size(), windows.size());
  auto [x, y] = set.data.batch(windows, cfg.window_size);
  autograd::NoGradGuard guard;
  auto logits = model.logits(x, false);
  ConfusionMatrix direct;
  for (std::size_t b = 0; b < y.size(); ++b) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < kClasses; ++c)
      if (logits.at({b, c}) > logits.at({b, best})) best = c;
    direct.accumulate(y[b], best);
    EXPECT_EQ(stage_index(eval.predictions[b].predicted), best);
    EXPECT_EQ(eval.predictions[b].epoch_index, windows[b].start_epoch + cfg.center_index());
  }
  EXPECT_EQ(direct, eval.confusion);
}

TEST(Train, OverfitsSixtyFourWindows) {
  auto set = harness::overfit_set(7);
  auto dir = scratch("overfit");
  auto result = train_fold(set.data, nullptr, tiny_config(), harness::overfit_train_config(7), dir);
  ASSERT_EQ(result.steps, 300u);
  auto model = restore(result.final_state);
  auto eval = evaluate(model, set.data, 1);
  const auto m = compute_metrics(eval.confusion);
  EXPECT_GE(m.acc, 0.99);
  EXPECT_LT(result.losses.back().loss, 0.05);
  EXPECT_NEAR(result.losses.front().loss, std::log(5.0), 0.2);

  // Loss log: header plus one row per step.
  auto log = io::read_text(dir / "loss.csv");
  EXPECT_EQ(log.substr(0, 13), "step,loss,lr\n");
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 301);
  EXPECT_TRUE(std::filesystem::exists(dir / "final.eogs"));
  EXPECT_EQ(io::read_bytes(dir / "best.eogs"), io::read_bytes(dir / "final.eogs"));
  std::filesystem::remove_all(dir);
}

TEST(Train, DeterministicUnderFixedSeed) {
  auto set = harness::overfit_set(9, 24);
  auto cfg = harness::overfit_train_config(9, 25);
  cfg.batch_size = 8;
  cfg.max_epochs = 100;
  auto a = train_fold(set.data, nullptr, tiny_config(), cfg);
  auto b = train_fold(set.data, nullptr, tiny_config(), cfg);
  ASSERT_EQ(a.losses.size(), b.losses.size());
  for (std::size_t i = 0; i < a.losses.size(); ++i) EXPECT_EQ(a.losses[i].loss, b.losses[i].loss);
  EXPECT_EQ(encode_checkpoint(a.final_state), encode_checkpoint(b.final_state));
  cfg.seed = 10;
  auto c = train_fold(set.data, nullptr, tiny_config(), cfg);
  EXPECT_NE(encode_checkpoint(a.final_state), encode_checkpoint(c.final_state));
}

TEST(Train, EarlyStoppingKeepsBestValidationState) {
  auto set = harness::overfit_set(4, 30);
  auto val = harness::overfit_set(5, 15);
  auto cfg = harness::overfit_train_config(4, 0);
  cfg.max_steps = 0;
  cfg.max_epochs = 40;
  cfg.batch_size = 10;
  cfg.patience = 2;
  auto r = train_fold(set.data, &val.data, tiny_config(), cfg);
  ASSERT_TRUE(r.best_validation_mf1.has_value());
  EXPECT_LE(r.epochs, 40u);
  if (r.stopped_early) EXPECT_LT(r.epochs, 40u);
  auto best = restore(r.best_state);
  const double mf1 = compute_metrics(evaluate(best, val.data, 1).confusion).mf1;
  EXPECT_DOUBLE_EQ(mf1, *r.best_validation_mf1);
  EXPECT_LE(r.best_state.meta.step, r.final_state.meta.step);
}

TEST(CrossVal, ValidationSubjects) {
  std::vector<std::string> s{"a", "b", "c", "d", "e", "f", "g", "h", "i", "j", "k", "l"};
  auto v = choose_validation(s, 0.1, 3);
  EXPECT_EQ(v.size(), 1u);
  EXPECT_EQ(choose_validation(s, 0.3, 3).size(), 4u);
  EXPECT_EQ(choose_validation({"a", "b"}, 0.9, 3).size(), 1u);
  EXPECT_TRUE(choose_validation({"a"}, 0.5, 3).empty());
  EXPECT_TRUE(choose_validation(s, 0.0, 3).empty());
  EXPECT_EQ(choose_validation(s, 0.1, 3), v);
}
