#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "json.hpp"
#include "ynet/trainer.hpp"

using namespace ynet;

namespace {

PairSet synthetic_pairs(std::size_t n, std::size_t side, double bpp, std::uint64_t seed) {
  PairSet set;
  for (std::size_t i = 0; i < n; ++i) {
    const GrayImage c = synth_texture(side, side, mix64(seed) ^ mix64(i));
    set.add("p" + std::to_string(i), c, lsbm_embed(c, EmbedParams::for_payload(bpp, seed + i)));
  }
  return set;
}

YedroudjConfig small_config() {
  YedroudjConfig c;
  c.widths = {30, 8, 8, 8, 16};
  c.fc_widths = {16, 2};
  c.input_size = 32;
  return c;
}

TrainConfig quick_config(std::size_t epochs) {
  TrainConfig t;
  t.max_epochs = epochs;
  t.step_fraction = 1.0;
  t.batch = 8;
  t.seed = 3;
  t.snapshot_window = 3;
  return t;
}

}  // namespace

TEST(TrainConfig, TextRoundTripAndValidation) {
  TrainConfig t;
  t.lr0 = 0.005;
  t.max_epochs = 77;
  t.early_stop = true;
  t.seed = 12345678901ull;
  EXPECT_EQ(TrainConfig::from_text(t.to_text()), t);
  EXPECT_EQ(TrainConfig::from_text(""), TrainConfig{});
  const TrainConfig d;
  EXPECT_EQ(d.lr0, 0.01);
  EXPECT_EQ(d.gamma, 0.1);
  EXPECT_EQ(d.step_fraction, 0.1);
  EXPECT_EQ(d.momentum, 0.95);
  EXPECT_EQ(d.weight_decay, 1e-4);
  EXPECT_EQ(d.batch, 16u);
  EXPECT_EQ(d.max_epochs, 900u);
  EXPECT_EQ(d.snapshot_window, 5u);
  EXPECT_EQ(d.patience, 50u);
  EXPECT_EQ(d.workers, 1u);

  EXPECT_THROW(TrainConfig::from_text("learning_rate = 0.1\n"), DataError);
  EXPECT_THROW(TrainConfig::from_text("gamma = 1\n"), DataError);
  EXPECT_THROW(TrainConfig::from_text("step_fraction = 0\n"), DataError);
  EXPECT_THROW(TrainConfig::from_text("step_fraction = 1.5\n"), DataError);
  EXPECT_THROW(TrainConfig::from_text("batch = 15\n"), DataError);
  EXPECT_THROW(TrainConfig::from_text("snapshot_window = 0\n"), DataError);
}

TEST(LrSchedule, TenPercentSteps) {
  TrainConfig t;
  t.max_epochs = 900;
  for (std::size_t e = 0; e < 90; ++e) ASSERT_DOUBLE_EQ(lr_schedule(t, e), 0.01) << e;
  for (std::size_t e = 90; e < 180; ++e) ASSERT_DOUBLE_EQ(lr_schedule(t, e), 0.001) << e;
  EXPECT_DOUBLE_EQ(lr_schedule(t, 180), 1e-4);
  EXPECT_DOUBLE_EQ(lr_schedule(t, 899), 0.01 * std::pow(0.1, 9));
  EXPECT_THROW(lr_schedule(t, 900), std::out_of_range);
}

TEST(LrSchedule, DeskScale) {
  TrainConfig t;
  t.max_epochs = 50;
  EXPECT_DOUBLE_EQ(lr_schedule(t, 0), t.lr0);
  EXPECT_DOUBLE_EQ(lr_schedule(t, 4), 0.01);
  EXPECT_DOUBLE_EQ(lr_schedule(t, 5), 0.001);  // floor(5 / 5) = 1
  t.step_fraction = 1.0;
  EXPECT_DOUBLE_EQ(lr_schedule(t, 49), 0.01);
}

TEST(Sgd, SingleStepArithmetic) {
  Param p{"w", TensorF(Shape4{1, 1, 1, 1}, 1.0f), TensorF(Shape4{1, 1, 1, 1}, 0.1f), {1}, true, true, true};
  TrainConfig t;
  t.momentum = 0.95;
  t.weight_decay = 1e-4;
  SgdState st;
  std::vector<Param*> ps{&p};
  sgd_step(ps, st, t, 0.01);
  // v = 0.95 * 0 + 0.01 * (0.1 + 1e-4 * 1), w = 1 - v
  const double v = 0.01 * (0.1 + 1e-4 * 1.0);
  EXPECT_DOUBLE_EQ(v, 0.001001);
  EXPECT_NEAR(st.velocity[0][0], v, 1e-10);
  EXPECT_NEAR(p.value[0], 1.0 - v, 1e-7);
  EXPECT_NEAR(p.value[0], 0.998999, 1e-7);

  // second step: momentum carries the previous velocity
  sgd_step(ps, st, t, 0.01);
  const double w1 = 1.0 - v;
  const double v2 = 0.95 * v + 0.01 * (0.1 + 1e-4 * w1);
  EXPECT_NEAR(st.velocity[0][0], v2, 1e-9);
  EXPECT_NEAR(p.value[0], w1 - v2, 1e-7);
}

TEST(Sgd, FixedPointDecayFlagAndFrozenParams) {
  TensorF ones(Shape4{3, 1, 1, 1}, 1.0f);
  Param still{"a", ones, TensorF(ones.shape()), {3}, true, true, true};
  Param bias{"b", ones, TensorF(ones.shape()), {3}, true, false, true};
  Param frozen{"f", ones, TensorF(ones.shape(), 5.0f), {3}, false, false, true};
  TrainConfig t;
  t.weight_decay = 0.0;
  SgdState st;
  std::vector<Param*> ps{&still, &bias, &frozen};
  sgd_step(ps, st, t, 0.01);
  EXPECT_EQ(st.velocity.size(), 2u);  // one buffer per learnable parameter
  EXPECT_EQ(still.value.values(), ones.values());
  EXPECT_EQ(frozen.value.values(), ones.values());

  t.weight_decay = 0.5;
  sgd_step(ps, st, t, 0.1);
  EXPECT_LT(still.value[0], 1.0f);  // decayed
  EXPECT_EQ(bias.value[0], 1.0f);   // no decay on biases
}

TEST(Sgd, StepDecreasesLossOnFrozenBatch) {
  NetworkGraph net = build_yedroudj(small_config());
  net.init_xavier(4);
  const PairSet set = synthetic_pairs(4, 32, 1.0, 5);
  const std::vector<std::size_t> idx{0, 1, 2, 3};
  const Batch b = make_batch(set, idx);
  TrainConfig t;
  t.weight_decay = 0.0;
  t.momentum = 0.0;
  const double l0 = net.forward(b.images, Mode::train, b.labels).loss;
  net.backward();
  SgdState st;
  auto params = net.params();
  sgd_step(params, st, t, 1e-4);
  const double l1 = net.forward(b.images, Mode::train, b.labels).loss;
  EXPECT_LT(l1, l0);
}

TEST(Eval, CountsArithmetic) {
  const EvalResult r = EvalResult::from_counts(500, 25, 500, 75);
  EXPECT_DOUBLE_EQ(r.p_fa, 0.05);
  EXPECT_DOUBLE_EQ(r.p_md, 0.15);
  EXPECT_DOUBLE_EQ(r.p_e, 0.10);
  EXPECT_EQ(EvalResult::from_counts(10, 0, 10, 0).p_e, 0.0);
  EXPECT_THROW(EvalResult::from_counts(0, 0, 10, 0), DataError);
  const auto j = nlohmann::json::parse(r.to_json());
  EXPECT_EQ(j["false_alarms"], 25);
  EXPECT_DOUBLE_EQ(j["P_E"].get<double>(), 0.10);
}

TEST(Eval, CoinFlipIsChanceLevel) {
  std::mt19937_64 gen(6);
  std::bernoulli_distribution coin(0.5);
  const std::size_t n = 5000;
  std::size_t fa = 0, md = 0;
  for (std::size_t i = 0; i < n; ++i) {
    fa += coin(gen) ? 1 : 0;
    md += coin(gen) ? 1 : 0;
  }
  const EvalResult r = EvalResult::from_counts(n, fa, n, md);
  EXPECT_LE(std::abs(r.p_e - 0.5), 3.0 * std::sqrt(0.125 / n));
}

TEST(Eval, UntrainedNetIsNearChanceAndUnmodified) {
  NetworkGraph net = build_yedroudj(small_config());
  net.init_xavier(7);
  const PairSet test = synthetic_pairs(500, 32, 0.4, 8);
  // one train-mode forward initializes the BN statistics; no parameter update
  const std::vector<std::size_t> idx{0, 1, 2, 3, 4, 5, 6, 7};
  const Batch b = make_batch(test, idx);
  net.forward(b.images, Mode::train, b.labels);
  net.clear_caches();
  const auto before = save_checkpoint(net);
  const EvalResult r = evaluate(net, test);
  EXPECT_EQ(save_checkpoint(net), before);
  EXPECT_EQ(r.covers + r.stegos, 1000u);
  EXPECT_GE(r.p_e, 0.45);
  EXPECT_LE(r.p_e, 0.55);

  const EvalReport rep = evaluate(std::vector<NetworkGraph>{net, net}, test);
  EXPECT_EQ(rep.per_snapshot.size(), 2u);
  EXPECT_DOUBLE_EQ(rep.mean_p_e, r.p_e);
  EXPECT_THROW(evaluate(net, PairSet{}), DataError);
  EXPECT_THROW(evaluate(std::vector<NetworkGraph>{}, test), std::invalid_argument);
}

TEST(Train, DeterministicWithMetricsAndSnapshots) {
  const PairSet train_set = synthetic_pairs(8, 32, 1.0, 9);
  const PairSet val_set = synthetic_pairs(4, 32, 1.0, 10);
  TrainConfig t = quick_config(5);
  t.step_fraction = 0.4;  // lr drops at epochs 2 and 4
  auto run = [&] {
    NetworkGraph net = build_yedroudj(small_config());
    net.init_xavier(t.seed);
    std::vector<std::string> lines;
    TrainResult r = train(net, train_set, val_set, t, [&](const MetricsRecord& m) { lines.push_back(m.to_json()); });
    return std::make_pair(std::move(r), lines);
  };
  const auto [a, la] = run();
  const auto [b, lb] = run();
  EXPECT_EQ(la, lb);
  EXPECT_EQ(save_checkpoint(a.final_net), save_checkpoint(b.final_net));
  EXPECT_EQ(save_checkpoint(a.snapshot_min), save_checkpoint(b.snapshot_min));

  ASSERT_EQ(a.metrics.size(), 5u);
  for (const auto& m : a.metrics) {
    EXPECT_EQ(m.lr, lr_schedule(t, m.epoch));
    EXPECT_TRUE(std::isfinite(m.train_loss));
    EXPECT_TRUE(std::isfinite(m.val_loss));
    const auto j = nlohmann::json::parse(m.to_json());
    EXPECT_FALSE(j.contains("wall_time"));
    EXPECT_EQ(j["epoch"], m.epoch);
  }
  // snapshots: min and max validation loss over the last 3 epochs
  double lo = 1e300, hi = -1e300;
  std::size_t lo_e = 0, hi_e = 0;
  for (std::size_t e = 2; e < 5; ++e) {
    if (a.metrics[e].val_loss < lo) lo = a.metrics[e].val_loss, lo_e = e;
    if (a.metrics[e].val_loss > hi) hi = a.metrics[e].val_loss, hi_e = e;
  }
  EXPECT_EQ(a.snapshot_min_epoch, lo_e);
  EXPECT_EQ(a.snapshot_max_epoch, hi_e);
}

TEST(Train, FilterBankNeverChanges) {
  NetworkGraph net = build_yedroudj(small_config());
  net.init_xavier(1);
  const TensorF bank = net.find("preproc")->params()[0].value;
  const PairSet train_set = synthetic_pairs(8, 32, 1.0, 11);
  train(net, train_set, train_set, quick_config(2));
  EXPECT_EQ(net.find("preproc")->params()[0].value.values(), bank.values());
}

TEST(Train, EarlyStopRule) {
  const PairSet train_set = synthetic_pairs(8, 32, 1.0, 12);
  const PairSet val_set = synthetic_pairs(4, 32, 1.0, 13);
  TrainConfig t = quick_config(8);
  t.early_stop = true;
  t.patience = 1;
  t.lr0 = 0.05;
  NetworkGraph net = build_yedroudj(small_config());
  net.init_xavier(2);
  const TrainResult r = train(net, train_set, val_set, t);
  double best = r.metrics[0].val_loss;
  for (std::size_t e = 1; e < r.metrics.size(); ++e) {
    const bool last = e + 1 == r.metrics.size();
    const bool improved = r.metrics[e].val_loss < best;
    if (last && r.early_stopped) {
      EXPECT_FALSE(improved);
    } else if (!last) {
      EXPECT_TRUE(improved) << "epoch " << e << " should have stopped the run";
    }
    best = std::min(best, r.metrics[e].val_loss);
  }
}

TEST(Train, NonFiniteLossNamesEpochAndBatch) {
  const PairSet set = synthetic_pairs(8, 32, 1.0, 14);
  TrainConfig t = quick_config(3);
  t.lr0 = 1e30;
  NetworkGraph net = build_yedroudj(small_config());
  net.init_xavier(3);
  try {
    train(net, set, set, t);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("epoch "), std::string::npos) << what;
    EXPECT_TRUE(what.find("batch ") != std::string::npos || what.find("validation") != std::string::npos) << what;
  }
}

TEST(Train, InputChecks) {
  NetworkGraph net = build_yedroudj(small_config());
  net.init_xavier(4);
  const PairSet few = synthetic_pairs(3, 32, 1.0, 15);
  EXPECT_THROW(train(net, few, few, quick_config(1)), DataError);  // fewer pairs than one batch
  const PairSet ok = synthetic_pairs(4, 32, 1.0, 16);
  EXPECT_THROW(train(net, ok, PairSet{}, quick_config(1)), DataError);
}
