#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "orca/dataset.hpp"
#include "orca/io.hpp"
#include "orca/trainer.hpp"

using namespace orca;

namespace {

OpenWorldDataset mixture_dataset(int classes, int per_class, double separation,
                                 uint64_t seed) {
  Rng rng(seed);
  LabeledData d = generate_gaussian_mixture(classes, 2, per_class, separation, 1.0, rng);
  return apply_open_world_split(d.features, d.labels, {0.5, 0.5, seed + 1});
}

Model model_for(const OpenWorldDataset& ds, uint64_t seed, int extra_heads = -1) {
  ModelConfig cfg;
  cfg.input_dim = static_cast<int>(ds.num_features());
  cfg.hidden_dims = {32};
  cfg.embed_dim = 8;
  cfg.num_seen_heads = static_cast<int>(ds.seen_classes.size());
  cfg.extra_head_capacity =
      extra_heads >= 0 ? extra_heads : static_cast<int>(ds.novel_classes.size());
  Rng rng(seed);
  return init_model(cfg, rng);
}

TrainConfig quick_train(int epochs, uint64_t seed) {
  TrainConfig tc;
  tc.epochs = epochs;
  tc.batch_size = 128;
  tc.base_lr = 0.1;
  tc.lr_decay_epochs = {};
  tc.seed = seed;
  return tc;
}

}  // namespace

TEST_CASE("lr schedule applies each decay at its epoch") {
  TrainConfig tc;
  tc.base_lr = 0.1;
  tc.lr_decay_epochs = {140, 180};
  tc.lr_decay_factor = 10.0;
  REQUIRE(lr_at_epoch(tc, 0) == Catch::Approx(0.1).margin(1e-15));
  REQUIRE(lr_at_epoch(tc, 139) == Catch::Approx(0.1).margin(1e-15));
  REQUIRE(lr_at_epoch(tc, 140) == Catch::Approx(0.01).margin(1e-15));
  REQUIRE(lr_at_epoch(tc, 185) == Catch::Approx(0.001).margin(1e-15));
}

TEST_CASE("sgd with zero momentum is plain gradient descent") {
  std::vector<double> p = {1.0, -2.0};
  std::vector<double> g = {0.5, 0.25};
  std::vector<double> v = {0.0, 0.0};
  sgd_momentum_step(p, g, v, 0.1, 0.0, 0.0);
  REQUIRE(p[0] == Catch::Approx(0.95).margin(1e-15));
  REQUIRE(p[1] == Catch::Approx(-2.025).margin(1e-15));
}

TEST_CASE("sgd fixed point at zero gradient") {
  std::vector<double> p = {3.0};
  std::vector<double> g = {0.0};
  std::vector<double> v = {0.0};
  sgd_momentum_step(p, g, v, 0.1, 0.9, 0.0);
  REQUIRE(p[0] == 3.0);
}

TEST_CASE("sgd momentum hand-computed update") {
  std::vector<double> p = {1.0};
  std::vector<double> g = {0.5};
  std::vector<double> v = {0.2};
  sgd_momentum_step(p, g, v, 0.1, 0.9, 0.0);
  REQUIRE(v[0] == Catch::Approx(0.68).margin(1e-15));
  REQUIRE(p[0] == Catch::Approx(0.932).margin(1e-15));
}

TEST_CASE("sgd rejects mismatched shapes") {
  std::vector<double> p = {1.0};
  std::vector<double> g = {0.5, 0.5};
  std::vector<double> v = {0.0};
  REQUIRE_THROWS_AS(sgd_momentum_step(p, g, v, 0.1, 0.9, 0.0), std::invalid_argument);
}

TEST_CASE("adam fixed point at zero gradient") {
  std::vector<double> p = {1.5};
  std::vector<double> g = {0.0};
  std::vector<double> m = {0.0}, v = {0.0};
  adam_step(p, g, m, v, 0.001, 0.9, 0.999, 1e-8, 1);
  REQUIRE(p[0] == 1.5);
}

TEST_CASE("adam first step with unit gradient moves by about lr") {
  std::vector<double> p = {0.0};
  std::vector<double> g = {1.0};
  std::vector<double> m = {0.0}, v = {0.0};
  adam_step(p, g, m, v, 0.001, 0.9, 0.999, 1e-8, 1);
  REQUIRE(p[0] == Catch::Approx(-0.001).margin(1e-8));
}

TEST_CASE("adam update opposes the bias-corrected first moment") {
  Rng rng(9);
  std::vector<double> p(5, 0.0), m(5, 0.0), v(5, 0.0);
  for (int step = 1; step <= 20; ++step) {
    std::vector<double> g(5);
    for (double& x : g) x = rng.uniform(-2.0, 2.0);
    std::vector<double> before = p;
    adam_step(p, g, m, v, 0.01, 0.9, 0.999, 1e-8, step);
    for (size_t i = 0; i < 5; ++i) {
      if (m[i] == 0.0) continue;
      REQUIRE((p[i] - before[i]) * m[i] <= 0.0);
    }
  }
}

TEST_CASE("adam requires a step index of at least one") {
  std::vector<double> p = {0.0}, g = {1.0}, m = {0.0}, v = {0.0};
  REQUIRE_THROWS_AS(adam_step(p, g, m, v, 0.001, 0.9, 0.999, 1e-8, 0), std::invalid_argument);
}

TEST_CASE("zero epochs returns the model untouched with an empty log") {
  OpenWorldDataset ds = mixture_dataset(4, 20, 6.0, 1);
  Model m = model_for(ds, 2);
  const std::string before = serialize_model(m);
  std::vector<EpochLog> logs = fit(m, ds, LossConfig{}, quick_train(0, 3));
  REQUIRE(logs.empty());
  REQUIRE(serialize_model(m) == before);
}

TEST_CASE("training is bit-identical across reruns with one seed") {
  OpenWorldDataset ds = mixture_dataset(4, 30, 6.0, 5);
  Model m1 = model_for(ds, 6);
  Model m2 = model_for(ds, 6);
  LossConfig lc;
  std::vector<EpochLog> l1 = fit(m1, ds, lc, quick_train(4, 7));
  std::vector<EpochLog> l2 = fit(m2, ds, lc, quick_train(4, 7));
  REQUIRE(serialize_model(m1) == serialize_model(m2));
  REQUIRE(epoch_logs_to_jsonl(l1) == epoch_logs_to_jsonl(l2));
}

TEST_CASE("training rejects degenerate datasets up front") {
  OpenWorldDataset ds = mixture_dataset(4, 20, 6.0, 9);
  Model m = model_for(ds, 10);
  OpenWorldDataset all_labeled = ds;
  for (auto& v : all_labeled.labeled_mask) v = 1;
  REQUIRE_THROWS_AS(fit(m, all_labeled, LossConfig{}, quick_train(1, 11)),
                    std::invalid_argument);
  OpenWorldDataset none_labeled = ds;
  for (auto& v : none_labeled.labeled_mask) v = 0;
  REQUIRE_THROWS_AS(fit(m, none_labeled, LossConfig{}, quick_train(1, 11)),
                    std::invalid_argument);
}

TEST_CASE("the loss trends down on a separable mixture") {
  OpenWorldDataset ds = mixture_dataset(6, 60, 8.0, 13);
  Model m = model_for(ds, 14);
  LossConfig lc;
  TrainConfig tc = quick_train(30, 15);
  std::vector<EpochLog> logs = fit(m, ds, lc, tc);
  double first = 0.0, last = 0.0;
  for (int i = 0; i < 10; ++i) {
    first += logs[static_cast<size_t>(i)].loss_total;
    last += logs[logs.size() - 10 + static_cast<size_t>(i)].loss_total;
  }
  REQUIRE(last <= first);
}

TEST_CASE("uncertainty decays with at most sporadic increases") {
  OpenWorldDataset ds = mixture_dataset(6, 60, 8.0, 17);
  Model m = model_for(ds, 18);
  LossConfig lc;
  TrainConfig tc = quick_train(40, 19);
  std::vector<EpochLog> logs = fit(m, ds, lc, tc);
  const size_t start = logs.size() / 5;
  int increases = 0, transitions = 0;
  for (size_t i = start + 1; i < logs.size(); ++i) {
    ++transitions;
    if (logs[i].u_bar > logs[i - 1].u_bar + 1e-12) ++increases;
  }
  REQUIRE(increases <= transitions / 10);
}

TEST_CASE("a one-row trailing batch is dropped and accounted") {
  // 4 classes x 9 rows = 36 rows total; batch 5 -> 7 full batches + 1 row
  Rng rng(21);
  LabeledData d = generate_gaussian_mixture(4, 2, 9, 6.0, 1.0, rng);
  OpenWorldDataset ds = apply_open_world_split(d.features, d.labels, {0.5, 0.5, 22});
  REQUIRE(ds.num_rows() == 36);
  Model m = model_for(ds, 23);
  TrainConfig tc = quick_train(1, 24);
  tc.batch_size = 5;
  std::vector<EpochLog> logs = fit(m, ds, LossConfig{}, tc);
  REQUIRE(logs[0].dropped_rows == 1);

  // and with a 2-row tail nothing is dropped
  Rng rng2(25);
  LabeledData d2 = generate_gaussian_mixture(4, 2, 8, 6.0, 1.0, rng2);
  OpenWorldDataset ds2 = apply_open_world_split(d2.features, d2.labels, {0.5, 0.5, 26});
  REQUIRE(ds2.num_rows() == 32);
  Model m2 = model_for(ds2, 27);
  std::vector<EpochLog> logs2 = fit(m2, ds2, LossConfig{}, tc);
  REQUIRE(logs2[0].dropped_rows == 0);
}

TEST_CASE("adam training also runs deterministically") {
  OpenWorldDataset ds = mixture_dataset(4, 30, 6.0, 29);
  Model m1 = model_for(ds, 30);
  Model m2 = model_for(ds, 30);
  TrainConfig tc = quick_train(3, 31);
  tc.optimizer = OptimizerKind::Adam;
  tc.base_lr = 1e-3;
  tc.weight_decay = 0.0;
  LossConfig lc;
  std::vector<EpochLog> l1 = fit(m1, ds, lc, tc);
  std::vector<EpochLog> l2 = fit(m2, ds, lc, tc);
  REQUIRE(serialize_model(m1) == serialize_model(m2));
  REQUIRE(epoch_logs_to_jsonl(l1) == epoch_logs_to_jsonl(l2));
}
