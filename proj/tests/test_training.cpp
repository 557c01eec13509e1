#include <cmath>
#include <vector>

#include "catch2/catch_amalgamated.hpp"
#include "kgdeq/training.hpp"

using namespace kgdeq;

namespace {

KnowledgeGraph ring_graph(std::size_t n, std::size_t R) {
  std::vector<Triplet> ts;
  for (std::size_t i = 0; i < n; ++i) {
    ts.push_back({i, i % R, (i + 1) % n});
    ts.push_back({i, (i + 1) % R, (i + 2) % n});
  }
  return build_graph(ts, n, R);
}

EncoderConfig small_config(std::uint64_t seed = 0) {
  EncoderConfig cfg;
  cfg.hidden_dim = 4;
  cfg.mlp_hidden_dims = {4};
  cfg.head_hidden_dims = {4};
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("cross entropy loss closed forms", "[training]") {
  // One positive at 0.5 with two corruptions at 0.5:
  // -log(1/2) - (1/2)(log(1/2) + log(1/2)) = 2 ln 2.
  REQUIRE(cross_entropy_loss<double>({0.5}, {{0.5, 0.5}}) ==
          Catch::Approx(1.3862943611198906).epsilon(1e-12));
  // Perfect scores cost ~0; clamping keeps exact 0/1 finite.
  REQUIRE(cross_entropy_loss<double>({1.0}, {{0.0}}) == Catch::Approx(0.0).margin(1e-10));
  REQUIRE(std::isfinite(cross_entropy_loss<double>({0.0}, {{1.0}})));
  // No corruptions: just the positive term.
  REQUIRE(cross_entropy_loss<double>({0.25}, {{}}) == Catch::Approx(-std::log(0.25)));
  // Mean over positives.
  const double a = cross_entropy_loss<double>({0.5}, {{0.5}});
  const double b = cross_entropy_loss<double>({0.9}, {{0.2}});
  REQUIRE(cross_entropy_loss<double>({0.5, 0.9}, {{0.5}, {0.2}}) ==
          Catch::Approx((a + b) / 2));
  REQUIRE_THROWS_AS(cross_entropy_loss<double>({}, {}), ValidationError);
  REQUIRE_THROWS_AS(cross_entropy_loss<double>({0.5}, {{0.1}, {0.2}}), ValidationError);
}

TEST_CASE("per-logit loss derivatives match the batch formulas", "[training]") {
  // Batch of P=2 positives with n=3 and n=2 corruptions. The training loop
  // uses dL/dz = (s-1)/P for positives and s/(n*P) for corruptions.
  std::vector<double> z{0.3, -0.7, 1.1, 0.2, -0.4, 0.9, -1.5};
  const std::vector<std::size_t> groups{3, 2};
  auto loss_of = [&](const std::vector<double>& zz) {
    std::vector<double> pos;
    std::vector<std::vector<double>> neg;
    std::size_t at = 0;
    for (std::size_t n : groups) {
      pos.push_back(stable_sigmoid(zz[at++]));
      neg.emplace_back();
      for (std::size_t q = 0; q < n; ++q) neg.back().push_back(stable_sigmoid(zz[at++]));
    }
    return cross_entropy_loss(pos, neg);
  };

  std::vector<double> analytic(z.size());
  {
    std::size_t at = 0;
    const double P = double(groups.size());
    for (std::size_t n : groups) {
      analytic[at] = (stable_sigmoid(z[at]) - 1.0) / P;
      ++at;
      for (std::size_t q = 0; q < n; ++q) {
        analytic[at] = stable_sigmoid(z[at]) / (double(n) * P);
        ++at;
      }
    }
  }
  const double h = 1e-6;
  for (std::size_t i = 0; i < z.size(); ++i) {
    std::vector<double> zp = z, zm = z;
    zp[i] += h;
    zm[i] -= h;
    REQUIRE(analytic[i] == Catch::Approx((loss_of(zp) - loss_of(zm)) / (2 * h)).margin(1e-8));
  }
}

TEST_CASE("self_supervised_mask splits positionally and validates ratios", "[training]") {
  const KnowledgeGraph g = ring_graph(10, 2);  // 20 triplets
  Rng a(5), b(5);
  const MaskedSplit s1 = self_supervised_mask(g, 0.25, a);
  const MaskedSplit s2 = self_supervised_mask(g, 0.25, b);
  REQUIRE(s1.targets.size() == 5);  // floor(0.25 * 20)
  REQUIRE(s1.observed.size() == 15);
  REQUIRE(s1.targets == s2.targets);
  REQUIRE(s1.observed == s2.observed);
  // Union restores the original multiset (order within each part preserved).
  TripletSet all(g.triplets().begin(), g.triplets().end());
  for (const Triplet& t : s1.targets) REQUIRE(all.count(t) == 1);
  for (const Triplet& t : s1.observed) REQUIRE(all.count(t) == 1);

  Rng c(1);
  REQUIRE_THROWS_AS(self_supervised_mask(g, 0.0, c), ValidationError);
  REQUIRE_THROWS_AS(self_supervised_mask(g, 1.0, c), ValidationError);
  REQUIRE_THROWS_AS(self_supervised_mask(g, 0.01, c), ValidationError);  // floor -> 0
}

TEST_CASE("masking picks positions, so it commutes with relabeling", "[training][property]") {
  const KnowledgeGraph g = ring_graph(8, 2);
  const PermutationPair p = random_permutation_pair(8, 2, 99);
  const KnowledgeGraph gp = apply_permutation(g, p);
  Rng a(77), b(77);
  const MaskedSplit s = self_supervised_mask(g, 0.3, a);
  const MaskedSplit sp = self_supervised_mask(gp, 0.3, b);
  REQUIRE(sp.targets.size() == s.targets.size());
  for (std::size_t i = 0; i < s.targets.size(); ++i)
    REQUIRE(sp.targets[i] == p.apply(s.targets[i]));
  for (std::size_t i = 0; i < s.observed.size(); ++i)
    REQUIRE(sp.observed[i] == p.apply(s.observed[i]));
}

TEST_CASE("negative sampling: shape, determinism, and semantics", "[training]") {
  const KnowledgeGraph g = ring_graph(10, 3);
  TripletSet targets{{0, 2, 5}};
  const Triplet pos{0, 0, 1};
  const NegativeKey key{11, 2, 0, 7};
  const NegativeGroup n1 = sample_negatives(pos, g, targets, 3, 4, 3, key);
  const NegativeGroup n2 = sample_negatives(pos, g, targets, 3, 4, 3, key);
  REQUIRE(n1.triplets == n2.triplets);
  REQUIRE(n1.triplets.size() == 7);
  REQUIRE(n1.num_collisions == 0);
  for (std::size_t i = 0; i < 4; ++i) {
    const Triplet& t = n1.triplets[i];
    REQUIRE(t.relation == pos.relation);  // node corruption keeps the relation
    REQUIRE((t.head == pos.head || t.tail == pos.tail));
    REQUIRE(t != pos);
    REQUIRE_FALSE(g.contains(t));
    REQUIRE(targets.count(t) == 0);
  }
  for (std::size_t i = 4; i < 7; ++i) {
    const Triplet& t = n1.triplets[i];
    REQUIRE(t.head == pos.head);
    REQUIRE(t.tail == pos.tail);
    REQUIRE(t.relation != pos.relation);
  }
  // Different key position changes the draws.
  const NegativeGroup n3 = sample_negatives(pos, g, targets, 3, 4, 3, NegativeKey{11, 2, 0, 8});
  REQUIRE(n1.triplets != n3.triplets);
}

TEST_CASE("relation corruptions are skipped on single-relation graphs", "[training]") {
  const KnowledgeGraph g = build_graph({{0, 0, 1}, {1, 0, 2}}, 3, 1);
  const NegativeGroup n = sample_negatives({0, 0, 1}, g, {}, 1, 2, 3, NegativeKey{1, 0, 0, 0});
  REQUIRE(n.triplets.size() == 2);  // only the node corruptions
}

TEST_CASE("exhausted retries keep the candidate and count a collision", "[training]") {
  // Every node corruption of (0,r0,1) is the positive itself or observed.
  const KnowledgeGraph g = build_graph({{0, 0, 1}, {1, 0, 1}, {0, 0, 0}}, 2, 1);
  const NegativeGroup n =
      sample_negatives({0, 0, 1}, g, {}, 1, 3, 0, NegativeKey{4, 0, 0, 0}, {}, 50);
  REQUIRE(n.triplets.size() == 3);
  REQUIRE(n.num_collisions == 3);
}

TEST_CASE("negative draws commute with relabeling through an IndexFrame",
          "[training][property]") {
  const KnowledgeGraph g = ring_graph(9, 3);
  const PermutationPair p = random_permutation_pair(9, 3, 123);
  const KnowledgeGraph gp = apply_permutation(g, p);
  TripletSet targets{{0, 2, 4}, {3, 1, 7}};
  TripletSet targets_p;
  for (const Triplet& t : targets) targets_p.insert(p.apply(t));
  IndexFrame frame{p.node_perm, p.rel_perm};

  for (std::uint64_t position = 0; position < 6; ++position) {
    const Triplet pos{position % 9, position % 3, (position + 2) % 9};
    const NegativeKey key{21, 1, 0, position};
    const NegativeGroup base = sample_negatives(pos, g, targets, 3, 3, 2, key);
    const NegativeGroup mapped =
        sample_negatives(p.apply(pos), gp, targets_p, 3, 3, 2, key, frame);
    REQUIRE(mapped.triplets.size() == base.triplets.size());
    REQUIRE(mapped.num_collisions == base.num_collisions);
    for (std::size_t i = 0; i < base.triplets.size(); ++i)
      REQUIRE(mapped.triplets[i] == p.apply(base.triplets[i]));
  }
}

TEST_CASE("adam single-entry hand oracle", "[training]") {
  auto params = init_encoder<double>(small_config());
  auto grads = zero_gradients(params);
  AdamState<double> state(params);
  const double theta0 = params.w_self_ch[0].at(0, 0);
  const double other0 = params.mlp_channel.w[0].at(0, 0);
  grads.w_self_ch[0].at(0, 0) = 0.5;

  adam_step(params, grads, state, 0.1);
  // Bias-corrected first step moves by ~lr regardless of gradient scale.
  REQUIRE(params.w_self_ch[0].at(0, 0) == Catch::Approx(theta0 - 0.1).margin(1e-7));
  REQUIRE(params.mlp_channel.w[0].at(0, 0) == other0);  // zero grad -> no move
  REQUIRE(state.step == 1);

  adam_step(params, grads, state, 0.1);
  REQUIRE(params.w_self_ch[0].at(0, 0) == Catch::Approx(theta0 - 0.2).margin(1e-6));
}

TEST_CASE("adam weight decay adds wd*theta to the gradient", "[training]") {
  auto params = init_encoder<double>(small_config());
  auto grads = zero_gradients(params);
  params.w_self_ch[0].at(0, 0) = 1.0;
  AdamState<double> state(params);
  adam_step(params, grads, state, 0.1, /*weight_decay=*/0.1);
  // g_eff = 0.1 -> mhat = 0.1, vhat = 0.01, step = lr * 0.1/0.1 = lr.
  REQUIRE(params.w_self_ch[0].at(0, 0) == Catch::Approx(0.9).margin(1e-6));
}

TEST_CASE("training reduces the loss and is deterministic", "[training]") {
  const KnowledgeGraph full = ring_graph(10, 2);
  Rng mask_rng(3);
  const MaskedSplit split = self_supervised_mask(full, 0.3, mask_rng);
  TrainTask task;
  task.graph = build_graph(split.observed, 10, 2);
  task.positives = split.targets;

  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 4;
  cfg.learning_rate = 0.01;
  cfg.seed = 9;

  const auto out1 = train_encoder(init_encoder<double>(small_config(1)), cfg, {task});
  const auto out2 = train_encoder(init_encoder<double>(small_config(1)), cfg, {task});
  REQUIRE(out1.history.epochs_run == 5);
  REQUIRE(out1.history.epoch_loss.size() == 5);
  REQUIRE(out1.history.epoch_loss == out2.history.epoch_loss);
  REQUIRE(out1.history.epoch_loss.back() < out1.history.epoch_loss.front());
  REQUIRE(out1.history.valid_mrr.empty());
}

TEST_CASE("remask mode re-draws targets per epoch and trains", "[training]") {
  TrainTask task;
  task.graph = ring_graph(10, 2);
  task.remask = true;
  task.mask_ratio = 0.25;
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 8;
  cfg.seed = 5;
  const auto out = train_encoder(init_encoder<double>(small_config(2)), cfg, {task});
  REQUIRE(out.history.epochs_run == 3);
  REQUIRE(out.history.epoch_loss.size() == 3);
}

TEST_CASE("loss sequence is invariant under relabeling with a frame",
          "[training][property]") {
  const KnowledgeGraph full = ring_graph(8, 2);
  Rng mask_rng(17);
  const MaskedSplit split = self_supervised_mask(full, 0.25, mask_rng);
  const PermutationPair p = random_permutation_pair(8, 2, 41);

  TrainTask base;
  base.graph = build_graph(split.observed, 8, 2);
  base.positives = split.targets;

  TrainTask mapped;
  mapped.graph = apply_permutation(base.graph, p);
  for (const Triplet& t : base.positives) mapped.positives.push_back(p.apply(t));
  mapped.frame = IndexFrame{p.node_perm, p.rel_perm};

  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 4;
  cfg.learning_rate = 0.005;
  cfg.seed = 13;

  const auto a = train_encoder(init_encoder<double>(small_config(4)), cfg, {base});
  const auto b = train_encoder(init_encoder<double>(small_config(4)), cfg, {mapped});
  REQUIRE(a.history.epoch_loss.size() == b.history.epoch_loss.size());
  for (std::size_t e = 0; e < a.history.epoch_loss.size(); ++e)
    REQUIRE(a.history.epoch_loss[e] ==
            Catch::Approx(b.history.epoch_loss[e]).margin(1e-6));
}

TEST_CASE("non-finite parameters surface as a runtime failure", "[training]") {
  TrainTask task;
  task.graph = ring_graph(8, 2);
  task.remask = true;
  TrainConfig cfg;
  cfg.epochs = 2;
  auto params = init_encoder<double>(small_config());
  params.head.w[0].at(0, 0) = std::nan("");
  REQUIRE_THROWS_AS(train_encoder(params, cfg, {task}), RuntimeFailure);
}

TEST_CASE("constant validation score early-stops after patience epochs", "[training]") {
  const KnowledgeGraph full = ring_graph(10, 2);
  Rng mask_rng(8);
  const MaskedSplit split = self_supervised_mask(full, 0.3, mask_rng);
  TrainTask task;
  task.graph = build_graph(split.observed, 10, 2);
  task.positives = split.targets;
  task.valid_queries = {split.targets[0], split.targets[1]};

  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.patience = 1;
  cfg.learning_rate = 0.0;  // params never move, so validation MRR is constant
  const auto out = train_encoder(init_encoder<double>(small_config(6)), cfg, {task});
  REQUIRE(out.history.early_stopped);
  REQUIRE(out.history.epochs_run == 2);  // best at epoch 0, one bad epoch
  REQUIRE(out.history.best_epoch == 0);
  REQUIRE(out.history.valid_mrr.size() == 2);
  REQUIRE(out.history.valid_mrr[0] == Catch::Approx(out.history.valid_mrr[1]));
}

TEST_CASE("multi-task training round-robins without error", "[training]") {
  TrainTask t1, t2;
  t1.graph = ring_graph(8, 2);
  t1.remask = true;
  t2.graph = ring_graph(6, 2);
  t2.remask = true;
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  const auto out = train_encoder(init_encoder<double>(small_config(7)), cfg, {t1, t2});
  REQUIRE(out.history.epochs_run == 2);
}

TEST_CASE("validation_relation_mrr is empty without validation queries", "[training]") {
  TrainTask task;
  task.graph = ring_graph(6, 2);
  task.remask = true;
  const auto params = init_encoder<double>(small_config());
  REQUIRE_FALSE(validation_relation_mrr(params, {task}, true).has_value());
}
