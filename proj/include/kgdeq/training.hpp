#pragma once

// Self-supervised training of the encoder.
//
// Positives are link-prediction queries held out from the observed graph,
// either fixed ahead of time (dataset bundles ship an observed/train split)
// or re-drawn each epoch by masking a ratio of the graph's triplets. Each
// positive is paired with node corruptions (head or tail replaced) and
// relation corruptions, and the loss is a cross-entropy that pushes positive
// scores to 1 and corruption scores to 0, with the corruption term averaged
// over the corruption count.
//
// Determinism and relabeling-invariance: every random choice is positional.
// Masking picks triplet positions, batches shuffle positions, and negative
// draws are keyed by (seed, epoch, task, positive position, draw index) and
// produce raw indices that pass through an IndexFrame before becoming node or
// relation ids. Training on a consistently relabeled graph with the matching
// frame therefore replays the same decisions and produces the same losses.

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "kgdeq/common.hpp"
#include "kgdeq/distance.hpp"
#include "kgdeq/encoder.hpp"
#include "kgdeq/eval.hpp"
#include "kgdeq/graph.hpp"
#include "kgdeq/rng.hpp"

namespace kgdeq {

// Maps raw uniform draws to node/relation ids. Empty vectors mean identity.
struct IndexFrame {
  std::vector<std::size_t> node_order;
  std::vector<std::size_t> rel_order;

  std::size_t node(std::size_t raw) const {
    return node_order.empty() ? raw : node_order[raw];
  }
  std::size_t rel(std::size_t raw) const { return rel_order.empty() ? raw : rel_order[raw]; }
};

// ---------------------------------------------------------------------------
// Masking.

struct MaskedSplit {
  std::vector<Triplet> observed;  // surviving triplets, original order
  std::vector<Triplet> targets;   // masked-out triplets, original order
};

// Positional mask: removes floor(mask_ratio * M) triplets chosen by position.
inline MaskedSplit self_supervised_mask(const KnowledgeGraph& g, double mask_ratio, Rng& rng) {
  require(mask_ratio > 0.0 && mask_ratio < 1.0, "self_supervised_mask: ratio must be in (0,1)");
  const std::size_t M = g.num_triplets();
  const std::size_t m = static_cast<std::size_t>(mask_ratio * static_cast<double>(M));
  require(m >= 1, "self_supervised_mask: ratio too small, no triplet would be masked");
  require(m < M, "self_supervised_mask: ratio too large, no triplet would remain");
  std::vector<std::size_t> order = rng.permutation(M);
  std::vector<bool> masked(M, false);
  for (std::size_t i = 0; i < m; ++i) masked[order[i]] = true;
  MaskedSplit out;
  out.observed.reserve(M - m);
  out.targets.reserve(m);
  for (std::size_t i = 0; i < M; ++i)
    (masked[i] ? out.targets : out.observed).push_back(g.triplets()[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Negative sampling.

struct NegativeGroup {
  std::vector<Triplet> triplets;
  std::size_t num_collisions = 0;  // corruptions kept despite matching a known triplet
};

struct NegativeKey {
  std::uint64_t seed = 0;
  std::uint64_t epoch = 0;
  std::uint64_t task = 0;
  std::uint64_t position = 0;  // positive's position in its target list
};

// Draws `num_node` endpoint corruptions and `num_rel` relation corruptions of
// `positive`. Candidates matching an observed triplet or another target are
// re-drawn up to `max_retries` times, then kept and counted as collisions.
// Relation corruptions always differ from the true relation; if that can't be
// achieved (single-relation graphs) the draw is skipped.
inline NegativeGroup sample_negatives(const Triplet& positive, const KnowledgeGraph& observed,
                                      const TripletSet& targets, std::size_t num_relations,
                                      std::size_t num_node, std::size_t num_rel,
                                      const NegativeKey& key, const IndexFrame& frame = {},
                                      std::size_t max_retries = 100) {
  const std::size_t N = observed.num_nodes();
  require(N >= 2, "sample_negatives: need at least two nodes");
  require(num_relations >= 1, "sample_negatives: need at least one relation");
  NegativeGroup out;
  auto known = [&](const Triplet& t) { return observed.contains(t) || targets.count(t) > 0; };

  for (std::size_t d = 0; d < num_node; ++d) {
    Rng rng = Rng::keyed({key.seed, 0x4e6ULL, key.epoch, key.task, key.position, d});
    const bool corrupt_head = rng.below(2) == 0;
    Triplet cand{};
    bool accepted = false;
    for (std::size_t attempt = 0; attempt < max_retries; ++attempt) {
      const std::size_t node = frame.node(rng.below(N));
      cand = corrupt_head ? Triplet{node, positive.relation, positive.tail}
                          : Triplet{positive.head, positive.relation, node};
      if (cand == positive || known(cand)) continue;
      accepted = true;
      break;
    }
    if (!accepted) out.num_collisions += 1;
    out.triplets.push_back(cand);
  }

  for (std::size_t d = 0; d < num_rel; ++d) {
    Rng rng = Rng::keyed({key.seed, 0x4e7ULL, key.epoch, key.task, key.position, d});
    std::optional<Triplet> fallback;  // last candidate with a different relation
    std::optional<Triplet> accepted;
    for (std::size_t attempt = 0; attempt < max_retries; ++attempt) {
      const std::size_t rel = frame.rel(rng.below(num_relations));
      if (rel == positive.relation) continue;
      const Triplet cand{positive.head, rel, positive.tail};
      fallback = cand;
      if (known(cand)) continue;
      accepted = cand;
      break;
    }
    if (accepted) {
      out.triplets.push_back(*accepted);
    } else if (fallback) {
      out.num_collisions += 1;
      out.triplets.push_back(*fallback);
    }
    // no fallback at all: relation corruption impossible, draw skipped
  }
  return out;
}

// ---------------------------------------------------------------------------
// Loss.

// Mean over positives of -[log s_pos + (1/n) * sum_q log(1 - s_q)] with n the
// number of corruptions of that positive. Scores are clamped away from {0,1}.
template <class Real>
inline Real cross_entropy_loss(const std::vector<Real>& pos_scores,
                               const std::vector<std::vector<Real>>& neg_scores) {
  require(pos_scores.size() == neg_scores.size(),
          "cross_entropy_loss: positives/negative-groups length mismatch");
  require(!pos_scores.empty(), "cross_entropy_loss: need at least one positive");
  const Real eps = Real(1e-12);
  Real total = Real(0);
  for (std::size_t p = 0; p < pos_scores.size(); ++p) {
    const Real sp = std::min(std::max(pos_scores[p], eps), Real(1) - eps);
    Real term = -std::log(sp);
    if (!neg_scores[p].empty()) {
      Real acc = Real(0);
      for (Real sq : neg_scores[p]) {
        const Real s = std::min(std::max(sq, eps), Real(1) - eps);
        acc += std::log(Real(1) - s);
      }
      term -= acc / static_cast<Real>(neg_scores[p].size());
    }
    total += term;
  }
  return total / static_cast<Real>(pos_scores.size());
}

// ---------------------------------------------------------------------------
// Adam.

template <class Real>
struct AdamState {
  EncoderParams<Real> m, v;
  std::size_t step = 0;

  explicit AdamState(const EncoderParams<Real>& params)
      : m(zero_gradients(params)), v(zero_gradients(params)) {}
};

template <class Real>
inline void adam_step(EncoderParams<Real>& params, const EncoderParams<Real>& grads,
                      AdamState<Real>& state, double lr, double weight_decay = 0.0,
                      double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));

  std::vector<Matrix<Real>*> tp, mp, vp;
  std::vector<const Matrix<Real>*> gp;
  for_each_param(params, [&](const std::string&, Matrix<Real>& mat, bool) { tp.push_back(&mat); });
  for_each_param(grads,
                 [&](const std::string&, const Matrix<Real>& mat, bool) { gp.push_back(&mat); });
  for_each_param(state.m, [&](const std::string&, Matrix<Real>& mat, bool) { mp.push_back(&mat); });
  for_each_param(state.v, [&](const std::string&, Matrix<Real>& mat, bool) { vp.push_back(&mat); });
  require(tp.size() == gp.size() && tp.size() == mp.size() && tp.size() == vp.size(),
          "adam_step: parameter/gradient shape mismatch");

  for (std::size_t i = 0; i < tp.size(); ++i) {
    auto& theta = tp[i]->data();
    const auto& g = gp[i]->data();
    auto& mm = mp[i]->data();
    auto& vv = vp[i]->data();
    require(theta.size() == g.size(), "adam_step: parameter/gradient size mismatch");
    for (std::size_t j = 0; j < theta.size(); ++j) {
      const double gj = static_cast<double>(g[j]) +
                        weight_decay * static_cast<double>(theta[j]);
      const double mj = beta1 * static_cast<double>(mm[j]) + (1.0 - beta1) * gj;
      const double vj = beta2 * static_cast<double>(vv[j]) + (1.0 - beta2) * gj * gj;
      mm[j] = static_cast<Real>(mj);
      vv[j] = static_cast<Real>(vj);
      theta[j] -= static_cast<Real>(lr * (mj / bc1) / (std::sqrt(vj / bc2) + eps));
    }
  }
}

// ---------------------------------------------------------------------------
// Training loop.

struct TrainTask {
  KnowledgeGraph graph;  // observed graph (fixed mode) or full graph (remask mode)
  std::vector<Triplet> positives;      // fixed mode targets; ignored when remask
  std::vector<Triplet> valid_queries;  // optional early-stopping queries
  bool remask = false;
  double mask_ratio = 0.2;
  IndexFrame frame;
};

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  std::size_t patience = 3;
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  std::size_t num_node_negatives = 2;
  std::size_t num_relation_negatives = 2;
  std::uint64_t seed = 0;
  bool augment_inverses = true;
  std::size_t negative_retries = 100;
};

struct TrainingHistory {
  std::vector<double> epoch_loss;       // mean loss per epoch actually run
  std::vector<double> valid_mrr;        // per epoch; empty if no validation
  std::size_t best_epoch = 0;           // 0-based epoch of the returned params
  std::size_t epochs_run = 0;
  bool early_stopped = false;
  std::size_t negative_collisions = 0;  // corruptions kept despite being known
};

template <class Real>
struct TrainOutcome {
  EncoderParams<Real> params;
  TrainingHistory history;
};

namespace detail {

// Distance features for queries against an (optionally augmented) graph,
// excluding each query and, when augmented, its inverse twin.
inline std::vector<DistanceFeature> query_features(DistanceOracle& oracle,
                                                   const std::vector<Triplet>& queries,
                                                   bool augmented, std::size_t original_relations) {
  std::vector<DistanceFeature> feats;
  feats.reserve(queries.size());
  for (const Triplet& q : queries) {
    std::vector<Triplet> excl{q};
    if (augmented) excl.push_back({q.tail, q.relation + original_relations, q.head});
    feats.push_back(oracle.features(q, excl));
  }
  return feats;
}

}  // namespace detail

// Mean validation MRR on the relation task (ranked against all other
// relations) across tasks that have validation queries.
template <class Real>
inline std::optional<double> validation_relation_mrr(const EncoderParams<Real>& params,
                                                    const std::vector<TrainTask>& tasks,
                                                    bool augment) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const TrainTask& task : tasks) {
    if (task.valid_queries.empty()) continue;
    ScoringPipeline<Real> pipeline(params, task.graph, augment);
    ScoreFn fn = [&](const std::vector<Triplet>& qs) {
      std::vector<Real> s = pipeline.score(qs);
      return std::vector<double>(s.begin(), s.end());
    };
    EvalConfig ec;
    ec.relation_all_others = true;
    RankingReport rep =
        evaluate_relation_task(fn, task.graph.num_relations(), task.valid_queries, ec);
    sum += rep.mrr;
    n += 1;
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

template <class Real = double>
inline TrainOutcome<Real> train_encoder(EncoderParams<Real> params, const TrainConfig& cfg,
                                        const std::vector<TrainTask>& tasks) {
  require(!tasks.empty(), "train_encoder: need at least one task");
  require(cfg.batch_size >= 1, "train_encoder: batch_size must be >= 1");
  require(cfg.epochs >= 1, "train_encoder: epochs must be >= 1");
  for (const TrainTask& task : tasks) {
    if (!task.remask)
      require(!task.positives.empty(), "train_encoder: fixed-mode task has no positives");
  }

  TrainOutcome<Real> out;
  out.params = params;
  AdamState<Real> adam(params);
  EncoderParams<Real> best = params;
  double best_mrr = -1.0;
  std::size_t best_epoch = 0;
  std::size_t bad_epochs = 0;

  struct EpochTask {
    KnowledgeGraph observed;
    KnowledgeGraph encoded;  // observed, augmented if configured
    std::vector<Triplet> targets;
    TripletSet target_set;
    std::unique_ptr<NeighborIndex> idx;
    std::unique_ptr<EncoderAdjacency> adj;
    std::unique_ptr<DistanceOracle> oracle;
    std::vector<std::size_t> order;  // shuffled positions into targets
    std::size_t cursor = 0;
  };

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Stage per-task epoch data.
    std::vector<EpochTask> ep(tasks.size());
    for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
      const TrainTask& task = tasks[ti];
      if (task.remask) {
        Rng mask_rng = Rng::keyed({cfg.seed, 0x3a5cULL, epoch, ti});
        MaskedSplit split = self_supervised_mask(task.graph, task.mask_ratio, mask_rng);
        ep[ti].observed =
            build_graph(split.observed, task.graph.num_nodes(), task.graph.num_relations());
        ep[ti].targets = std::move(split.targets);
      } else {
        ep[ti].observed = task.graph;
        ep[ti].targets = task.positives;
      }
      ep[ti].encoded =
          cfg.augment_inverses ? augment_inverses(ep[ti].observed) : ep[ti].observed;
      ep[ti].target_set = TripletSet(ep[ti].targets.begin(), ep[ti].targets.end());
      ep[ti].idx = std::make_unique<NeighborIndex>(ep[ti].encoded);
      ep[ti].adj = std::make_unique<EncoderAdjacency>(*ep[ti].idx);
      ep[ti].oracle = std::make_unique<DistanceOracle>(ep[ti].encoded, *ep[ti].idx,
                                                       params.config.distance_cap);
      Rng order_rng = Rng::keyed({cfg.seed, 0xba7c4ULL, epoch, ti});
      ep[ti].order = order_rng.permutation(ep[ti].targets.size());
    }

    // Round-robin batches across tasks.
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    bool any = true;
    while (any) {
      any = false;
      for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
        EpochTask& et = ep[ti];
        if (et.cursor >= et.order.size()) continue;
        any = true;
        const std::size_t begin = et.cursor;
        const std::size_t end = std::min(et.order.size(), begin + cfg.batch_size);
        et.cursor = end;

        // Assemble the batch: positives followed by their corruption groups.
        std::vector<Triplet> queries;
        std::vector<std::size_t> group_sizes;
        for (std::size_t bi = begin; bi < end; ++bi) {
          const std::size_t pos_index = et.order[bi];
          const Triplet& positive = et.targets[pos_index];
          NegativeGroup neg = sample_negatives(
              positive, et.observed, et.target_set, et.observed.num_relations(),
              cfg.num_node_negatives, cfg.num_relation_negatives,
              NegativeKey{cfg.seed, epoch, ti, pos_index}, tasks[ti].frame,
              cfg.negative_retries);
          out.history.negative_collisions += neg.num_collisions;
          queries.push_back(positive);
          queries.insert(queries.end(), neg.triplets.begin(), neg.triplets.end());
          group_sizes.push_back(neg.triplets.size());
        }

        std::vector<DistanceFeature> feats;
        if (out.params.config.use_distance)
          feats = detail::query_features(*et.oracle, queries, cfg.augment_inverses,
                                         et.observed.num_relations());

        ScoringContext<Real> ctx(out.params, et.encoded, *et.adj, /*keep_trace=*/true);
        ForwardResult<Real> fr = ctx.forward(queries, feats);

        // Loss and dL/dlogit. d(-log sigmoid(z))/dz = s - 1;
        // d(-log(1 - sigmoid(z)))/dz = s.
        const std::size_t P = group_sizes.size();
        std::vector<Real> pos_scores;
        std::vector<std::vector<Real>> neg_scores(P);
        std::vector<Real> dlogit(queries.size(), Real(0));
        std::size_t at = 0;
        for (std::size_t p = 0; p < P; ++p) {
          const Real sp = fr.scores[at];
          pos_scores.push_back(sp);
          dlogit[at] = (sp - Real(1)) / static_cast<Real>(P);
          ++at;
          const std::size_t n = group_sizes[p];
          for (std::size_t qn = 0; qn < n; ++qn) {
            const Real sq = fr.scores[at];
            neg_scores[p].push_back(sq);
            dlogit[at] = sq / (static_cast<Real>(n) * static_cast<Real>(P));
            ++at;
          }
        }
        const Real batch_loss = cross_entropy_loss(pos_scores, neg_scores);
        if (!std::isfinite(static_cast<double>(batch_loss)))
          throw RuntimeFailure("train_encoder: non-finite loss at epoch " +
                               std::to_string(epoch));
        loss_sum += static_cast<double>(batch_loss) * static_cast<double>(P);
        loss_count += P;

        EncoderParams<Real> grads = zero_gradients(out.params);
        ctx.backward(dlogit, grads);
        adam_step(out.params, grads, adam, cfg.learning_rate, cfg.weight_decay);
      }
    }
    out.history.epoch_loss.push_back(loss_count ? loss_sum / static_cast<double>(loss_count)
                                                : 0.0);
    out.history.epochs_run = epoch + 1;

    // Early stopping on validation relation MRR.
    std::optional<double> mrr =
        validation_relation_mrr(out.params, tasks, cfg.augment_inverses);
    if (mrr) {
      out.history.valid_mrr.push_back(*mrr);
      if (*mrr > best_mrr + 1e-12) {
        best_mrr = *mrr;
        best = out.params;
        best_epoch = epoch;
        bad_epochs = 0;
      } else {
        bad_epochs += 1;
        if (bad_epochs >= cfg.patience) {
          out.history.early_stopped = true;
          break;
        }
      }
    }
  }

  if (best_mrr >= 0.0) {
    out.params = best;
    out.history.best_epoch = best_epoch;
  } else {
    out.history.best_epoch = out.history.epochs_run ? out.history.epochs_run - 1 : 0;
  }
  return out;
}

}  // namespace kgdeq
