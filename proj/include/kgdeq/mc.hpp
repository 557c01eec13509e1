#pragma once

// Monte Carlo symmetrization of positional scorers.
//
// A positional scorer depends on sampled feature rows, so its raw output
// changes under relabeling. Averaging the score over M independent feature
// draws estimates an expectation that is exactly relabeling-insensitive; the
// residual dependence (the "invariance gap") is Monte Carlo error and shrinks
// like M^{-1/2}. This header provides the estimator, the gap measurement
// between a graph and a relabeled copy, a log-log trend fit of gap vs M, and
// a paired t-test that the two sides agree in expectation.

#include <cmath>
#include <cstdint>
#include <vector>

#include "kgdeq/common.hpp"
#include "kgdeq/graph.hpp"
#include "kgdeq/positional.hpp"
#include "kgdeq/rng.hpp"

namespace kgdeq {

// Mean score over `num_draws` feature draws; draw m uses seed mix(seed, m).
inline std::vector<double> deq_score(const PositionalScorer& scorer, const KnowledgeGraph& g,
                                     const std::vector<Triplet>& queries, std::size_t num_draws,
                                     std::uint64_t seed) {
  require(num_draws >= 1, "deq_score: need at least one draw");
  std::vector<double> mean(queries.size(), 0.0);
  for (std::size_t m = 0; m < num_draws; ++m) {
    const FeatureDraw d = draw_features(g.num_nodes(), g.num_relations(),
                                        scorer.feature_dim(), mix_key({seed, m}));
    const std::vector<double> s =
        scorer.score_with_embeddings(g, queries, d.node_features, d.rel_features);
    for (std::size_t q = 0; q < queries.size(); ++q) mean[q] += s[q];
  }
  const double inv = 1.0 / static_cast<double>(num_draws);
  for (double& v : mean) v *= inv;
  return mean;
}

// Mean absolute difference between the estimate on g and the estimate on a
// relabeled copy, averaged over queries and over the given relabelings. The
// two sides use independent draw streams unless `shared_streams` is set (in
// which case the identity relabeling gives a gap of exactly zero).
inline double invariance_gap(const PositionalScorer& scorer, const KnowledgeGraph& g,
                             const std::vector<Triplet>& queries,
                             const std::vector<PermutationPair>& perms, std::size_t num_draws,
                             std::uint64_t seed, bool shared_streams = false) {
  require(!queries.empty(), "invariance_gap: need at least one query");
  require(!perms.empty(), "invariance_gap: need at least one relabeling");
  const std::uint64_t seed_left = mix_key({seed, 0xaULL});
  const std::uint64_t seed_right = shared_streams ? seed_left : mix_key({seed, 0xbULL});
  const std::vector<double> left = deq_score(scorer, g, queries, num_draws, seed_left);
  double total = 0.0;
  for (const PermutationPair& p : perms) {
    const KnowledgeGraph gp = apply_permutation(g, p);
    std::vector<Triplet> qp;
    qp.reserve(queries.size());
    for (const Triplet& q : queries) qp.push_back(p.apply(q));
    const std::vector<double> right = deq_score(scorer, gp, qp, num_draws, seed_right);
    for (std::size_t qi = 0; qi < queries.size(); ++qi)
      total += std::abs(left[qi] - right[qi]);
  }
  return total / (static_cast<double>(queries.size()) * static_cast<double>(perms.size()));
}

// ---------------------------------------------------------------------------
// Gap-vs-draws trend.

struct McTrendResult {
  std::vector<std::size_t> draw_counts;
  std::vector<double> mean_log_gap;  // mean over trials of log(gap) per count
  double slope = 0.0;                // least-squares slope of mean log gap vs log M
  std::size_t decreasing_trials = 0; // trials where gap at max M < gap at min M
  std::size_t trials = 0;
};

inline McTrendResult mc_gap_trend(const PositionalScorer& scorer, const KnowledgeGraph& g,
                                  const std::vector<Triplet>& queries,
                                  const std::vector<PermutationPair>& perms,
                                  const std::vector<std::size_t>& draw_counts,
                                  std::size_t trials, std::uint64_t seed) {
  require(draw_counts.size() >= 2, "mc_gap_trend: need at least two draw counts");
  require(trials >= 1, "mc_gap_trend: need at least one trial");
  McTrendResult res;
  res.draw_counts = draw_counts;
  res.trials = trials;
  res.mean_log_gap.assign(draw_counts.size(), 0.0);
  for (std::size_t trial = 0; trial < trials; ++trial) {
    std::vector<double> gaps(draw_counts.size());
    for (std::size_t ci = 0; ci < draw_counts.size(); ++ci) {
      const double gap = invariance_gap(scorer, g, queries, perms, draw_counts[ci],
                                       mix_key({seed, trial, draw_counts[ci]}));
      gaps[ci] = gap;
      res.mean_log_gap[ci] += std::log(std::max(gap, 1e-300));
    }
    if (gaps.back() < gaps.front()) res.decreasing_trials += 1;
  }
  for (double& v : res.mean_log_gap) v /= static_cast<double>(trials);

  // Least-squares slope of mean log gap against log draw count.
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  const double n = static_cast<double>(draw_counts.size());
  for (std::size_t ci = 0; ci < draw_counts.size(); ++ci) {
    const double x = std::log(static_cast<double>(draw_counts[ci]));
    const double y = res.mean_log_gap[ci];
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  res.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return res;
}

// ---------------------------------------------------------------------------
// Paired agreement test.

struct PairedTTest {
  double t = 0.0;
  double mean_diff = 0.0;
  std::size_t runs = 0;
};

// Per run: estimate on g and on the relabeled copy with independent streams;
// the per-run observation is the signed mean over queries of (left - right).
// If the estimator is unbiased under relabeling, t is Student-distributed
// around 0 with runs-1 degrees of freedom.
inline PairedTTest deq_paired_ttest(const PositionalScorer& scorer, const KnowledgeGraph& g,
                                    const std::vector<Triplet>& queries,
                                    const PermutationPair& perm, std::size_t num_draws,
                                    std::size_t runs, std::uint64_t seed) {
  require(runs >= 2, "deq_paired_ttest: need at least two runs");
  const KnowledgeGraph gp = apply_permutation(g, perm);
  std::vector<Triplet> qp;
  qp.reserve(queries.size());
  for (const Triplet& q : queries) qp.push_back(perm.apply(q));

  std::vector<double> diffs(runs);
  for (std::size_t r = 0; r < runs; ++r) {
    const std::vector<double> left =
        deq_score(scorer, g, queries, num_draws, mix_key({seed, r, 0xaULL}));
    const std::vector<double> right =
        deq_score(scorer, gp, qp, num_draws, mix_key({seed, r, 0xbULL}));
    double d = 0.0;
    for (std::size_t qi = 0; qi < queries.size(); ++qi) d += left[qi] - right[qi];
    diffs[r] = d / static_cast<double>(queries.size());
  }
  double mean = 0.0;
  for (double d : diffs) mean += d;
  mean /= static_cast<double>(runs);
  double var = 0.0;
  for (double d : diffs) var += (d - mean) * (d - mean);
  var /= static_cast<double>(runs - 1);
  PairedTTest out;
  out.mean_diff = mean;
  out.runs = runs;
  const double se = std::sqrt(var / static_cast<double>(runs));
  out.t = se > 0.0 ? mean / se : 0.0;
  return out;
}

}  // namespace kgdeq
