#pragma once

// Executable checks of the model's symmetry guarantees.
//
// check_double_invariance: on random multi-relational graphs, scoring a query
// must give the same value after relabeling nodes and relations consistently
// (graph and query together). A scorer that peeks at raw ids fails loudly.
//
// check_equivariant_construction: the full N x R x N score tensor built from
// an invariant scorer transforms exactly like the graph under relabelings,
// i.e. tensor'(phi(i), tau(k), phi(j)) == tensor(i, k, j).
//
// counterexample_fixture: a small two-relation tree whose automorphism (swap
// the two subtrees AND the two relations) forces specific score equalities on
// any relabeling-insensitive scorer. Distance features do not break the
// symmetry; replacing them with raw node ids does, which gives the negative
// control.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "kgdeq/common.hpp"
#include "kgdeq/eval.hpp"
#include "kgdeq/graph.hpp"
#include "kgdeq/rng.hpp"

namespace kgdeq {

using GraphScorerFactory = std::function<ScoreFn(const KnowledgeGraph&)>;

struct InvarianceAudit {
  std::size_t trials = 0;
  std::size_t queries_checked = 0;
  double max_abs_diff = 0.0;
  double max_scaled_diff = 0.0;  // |a-b| / max(1, |a|, |b|)
  bool passed = false;
  std::string detail;  // description of the worst violation, if any
};

// Random directed multigraph: each ordered pair (i != j) carries relation k
// with probability 2/N, independently per relation. At least one triplet.
inline KnowledgeGraph random_er_graph(std::size_t num_nodes, std::size_t num_relations,
                                      Rng& rng) {
  std::vector<Triplet> ts;
  const double p = 2.0 / static_cast<double>(num_nodes);
  for (std::size_t k = 0; k < num_relations; ++k)
    for (std::size_t i = 0; i < num_nodes; ++i)
      for (std::size_t j = 0; j < num_nodes; ++j) {
        if (i == j) continue;
        if (rng.bernoulli(p)) ts.push_back({i, k, j});
      }
  if (ts.empty())
    ts.push_back({0, rng.below(num_relations), 1 % num_nodes});
  return build_graph(ts, num_nodes, num_relations);
}

inline InvarianceAudit check_double_invariance(const GraphScorerFactory& factory,
                                               std::size_t trials, std::uint64_t seed,
                                               double tol = 1e-5) {
  InvarianceAudit audit;
  audit.trials = trials;
  audit.passed = true;
  for (std::size_t trial = 0; trial < trials; ++trial) {
    Rng rng = Rng::keyed({seed, 0xd1ULL, trial});
    const std::size_t N = 5 + rng.below(26);  // 5..30
    const std::size_t R = 2 + rng.below(4);   // 2..5
    const KnowledgeGraph g = random_er_graph(N, R, rng);

    // Queries: a few existing edges plus a few arbitrary triplets.
    std::vector<Triplet> queries;
    for (std::size_t qi = 0; qi < 5 && qi < g.num_triplets(); ++qi)
      queries.push_back(g.triplets()[rng.below(g.num_triplets())]);
    for (std::size_t qi = 0; qi < 5; ++qi)
      queries.push_back({rng.below(N), rng.below(R), rng.below(N)});

    const PermutationPair perm = random_permutation_pair(N, R, mix_key({seed, 0xbe2ULL, trial}));
    const KnowledgeGraph gp = apply_permutation(g, perm);
    std::vector<Triplet> qp;
    for (const Triplet& q : queries) qp.push_back(perm.apply(q));

    const std::vector<double> a = factory(g)(queries);
    const std::vector<double> b = factory(gp)(qp);
    require(a.size() == queries.size() && b.size() == queries.size(),
            "check_double_invariance: scorer returned wrong number of scores");
    for (std::size_t qi = 0; qi < queries.size(); ++qi) {
      audit.queries_checked += 1;
      const double diff = std::abs(a[qi] - b[qi]);
      const double scale = std::max({1.0, std::abs(a[qi]), std::abs(b[qi])});
      audit.max_abs_diff = std::max(audit.max_abs_diff, diff);
      audit.max_scaled_diff = std::max(audit.max_scaled_diff, diff / scale);
      if (diff > tol * scale && audit.passed) {
        audit.passed = false;
        audit.detail = "trial " + std::to_string(trial) + ", query (" +
                       std::to_string(queries[qi].head) + ", " +
                       std::to_string(queries[qi].relation) + ", " +
                       std::to_string(queries[qi].tail) + "): " + std::to_string(a[qi]) +
                       " vs " + std::to_string(b[qi]) + " after relabeling";
      }
    }
  }
  return audit;
}

struct EquivarianceAudit {
  std::size_t perms_checked = 0;
  double max_abs_diff = 0.0;
  bool passed = false;
};

// Scores every (i, k, j) on g and on relabeled copies and checks the tensor
// transforms entrywise: tensor'(phi i, tau k, phi j) == tensor(i, k, j).
inline EquivarianceAudit check_equivariant_construction(const GraphScorerFactory& factory,
                                                        const KnowledgeGraph& g,
                                                        std::size_t num_perms,
                                                        std::uint64_t seed, double tol = 1e-8) {
  const std::size_t N = g.num_nodes(), R = g.num_relations();
  std::vector<Triplet> all;
  all.reserve(N * R * N);
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t k = 0; k < R; ++k)
      for (std::size_t j = 0; j < N; ++j) all.push_back({i, k, j});
  auto flat = [&](const Triplet& t) { return (t.head * R + t.relation) * N + t.tail; };

  const std::vector<double> base = factory(g)(all);
  EquivarianceAudit audit;
  audit.passed = true;
  for (std::size_t pi = 0; pi < num_perms; ++pi) {
    const PermutationPair perm = random_permutation_pair(N, R, mix_key({seed, 0xe9ULL, pi}));
    const KnowledgeGraph gp = apply_permutation(g, perm);
    const std::vector<double> permuted = factory(gp)(all);
    for (const Triplet& t : all) {
      const double lhs = permuted[flat(perm.apply(t))];
      const double rhs = base[flat(t)];
      const double diff = std::abs(lhs - rhs);
      audit.max_abs_diff = std::max(audit.max_abs_diff, diff);
      if (diff > tol) audit.passed = false;
    }
    audit.perms_checked += 1;
  }
  return audit;
}

// ---------------------------------------------------------------------------
// Hand-built symmetry counterexample.

struct EmbeddingEquality {
  std::size_t node_a = 0, rel_a = 0;
  std::size_t node_b = 0, rel_b = 0;
};

struct CounterexampleFixture {
  KnowledgeGraph observed;  // depth-2 two-relation tree; relations 2,3 edge-free
  PermutationPair symmetry; // graph automorphism paired with a relation swap
  std::vector<std::vector<Triplet>> equal_score_groups;
  std::vector<EmbeddingEquality> equal_embeddings;
};

inline CounterexampleFixture counterexample_fixture() {
  CounterexampleFixture f;
  const std::vector<Triplet> edges{{1, 0, 0}, {2, 1, 0}, {3, 0, 1},
                                   {4, 1, 1}, {5, 0, 2}, {6, 1, 2}};
  f.observed = build_graph(edges, 7, 4);
  f.symmetry.node_perm = {0, 2, 1, 6, 5, 4, 3};
  f.symmetry.rel_perm = {1, 0, 3, 2};
  f.equal_score_groups = {
      {{3, 3, 0}, {6, 3, 0}, {6, 2, 0}, {3, 2, 0}},
      {{4, 3, 0}, {5, 3, 0}, {5, 2, 0}, {4, 2, 0}},
  };
  f.equal_embeddings = {{3, 0, 6, 1}, {4, 0, 5, 1}};
  return f;
}

struct CounterexampleAudit {
  double max_group_spread = 0.0;  // worst within-group score range
  bool passed = false;
};

// Any relabeling-insensitive scorer must give equal scores within each group
// of the fixture (the listed queries are orbits of the fixture's symmetry).
inline CounterexampleAudit audit_counterexample(const ScoreFn& score_on_observed,
                                                const CounterexampleFixture& f,
                                                double tol = 1e-5) {
  CounterexampleAudit audit;
  audit.passed = true;
  for (const auto& group : f.equal_score_groups) {
    const std::vector<double> s = score_on_observed(group);
    double lo = s[0], hi = s[0];
    for (double v : s) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    audit.max_group_spread = std::max(audit.max_group_spread, hi - lo);
    if (hi - lo > tol) audit.passed = false;
  }
  return audit;
}

}  // namespace kgdeq
