#pragma once

// Subgraph samplers for carving evaluation graphs out of a large source KG.
//
// sample_subgraph: breadth-first expansion from the highest-degree node with
// three budgets — maximum nodes, maximum triplets, and maximum triplets
// gathered per visited node (excess incident triplets are subsampled
// uniformly). Budgets are strict upper bounds on the returned subgraph. If
// the start node's weakly connected component is smaller than the budgets,
// the whole component is returned.
//
// forest_fire: classic burning process — from a random seed node, each burned
// node ignites a Geometric(burn_prob)-distributed number of its unburned
// undirected neighbors (P(X=n) = (1-p) p^n, mean p/(1-p)); when the fire dies
// out it restarts from a fresh random unburned node, until the node target is
// reached. Returns the burned nodes and their induced triplets.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <unordered_set>
#include <vector>

#include "kgdeq/common.hpp"
#include "kgdeq/graph.hpp"
#include "kgdeq/rng.hpp"

namespace kgdeq {

struct SampledSubgraph {
  std::vector<Triplet> triplets;     // kept triplets, original node/relation ids
  std::vector<std::size_t> nodes;    // visited nodes, ascending
};

inline SampledSubgraph sample_subgraph(const KnowledgeGraph& g, std::size_t max_nodes,
                                       std::size_t max_triplets, std::size_t max_per_node,
                                       std::uint64_t seed) {
  require(max_nodes >= 1, "sample_subgraph: max_nodes must be >= 1");
  require(max_triplets >= 1, "sample_subgraph: max_triplets must be >= 1");
  require(max_per_node >= 1, "sample_subgraph: max_per_node must be >= 1");
  require(g.num_triplets() > 0, "sample_subgraph: source graph has no triplets");

  // Highest-degree start node; ties broken toward the lowest index.
  std::size_t start = 0;
  for (std::size_t i = 1; i < g.num_nodes(); ++i)
    if (g.degree(i) > g.degree(start)) start = i;

  // Incident triplets per node (indices into g.triplets()).
  std::vector<std::vector<std::size_t>> incident(g.num_nodes());
  for (std::size_t ti = 0; ti < g.num_triplets(); ++ti) {
    const Triplet& t = g.triplets()[ti];
    incident[t.head].push_back(ti);
    if (t.tail != t.head) incident[t.tail].push_back(ti);
  }

  std::vector<bool> visited(g.num_nodes(), false);
  std::vector<bool> kept_idx(g.num_triplets(), false);
  visited[start] = true;
  std::size_t num_visited = 1;
  SampledSubgraph out;
  std::deque<std::size_t> queue{start};

  while (!queue.empty() && out.triplets.size() < max_triplets) {
    const std::size_t u = queue.front();
    queue.pop_front();

    // Gather this node's not-yet-kept incident triplets, subsample if needed.
    std::vector<std::size_t> batch;
    for (std::size_t ti : incident[u])
      if (!kept_idx[ti]) batch.push_back(ti);
    if (batch.size() > max_per_node) {
      Rng rng = Rng::keyed({seed, 0xa19ULL, u});
      rng.shuffle(batch);
      batch.resize(max_per_node);
      std::sort(batch.begin(), batch.end());
    }

    for (std::size_t ti : batch) {
      if (out.triplets.size() >= max_triplets) break;
      const Triplet& t = g.triplets()[ti];
      const std::size_t w = (t.head == u) ? t.tail : t.head;
      if (!visited[w] && num_visited >= max_nodes) continue;  // node budget is strict
      kept_idx[ti] = true;
      out.triplets.push_back(t);
      if (!visited[w]) {
        visited[w] = true;
        num_visited += 1;
        queue.push_back(w);
      }
    }
  }

  for (std::size_t i = 0; i < g.num_nodes(); ++i)
    if (visited[i]) out.nodes.push_back(i);
  return out;
}

inline SampledSubgraph forest_fire(const KnowledgeGraph& g, std::size_t target_nodes,
                                   double burn_prob, std::uint64_t seed) {
  require(target_nodes >= 1, "forest_fire: target_nodes must be >= 1");
  require(burn_prob > 0.0 && burn_prob < 1.0, "forest_fire: burn_prob must be in (0,1)");
  const std::size_t N = g.num_nodes();
  require(N >= 1, "forest_fire: source graph has no nodes");
  const std::size_t target = std::min(target_nodes, N);

  // Undirected distinct-neighbor adjacency.
  std::vector<std::vector<std::size_t>> nbr(N);
  for (const Triplet& t : g.triplets()) {
    if (t.head == t.tail) continue;
    nbr[t.head].push_back(t.tail);
    nbr[t.tail].push_back(t.head);
  }
  for (auto& v : nbr) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }

  Rng rng = Rng::keyed({seed, 0xf19eULL});
  std::vector<bool> burned(N, false);
  std::size_t num_burned = 0;
  const double logp = std::log(burn_prob);

  while (num_burned < target) {
    // Restart from a uniform unburned node.
    std::vector<std::size_t> unburned;
    unburned.reserve(N - num_burned);
    for (std::size_t i = 0; i < N; ++i)
      if (!burned[i]) unburned.push_back(i);
    const std::size_t ignite = unburned[rng.below(unburned.size())];
    burned[ignite] = true;
    num_burned += 1;
    std::deque<std::size_t> queue{ignite};

    while (!queue.empty() && num_burned < target) {
      const std::size_t u = queue.front();
      queue.pop_front();
      std::vector<std::size_t> fresh;
      for (std::size_t v : nbr[u])
        if (!burned[v]) fresh.push_back(v);
      if (fresh.empty()) continue;
      // Geometric(burn_prob) by inversion: X = floor(ln(1-U)/ln(p)).
      const double u01 = rng.uniform01();
      const double draw = std::floor(std::log(1.0 - u01) / logp);
      std::size_t burn_count =
          (draw < 0.0) ? 0 : static_cast<std::size_t>(std::min(draw, 1.0e6));
      burn_count = std::min(burn_count, fresh.size());
      if (burn_count == 0) continue;
      rng.shuffle(fresh);
      for (std::size_t i = 0; i < burn_count && num_burned < target; ++i) {
        burned[fresh[i]] = true;
        num_burned += 1;
        queue.push_back(fresh[i]);
      }
    }
  }

  SampledSubgraph out;
  for (std::size_t i = 0; i < N; ++i)
    if (burned[i]) out.nodes.push_back(i);
  std::unordered_set<std::size_t> in_set(out.nodes.begin(), out.nodes.end());
  for (const Triplet& t : g.triplets())
    if (in_set.count(t.head) && in_set.count(t.tail)) out.triplets.push_back(t);
  return out;
}

}  // namespace kgdeq
