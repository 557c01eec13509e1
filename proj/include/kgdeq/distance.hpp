#pragma once

// Shortest-path distance features between query endpoints.
//
// Distances are hop counts over the directed union graph (edges of all
// relations). A query (i,k,j) is scored with d(i,j) and d(j,i) computed as if
// the query triplet itself were absent; only that one directed triplet is
// dropped, so a parallel edge of another relation still connects the pair.
// Callers that work on inverse-augmented graphs additionally exclude the
// query's inverse twin, since it encodes the same fact.
//
// Finite distances are capped: anything beyond `cap` hops reports
// UNREACHABLE, and the numeric encoding maps UNREACHABLE to cap+1 before
// scaling into [0,1].

#include <cstdint>
#include <deque>
#include <optional>
#include <unordered_map>
#include <vector>

#include "kgdeq/common.hpp"
#include "kgdeq/graph.hpp"

namespace kgdeq {

inline constexpr std::size_t kUnreachable = static_cast<std::size_t>(-1);

struct DistanceFeature {
  std::size_t dist_forward = kUnreachable;   // d(head, tail)
  std::size_t dist_backward = kUnreachable;  // d(tail, head)
  std::size_t cap = 10;
};

// Scales a (possibly UNREACHABLE) distance into [0,1]: min(d, cap+1)/(cap+1).
template <class Real = double>
inline Real encode_distance(std::size_t dist, std::size_t cap) {
  const std::size_t clipped = (dist == kUnreachable || dist > cap) ? cap + 1 : dist;
  return static_cast<Real>(clipped) / static_cast<Real>(cap + 1);
}

namespace detail {

// Depth-capped BFS from src over the directed union graph, skipping edges
// that match any excluded triplet. Returns per-node distances (kUnreachable
// beyond the cap).
inline std::vector<std::size_t> bfs_distances(const NeighborIndex& idx, std::size_t src,
                                              const std::vector<Triplet>& exclude,
                                              std::size_t cap) {
  std::vector<std::size_t> dist(idx.out.size(), kUnreachable);
  dist[src] = 0;
  std::deque<std::size_t> queue{src};
  while (!queue.empty()) {
    const std::size_t u = queue.front();
    queue.pop_front();
    if (dist[u] >= cap) continue;  // deeper nodes would exceed the cap
    for (const auto& [v, k] : idx.out[u]) {
      if (dist[v] != kUnreachable) continue;
      bool excluded = false;
      for (const Triplet& e : exclude) {
        if (e.head == u && e.relation == k && e.tail == v) {
          excluded = true;
          break;
        }
      }
      if (excluded) {
        // A parallel edge u->v of a different relation may still be usable.
        bool parallel = false;
        for (const auto& [v2, k2] : idx.out[u]) {
          if (v2 != v || k2 == k) continue;
          bool also_excluded = false;
          for (const Triplet& e : exclude) {
            if (e.head == u && e.relation == k2 && e.tail == v) {
              also_excluded = true;
              break;
            }
          }
          if (!also_excluded) {
            parallel = true;
            break;
          }
        }
        if (!parallel) continue;
      }
      dist[v] = dist[u] + 1;
      queue.push_back(v);
    }
  }
  for (auto& d : dist) {
    if (d != kUnreachable && d > cap) d = kUnreachable;
  }
  return dist;
}

}  // namespace detail

inline std::size_t shortest_distance(const NeighborIndex& idx, std::size_t src, std::size_t dst,
                                     const std::vector<Triplet>& exclude, std::size_t cap) {
  require(cap >= 1, "shortest_distance: cap must be >= 1");
  require(src < idx.out.size() && dst < idx.out.size(),
          "shortest_distance: node index out of range");
  return detail::bfs_distances(idx, src, exclude, cap)[dst];
}

inline std::size_t shortest_distance(const KnowledgeGraph& g, std::size_t src, std::size_t dst,
                                     const std::optional<Triplet>& exclude, std::size_t cap) {
  NeighborIndex idx(g);
  std::vector<Triplet> excl;
  if (exclude) excl.push_back(*exclude);
  return shortest_distance(idx, src, dst, excl, cap);
}

// Batched distance features with a per-source BFS cache. Exclusions only
// matter when the excluded triplet is actually present, so the common case
// (query edges held out of the observed graph) shares one BFS per distinct
// endpoint.
class DistanceOracle {
public:
  DistanceOracle(const KnowledgeGraph& g, const NeighborIndex& idx, std::size_t cap)
      : graph_(g), idx_(idx), cap_(cap) {
    require(cap >= 1, "DistanceOracle: cap must be >= 1");
  }

  std::size_t cap() const { return cap_; }

  // d(src, dst) ignoring every excluded triplet that exists in the graph.
  std::size_t distance(std::size_t src, std::size_t dst, const std::vector<Triplet>& exclude) {
    // An exclusion only matters when the triplet is actually in the graph;
    // the common case (query edges held out of the observed graph) shares a
    // cached BFS per source node.
    bool active = false;
    for (const Triplet& e : exclude) {
      if (graph_.contains(e)) {
        active = true;
        break;
      }
    }
    if (!active) {
      const auto& dist = plain(src);
      return dist[dst];
    }
    return detail::bfs_distances(idx_, src, exclude, cap_)[dst];
  }

  DistanceFeature features(const Triplet& q, const std::vector<Triplet>& exclude) {
    DistanceFeature f;
    f.cap = cap_;
    f.dist_forward = distance(q.head, q.tail, exclude);
    f.dist_backward = distance(q.tail, q.head, exclude);
    return f;
  }

private:
  const std::vector<std::size_t>& plain(std::size_t src) {
    auto it = cache_.find(src);
    if (it != cache_.end()) return it->second;
    auto [ins, ok] = cache_.emplace(src, detail::bfs_distances(idx_, src, {}, cap_));
    (void)ok;
    return ins->second;
  }

  const KnowledgeGraph& graph_;
  const NeighborIndex& idx_;
  std::size_t cap_;
  std::unordered_map<std::size_t, std::vector<std::size_t>> cache_;
};

// Per-query features, excluding each query triplet itself (plus any extra
// exclusions the caller derives from it, e.g. the inverse twin).
inline std::vector<DistanceFeature> distance_features(
    const KnowledgeGraph& g, const NeighborIndex& idx, const std::vector<Triplet>& queries,
    std::size_t cap,
    const std::vector<std::vector<Triplet>>* extra_exclusions = nullptr) {
  DistanceOracle oracle(g, idx, cap);
  std::vector<DistanceFeature> out;
  out.reserve(queries.size());
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    std::vector<Triplet> excl{queries[qi]};
    if (extra_exclusions) {
      for (const Triplet& e : (*extra_exclusions)[qi]) excl.push_back(e);
    }
    out.push_back(oracle.features(queries[qi], excl));
  }
  return out;
}

inline std::vector<DistanceFeature> distance_features(const KnowledgeGraph& g,
                                                      const std::vector<Triplet>& queries,
                                                      std::size_t cap) {
  NeighborIndex idx(g);
  return distance_features(g, idx, queries, cap);
}

}  // namespace kgdeq
