#pragma once

// Immutable knowledge-graph data model and permutation group actions.
//
// A graph is a set of directed, typed edges ("triplets") (head, relation,
// tail) over dense 0-based node and relation index spaces. All mutating
// operations return new graphs. The triplet list preserves first-appearance
// order (stable dedup), which downstream code relies on: applying a
// permutation maps the list pointwise, so position i of the permuted graph's
// list corresponds to position i of the original's.

#include <algorithm>
#include <cstdint>
#include <string>
#include <unordered_set>
#include <vector>

#include "kgdeq/common.hpp"
#include "kgdeq/rng.hpp"

namespace kgdeq {

struct Triplet {
  std::size_t head = 0;
  std::size_t relation = 0;
  std::size_t tail = 0;

  friend bool operator==(const Triplet& a, const Triplet& b) {
    return a.head == b.head && a.relation == b.relation && a.tail == b.tail;
  }
  friend bool operator<(const Triplet& a, const Triplet& b) {
    if (a.head != b.head) return a.head < b.head;
    if (a.relation != b.relation) return a.relation < b.relation;
    return a.tail < b.tail;
  }
};

struct TripletHash {
  std::size_t operator()(const Triplet& t) const {
    std::uint64_t h = mix_key({static_cast<std::uint64_t>(t.head),
                               static_cast<std::uint64_t>(t.relation),
                               static_cast<std::uint64_t>(t.tail)});
    return static_cast<std::size_t>(h);
  }
};

using TripletSet = std::unordered_set<Triplet, TripletHash>;

// A node permutation and a relation permutation acting jointly on graphs:
// (i, k, j) -> (phi(i), tau(k), phi(j)). The two actions commute.
struct PermutationPair {
  std::vector<std::size_t> node_perm;  // phi: node_perm[i] = image of node i
  std::vector<std::size_t> rel_perm;   // tau: rel_perm[k] = image of relation k

  Triplet apply(const Triplet& t) const {
    return Triplet{node_perm[t.head], rel_perm[t.relation], node_perm[t.tail]};
  }
};

inline bool is_bijection(const std::vector<std::size_t>& p) {
  std::vector<bool> seen(p.size(), false);
  for (std::size_t v : p) {
    if (v >= p.size() || seen[v]) return false;
    seen[v] = true;
  }
  return true;
}

inline std::vector<std::size_t> invert_permutation(const std::vector<std::size_t>& p) {
  std::vector<std::size_t> inv(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) inv[p[i]] = i;
  return inv;
}

// Composition acting "p2 after p1": (p2∘p1)(i) = p2[p1[i]].
inline std::vector<std::size_t> compose_permutations(const std::vector<std::size_t>& p2,
                                                     const std::vector<std::size_t>& p1) {
  require(p1.size() == p2.size(), "compose_permutations: size mismatch");
  std::vector<std::size_t> out(p1.size());
  for (std::size_t i = 0; i < p1.size(); ++i) out[i] = p2[p1[i]];
  return out;
}

class KnowledgeGraph {
public:
  KnowledgeGraph() = default;

  std::size_t num_nodes() const { return num_nodes_; }
  std::size_t num_relations() const { return num_relations_; }
  const std::vector<Triplet>& triplets() const { return triplets_; }
  std::size_t num_triplets() const { return triplets_.size(); }
  bool contains(const Triplet& t) const { return members_.count(t) > 0; }

  // Indices (into triplets()) of the triplets carrying relation k.
  const std::vector<std::size_t>& relation_view(std::size_t k) const {
    require(k < num_relations_, "relation_view: relation index out of range");
    return by_relation_[k];
  }

  // Number of triplets incident to node i (self-loops counted once).
  std::size_t degree(std::size_t i) const { return degree_[i]; }

  friend KnowledgeGraph build_graph(const std::vector<Triplet>& triplets, std::size_t num_nodes,
                                    std::size_t num_relations);

private:
  std::size_t num_nodes_ = 0;
  std::size_t num_relations_ = 0;
  std::vector<Triplet> triplets_;  // first-appearance order, deduplicated
  TripletSet members_;
  std::vector<std::vector<std::size_t>> by_relation_;
  std::vector<std::size_t> degree_;
};

inline KnowledgeGraph build_graph(const std::vector<Triplet>& triplets, std::size_t num_nodes,
                                  std::size_t num_relations) {
  require(num_relations >= 1, "build_graph: num_relations must be >= 1");
  KnowledgeGraph g;
  g.num_nodes_ = num_nodes;
  g.num_relations_ = num_relations;
  g.by_relation_.resize(num_relations);
  g.degree_.assign(num_nodes, 0);
  g.triplets_.reserve(triplets.size());
  for (const Triplet& t : triplets) {
    if (t.head >= num_nodes || t.tail >= num_nodes || t.relation >= num_relations) {
      throw ValidationError("build_graph: triplet (" + std::to_string(t.head) + ", " +
                            std::to_string(t.relation) + ", " + std::to_string(t.tail) +
                            ") out of range for N=" + std::to_string(num_nodes) +
                            ", R=" + std::to_string(num_relations));
    }
    if (g.members_.insert(t).second) {
      g.by_relation_[t.relation].push_back(g.triplets_.size());
      g.triplets_.push_back(t);
      g.degree_[t.head] += 1;
      if (t.tail != t.head) g.degree_[t.tail] += 1;
    }
  }
  return g;
}

inline KnowledgeGraph apply_permutation(const KnowledgeGraph& g, const PermutationPair& p) {
  require(p.node_perm.size() == g.num_nodes(), "apply_permutation: node permutation size mismatch");
  require(p.rel_perm.size() == g.num_relations(),
          "apply_permutation: relation permutation size mismatch");
  require(is_bijection(p.node_perm) && is_bijection(p.rel_perm),
          "apply_permutation: mappings must be bijections");
  std::vector<Triplet> mapped;
  mapped.reserve(g.num_triplets());
  for (const Triplet& t : g.triplets()) mapped.push_back(p.apply(t));
  return build_graph(mapped, g.num_nodes(), g.num_relations());
}

// Adds the inverse (j, k+R, i) of every triplet (i, k, j); doubles the
// relation count. Inverse relations give message passing access to both edge
// directions without changing the original relation indices.
inline KnowledgeGraph augment_inverses(const KnowledgeGraph& g) {
  const std::size_t R = g.num_relations();
  std::vector<Triplet> out;
  out.reserve(2 * g.num_triplets());
  for (const Triplet& t : g.triplets()) out.push_back(t);
  for (const Triplet& t : g.triplets()) out.push_back(Triplet{t.tail, t.relation + R, t.head});
  return build_graph(out, g.num_nodes(), 2 * R);
}

// Extends a relation permutation tau over [0,R) to [0,2R) so that it commutes
// with inverse augmentation: tau'(k) = tau(k), tau'(k+R) = tau(k)+R.
inline std::vector<std::size_t> extend_relation_perm(const std::vector<std::size_t>& tau) {
  const std::size_t R = tau.size();
  std::vector<std::size_t> out(2 * R);
  for (std::size_t k = 0; k < R; ++k) {
    out[k] = tau[k];
    out[k + R] = tau[k] + R;
  }
  return out;
}

inline PermutationPair random_permutation_pair(std::size_t num_nodes, std::size_t num_relations,
                                               std::uint64_t seed) {
  require(num_nodes >= 1 && num_relations >= 1, "random_permutation_pair: sizes must be >= 1");
  Rng rng = Rng::keyed({0x9e70u, seed});
  PermutationPair p;
  p.node_perm = rng.permutation(num_nodes);
  p.rel_perm = rng.permutation(num_relations);
  return p;
}

inline PermutationPair identity_pair(std::size_t num_nodes, std::size_t num_relations) {
  PermutationPair p;
  p.node_perm.resize(num_nodes);
  p.rel_perm.resize(num_relations);
  for (std::size_t i = 0; i < num_nodes; ++i) p.node_perm[i] = i;
  for (std::size_t k = 0; k < num_relations; ++k) p.rel_perm[k] = k;
  return p;
}

// Per-node adjacency views shared by the distance computation and the
// encoder. Built once per graph; all lists are sorted for determinism.
struct NeighborIndex {
  // out[i]: (j, k) for each edge i -k-> j ; in[i]: (j, k) for each j -k-> i.
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> out;
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> in;
  // in_by_rel[k][i]: in-neighbors of i via relation k.
  std::vector<std::vector<std::vector<std::size_t>>> in_by_rel;
  // in_union[i]: (j, multiplicity) for distinct in-neighbors j of i across all
  // relations, with the number of relations connecting j to i.
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> in_union;

  explicit NeighborIndex(const KnowledgeGraph& g) {
    const std::size_t N = g.num_nodes();
    const std::size_t R = g.num_relations();
    out.resize(N);
    in.resize(N);
    in_by_rel.assign(R, std::vector<std::vector<std::size_t>>(N));
    in_union.resize(N);
    for (const Triplet& t : g.triplets()) {
      out[t.head].push_back({t.tail, t.relation});
      in[t.tail].push_back({t.head, t.relation});
      in_by_rel[t.relation][t.tail].push_back(t.head);
    }
    for (std::size_t i = 0; i < N; ++i) {
      std::sort(out[i].begin(), out[i].end());
      std::sort(in[i].begin(), in[i].end());
      // Distinct in-neighbors with relation multiplicity, ascending by node.
      std::vector<std::pair<std::size_t, std::size_t>> uni;
      for (const auto& [j, k] : in[i]) {
        (void)k;
        if (!uni.empty() && uni.back().first == j) {
          uni.back().second += 1;
        } else {
          uni.push_back({j, 1});
        }
      }
      in_union[i] = std::move(uni);
    }
    for (std::size_t k = 0; k < R; ++k)
      for (std::size_t i = 0; i < N; ++i) std::sort(in_by_rel[k][i].begin(), in_by_rel[k][i].end());
  }
};

}  // namespace kgdeq
