#pragma once

// Synthetic two-relation family-tree dataset ("fd2").
//
// Each tree of depth D is a full binary tree laid out heap-style: local label
// 0 is the root and label v >= 1 has parent (v-1)/2. Odd labels connect to
// their parent through the tree's first relation, even labels through its
// second, so the two relations split each sibling pair. Observed triplets are
// (child, rel, parent); queries are the grandparent compositions
// (child, rel, grandparent) using the child's own relation, which makes the
// query set derivable from the observed edges by one fixed second-order rule
// regardless of how nodes and relations are labeled.
//
// Trees are disjoint: tree t's nodes are offset by the sizes of earlier
// trees, and (by default) its relations are {2t, 2t+1}. Generation is fully
// deterministic.

#include <cstdint>
#include <vector>

#include "kgdeq/common.hpp"
#include "kgdeq/graph.hpp"

namespace kgdeq {

inline std::size_t fd2_tree_nodes(std::size_t depth) {
  return (std::size_t(1) << (depth + 1)) - 1;
}

inline std::size_t fd2_tree_observed(std::size_t depth) {
  return (std::size_t(1) << (depth + 1)) - 2;
}

// Nodes at depth >= 2 have a grandparent: sum_{d=2}^{D} 2^d = 2^{D+1} - 4.
inline std::size_t fd2_tree_queries(std::size_t depth) {
  if (depth < 2) return 0;
  return (std::size_t(1) << (depth + 1)) - 4;
}

struct Fd2Output {
  std::vector<Triplet> observed;
  std::vector<Triplet> queries;
  std::size_t num_nodes = 0;
  std::size_t num_relations = 0;
};

inline Fd2Output gen_fd2(const std::vector<std::size_t>& depths,
                         bool relation_offset_per_tree = true) {
  require(!depths.empty(), "gen_fd2: need at least one tree depth");
  for (std::size_t d : depths) {
    require(d >= 1, "gen_fd2: tree depth must be >= 1");
    require(d <= 30, "gen_fd2: tree depth too large");
  }
  Fd2Output out;
  out.num_relations = relation_offset_per_tree ? 2 * depths.size() : 2;
  std::size_t offset = 0;
  for (std::size_t t = 0; t < depths.size(); ++t) {
    const std::size_t size = fd2_tree_nodes(depths[t]);
    const std::size_t rel_base = relation_offset_per_tree ? 2 * t : 0;
    for (std::size_t v = 1; v < size; ++v) {
      const std::size_t rel = rel_base + (v % 2 == 1 ? 0 : 1);
      const std::size_t parent = (v - 1) / 2;
      out.observed.push_back({offset + v, rel, offset + parent});
      if (v >= 3) {
        const std::size_t grandparent = (parent - 1) / 2;
        out.queries.push_back({offset + v, rel, offset + grandparent});
      }
    }
    offset += size;
  }
  out.num_nodes = offset;
  return out;
}

inline KnowledgeGraph fd2_observed_graph(const Fd2Output& data) {
  return build_graph(data.observed, data.num_nodes, data.num_relations);
}

}  // namespace kgdeq
