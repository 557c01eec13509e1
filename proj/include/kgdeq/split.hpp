#pragma once

// Dataset splitting.
//
// split_dataset carves a triplet list into train/valid/test with exact floor
// quotas for valid and test, under a coverage constraint: a triplet may only
// leave the train part if both its endpoints keep at least one remaining
// train triplet, so every node stays represented in the observed graph.
// Candidates are visited in a seeded shuffled order over repeated passes; if
// a pass removes nothing before the quotas are met, the split fails with the
// blocking nodes named.
//
// topic_split partitions a triplet list by relation groups (each relation
// assigned to exactly one group) and densely reindexes each part, modeling
// fully disjoint test domains with fresh node and relation vocabularies.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "kgdeq/common.hpp"
#include "kgdeq/graph.hpp"
#include "kgdeq/rng.hpp"

namespace kgdeq {

struct SplitResult {
  std::vector<Triplet> train, valid, test;
};

inline SplitResult split_dataset(const std::vector<Triplet>& triplets, double train_ratio,
                                 double valid_ratio, double test_ratio, std::uint64_t seed) {
  require(train_ratio > 0.0, "split_dataset: train ratio must be positive");
  require(valid_ratio >= 0.0 && test_ratio >= 0.0, "split_dataset: ratios must be >= 0");
  require(std::abs(train_ratio + valid_ratio + test_ratio - 1.0) < 1e-9,
          "split_dataset: ratios must sum to 1");
  const std::size_t M = triplets.size();
  require(M >= 1, "split_dataset: no triplets to split");
  const std::size_t n_valid = static_cast<std::size_t>(valid_ratio * static_cast<double>(M));
  const std::size_t n_test = static_cast<std::size_t>(test_ratio * static_cast<double>(M));
  require(n_valid + n_test < M, "split_dataset: nothing would remain in train");

  // Appearance counts in the current train part (self-loops count once).
  std::map<std::size_t, std::size_t> count;
  for (const Triplet& t : triplets) {
    count[t.head] += 1;
    if (t.tail != t.head) count[t.tail] += 1;
  }

  std::vector<std::size_t> order(M);
  for (std::size_t i = 0; i < M; ++i) order[i] = i;
  Rng rng = Rng::keyed({seed, 0x5b117ULL});
  rng.shuffle(order);

  std::vector<int> assign(M, 0);  // 0 = train, 1 = valid, 2 = test
  std::size_t removed = 0;
  const std::size_t quota = n_valid + n_test;
  while (removed < quota) {
    std::size_t removed_this_pass = 0;
    for (std::size_t pos : order) {
      if (removed >= quota) break;
      if (assign[pos] != 0) continue;
      const Triplet& t = triplets[pos];
      const bool ok = (t.head == t.tail) ? count[t.head] >= 2
                                         : (count[t.head] >= 2 && count[t.tail] >= 2);
      if (!ok) continue;
      assign[pos] = (removed < n_valid) ? 1 : 2;
      count[t.head] -= 1;
      if (t.tail != t.head) count[t.tail] -= 1;
      removed += 1;
      removed_this_pass += 1;
    }
    if (removed_this_pass == 0) {
      // Every remaining candidate pins a node whose last appearance it is.
      std::string blockers;
      std::size_t listed = 0;
      for (const auto& [node, c] : count) {
        if (c != 1) continue;
        if (listed) blockers += ", ";
        blockers += std::to_string(node);
        if (++listed == 10) {
          blockers += ", ...";
          break;
        }
      }
      throw RuntimeFailure(
          "split_dataset: cannot reach the requested split sizes without uncovering nodes "
          "(single-appearance nodes: " + blockers + ")");
    }
  }

  SplitResult out;
  for (std::size_t i = 0; i < M; ++i) {
    if (assign[i] == 0) out.train.push_back(triplets[i]);
    else if (assign[i] == 1) out.valid.push_back(triplets[i]);
    else out.test.push_back(triplets[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dense reindexing and topic splits.

struct Reindexed {
  std::vector<Triplet> triplets;          // dense node/relation ids
  std::vector<std::size_t> node_ids;      // dense id -> original id (ascending)
  std::vector<std::size_t> relation_ids;  // dense id -> original id (ascending)
};

inline Reindexed reindex_triplets(const std::vector<Triplet>& triplets) {
  Reindexed out;
  for (const Triplet& t : triplets) {
    out.node_ids.push_back(t.head);
    out.node_ids.push_back(t.tail);
    out.relation_ids.push_back(t.relation);
  }
  auto dedupe = [](std::vector<std::size_t>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  };
  dedupe(out.node_ids);
  dedupe(out.relation_ids);
  std::map<std::size_t, std::size_t> nmap, rmap;
  for (std::size_t i = 0; i < out.node_ids.size(); ++i) nmap[out.node_ids[i]] = i;
  for (std::size_t i = 0; i < out.relation_ids.size(); ++i) rmap[out.relation_ids[i]] = i;
  for (const Triplet& t : triplets)
    out.triplets.push_back({nmap[t.head], rmap[t.relation], nmap[t.tail]});
  return out;
}

// Splits by relation groups. Every relation occurring in `triplets` must be
// assigned to exactly one group; parts are densely reindexed independently.
inline std::vector<Reindexed> topic_split(const std::vector<Triplet>& triplets,
                                          const std::vector<std::vector<std::size_t>>& groups) {
  require(!groups.empty(), "topic_split: need at least one group");
  std::map<std::size_t, std::size_t> owner;
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    require(!groups[gi].empty(), "topic_split: empty relation group");
    for (std::size_t r : groups[gi]) {
      auto [it, inserted] = owner.emplace(r, gi);
      if (!inserted)
        throw ValidationError("topic_split: relation " + std::to_string(r) +
                              " appears in more than one group");
      (void)it;
    }
  }
  for (const Triplet& t : triplets) {
    if (!owner.count(t.relation))
      throw ValidationError("topic_split: relation " + std::to_string(t.relation) +
                            " is not assigned to any group");
  }
  std::vector<std::vector<Triplet>> parts(groups.size());
  for (const Triplet& t : triplets) parts[owner[t.relation]].push_back(t);
  std::vector<Reindexed> out;
  for (const auto& part : parts) out.push_back(reindex_triplets(part));
  return out;
}

}  // namespace kgdeq
