#pragma once

// Ranking evaluation for link prediction queries.
//
// Two tasks:
//   * node task: corrupt one endpoint of each query (tail by default) with
//     sampled candidate nodes, rank the true triplet among the corruptions;
//   * relation task: corrupt the relation, either by sampling or by ranking
//     against every other relation ("all others" protocol).
//
// Node candidates are drawn WITHOUT replacement from all nodes except the
// true endpoint; relation candidates are drawn WITH replacement from all
// relations except the true one. Candidate draws are keyed by the query
// content (plus the seed), so results do not depend on query order.
//
// Ties are scored in expectation over a uniform random tie-break: with b
// candidates strictly better than the positive and t tied with it, the
// positive's rank is uniform on {b+1, ..., b+t+1}, giving
//   E[1/rank]      = (H_{b+t+1} - H_b) / (t+1)
//   P[rank <= K]   = clamp(K - b, 0, t+1) / (t+1)
// A constant scorer therefore reproduces the analytic random baseline
// exactly: Hits@K = min(K, n+1)/(n+1), MRR = H_{n+1}/(n+1).

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "kgdeq/common.hpp"
#include "kgdeq/graph.hpp"
#include "kgdeq/rng.hpp"

namespace kgdeq {

using ScoreFn = std::function<std::vector<double>(const std::vector<Triplet>&)>;

struct EvalConfig {
  std::size_t num_node_negatives = 50;
  std::size_t num_relation_negatives = 50;
  bool corrupt_head = false;         // node task: corrupt tail unless set
  bool filtered = false;             // drop candidates that form known triplets
  bool relation_all_others = false;  // relation task: rank against all others
  std::vector<std::size_t> hits_at = {1, 2, 5, 10};
  std::uint64_t seed = 0;
};

// Analytic performance of a uniform random scorer against n distinct
// negatives (all scores i.i.d. continuous, so no ties among them).
inline double random_baseline_hits(std::size_t num_negatives, std::size_t k) {
  const double n1 = static_cast<double>(num_negatives + 1);
  return std::min<double>(static_cast<double>(k), n1) / n1;
}

inline double random_baseline_mrr(std::size_t num_negatives) {
  const double n1 = static_cast<double>(num_negatives + 1);
  return harmonic(static_cast<std::int64_t>(num_negatives + 1)) / n1;
}

// Per-query outcome, sufficient to recompute every aggregate.
struct QueryRecord {
  Triplet query;
  std::size_t better = 0;      // candidates scoring strictly above the query
  std::size_t tied = 0;        // candidates scoring exactly the query's score
  std::size_t candidates = 0;  // effective number of candidates
};

inline double record_mrr(const QueryRecord& r) {
  return (harmonic(static_cast<std::int64_t>(r.better + r.tied + 1)) -
          harmonic(static_cast<std::int64_t>(r.better))) /
         static_cast<double>(r.tied + 1);
}

inline double record_hits(const QueryRecord& r, std::size_t k) {
  const double span = std::clamp(static_cast<double>(k) - static_cast<double>(r.better), 0.0,
                                 static_cast<double>(r.tied + 1));
  return span / static_cast<double>(r.tied + 1);
}

// Expected rank of the query under uniform tie-breaking.
inline double record_rank(const QueryRecord& r) {
  return static_cast<double>(r.better) + 1.0 + static_cast<double>(r.tied) / 2.0;
}

struct RankingReport {
  std::string task;  // "node" or "relation"
  std::size_t num_queries = 0;
  double mrr = 0.0;
  double mean_rank = 0.0;
  std::map<std::size_t, double> hits;    // K -> Hits@K
  double mean_candidates = 0.0;
  std::vector<QueryRecord> records;
};

inline RankingReport aggregate_records(const std::string& task,
                                       const std::vector<QueryRecord>& records,
                                       const std::vector<std::size_t>& hits_at) {
  RankingReport rep;
  rep.task = task;
  rep.records = records;
  rep.num_queries = records.size();
  for (std::size_t k : hits_at) rep.hits[k] = 0.0;
  if (records.empty()) return rep;
  for (const QueryRecord& r : records) {
    rep.mrr += record_mrr(r);
    rep.mean_rank += record_rank(r);
    rep.mean_candidates += static_cast<double>(r.candidates);
    for (std::size_t k : hits_at) rep.hits[k] += record_hits(r, k);
  }
  const double n = static_cast<double>(records.size());
  rep.mrr /= n;
  rep.mean_rank /= n;
  rep.mean_candidates /= n;
  for (auto& [k, v] : rep.hits) v /= n;
  return rep;
}

// Recomputes aggregates over the union of several reports' records.
inline RankingReport merge_reports(const std::vector<RankingReport>& reports,
                                   const std::vector<std::size_t>& hits_at) {
  require(!reports.empty(), "merge_reports: need at least one report");
  std::vector<QueryRecord> all;
  for (const RankingReport& r : reports) {
    require(r.task == reports.front().task, "merge_reports: mixed task kinds");
    all.insert(all.end(), r.records.begin(), r.records.end());
  }
  return aggregate_records(reports.front().task, all, hits_at);
}

namespace detail {

inline QueryRecord make_record(const Triplet& q, double pos_score,
                               const std::vector<double>& cand_scores) {
  QueryRecord rec;
  rec.query = q;
  rec.candidates = cand_scores.size();
  for (double s : cand_scores) {
    if (s > pos_score) {
      rec.better += 1;
    } else if (s == pos_score) {
      rec.tied += 1;
    }
  }
  return rec;
}

}  // namespace detail

// Candidate nodes for one query: up to `n` draws without replacement from
// [0, N) minus the true endpoint (minus filtered candidates). If the pool is
// smaller than n, the whole pool is used.
inline std::vector<std::size_t> node_candidates(const Triplet& q, std::size_t num_nodes,
                                                std::size_t n, bool corrupt_head,
                                                std::uint64_t seed, const TripletSet* filter) {
  std::vector<std::size_t> pool;
  pool.reserve(num_nodes);
  const std::size_t truth = corrupt_head ? q.head : q.tail;
  for (std::size_t c = 0; c < num_nodes; ++c) {
    if (c == truth) continue;
    if (filter) {
      const Triplet cand = corrupt_head ? Triplet{c, q.relation, q.tail}
                                        : Triplet{q.head, q.relation, c};
      if (filter->count(cand)) continue;
    }
    pool.push_back(c);
  }
  if (pool.size() <= n) return pool;
  Rng rng = Rng::keyed({seed, 0x0e7a1ULL, q.head, q.relation, q.tail,
                        corrupt_head ? 0x48eadULL : 0x7a11ULL});
  rng.shuffle(pool);
  pool.resize(n);
  std::sort(pool.begin(), pool.end());
  return pool;
}

// Candidate relations for one query: `n` draws with replacement from the
// allowed set (all relations except the true one, minus filtered ones).
inline std::vector<std::size_t> relation_candidates(const Triplet& q, std::size_t num_relations,
                                                    std::size_t n, std::uint64_t seed,
                                                    const TripletSet* filter) {
  std::vector<std::size_t> allowed;
  for (std::size_t r = 0; r < num_relations; ++r) {
    if (r == q.relation) continue;
    if (filter && filter->count({q.head, r, q.tail})) continue;
    allowed.push_back(r);
  }
  if (allowed.empty()) return {};
  Rng rng = Rng::keyed({seed, 0x0e7a1ULL, q.head, q.relation, q.tail, 0x3e1ULL});
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = allowed[rng.below(allowed.size())];
  return out;
}

// All other relations, each once (the sampling-free protocol).
inline std::vector<std::size_t> relation_candidates_all(const Triplet& q,
                                                        std::size_t num_relations,
                                                        const TripletSet* filter) {
  std::vector<std::size_t> allowed;
  for (std::size_t r = 0; r < num_relations; ++r) {
    if (r == q.relation) continue;
    if (filter && filter->count({q.head, r, q.tail})) continue;
    allowed.push_back(r);
  }
  return allowed;
}

namespace detail {

// Batches every query's positive + candidates into one scorer call, then
// splits the scores back into per-query records.
inline RankingReport rank_groups(const std::string& task, const ScoreFn& score_fn,
                                 const std::vector<Triplet>& queries,
                                 const std::vector<std::vector<Triplet>>& candidates,
                                 const std::vector<std::size_t>& hits_at) {
  std::vector<Triplet> flat;
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    flat.push_back(queries[qi]);
    flat.insert(flat.end(), candidates[qi].begin(), candidates[qi].end());
  }
  const std::vector<double> scores = score_fn(flat);
  require(scores.size() == flat.size(), "rank_groups: scorer returned wrong number of scores");
  std::vector<QueryRecord> records;
  std::size_t at = 0;
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    const double pos = scores[at++];
    std::vector<double> cand(candidates[qi].size());
    for (std::size_t c = 0; c < cand.size(); ++c) cand[c] = scores[at++];
    records.push_back(make_record(queries[qi], pos, cand));
  }
  return aggregate_records(task, records, hits_at);
}

}  // namespace detail

inline RankingReport evaluate_node_task(const ScoreFn& score_fn, std::size_t num_nodes,
                                        const std::vector<Triplet>& queries,
                                        const EvalConfig& cfg,
                                        const TripletSet* filter = nullptr) {
  std::vector<std::vector<Triplet>> cands(queries.size());
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    const Triplet& q = queries[qi];
    const auto nodes = node_candidates(q, num_nodes, cfg.num_node_negatives, cfg.corrupt_head,
                                       cfg.seed, cfg.filtered ? filter : nullptr);
    for (std::size_t c : nodes)
      cands[qi].push_back(cfg.corrupt_head ? Triplet{c, q.relation, q.tail}
                                           : Triplet{q.head, q.relation, c});
  }
  return detail::rank_groups("node", score_fn, queries, cands, cfg.hits_at);
}

inline RankingReport evaluate_relation_task(const ScoreFn& score_fn, std::size_t num_relations,
                                            const std::vector<Triplet>& queries,
                                            const EvalConfig& cfg,
                                            const TripletSet* filter = nullptr) {
  std::vector<std::vector<Triplet>> cands(queries.size());
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    const Triplet& q = queries[qi];
    const std::vector<std::size_t> rels =
        cfg.relation_all_others
            ? relation_candidates_all(q, num_relations, cfg.filtered ? filter : nullptr)
            : relation_candidates(q, num_relations, cfg.num_relation_negatives, cfg.seed,
                                  cfg.filtered ? filter : nullptr);
    for (std::size_t r : rels) cands[qi].push_back({q.head, r, q.tail});
  }
  return detail::rank_groups("relation", score_fn, queries, cands, cfg.hits_at);
}

// ---------------------------------------------------------------------------
// JSON serialization (versioned; records carry enough to re-aggregate).

inline nlohmann::json report_to_json(const RankingReport& rep) {
  nlohmann::json j;
  j["version"] = 1;
  j["task"] = rep.task;
  j["num_queries"] = rep.num_queries;
  j["mrr"] = rep.mrr;
  j["mean_rank"] = rep.mean_rank;
  j["mean_candidates"] = rep.mean_candidates;
  nlohmann::json hits = nlohmann::json::object();
  for (const auto& [k, v] : rep.hits) hits[std::to_string(k)] = v;
  j["hits"] = hits;
  nlohmann::json recs = nlohmann::json::array();
  for (const QueryRecord& r : rep.records) {
    recs.push_back({{"head", r.query.head},
                    {"relation", r.query.relation},
                    {"tail", r.query.tail},
                    {"better", r.better},
                    {"tied", r.tied},
                    {"candidates", r.candidates}});
  }
  j["records"] = recs;
  return j;
}

inline RankingReport report_from_json(const nlohmann::json& j) {
  require(j.contains("version"), "report: missing version field");
  require(j.at("version").get<int>() == 1, "report: unsupported version");
  std::vector<QueryRecord> records;
  for (const auto& r : j.at("records")) {
    QueryRecord rec;
    rec.query = {r.at("head").get<std::size_t>(), r.at("relation").get<std::size_t>(),
                 r.at("tail").get<std::size_t>()};
    rec.better = r.at("better").get<std::size_t>();
    rec.tied = r.at("tied").get<std::size_t>();
    rec.candidates = r.at("candidates").get<std::size_t>();
    records.push_back(rec);
  }
  std::vector<std::size_t> hits_at;
  for (const auto& [k, v] : j.at("hits").items()) {
    (void)v;
    hits_at.push_back(static_cast<std::size_t>(std::stoull(k)));
  }
  std::sort(hits_at.begin(), hits_at.end());
  return aggregate_records(j.at("task").get<std::string>(), records, hits_at);
}

}  // namespace kgdeq
