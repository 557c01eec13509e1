#include <algorithm>
#include <cmath>
#include <vector>

#include "catch2/catch_amalgamated.hpp"
#include "kgdeq/eval.hpp"

using namespace kgdeq;

namespace {

// Deterministic pseudo-uniform score keyed by triplet content: i.i.d. uniform
// across distinct triplets, identical for repeated ones.
ScoreFn hash_uniform_scorer(std::uint64_t seed) {
  return [seed](const std::vector<Triplet>& ts) {
    std::vector<double> out;
    out.reserve(ts.size());
    for (const Triplet& t : ts) {
      Rng rng = Rng::keyed({seed, t.head, t.relation, t.tail});
      out.push_back(rng.uniform01());
    }
    return out;
  };
}

ScoreFn constant_scorer(double v) {
  return [v](const std::vector<Triplet>& ts) { return std::vector<double>(ts.size(), v); };
}

std::vector<Triplet> make_queries(std::size_t n, std::size_t num_nodes, std::size_t num_rels,
                                  std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Triplet> qs;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t h = rng.below(num_nodes);
    std::size_t t = rng.below(num_nodes);
    if (t == h) t = (t + 1) % num_nodes;
    qs.push_back({h, rng.below(num_rels), t});
  }
  return qs;
}

}  // namespace

TEST_CASE("tie-aware closed forms for one record", "[eval]") {
  QueryRecord r;
  r.better = 2;
  r.tied = 3;
  r.candidates = 10;
  // Rank uniform on {3..6}: E[1/rank] = (H6 - H2)/4 = 19/80.
  REQUIRE(record_mrr(r) == Catch::Approx(19.0 / 80.0).epsilon(1e-14));
  REQUIRE(record_rank(r) == Catch::Approx(4.5));
  REQUIRE(record_hits(r, 1) == 0.0);
  REQUIRE(record_hits(r, 3) == Catch::Approx(0.25));
  REQUIRE(record_hits(r, 5) == Catch::Approx(0.75));
  REQUIRE(record_hits(r, 10) == 1.0);

  QueryRecord top;  // clean win
  REQUIRE(record_mrr(top) == 1.0);
  REQUIRE(record_rank(top) == 1.0);
  REQUIRE(record_hits(top, 1) == 1.0);

  QueryRecord last;  // clean loss to 5 candidates
  last.better = 5;
  last.candidates = 5;
  REQUIRE(record_mrr(last) == Catch::Approx(1.0 / 6.0));
  REQUIRE(record_hits(last, 5) == 0.0);
  REQUIRE(record_hits(last, 6) == 1.0);
}

TEST_CASE("analytic random baselines at the standard candidate count", "[eval]") {
  REQUIRE(random_baseline_hits(50, 10) == Catch::Approx(0.19607843137254902).epsilon(1e-14));
  REQUIRE(random_baseline_hits(50, 5) == Catch::Approx(0.09803921568627451).epsilon(1e-14));
  REQUIRE(random_baseline_hits(50, 1) == Catch::Approx(0.0196078431372549).epsilon(1e-14));
  REQUIRE(random_baseline_mrr(50) == Catch::Approx(0.08860418002875843).epsilon(1e-14));
  // Three negatives: MRR = H4/4 = 25/48.
  REQUIRE(random_baseline_mrr(3) == Catch::Approx(25.0 / 48.0).epsilon(1e-14));
  REQUIRE(random_baseline_hits(3, 10) == 1.0);  // K exceeds the pool
}

TEST_CASE("a constant scorer reproduces the analytic baseline exactly", "[eval]") {
  const std::size_t N = 60;
  const auto queries = make_queries(40, N, 3, 7);
  EvalConfig cfg;
  cfg.seed = 1;
  const RankingReport rep = evaluate_node_task(constant_scorer(0.5), N, queries, cfg);
  REQUIRE(rep.num_queries == 40);
  REQUIRE(rep.mean_candidates == 50.0);
  // Every record individually hits the analytic value bit-for-bit; the
  // aggregate only rounds in the averaging.
  for (const QueryRecord& r : rep.records) {
    REQUIRE(r.better == 0);
    REQUIRE(r.tied == 50);
    REQUIRE(record_mrr(r) == random_baseline_mrr(50));
    REQUIRE(record_hits(r, 10) == random_baseline_hits(50, 10));
    REQUIRE(record_hits(r, 1) == random_baseline_hits(50, 1));
  }
  REQUIRE(rep.mrr == Catch::Approx(random_baseline_mrr(50)).epsilon(1e-14));
  REQUIRE(rep.hits.at(10) == Catch::Approx(random_baseline_hits(50, 10)).epsilon(1e-14));
  REQUIRE(rep.hits.at(5) == Catch::Approx(random_baseline_hits(50, 5)).epsilon(1e-14));
  REQUIRE(rep.hits.at(1) == Catch::Approx(random_baseline_hits(50, 1)).epsilon(1e-14));
  REQUIRE(rep.mean_rank == Catch::Approx(26.0));  // (1 + 51)/2
}

TEST_CASE("small node pools fall back to every other node", "[eval]") {
  const std::size_t N = 5;
  const auto queries = make_queries(12, N, 2, 3);
  EvalConfig cfg;
  const RankingReport rep = evaluate_node_task(constant_scorer(0.1), N, queries, cfg);
  REQUIRE(rep.mean_candidates == 4.0);
  REQUIRE(rep.mrr == Catch::Approx(random_baseline_mrr(4)));
}

TEST_CASE("node candidates: distinct, sorted, truth-free, filtered", "[eval]") {
  const Triplet q{3, 1, 8};
  const auto cand = node_candidates(q, 100, 20, false, 5, nullptr);
  REQUIRE(cand.size() == 20);
  REQUIRE(std::is_sorted(cand.begin(), cand.end()));
  REQUIRE(std::adjacent_find(cand.begin(), cand.end()) == cand.end());  // distinct
  REQUIRE(std::find(cand.begin(), cand.end(), q.tail) == cand.end());
  // Deterministic in content+seed.
  REQUIRE(node_candidates(q, 100, 20, false, 5, nullptr) == cand);
  REQUIRE(node_candidates(q, 100, 20, false, 6, nullptr) != cand);
  // Head corruption avoids the head instead and uses a different stream.
  const auto ch = node_candidates(q, 100, 20, true, 5, nullptr);
  REQUIRE(std::find(ch.begin(), ch.end(), q.head) == ch.end());
  REQUIRE(ch != cand);
  // Filtering removes candidates that would form known triplets; only the
  // true endpoint is excluded otherwise (the head may reappear as a tail).
  TripletSet known{{3, 1, 0}, {3, 1, 1}};
  const auto cf = node_candidates(q, 5, 50, false, 5, &known);
  REQUIRE(cf == std::vector<std::size_t>{2, 3, 4});
}

TEST_CASE("relation candidates avoid the truth; all-others enumerates", "[eval]") {
  const Triplet q{2, 1, 4};
  const auto cand = relation_candidates(q, 5, 30, 9, nullptr);
  REQUIRE(cand.size() == 30);
  for (std::size_t r : cand) {
    REQUIRE(r != q.relation);
    REQUIRE(r < 5);
  }
  REQUIRE(relation_candidates(q, 5, 30, 9, nullptr) == cand);
  // With replacement: 30 draws from 4 values must repeat.
  std::vector<std::size_t> uniq = cand;
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  REQUIRE(uniq.size() < cand.size());

  REQUIRE(relation_candidates_all(q, 5, nullptr) == std::vector<std::size_t>{0, 2, 3, 4});
  TripletSet known{{2, 3, 4}};
  REQUIRE(relation_candidates_all(q, 5, &known) == std::vector<std::size_t>{0, 2, 4});
  // Single-relation graphs have no corruption (empty candidate list).
  REQUIRE(relation_candidates(Triplet{0, 0, 1}, 1, 10, 1, nullptr).empty());
}

TEST_CASE("relation task with the all-others protocol", "[eval]") {
  // Scorer that prefers the true relation id 1 strictly.
  ScoreFn fn = [](const std::vector<Triplet>& ts) {
    std::vector<double> out;
    for (const Triplet& t : ts) out.push_back(t.relation == 1 ? 1.0 : 0.2);
    return out;
  };
  const std::vector<Triplet> queries{{0, 1, 2}, {3, 1, 4}};
  EvalConfig cfg;
  cfg.relation_all_others = true;
  const RankingReport rep = evaluate_relation_task(fn, 4, queries, cfg);
  REQUIRE(rep.task == "relation");
  REQUIRE(rep.mean_candidates == 3.0);
  REQUIRE(rep.mrr == 1.0);
  REQUIRE(rep.hits.at(1) == 1.0);
  // The constant scorer ties everything: MRR = H4/4 under R-1=3 candidates.
  const RankingReport tie = evaluate_relation_task(constant_scorer(0.3), 4, queries, cfg);
  REQUIRE(tie.mrr == Catch::Approx(25.0 / 48.0));
}

TEST_CASE("aggregates do not depend on query order", "[eval][property]") {
  const std::size_t N = 40;
  auto queries = make_queries(25, N, 3, 11);
  EvalConfig cfg;
  cfg.seed = 4;
  const RankingReport a = evaluate_node_task(hash_uniform_scorer(2), N, queries, cfg);
  auto shuffled = queries;
  Rng rng(77);
  rng.shuffle(shuffled);
  const RankingReport b = evaluate_node_task(hash_uniform_scorer(2), N, shuffled, cfg);
  REQUIRE(a.mrr == Catch::Approx(b.mrr).epsilon(1e-12));
  REQUIRE(a.hits.at(10) == Catch::Approx(b.hits.at(10)).epsilon(1e-12));
  REQUIRE(a.mean_rank == Catch::Approx(b.mean_rank).epsilon(1e-12));
  // Records match by query content.
  for (const QueryRecord& ra : a.records) {
    const auto it = std::find_if(b.records.begin(), b.records.end(),
                                 [&](const QueryRecord& rb) { return rb.query == ra.query; });
    REQUIRE(it != b.records.end());
    REQUIRE(it->better == ra.better);
    REQUIRE(it->tied == ra.tied);
  }
}

TEST_CASE("merging reports equals evaluating the union", "[eval]") {
  const std::size_t N = 30;
  const auto q1 = make_queries(10, N, 2, 21);
  const auto q2 = make_queries(15, N, 2, 22);
  std::vector<Triplet> all = q1;
  all.insert(all.end(), q2.begin(), q2.end());
  EvalConfig cfg;
  const auto fn = hash_uniform_scorer(5);
  const RankingReport ra = evaluate_node_task(fn, N, q1, cfg);
  const RankingReport rb = evaluate_node_task(fn, N, q2, cfg);
  const RankingReport merged = merge_reports({ra, rb}, cfg.hits_at);
  const RankingReport direct = evaluate_node_task(fn, N, all, cfg);
  REQUIRE(merged.num_queries == 25);
  REQUIRE(merged.mrr == Catch::Approx(direct.mrr).epsilon(1e-12));
  REQUIRE(merged.hits.at(5) == Catch::Approx(direct.hits.at(5)).epsilon(1e-12));

  RankingReport other = rb;
  other.task = "relation";
  REQUIRE_THROWS_AS(merge_reports({ra, other}, cfg.hits_at), ValidationError);
}

TEST_CASE("report JSON round trip", "[eval]") {
  const std::size_t N = 20;
  const auto queries = make_queries(8, N, 2, 31);
  EvalConfig cfg;
  const RankingReport rep = evaluate_node_task(hash_uniform_scorer(9), N, queries, cfg);
  const RankingReport back = report_from_json(report_to_json(rep));
  REQUIRE(back.task == rep.task);
  REQUIRE(back.num_queries == rep.num_queries);
  REQUIRE(back.mrr == Catch::Approx(rep.mrr).epsilon(1e-12));
  REQUIRE(back.mean_rank == Catch::Approx(rep.mean_rank).epsilon(1e-12));
  for (std::size_t k : cfg.hits_at)
    REQUIRE(back.hits.at(k) == Catch::Approx(rep.hits.at(k)).epsilon(1e-12));
  REQUIRE(back.records.size() == rep.records.size());
  for (std::size_t i = 0; i < rep.records.size(); ++i) {
    REQUIRE(back.records[i].query == rep.records[i].query);
    REQUIRE(back.records[i].better == rep.records[i].better);
    REQUIRE(back.records[i].tied == rep.records[i].tied);
  }
  nlohmann::json j = report_to_json(rep);
  j.erase("version");
  REQUIRE_THROWS_AS(report_from_json(j), ValidationError);
}

TEST_CASE("a uniform random scorer matches the baseline within noise", "[eval]") {
  const std::size_t N = 200;
  const auto queries = make_queries(800, N, 4, 99);
  EvalConfig cfg;
  cfg.seed = 17;
  const RankingReport rep = evaluate_node_task(hash_uniform_scorer(123), N, queries, cfg);
  // Standard errors at Q=800: Hits@10 ~ 0.014, MRR ~ 0.0055. Allow 4 SE.
  REQUIRE(rep.mrr == Catch::Approx(random_baseline_mrr(50)).margin(0.022));
  REQUIRE(rep.hits.at(10) == Catch::Approx(random_baseline_hits(50, 10)).margin(0.056));
  REQUIRE(rep.hits.at(1) == Catch::Approx(random_baseline_hits(50, 1)).margin(0.020));
}
