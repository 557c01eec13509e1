#include <algorithm>
#include <sstream>
#include <vector>

#include "catch2/catch_amalgamated.hpp"
#include "kgdeq/fd2.hpp"
#include "kgdeq/rng.hpp"
#include "kgdeq/uqer.hpp"

using namespace kgdeq;

namespace {

UqerClause mixed_clause() { return fd2_uqer_clauses()[0]; }
UqerClause same_clause() { return fd2_uqer_clauses()[1]; }

std::vector<Triplet> sorted_copy(std::vector<Triplet> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

}  // namespace

TEST_CASE("clause validation catches malformed clauses", "[uqer]") {
  UqerClause c = mixed_clause();
  REQUIRE_NOTHROW(c.validate());
  c.num_node_vars = 1;
  REQUIRE_THROWS_AS(c.validate(), ValidationError);
  c = mixed_clause();
  c.num_rel_vars = 0;
  REQUIRE_THROWS_AS(c.validate(), ValidationError);
  c = mixed_clause();
  c.answer_var = 3;
  REQUIRE_THROWS_AS(c.validate(), ValidationError);
  c = mixed_clause();
  c.atoms.clear();
  REQUIRE_THROWS_AS(c.validate(), ValidationError);
  c = mixed_clause();
  c.atoms[0].head_var = 9;
  REQUIRE_THROWS_AS(c.validate(), ValidationError);
  c = mixed_clause();
  c.atoms[0].rel_var = 5;
  REQUIRE_THROWS_AS(c.validate(), ValidationError);
  // Existential E3 must appear in the body.
  c = mixed_clause();
  c.atoms = {{0, 0, 1}};
  REQUIRE_THROWS_WITH(c.validate(), Catch::Matchers::ContainsSubstring("E3"));
  // Relation variable C2 must appear in the body.
  c = mixed_clause();
  c.atoms = {{0, 0, 2}, {2, 0, 1}};
  REQUIRE_THROWS_WITH(c.validate(), Catch::Matchers::ContainsSubstring("C2"));
}

TEST_CASE("clause parsing handles comments and reports line errors", "[uqer]") {
  {
    std::istringstream in(
        "# grandparent composition\n"
        "M 3\nK 2\nh 2\n"
        "B 1 1 3  # child to parent\n"
        "B 3 2 2\n");
    const UqerClause c = parse_uqer_clause(in, "mem");
    REQUIRE(c.num_node_vars == 3);
    REQUIRE(c.num_rel_vars == 2);
    REQUIRE(c.answer_var == 2);
    REQUIRE(c.atoms.size() == 2);
    REQUIRE(c.atoms[0].head_var == 0);
    REQUIRE(c.atoms[0].rel_var == 0);
    REQUIRE(c.atoms[0].tail_var == 2);
  }
  {
    std::istringstream in("M 3\nK 1\nh 2\nQ 1 1 2\n");
    REQUIRE_THROWS_WITH(parse_uqer_clause(in, "f"),
                        Catch::Matchers::ContainsSubstring("f:4") &&
                            Catch::Matchers::ContainsSubstring("unknown directive"));
  }
  {
    std::istringstream in("M 3\nK 1\nB 1 1 2\nB 2 1 3\n");
    REQUIRE_THROWS_WITH(parse_uqer_clause(in, "f"),
                        Catch::Matchers::ContainsSubstring("must define M, K, and h"));
  }
  {
    std::istringstream in("M 3\nK 1\nh 2\nB 0 1 2\n");
    REQUIRE_THROWS_WITH(parse_uqer_clause(in, "f"),
                        Catch::Matchers::ContainsSubstring("1-based"));
  }
  {
    std::istringstream in("M 3 7\nK 1\nh 2\nB 1 1 2\n");
    REQUIRE_THROWS_WITH(parse_uqer_clause(in, "f"),
                        Catch::Matchers::ContainsSubstring("trailing token"));
  }
  {
    std::istringstream in("M 3\nK x\nh 2\nB 1 1 2\n");
    REQUIRE_THROWS_WITH(parse_uqer_clause(in, "f"),
                        Catch::Matchers::ContainsSubstring("expected an integer after K"));
  }
}

TEST_CASE("two-hop derivation on a three-node path", "[uqer]") {
  // 0 -r0-> 1 -r1-> 2: the mixed rule composes to (0, r0, 2) and nothing else.
  const KnowledgeGraph g = build_graph({{0, 0, 1}, {1, 1, 2}}, 3, 2);
  REQUIRE(uqer_derive(g, mixed_clause()) == std::vector<Triplet>{{0, 0, 2}});
  REQUIRE(uqer_derive(g, same_clause()).empty());
  REQUIRE(uqer_derive_union(g, fd2_uqer_clauses()) == std::vector<Triplet>{{0, 0, 2}});
}

TEST_CASE("answer variable 1 reports the start endpoint", "[uqer]") {
  UqerClause c = mixed_clause();
  c.answer_var = 1;  // derive (E1, C1, E1)
  const KnowledgeGraph g = build_graph({{0, 0, 1}, {1, 1, 2}}, 3, 2);
  REQUIRE(uqer_derive(g, c) == std::vector<Triplet>{{0, 0, 0}});
}

TEST_CASE("E1 and E2 may share a value: cycles close onto themselves", "[uqer]") {
  // Both relation orders fire: 0 -r0-> 1 -r1-> 0 and 1 -r1-> 0 -r0-> 1.
  const KnowledgeGraph g = build_graph({{0, 0, 1}, {1, 1, 0}}, 2, 2);
  REQUIRE(uqer_derive(g, mixed_clause()) ==
          std::vector<Triplet>{{0, 0, 0}, {1, 1, 1}});
}

TEST_CASE("existential variables are injective", "[uqer]") {
  // The only two-hop walk 0 -r0-> 1 -r1-> 1 reuses node 1 as both the middle
  // and the endpoint, which the injectivity side condition forbids.
  const KnowledgeGraph g = build_graph({{0, 0, 1}, {1, 1, 1}}, 2, 2);
  REQUIRE(uqer_derive(g, mixed_clause()).empty());
}

TEST_CASE("relation variables are injective too", "[uqer]") {
  // One relation only: the mixed clause (needs two distinct relations)
  // derives nothing, even though the walk exists.
  const KnowledgeGraph g = build_graph({{0, 0, 1}, {1, 0, 2}}, 3, 1);
  REQUIRE(uqer_derive(g, mixed_clause()).empty());
  REQUIRE(uqer_derive(g, same_clause()) == std::vector<Triplet>{{0, 0, 2}});
}

TEST_CASE("derived triplets may duplicate existing edges", "[uqer]") {
  // Shortcut edge (0,r0,2) already present; derivation still reports it.
  const KnowledgeGraph g = build_graph({{0, 0, 1}, {1, 1, 2}, {0, 0, 2}}, 3, 2);
  const auto d = uqer_derive(g, mixed_clause());
  REQUIRE(std::find(d.begin(), d.end(), Triplet{0, 0, 2}) != d.end());
}

TEST_CASE("the two composition rules recover the generator queries exactly",
          "[uqer][fd2]") {
  for (std::size_t depth : {2, 3, 4}) {
    const Fd2Output data = gen_fd2({depth});
    const KnowledgeGraph g = fd2_observed_graph(data);
    const auto derived = uqer_derive_union(g, fd2_uqer_clauses());
    REQUIRE(derived == sorted_copy(data.queries));
  }
  // Also with two trees sharing a relation pool split.
  const Fd2Output two = gen_fd2({3, 2});
  const auto derived = uqer_derive_union(fd2_observed_graph(two), fd2_uqer_clauses());
  REQUIRE(derived == sorted_copy(two.queries));
}

TEST_CASE("each rule alone recovers its parity half of the tree queries", "[uqer][fd2]") {
  const Fd2Output data = gen_fd2({2});
  const KnowledgeGraph g = fd2_observed_graph(data);
  // Children whose own relation differs from their parent's relation.
  REQUIRE(uqer_derive(g, mixed_clause()) == std::vector<Triplet>{{4, 1, 0}, {5, 0, 0}});
  REQUIRE(uqer_derive(g, same_clause()) == std::vector<Triplet>{{3, 0, 0}, {6, 1, 0}});
}

TEST_CASE("derivation commutes with graph relabeling", "[uqer][property]") {
  Rng rng(404);
  const auto clauses = fd2_uqer_clauses();
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 4 + rng.below(9);  // N <= 12
    const std::size_t R = 2 + rng.below(2);
    std::vector<Triplet> ts;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (rng.bernoulli(0.2)) ts.push_back({i, rng.below(R), j});
    if (ts.empty()) ts.push_back({0, 0, 1 % n});
    const KnowledgeGraph g = build_graph(ts, n, R);
    const PermutationPair p = random_permutation_pair(n, R, rng.next_u64());
    const KnowledgeGraph gp = apply_permutation(g, p);

    for (const UqerClause& clause : clauses) {
      const auto base = uqer_derive(g, clause);
      std::vector<Triplet> mapped;
      for (const Triplet& t : base) mapped.push_back(p.apply(t));
      std::sort(mapped.begin(), mapped.end());
      REQUIRE(uqer_derive(gp, clause) == mapped);
    }
  }
}

TEST_CASE("the work budget aborts runaway derivations", "[uqer]") {
  std::vector<Triplet> ts;
  for (std::size_t i = 0; i < 12; ++i)
    for (std::size_t j = 0; j < 12; ++j) {
      ts.push_back({i, 0, j});
      ts.push_back({i, 1, j});
    }
  const KnowledgeGraph g = build_graph(ts, 12, 2);
  REQUIRE_THROWS_AS(uqer_derive(g, mixed_clause(), /*budget=*/10), RuntimeFailure);
  REQUIRE_NOTHROW(uqer_derive(g, mixed_clause()));  // default budget suffices
}

TEST_CASE("unconstrained middle variables still enumerate correctly", "[uqer]") {
  // Clause with an atom chain E1 -C1-> E3 -C1-> E4 -C1-> E2 (M=4, K=1).
  UqerClause chain;
  chain.num_node_vars = 4;
  chain.num_rel_vars = 1;
  chain.answer_var = 2;
  chain.atoms = {{0, 0, 2}, {2, 0, 3}, {3, 0, 1}};
  const KnowledgeGraph g =
      build_graph({{0, 0, 1}, {1, 0, 2}, {2, 0, 3}, {3, 0, 4}}, 5, 1);
  REQUIRE(uqer_derive(g, chain) ==
          std::vector<Triplet>{{0, 0, 3}, {1, 0, 4}});
}
