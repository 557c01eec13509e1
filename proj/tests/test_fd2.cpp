#include <vector>

#include "catch2/catch_amalgamated.hpp"
#include "kgdeq/fd2.hpp"

using namespace kgdeq;

TEST_CASE("tree size closed forms", "[fd2]") {
  REQUIRE(fd2_tree_nodes(2) == 7);
  REQUIRE(fd2_tree_observed(2) == 6);
  REQUIRE(fd2_tree_queries(2) == 4);
  REQUIRE(fd2_tree_nodes(3) == 15);
  REQUIRE(fd2_tree_observed(3) == 14);
  REQUIRE(fd2_tree_queries(3) == 12);
  REQUIRE(fd2_tree_nodes(4) == 31);
  REQUIRE(fd2_tree_observed(4) == 30);
  REQUIRE(fd2_tree_queries(4) == 28);
  REQUIRE(fd2_tree_nodes(6) == 127);
  REQUIRE(fd2_tree_observed(6) == 126);
  REQUIRE(fd2_tree_queries(6) == 124);
  REQUIRE(fd2_tree_queries(1) == 0);  // no grandparents below depth 2
}

TEST_CASE("depth-2 tree is exactly the expected edge and query sets", "[fd2]") {
  const Fd2Output out = gen_fd2({2});
  REQUIRE(out.num_nodes == 7);
  REQUIRE(out.num_relations == 2);
  REQUIRE(out.observed == std::vector<Triplet>{{1, 0, 0},
                                               {2, 1, 0},
                                               {3, 0, 1},
                                               {4, 1, 1},
                                               {5, 0, 2},
                                               {6, 1, 2}});
  REQUIRE(out.queries ==
          std::vector<Triplet>{{3, 0, 0}, {4, 1, 0}, {5, 0, 0}, {6, 1, 0}});
}

TEST_CASE("generated counts match the closed forms per depth", "[fd2]") {
  for (std::size_t d : {1, 2, 3, 4, 5, 6, 8}) {
    const Fd2Output out = gen_fd2({d});
    REQUIRE(out.num_nodes == fd2_tree_nodes(d));
    REQUIRE(out.observed.size() == fd2_tree_observed(d));
    REQUIRE(out.queries.size() == fd2_tree_queries(d));
  }
}

TEST_CASE("the benchmark pair: one depth-6 tree, then two", "[fd2]") {
  const Fd2Output train = gen_fd2({6});
  REQUIRE(train.num_nodes == 127);
  REQUIRE(train.num_relations == 2);
  REQUIRE(train.observed.size() == 126);
  REQUIRE(train.queries.size() == 124);

  const Fd2Output test = gen_fd2({6, 6});
  REQUIRE(test.num_nodes == 254);
  REQUIRE(test.num_relations == 4);
  REQUIRE(test.observed.size() == 252);
  REQUIRE(test.queries.size() == 248);
}

TEST_CASE("multiple trees are node- and relation-disjoint", "[fd2]") {
  const Fd2Output out = gen_fd2({2, 2});
  REQUIRE(out.num_nodes == 14);
  REQUIRE(out.num_relations == 4);
  // Second tree starts at node 7 with relations {2,3}.
  REQUIRE(out.observed[6] == Triplet{8, 2, 7});
  REQUIRE(out.observed[7] == Triplet{9, 3, 7});
  for (std::size_t i = 0; i < 6; ++i) {
    REQUIRE(out.observed[i].relation < 2);
    REQUIRE(out.observed[i].head < 7);
  }
  for (std::size_t i = 6; i < 12; ++i) {
    REQUIRE(out.observed[i].relation >= 2);
    REQUIRE(out.observed[i].head >= 7);
  }
  // Queries of the second tree point at its own root.
  REQUIRE(out.queries[4] == Triplet{10, 2, 7});
  REQUIRE(out.queries[7] == Triplet{13, 3, 7});
}

TEST_CASE("shared-relation mode reuses {0,1} for every tree", "[fd2]") {
  const Fd2Output out = gen_fd2({2, 3}, /*relation_offset_per_tree=*/false);
  REQUIRE(out.num_relations == 2);
  for (const Triplet& t : out.observed) REQUIRE(t.relation < 2);
  REQUIRE(out.num_nodes == 7 + 15);
}

TEST_CASE("every query composes two observed parent edges", "[fd2]") {
  const Fd2Output out = gen_fd2({4, 3});
  const KnowledgeGraph g = fd2_observed_graph(out);
  TripletSet observed(out.observed.begin(), out.observed.end());
  for (const Triplet& q : out.queries) {
    // The child's own parent edge with the same relation exists...
    bool found = false;
    for (const Triplet& e : out.observed) {
      if (e.head != q.head || e.relation != q.relation) continue;
      // ...and the parent connects to the grandparent by some relation.
      for (const Triplet& e2 : out.observed) {
        if (e2.head == e.tail && e2.tail == q.tail) found = true;
      }
    }
    REQUIRE(found);
    REQUIRE_FALSE(observed.count(q));  // queries never leak into observed
  }
}

TEST_CASE("generation is deterministic and validates depths", "[fd2]") {
  const Fd2Output a = gen_fd2({3, 2});
  const Fd2Output b = gen_fd2({3, 2});
  REQUIRE(a.observed == b.observed);
  REQUIRE(a.queries == b.queries);
  REQUIRE_THROWS_AS(gen_fd2({}), ValidationError);
  REQUIRE_THROWS_AS(gen_fd2({0}), ValidationError);
  REQUIRE_THROWS_AS(gen_fd2({31}), ValidationError);
}

TEST_CASE("observed graph builds cleanly at benchmark scale", "[fd2]") {
  const Fd2Output out = gen_fd2({6, 6});
  const KnowledgeGraph g = fd2_observed_graph(out);
  REQUIRE(g.num_nodes() == 254);
  REQUIRE(g.num_relations() == 4);
  REQUIRE(g.num_triplets() == 252);
  // Each relation carries half of its tree's edges: 63 per relation.
  for (std::size_t k = 0; k < 4; ++k) REQUIRE(g.relation_view(k).size() == 63);
}
