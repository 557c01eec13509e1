#include "catch2/catch_amalgamated.hpp"
#include "kgdeq/kgdeq.hpp"

TEST_CASE("umbrella header compiles and basic objects construct", "[smoke]") {
  kgdeq::KnowledgeGraph g = kgdeq::build_graph({{0, 0, 1}, {1, 0, 2}}, 3, 1);
  REQUIRE(g.num_triplets() == 2);
  kgdeq::EncoderConfig cfg;
  cfg.hidden_dim = 4;
  cfg.mlp_hidden_dims = {8};
  cfg.head_hidden_dims = {8};
  auto params = kgdeq::init_encoder(cfg);
  auto scores = kgdeq::score_triplets(params, g, {{0, 0, 2}});
  REQUIRE(scores.size() == 1);
  REQUIRE(scores[0] > 0.0);
  REQUIRE(scores[0] < 1.0);
}
