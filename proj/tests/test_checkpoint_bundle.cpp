// Checkpoint and dataset-bundle persistence tests: exact round trips,
// canonical (byte-identical) rewrites, and strict validation of anything
// that does not match the on-disk contract.

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "kgdeq/bundle.hpp"
#include "kgdeq/checkpoint.hpp"
#include "kgdeq/common.hpp"
#include "kgdeq/encoder.hpp"
#include "kgdeq/graph.hpp"
#include "kgdeq/rng.hpp"

using namespace kgdeq;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("kgdeq_test_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

EncoderConfig small_config() {
  EncoderConfig cfg;
  cfg.hidden_dim = 6;
  cfg.mlp_hidden_dims = {5};
  cfg.head_hidden_dims = {4};
  cfg.seed = 31;
  return cfg;
}

// Parameters with irregular values so a round trip cannot pass by accident.
EncoderParams<double> scrambled_params() {
  EncoderParams<double> p = init_encoder<double>(small_config());
  Rng rng = Rng::keyed({0x5c4aULL});
  for_each_param(p, [&](const std::string&, Matrix<double>& m, bool) {
    for (auto& v : m.data()) v = rng.uniform(-3.0, 3.0) + 1e-13 * rng.uniform01();
  });
  return p;
}

bool params_identical(const EncoderParams<double>& a, const EncoderParams<double>& b) {
  std::vector<std::pair<std::string, std::vector<double>>> fa, fb;
  for_each_param(a, [&](const std::string& n, const Matrix<double>& m, bool) {
    fa.emplace_back(n, m.data());
  });
  for_each_param(b, [&](const std::string& n, const Matrix<double>& m, bool) {
    fb.emplace_back(n, m.data());
  });
  return fa == fb;
}

DatasetBundle sample_bundle() {
  DatasetBundle b;
  b.node_names = {"ada", "bel", "cam", "dot", "eve"};
  b.relation_names = {"likes", "cites"};
  b.observed = {{0, 0, 1}, {1, 1, 2}, {2, 0, 3}, {3, 1, 4}, {4, 0, 0}};
  b.train = {{0, 1, 2}, {1, 0, 3}};
  b.valid = {{2, 1, 4}};
  b.test = {{3, 0, 0}, {4, 1, 1}};
  return b;
}

}  // namespace

// ---------------------------------------------------------------------------
// Checkpoints.

TEST_CASE("checkpoint round trip restores every parameter bit for bit") {
  const EncoderParams<double> p = scrambled_params();
  TempDir dir("ckpt_roundtrip");
  const std::string path = (dir.path / "model.json").string();
  save_checkpoint(p, path, /*epoch=*/17);
  const EncoderParams<double> q = load_checkpoint<double>(path);
  REQUIRE(params_identical(p, q));
  REQUIRE(q.config.hidden_dim == p.config.hidden_dim);
  REQUIRE(q.config.num_layers == p.config.num_layers);
  REQUIRE(q.config.mlp_hidden_dims == p.config.mlp_hidden_dims);
  REQUIRE(q.config.head_hidden_dims == p.config.head_hidden_dims);
  REQUIRE(q.config.seed == p.config.seed);

  const nlohmann::json j = checkpoint_to_json(p, 17);
  REQUIRE(j.at("epoch").get<std::size_t>() == 17);
  REQUIRE(j.at("version").get<int>() == kCheckpointVersion);
  REQUIRE(j.at("kind").get<std::string>() == "encoder");
}

TEST_CASE("checkpoint loading rejects every corruption of the layout") {
  const EncoderParams<double> p = scrambled_params();
  const nlohmann::json good = checkpoint_to_json(p, 3);

  SECTION("wrong version") {
    nlohmann::json j = good;
    j["version"] = kCheckpointVersion + 1;
    REQUIRE_THROWS_AS(checkpoint_from_json<double>(j), ValidationError);
  }
  SECTION("wrong kind") {
    nlohmann::json j = good;
    j["kind"] = "decoder";
    REQUIRE_THROWS_AS(checkpoint_from_json<double>(j), ValidationError);
  }
  SECTION("missing parameter") {
    nlohmann::json j = good;
    j["params"].erase(j["params"].begin().key());
    REQUIRE_THROWS_WITH(checkpoint_from_json<double>(j),
                        Catch::Matchers::ContainsSubstring("missing parameter"));
  }
  SECTION("unexpected extra parameter") {
    nlohmann::json j = good;
    j["params"]["stray"] = {{"shape", {1, 1}}, {"data", {0.0}}};
    REQUIRE_THROWS_WITH(checkpoint_from_json<double>(j),
                        Catch::Matchers::ContainsSubstring("extra parameters"));
  }
  SECTION("shape mismatch") {
    nlohmann::json j = good;
    const std::string first = j["params"].begin().key();
    j["params"][first]["shape"] = {1, 2};
    REQUIRE_THROWS_WITH(checkpoint_from_json<double>(j),
                        Catch::Matchers::ContainsSubstring("shape mismatch"));
  }
  SECTION("data length mismatch") {
    nlohmann::json j = good;
    const std::string first = j["params"].begin().key();
    j["params"][first]["data"] = {1.0};
    REQUIRE_THROWS_WITH(checkpoint_from_json<double>(j),
                        Catch::Matchers::ContainsSubstring("data length"));
  }
}

TEST_CASE("checkpoint file errors map to the right exception kinds") {
  TempDir dir("ckpt_files");
  REQUIRE_THROWS_AS(load_checkpoint<double>((dir.path / "absent.json").string()),
                    RuntimeFailure);
  const std::string garbled = (dir.path / "garbled.json").string();
  std::ofstream(garbled) << "not json at all {";
  REQUIRE_THROWS_AS(load_checkpoint<double>(garbled), ValidationError);
}

// ---------------------------------------------------------------------------
// Bundles.

TEST_CASE("bundle round trip preserves names and triplet sets") {
  const DatasetBundle b = sample_bundle();
  TempDir dir("bundle_roundtrip");
  write_bundle(b, dir.path / "data");
  const DatasetBundle r = read_bundle(dir.path / "data");

  REQUIRE(r.node_names == b.node_names);
  REQUIRE(r.relation_names == b.relation_names);
  auto sorted = [](std::vector<Triplet> ts) {
    std::sort(ts.begin(), ts.end(), [](const Triplet& x, const Triplet& y) {
      return std::tie(x.head, x.relation, x.tail) < std::tie(y.head, y.relation, y.tail);
    });
    return ts;
  };
  REQUIRE(sorted(r.observed) == sorted(b.observed));
  REQUIRE(sorted(r.train) == sorted(b.train));
  REQUIRE(sorted(r.valid) == sorted(b.valid));
  REQUIRE(sorted(r.test) == sorted(b.test));
  REQUIRE(r.num_nodes() == 5);
  REQUIRE(r.num_relations() == 2);
  REQUIRE(r.observed_graph().num_nodes() == 5);
}

TEST_CASE("bundle writes are canonical: write, read, rewrite is byte-identical") {
  const DatasetBundle b = sample_bundle();
  TempDir dir("bundle_canonical");
  write_bundle(b, dir.path / "first");
  const DatasetBundle r = read_bundle(dir.path / "first");
  write_bundle(r, dir.path / "second");
  for (const char* name : {"observed.tsv", "train.tsv", "valid.tsv", "test.tsv", "nodes.txt",
                           "relations.txt", "meta.json"}) {
    INFO(name);
    REQUIRE(slurp(dir.path / "first" / name) == slurp(dir.path / "second" / name));
  }
}

TEST_CASE("bundle refuses a non-empty target unless forced") {
  const DatasetBundle b = sample_bundle();
  TempDir dir("bundle_force");
  write_bundle(b, dir.path / "data");
  REQUIRE_THROWS_AS(write_bundle(b, dir.path / "data"), ValidationError);
  REQUIRE_NOTHROW(write_bundle(b, dir.path / "data", /*force=*/true));
  REQUIRE_NOTHROW(read_bundle(dir.path / "data"));
}

TEST_CASE("bundle reading cross-checks meta.json counts") {
  const DatasetBundle b = sample_bundle();
  TempDir dir("bundle_meta");
  write_bundle(b, dir.path / "data");

  SECTION("count mismatch") {
    nlohmann::json meta;
    std::ifstream(dir.path / "data" / "meta.json") >> meta;
    meta["num_observed"] = 99;
    std::ofstream(dir.path / "data" / "meta.json") << meta.dump(2) << "\n";
    REQUIRE_THROWS_WITH(read_bundle(dir.path / "data"),
                        Catch::Matchers::ContainsSubstring("num_observed"));
  }
  SECTION("unsupported version") {
    nlohmann::json meta{{"version", kBundleVersion + 1}};
    std::ofstream(dir.path / "data" / "meta.json") << meta.dump(2) << "\n";
    REQUIRE_THROWS_AS(read_bundle(dir.path / "data"), ValidationError);
  }
  SECTION("missing meta.json is tolerated") {
    fs::remove(dir.path / "data" / "meta.json");
    REQUIRE_NOTHROW(read_bundle(dir.path / "data"));
  }
}

TEST_CASE("bundle reading rejects names missing from the vocabulary files") {
  const DatasetBundle b = sample_bundle();
  TempDir dir("bundle_names");
  write_bundle(b, dir.path / "data");

  SECTION("unknown node name in a tsv") {
    std::ofstream(dir.path / "data" / "train.tsv", std::ios::app) << "zul\tlikes\tada\n";
    REQUIRE_THROWS_WITH(read_bundle(dir.path / "data"),
                        Catch::Matchers::ContainsSubstring("zul"));
  }
  SECTION("unknown relation name in a tsv") {
    std::ofstream(dir.path / "data" / "test.tsv", std::ios::app) << "ada\towns\tbel\n";
    REQUIRE_THROWS_WITH(read_bundle(dir.path / "data"),
                        Catch::Matchers::ContainsSubstring("owns"));
  }
  SECTION("duplicate vocabulary entries") {
    std::ofstream(dir.path / "data" / "nodes.txt", std::ios::app) << "ada\n";
    REQUIRE_THROWS_WITH(read_bundle(dir.path / "data"),
                        Catch::Matchers::ContainsSubstring("duplicate"));
  }
}

TEST_CASE("bundle validation rejects inconsistent contents") {
  DatasetBundle b = sample_bundle();
  b.test.push_back({7, 0, 0});  // node id out of range
  REQUIRE_THROWS_AS(b.validate(), ValidationError);

  DatasetBundle empty_observed = sample_bundle();
  empty_observed.observed.clear();
  REQUIRE_THROWS_AS(empty_observed.validate(), ValidationError);

  DatasetBundle no_names = sample_bundle();
  no_names.node_names.clear();
  REQUIRE_THROWS_AS(no_names.validate(), ValidationError);
}

TEST_CASE("prefixed name vocabularies enumerate ids in order") {
  REQUIRE(prefixed_names("trn-e", 3) ==
          std::vector<std::string>{"trn-e0", "trn-e1", "trn-e2"});
  REQUIRE(prefixed_names("tst-r", 1) == std::vector<std::string>{"tst-r0"});
  REQUIRE(prefixed_names("x", 0).empty());
}
