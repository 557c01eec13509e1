#pragma once

// On-disk dataset bundles.
//
// A bundle is a directory with a fixed layout:
//   observed.tsv    facts the model may condition on
//   train.tsv       training queries
//   valid.tsv       validation queries
//   test.tsv        test queries
//   nodes.txt       node names, one per line; line number = node id
//   relations.txt   relation names, one per line; line number = relation id
//   meta.json       versioned counts for integrity checking
//
// TSV files reference entities by name; names must all come from the two
// .txt files (unknown names are an error). Writing is canonical: triplet
// lines are sorted, so regenerating the same bundle is byte-identical.

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "kgdeq/common.hpp"
#include "kgdeq/graph.hpp"
#include "kgdeq/io.hpp"

namespace kgdeq {

inline constexpr int kBundleVersion = 1;

struct DatasetBundle {
  std::vector<Triplet> observed, train, valid, test;
  std::vector<std::string> node_names;
  std::vector<std::string> relation_names;

  std::size_t num_nodes() const { return node_names.size(); }
  std::size_t num_relations() const { return relation_names.size(); }

  KnowledgeGraph observed_graph() const {
    return build_graph(observed, num_nodes(), num_relations());
  }

  void validate() const {
    require(!node_names.empty(), "bundle: empty node list");
    require(!relation_names.empty(), "bundle: empty relation list");
    require(!observed.empty(), "bundle: empty observed graph");
    auto check = [&](const std::vector<Triplet>& ts, const std::string& which) {
      for (const Triplet& t : ts) {
        if (t.head >= num_nodes() || t.tail >= num_nodes() || t.relation >= num_relations())
          throw ValidationError("bundle: " + which + " triplet out of range");
      }
    };
    check(observed, "observed");
    check(train, "train");
    check(valid, "valid");
    check(test, "test");
  }
};

namespace detail {

inline std::vector<Triplet> read_bundle_part(const std::filesystem::path& path, NameMap& nodes,
                                             NameMap& relations) {
  std::ifstream in(path);
  if (!in) throw RuntimeFailure("bundle: cannot open '" + path.string() + "'");
  const std::size_t n_before = nodes.size();
  const std::size_t r_before = relations.size();
  std::vector<Triplet> ts = parse_triplets(in, path.string(), nodes, relations);
  if (nodes.size() != n_before)
    throw ValidationError("bundle: '" + path.string() + "' references node '" +
                          nodes.names().back() + "' not listed in nodes.txt");
  if (relations.size() != r_before)
    throw ValidationError("bundle: '" + path.string() + "' references relation '" +
                          relations.names().back() + "' not listed in relations.txt");
  return ts;
}

}  // namespace detail

inline DatasetBundle read_bundle(const std::filesystem::path& dir) {
  require(std::filesystem::is_directory(dir),
          "bundle: '" + dir.string() + "' is not a directory");
  DatasetBundle b;
  b.node_names = read_names(dir / "nodes.txt");
  b.relation_names = read_names(dir / "relations.txt");
  NameMap nodes, relations;
  for (const auto& n : b.node_names) nodes.intern(n);
  for (const auto& r : b.relation_names) relations.intern(r);
  require(nodes.size() == b.node_names.size(), "bundle: duplicate names in nodes.txt");
  require(relations.size() == b.relation_names.size(),
          "bundle: duplicate names in relations.txt");
  b.observed = detail::read_bundle_part(dir / "observed.tsv", nodes, relations);
  b.train = detail::read_bundle_part(dir / "train.tsv", nodes, relations);
  b.valid = detail::read_bundle_part(dir / "valid.tsv", nodes, relations);
  b.test = detail::read_bundle_part(dir / "test.tsv", nodes, relations);
  b.validate();

  const std::filesystem::path meta_path = dir / "meta.json";
  if (std::filesystem::exists(meta_path)) {
    std::ifstream in(meta_path);
    nlohmann::json meta;
    try {
      in >> meta;
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("bundle: meta.json is not valid JSON: " + std::string(e.what()));
    }
    require(meta.contains("version"), "bundle: meta.json missing version");
    require(meta.at("version").get<int>() == kBundleVersion,
            "bundle: unsupported meta.json version");
    auto check_count = [&](const char* key, std::size_t actual) {
      if (meta.contains(key) && meta.at(key).get<std::size_t>() != actual)
        throw ValidationError(std::string("bundle: meta.json ") + key +
                              " does not match the files");
    };
    check_count("num_nodes", b.num_nodes());
    check_count("num_relations", b.num_relations());
    check_count("num_observed", b.observed.size());
    check_count("num_train", b.train.size());
    check_count("num_valid", b.valid.size());
    check_count("num_test", b.test.size());
  }
  return b;
}

inline void write_bundle(const DatasetBundle& b, const std::filesystem::path& dir,
                         bool force = false) {
  b.validate();
  if (std::filesystem::exists(dir)) {
    if (!force && !std::filesystem::is_empty(dir))
      throw ValidationError("bundle: '" + dir.string() +
                            "' already exists and is not empty (use force to overwrite)");
  }
  std::filesystem::create_directories(dir);
  NameMap nodes, relations;
  for (const auto& n : b.node_names) nodes.intern(n);
  for (const auto& r : b.relation_names) relations.intern(r);
  write_names(b.node_names, dir / "nodes.txt");
  write_names(b.relation_names, dir / "relations.txt");
  write_triplets(b.observed, nodes, relations, dir / "observed.tsv");
  write_triplets(b.train, nodes, relations, dir / "train.tsv");
  write_triplets(b.valid, nodes, relations, dir / "valid.tsv");
  write_triplets(b.test, nodes, relations, dir / "test.tsv");
  nlohmann::json meta{{"version", kBundleVersion},
                      {"num_nodes", b.num_nodes()},
                      {"num_relations", b.num_relations()},
                      {"num_observed", b.observed.size()},
                      {"num_train", b.train.size()},
                      {"num_valid", b.valid.size()},
                      {"num_test", b.test.size()}};
  std::ofstream out(dir / "meta.json");
  if (!out) throw RuntimeFailure("bundle: cannot write meta.json");
  out << meta.dump(2) << "\n";
}

// Builds the two fd2-style bundles' name vocabularies: a prefix plus the id.
inline std::vector<std::string> prefixed_names(const std::string& prefix, std::size_t count) {
  std::vector<std::string> names;
  names.reserve(count);
  for (std::size_t i = 0; i < count; ++i) names.push_back(prefix + std::to_string(i));
  return names;
}

}  // namespace kgdeq
