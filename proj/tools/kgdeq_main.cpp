// Command-line front end for the library: dataset generation, subgraph
// sampling, coverage-constrained splitting, relation-group splitting,
// training, ranking evaluation, verification checks, and clause-based query
// derivation.
//
// Conventions shared by every command:
//   - Long-form flags only. A JSON config file may supply any flag value
//     (keys are the flag names without the leading dashes); values given on
//     the command line take precedence over the file.
//   - One run directory per invocation (--out) holding config.json (the
//     fully resolved configuration), run.log, and the command's outputs.
//     A non-empty --out is refused unless --force is given.
//   - --dry-run prints the resolved configuration and touches nothing.
//   - --workers controls internal data parallelism where available; its
//     default comes from the KGDEQ_WORKERS environment variable.
//   - Exit codes: 0 success, 1 validation or usage error, 2 audit failure,
//     3 runtime failure.
//   - Output files never embed wall-clock data, so a rerun with the same
//     flags reproduces every artifact byte for byte.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "kgdeq/kgdeq.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace kgdeq;

namespace {

// ---------------------------------------------------------------------------
// Flag/config plumbing.

// Binds option values so a JSON config file can fill in anything not given
// on the command line, and so the resolved configuration can be echoed.
class Settings {
public:
  template <class T>
  void bind(const std::string& key, CLI::Option* opt, T* value) {
    entries_.push_back(Entry{
        key, opt, [value](const json& j) { *value = j.get<T>(); },
        [value]() { return json(*value); }});
  }

  void apply_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw RuntimeFailure("config: cannot open '" + path + "'");
    json cfg;
    try {
      in >> cfg;
    } catch (const json::exception& e) {
      throw ValidationError("config: '" + path + "' is not valid JSON: " + e.what());
    }
    if (!cfg.is_object())
      throw ValidationError("config: '" + path + "' must contain a JSON object");
    for (const auto& [key, value] : cfg.items()) {
      Entry* entry = nullptr;
      for (Entry& e : entries_)
        if (e.key == key) entry = &e;
      if (entry == nullptr)
        throw ValidationError("config: '" + path + "' has unknown key '" + key + "'");
      if (entry->opt != nullptr && entry->opt->count() > 0) continue;  // flag wins
      try {
        entry->set(value);
      } catch (const json::exception& e) {
        throw ValidationError("config: '" + path + "' has a bad value for '" + key +
                              "': " + e.what());
      }
    }
  }

  json resolved() const {
    json out = json::object();
    for (const Entry& e : entries_) out[e.key] = e.get();
    return out;
  }

private:
  struct Entry {
    std::string key;
    CLI::Option* opt;
    std::function<void(const json&)> set;
    std::function<json()> get;
  };
  std::vector<Entry> entries_;
};

std::size_t default_workers() {
  const char* env = std::getenv("KGDEQ_WORKERS");
  if (env == nullptr || *env == '\0') return 1;
  std::size_t value = 0;
  for (const char* p = env; *p; ++p) {
    if (!std::isdigit(static_cast<unsigned char>(*p)))
      throw ValidationError(std::string("KGDEQ_WORKERS must be a positive integer, got '") +
                            env + "'");
    value = value * 10 + static_cast<std::size_t>(*p - '0');
  }
  if (value == 0) throw ValidationError("KGDEQ_WORKERS must be >= 1");
  return value;
}

// Flags shared by every command.
struct Common {
  std::string config_path;
  std::string out_dir;
  bool force = false;
  bool dry_run = false;
  std::size_t workers = 1;
};

void add_common_flags(CLI::App* sub, Common& c, Settings& s, const std::string& out_help) {
  sub->add_option("--config", c.config_path,
                  "JSON config file; command-line flags take precedence");
  Settings* settings = &s;
  s.bind("out", sub->add_option("--out", c.out_dir, out_help), &c.out_dir);
  s.bind("force",
         sub->add_flag("--force", c.force, "Allow writing into a non-empty output directory"),
         &c.force);
  sub->add_flag("--dry-run", c.dry_run, "Print the resolved configuration and exit");
  c.workers = default_workers();
  s.bind("workers",
         sub->add_option("--workers", c.workers,
                         "Worker threads for data-parallel stages (default: KGDEQ_WORKERS or 1)")
             ->check(CLI::PositiveNumber),
         &c.workers);
  (void)settings;
}

// Resolves the config file against the flags and handles --dry-run.
// Returns false when the command should stop (dry run).
bool resolve(const Common& c, Settings& s, const std::string& command, json& out_resolved) {
  if (!c.config_path.empty()) s.apply_file(c.config_path);
  out_resolved = s.resolved();
  out_resolved["command"] = command;
  if (c.dry_run) {
    std::cout << out_resolved.dump(2) << "\n";
    return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Run directories.

class RunDir {
public:
  RunDir(const std::string& dir, bool force, const json& resolved) {
    require(!dir.empty(), "--out is required (a run directory for this invocation)");
    dir_ = fs::path(dir);
    if (fs::exists(dir_)) {
      if (!fs::is_directory(dir_))
        throw ValidationError("output path '" + dir + "' exists and is not a directory");
      if (!fs::is_empty(dir_) && !force)
        throw ValidationError("output directory '" + dir +
                              "' is not empty (pass --force to reuse it)");
    }
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw RuntimeFailure("cannot create output directory '" + dir + "'");
    std::ofstream cfg(dir_ / "config.json");
    if (!cfg) throw RuntimeFailure("cannot write config.json in '" + dir + "'");
    cfg << resolved.dump(2) << "\n";
    log_.open(dir_ / "run.log");
    if (!log_) throw RuntimeFailure("cannot write run.log in '" + dir + "'");
  }

  const fs::path& path() const { return dir_; }

  // Logged lines go to stdout and run.log. Keep them free of wall-clock
  // data so reruns stay byte-identical.
  void log(const std::string& line) {
    std::cout << line << "\n";
    log_ << line << "\n";
    log_.flush();
  }

  void write_json(const std::string& name, const json& j) {
    std::ofstream out(dir_ / name);
    if (!out) throw RuntimeFailure("cannot write " + name);
    out << j.dump(2) << "\n";
  }

private:
  fs::path dir_;
  std::ofstream log_;
};

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(6);
  ss << v;
  return ss.str();
}

// ---------------------------------------------------------------------------
// Bundle helpers.

// An optional "family" tag in meta.json records which generator produced a
// bundle; training and evaluation defaults key off it.
void tag_bundle_family(const fs::path& dir, const std::string& family) {
  json meta;
  std::ifstream in(dir / "meta.json");
  in >> meta;
  meta["family"] = family;
  std::ofstream out(dir / "meta.json");
  out << meta.dump(2) << "\n";
}

std::string bundle_family(const fs::path& dir) {
  const fs::path meta_path = dir / "meta.json";
  if (!fs::exists(meta_path)) return "generic";
  json meta;
  std::ifstream in(meta_path);
  try {
    in >> meta;
  } catch (const json::exception&) {
    return "generic";
  }
  if (meta.contains("family") && meta.at("family").is_string())
    return meta.at("family").get<std::string>();
  return "generic";
}

// ---------------------------------------------------------------------------
// Scorers.

using SharedParams = std::shared_ptr<EncoderParams<double>>;

SharedParams load_params(const std::string& path, std::size_t* start_epoch = nullptr) {
  std::ifstream in(path);
  if (!in) throw RuntimeFailure("cannot open checkpoint '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError("checkpoint '" + path + "' is not valid JSON: " + e.what());
  }
  auto params = std::make_shared<EncoderParams<double>>(checkpoint_from_json<double>(j));
  if (start_epoch != nullptr) *start_epoch = j.value("epoch", std::size_t{0});
  return params;
}

// Full evaluation scorer for a fixed model: inverse-relation augmentation
// plus distance features with per-query exclusion.
ScoreFn pipeline_scorer(const SharedParams& params, const KnowledgeGraph& g) {
  auto pipe = std::make_shared<ScoringPipeline<double>>(*params, g);
  return [params, pipe](const std::vector<Triplet>& qs) { return pipe->score(qs); };
}

GraphScorerFactory pipeline_factory(const SharedParams& params) {
  return [params](const KnowledgeGraph& g) { return pipeline_scorer(params, g); };
}

SharedParams fresh_params(const EncoderConfig& cfg) {
  return std::make_shared<EncoderParams<double>>(init_encoder<double>(cfg));
}

// Scores are an i.i.d. uniform stream in draw order: the reference random
// baseline. Deterministic for a fixed seed and call sequence.
ScoreFn uniform_scorer(std::uint64_t seed) {
  auto rng = std::make_shared<Rng>(Rng::keyed({seed, 0x5c02eULL}));
  return [rng](const std::vector<Triplet>& qs) {
    std::vector<double> s(qs.size());
    for (double& v : s) v = rng->uniform01();
    return s;
  };
}

EncoderConfig make_encoder_config(std::size_t hidden_dim, std::size_t layers,
                                  const std::string& aggregation, bool use_distance,
                                  std::size_t distance_cap, std::uint64_t seed) {
  EncoderConfig cfg;
  cfg.hidden_dim = hidden_dim;
  cfg.num_layers = layers;
  cfg.aggregation = parse_aggregation(aggregation);
  cfg.use_distance = use_distance;
  cfg.distance_cap = distance_cap;
  cfg.mlp_hidden_dims = {hidden_dim};
  cfg.head_hidden_dims = {hidden_dim};
  cfg.seed = seed;
  return cfg;
}

// ---------------------------------------------------------------------------
// gen-fd2

struct GenFd2State {
  Common common;
  Settings settings;
  std::vector<std::size_t> train_depths{6};
  std::vector<std::size_t> test_depths{6, 6};
  double valid_fraction = 0.1;
  std::uint64_t seed = 0;
  bool shared_relations = false;
};

void run_gen_fd2(GenFd2State& st) {
  json resolved;
  if (!resolve(st.common, st.settings, "gen-fd2", resolved)) return;
  require(st.valid_fraction >= 0.0 && st.valid_fraction < 1.0,
          "--valid-fraction must be in [0, 1)");

  const bool offset = !st.shared_relations;
  const Fd2Output tr = gen_fd2(st.train_depths, offset);
  const Fd2Output te = gen_fd2(st.test_depths, offset);

  // Queries of the training graph are divided into train and validation
  // parts by a seeded shuffle; the test graph keeps all queries for testing.
  std::vector<Triplet> q = tr.queries;
  Rng rng = Rng::keyed({st.seed, 0xf2514ULL});
  const std::vector<std::size_t> order = rng.permutation(q.size());
  const auto n_valid =
      static_cast<std::size_t>(st.valid_fraction * static_cast<double>(q.size()));
  DatasetBundle train_bundle;
  train_bundle.observed = tr.observed;
  for (std::size_t i = 0; i < q.size(); ++i)
    (i < n_valid ? train_bundle.valid : train_bundle.train).push_back(q[order[i]]);
  train_bundle.node_names = prefixed_names("trn-e", tr.num_nodes);
  train_bundle.relation_names = prefixed_names("trn-r", tr.num_relations);

  DatasetBundle test_bundle;
  test_bundle.observed = te.observed;
  test_bundle.test = te.queries;
  test_bundle.node_names = prefixed_names("tst-e", te.num_nodes);
  test_bundle.relation_names = prefixed_names("tst-r", te.num_relations);

  RunDir run(st.common.out_dir, st.common.force, resolved);
  write_bundle(train_bundle, run.path() / "train", /*force=*/true);
  tag_bundle_family(run.path() / "train", "fd2");
  write_bundle(test_bundle, run.path() / "test", /*force=*/true);
  tag_bundle_family(run.path() / "test", "fd2");

  run.log("train bundle: " + std::to_string(tr.num_nodes) + " nodes, " +
          std::to_string(tr.num_relations) + " relations, " +
          std::to_string(tr.observed.size()) + " observed, " +
          std::to_string(train_bundle.train.size()) + " train queries, " +
          std::to_string(train_bundle.valid.size()) + " valid queries");
  run.log("test bundle: " + std::to_string(te.num_nodes) + " nodes, " +
          std::to_string(te.num_relations) + " relations, " +
          std::to_string(te.observed.size()) + " observed, " +
          std::to_string(test_bundle.test.size()) + " test queries");
}

void setup_gen_fd2(CLI::App& app) {
  auto st = std::make_shared<GenFd2State>();
  CLI::App* sub = app.add_subcommand(
      "gen-fd2", "Generate paired synthetic tree datasets with disjoint vocabularies");
  Settings& s = st->settings;
  s.bind("train-depths",
         sub->add_option("--train-depths", st->train_depths,
                         "Tree depths for the training graph (comma separated)")
             ->delimiter(',')
             ->capture_default_str(),
         &st->train_depths);
  s.bind("test-depths",
         sub->add_option("--test-depths", st->test_depths,
                         "Tree depths for the test graph (comma separated)")
             ->delimiter(',')
             ->capture_default_str(),
         &st->test_depths);
  s.bind("valid-fraction",
         sub->add_option("--valid-fraction", st->valid_fraction,
                         "Fraction of training-graph queries held out for validation")
             ->capture_default_str(),
         &st->valid_fraction);
  s.bind("seed",
         sub->add_option("--seed", st->seed, "Seed for the train/valid query shuffle")
             ->capture_default_str(),
         &st->seed);
  s.bind("shared-relations",
         sub->add_flag("--shared-relations", st->shared_relations,
                       "Reuse the same two relations across trees instead of fresh ones"),
         &st->shared_relations);
  add_common_flags(sub, st->common, s, "Run directory; receives train/ and test/ bundles");
  sub->callback([st] { run_gen_fd2(*st); });
}

// ---------------------------------------------------------------------------
// sample

struct SampleState {
  Common common;
  Settings settings;
  std::string in_dir;
  std::string method = "bfs";
  std::size_t max_nodes = 100;
  std::size_t max_triplets = 1000;
  std::size_t max_per_node = 32;
  std::size_t target_nodes = 100;
  double burn_prob = 0.7;
  std::uint64_t seed = 0;
};

void run_sample(SampleState& st) {
  json resolved;
  if (!resolve(st.common, st.settings, "sample", resolved)) return;
  require(!st.in_dir.empty(), "--in is required (a dataset bundle to sample from)");

  const DatasetBundle b = read_bundle(st.in_dir);
  const KnowledgeGraph g = b.observed_graph();
  const SampledSubgraph sampled =
      st.method == "bfs"
          ? sample_subgraph(g, st.max_nodes, st.max_triplets, st.max_per_node, st.seed)
          : forest_fire(g, st.target_nodes, st.burn_prob, st.seed);
  const Reindexed rx = reindex_triplets(sampled.triplets);

  std::unordered_map<std::size_t, std::size_t> node_map, rel_map;
  for (std::size_t i = 0; i < rx.node_ids.size(); ++i) node_map[rx.node_ids[i]] = i;
  for (std::size_t i = 0; i < rx.relation_ids.size(); ++i) rel_map[rx.relation_ids[i]] = i;

  DatasetBundle out;
  out.observed = rx.triplets;
  for (std::size_t id : rx.node_ids) out.node_names.push_back(b.node_names[id]);
  for (std::size_t id : rx.relation_ids) out.relation_names.push_back(b.relation_names[id]);

  // Queries survive only when every endpoint and the relation were kept.
  auto remap = [&](const std::vector<Triplet>& ts) {
    std::vector<Triplet> kept;
    for (const Triplet& t : ts) {
      const auto h = node_map.find(t.head);
      const auto r = rel_map.find(t.relation);
      const auto l = node_map.find(t.tail);
      if (h != node_map.end() && r != rel_map.end() && l != node_map.end())
        kept.push_back({h->second, r->second, l->second});
    }
    return kept;
  };
  out.train = remap(b.train);
  out.valid = remap(b.valid);
  out.test = remap(b.test);

  RunDir run(st.common.out_dir, st.common.force, resolved);
  write_bundle(out, run.path() / "sample", /*force=*/true);
  run.log("sampled " + std::to_string(out.num_nodes()) + " of " +
          std::to_string(b.num_nodes()) + " nodes, " + std::to_string(out.observed.size()) +
          " of " + std::to_string(b.observed.size()) + " observed triplets (" + st.method +
          ")");
  run.log("queries kept: train " + std::to_string(out.train.size()) + "/" +
          std::to_string(b.train.size()) + ", valid " + std::to_string(out.valid.size()) +
          "/" + std::to_string(b.valid.size()) + ", test " + std::to_string(out.test.size()) +
          "/" + std::to_string(b.test.size()));
}

void setup_sample(CLI::App& app) {
  auto st = std::make_shared<SampleState>();
  CLI::App* sub = app.add_subcommand(
      "sample", "Extract a connected subgraph from a bundle's observed graph");
  Settings& s = st->settings;
  s.bind("in", sub->add_option("--in", st->in_dir, "Source dataset bundle directory"),
         &st->in_dir);
  s.bind("method",
         sub->add_option("--method", st->method, "Sampling method")
             ->check(CLI::IsMember({"bfs", "forest-fire"}))
             ->capture_default_str(),
         &st->method);
  s.bind("max-nodes",
         sub->add_option("--max-nodes", st->max_nodes, "Node budget (bfs)")
             ->check(CLI::PositiveNumber)
             ->capture_default_str(),
         &st->max_nodes);
  s.bind("max-triplets",
         sub->add_option("--max-triplets", st->max_triplets, "Triplet budget (bfs)")
             ->check(CLI::PositiveNumber)
             ->capture_default_str(),
         &st->max_triplets);
  s.bind("max-per-node",
         sub->add_option("--max-per-node", st->max_per_node,
                         "Per-node expansion budget (bfs)")
             ->check(CLI::PositiveNumber)
             ->capture_default_str(),
         &st->max_per_node);
  s.bind("target-nodes",
         sub->add_option("--target-nodes", st->target_nodes, "Node target (forest-fire)")
             ->check(CLI::PositiveNumber)
             ->capture_default_str(),
         &st->target_nodes);
  s.bind("burn-prob",
         sub->add_option("--burn-prob", st->burn_prob,
                         "Burning probability in (0,1) (forest-fire)")
             ->capture_default_str(),
         &st->burn_prob);
  s.bind("seed", sub->add_option("--seed", st->seed, "Sampling seed")->capture_default_str(),
         &st->seed);
  add_common_flags(sub, st->common, s, "Run directory; receives the sample/ bundle");
  sub->callback([st] { run_sample(*st); });
}

// ---------------------------------------------------------------------------
// split

struct SplitState {
  Common common;
  Settings settings;
  std::string in_dir;
  double train_ratio = 0.8;
  double valid_ratio = 0.1;
  double test_ratio = 0.1;
  std::uint64_t seed = 0;
};

void run_split(SplitState& st) {
  json resolved;
  if (!resolve(st.common, st.settings, "split", resolved)) return;
  require(!st.in_dir.empty(), "--in is required (a dataset bundle to split)");

  const DatasetBundle b = read_bundle(st.in_dir);
  std::vector<Triplet> pool = b.observed;
  pool.insert(pool.end(), b.train.begin(), b.train.end());
  pool.insert(pool.end(), b.valid.begin(), b.valid.end());
  pool.insert(pool.end(), b.test.begin(), b.test.end());

  const SplitResult r =
      split_dataset(pool, st.train_ratio, st.valid_ratio, st.test_ratio, st.seed);

  DatasetBundle out;
  out.observed = r.train;  // held-out queries are ranked against the train part
  out.train = r.train;
  out.valid = r.valid;
  out.test = r.test;
  out.node_names = b.node_names;
  out.relation_names = b.relation_names;

  RunDir run(st.common.out_dir, st.common.force, resolved);
  write_bundle(out, run.path() / "split", /*force=*/true);
  run.log("split " + std::to_string(pool.size()) + " triplets into train " +
          std::to_string(r.train.size()) + ", valid " + std::to_string(r.valid.size()) +
          ", test " + std::to_string(r.test.size()));
}

void setup_split(CLI::App& app) {
  auto st = std::make_shared<SplitState>();
  CLI::App* sub = app.add_subcommand(
      "split", "Split a bundle's triplets into train/valid/test with node coverage");
  Settings& s = st->settings;
  s.bind("in", sub->add_option("--in", st->in_dir, "Source dataset bundle directory"),
         &st->in_dir);
  s.bind("train-ratio",
         sub->add_option("--train-ratio", st->train_ratio, "Training fraction")
             ->capture_default_str(),
         &st->train_ratio);
  s.bind("valid-ratio",
         sub->add_option("--valid-ratio", st->valid_ratio, "Validation fraction")
             ->capture_default_str(),
         &st->valid_ratio);
  s.bind("test-ratio",
         sub->add_option("--test-ratio", st->test_ratio, "Test fraction")
             ->capture_default_str(),
         &st->test_ratio);
  s.bind("seed", sub->add_option("--seed", st->seed, "Shuffle seed")->capture_default_str(),
         &st->seed);
  add_common_flags(sub, st->common, s, "Run directory; receives the split/ bundle");
  sub->callback([st] { run_split(*st); });
}

// ---------------------------------------------------------------------------
// topic-split

struct TopicSplitState {
  Common common;
  Settings settings;
  std::string in_dir;
  std::vector<std::string> groups;
};

void run_topic_split(TopicSplitState& st) {
  json resolved;
  if (!resolve(st.common, st.settings, "topic-split", resolved)) return;
  require(!st.in_dir.empty(), "--in is required (a dataset bundle to split)");
  require(!st.groups.empty(), "at least one --group is required (e.g. --group 0,1)");

  std::vector<std::vector<std::size_t>> groups;
  for (const std::string& spec : st.groups) {
    std::vector<std::size_t> ids;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item.empty()) continue;
      try {
        ids.push_back(static_cast<std::size_t>(std::stoull(item)));
      } catch (const std::exception&) {
        throw ValidationError("--group: '" + item + "' is not a relation id");
      }
    }
    groups.push_back(std::move(ids));
  }

  const DatasetBundle b = read_bundle(st.in_dir);
  std::vector<Triplet> pool = b.observed;
  pool.insert(pool.end(), b.train.begin(), b.train.end());
  pool.insert(pool.end(), b.valid.begin(), b.valid.end());
  pool.insert(pool.end(), b.test.begin(), b.test.end());
  // part_of[i]: which of the four bundle parts pooled triplet i came from.
  std::vector<int> part_of(pool.size());
  {
    std::size_t i = 0;
    for (std::size_t n = 0; n < b.observed.size(); ++n) part_of[i++] = 0;
    for (std::size_t n = 0; n < b.train.size(); ++n) part_of[i++] = 1;
    for (std::size_t n = 0; n < b.valid.size(); ++n) part_of[i++] = 2;
    for (std::size_t n = 0; n < b.test.size(); ++n) part_of[i++] = 3;
  }

  // topic_split validates ownership (each relation in exactly one group) and
  // produces densely reindexed triplets per group, preserving pool order.
  const std::vector<Reindexed> parts = topic_split(pool, groups);
  std::map<std::size_t, std::size_t> owner;
  for (std::size_t gi = 0; gi < groups.size(); ++gi)
    for (std::size_t rel : groups[gi]) owner[rel] = gi;

  std::vector<std::vector<int>> group_parts(groups.size());
  for (std::size_t i = 0; i < pool.size(); ++i)
    group_parts[owner.at(pool[i].relation)].push_back(part_of[i]);

  RunDir run(st.common.out_dir, st.common.force, resolved);
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const Reindexed& rx = parts[gi];
    DatasetBundle out;
    for (std::size_t id : rx.node_ids) out.node_names.push_back(b.node_names[id]);
    for (std::size_t id : rx.relation_ids) out.relation_names.push_back(b.relation_names[id]);
    for (std::size_t j = 0; j < rx.triplets.size(); ++j) {
      switch (group_parts[gi][j]) {
        case 0: out.observed.push_back(rx.triplets[j]); break;
        case 1: out.train.push_back(rx.triplets[j]); break;
        case 2: out.valid.push_back(rx.triplets[j]); break;
        default: out.test.push_back(rx.triplets[j]); break;
      }
    }
    const std::string name = "topic-" + std::to_string(gi);
    try {
      write_bundle(out, run.path() / name, /*force=*/true);
    } catch (const ValidationError& e) {
      throw ValidationError(name + ": " + e.what());
    }
    run.log(name + ": " + std::to_string(out.num_nodes()) + " nodes, " +
            std::to_string(out.num_relations()) + " relations, " +
            std::to_string(out.observed.size()) + " observed, " +
            std::to_string(out.train.size() + out.valid.size() + out.test.size()) +
            " queries");
  }
}

void setup_topic_split(CLI::App& app) {
  auto st = std::make_shared<TopicSplitState>();
  CLI::App* sub = app.add_subcommand(
      "topic-split", "Partition a bundle by relation groups into per-topic bundles");
  Settings& s = st->settings;
  s.bind("in", sub->add_option("--in", st->in_dir, "Source dataset bundle directory"),
         &st->in_dir);
  s.bind("group",
         sub->add_option("--group", st->groups,
                         "Relation ids forming one topic, comma separated; repeatable"),
         &st->groups);
  add_common_flags(sub, st->common, s, "Run directory; receives topic-N/ bundles");
  sub->callback([st] { run_topic_split(*st); });
}

// ---------------------------------------------------------------------------
// train

struct TrainState {
  Common common;
  Settings settings;
  std::string data_dir;
  std::string resume_path;
  std::size_t hidden_dim = 32;
  std::size_t layers = 0;  // 0 = auto: 2 for fd2-family bundles, 3 otherwise
  std::string aggregation = "mean";
  bool no_distance = false;
  std::size_t distance_cap = 10;
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  std::size_t patience = 3;
  std::size_t node_negatives = 2;
  std::size_t relation_negatives = 2;
  double mask_ratio = 0.2;
  bool remask = false;
  bool no_augment = false;
  std::uint64_t seed = 0;
  std::size_t audit_trials = 5;
  double audit_tol = 1e-5;
};

void run_train(TrainState& st) {
  json resolved;
  if (!resolve(st.common, st.settings, "train", resolved)) return;
  require(!st.data_dir.empty(), "--data is required (a dataset bundle to train on)");

  const DatasetBundle b = read_bundle(st.data_dir);
  const std::string family = bundle_family(st.data_dir);
  const std::size_t layers = st.layers != 0 ? st.layers : (family == "fd2" ? 2 : 3);

  SharedParams params;
  std::size_t start_epoch = 0;
  EncoderConfig ecfg;
  if (!st.resume_path.empty()) {
    params = load_params(st.resume_path, &start_epoch);
    ecfg = params->config;
  } else {
    ecfg = make_encoder_config(st.hidden_dim, layers, st.aggregation, !st.no_distance,
                               st.distance_cap, mix_key({st.seed, 0x1c17ULL}));
    params = fresh_params(ecfg);
  }

  TrainTask task;
  if (st.remask) {
    std::vector<Triplet> pool = b.observed;
    pool.insert(pool.end(), b.train.begin(), b.train.end());
    task.graph = build_graph(pool, b.num_nodes(), b.num_relations());
  } else {
    task.graph = b.observed_graph();
    task.positives = b.train;
  }
  task.valid_queries = b.valid;
  task.remask = st.remask;
  task.mask_ratio = st.mask_ratio;

  TrainConfig tc;
  tc.epochs = st.epochs;
  tc.batch_size = st.batch_size;
  tc.patience = st.patience;
  tc.learning_rate = st.learning_rate;
  tc.weight_decay = st.weight_decay;
  tc.num_node_negatives = st.node_negatives;
  tc.num_relation_negatives = st.relation_negatives;
  tc.seed = st.seed;
  tc.augment_inverses = !st.no_augment;

  resolved["encoder"] = encoder_config_to_json(ecfg);
  resolved["start-epoch"] = start_epoch;
  resolved["family"] = family;
  RunDir run(st.common.out_dir, st.common.force, resolved);
  if (!st.resume_path.empty())
    run.log("resuming from '" + st.resume_path + "' at epoch " + std::to_string(start_epoch) +
            "; encoder configuration taken from the checkpoint");

  TrainOutcome<double> outcome;
  try {
    outcome = train_encoder(*params, tc, {task});
  } catch (const RuntimeFailure& e) {
    run.log(std::string("runtime failure: ") + e.what());
    throw;
  }
  const TrainingHistory& h = outcome.history;
  for (std::size_t e = 0; e < h.epoch_loss.size(); ++e) {
    std::string line = "epoch " + std::to_string(start_epoch + e + 1) +
                       ": loss " + fmt(h.epoch_loss[e]);
    if (e < h.valid_mrr.size()) line += ", valid relation mrr " + fmt(h.valid_mrr[e]);
    run.log(line);
  }
  if (h.early_stopped)
    run.log("early stop after " + std::to_string(h.epochs_run) + " epochs (patience " +
            std::to_string(tc.patience) + ")");

  const std::size_t final_epoch = start_epoch + h.epochs_run;
  save_checkpoint(outcome.params, (run.path() / "checkpoint.json").string(), final_epoch);

  json hist;
  hist["start_epoch"] = start_epoch;
  hist["epochs_run"] = h.epochs_run;
  hist["final_epoch"] = final_epoch;
  hist["epoch_loss"] = h.epoch_loss;
  hist["valid_mrr"] = h.valid_mrr;
  hist["best_epoch"] = start_epoch + h.best_epoch;
  hist["early_stopped"] = h.early_stopped;
  hist["negative_collisions"] = h.negative_collisions;
  run.write_json("history.json", hist);

  // Audit the final model: scores must be unchanged under joint node and
  // relation relabelings of freshly drawn graphs.
  auto trained = std::make_shared<EncoderParams<double>>(outcome.params);
  const InvarianceAudit audit = check_double_invariance(
      pipeline_factory(trained), st.audit_trials, mix_key({st.seed, 0xadULL}), st.audit_tol);
  json aj;
  aj["trials"] = audit.trials;
  aj["queries_checked"] = audit.queries_checked;
  aj["max_abs_diff"] = audit.max_abs_diff;
  aj["max_scaled_diff"] = audit.max_scaled_diff;
  aj["tolerance"] = st.audit_tol;
  aj["passed"] = audit.passed;
  aj["detail"] = audit.detail;
  run.write_json("equivariance_audit.json", aj);
  run.log("relabeling audit: " + std::string(audit.passed ? "pass" : "FAIL") +
          " (max scaled diff " + fmt(audit.max_scaled_diff) + " vs tolerance " +
          fmt(st.audit_tol) + ")");
  if (!audit.passed)
    throw AuditError("trained model failed the relabeling audit: " + audit.detail);
  run.log("checkpoint written: epoch " + std::to_string(final_epoch) + ", best epoch " +
          std::to_string(start_epoch + h.best_epoch));
}

void setup_train(CLI::App& app) {
  auto st = std::make_shared<TrainState>();
  CLI::App* sub =
      app.add_subcommand("train", "Train the relabeling-insensitive encoder on a bundle");
  Settings& s = st->settings;
  s.bind("data", sub->add_option("--data", st->data_dir, "Training dataset bundle directory"),
         &st->data_dir);
  s.bind("resume",
         sub->add_option("--resume", st->resume_path,
                         "Checkpoint to continue from (keeps its encoder configuration)"),
         &st->resume_path);
  s.bind("hidden-dim",
         sub->add_option("--hidden-dim", st->hidden_dim, "Hidden width of every layer")
             ->check(CLI::PositiveNumber)
             ->capture_default_str(),
         &st->hidden_dim);
  s.bind("layers",
         sub->add_option("--layers", st->layers,
                         "Message-passing rounds; 0 = auto (2 on fd2 bundles, 3 otherwise)")
             ->capture_default_str(),
         &st->layers);
  s.bind("aggregation",
         sub->add_option("--aggregation", st->aggregation, "Neighbor aggregation")
             ->check(CLI::IsMember({"mean", "sum", "max"}))
             ->capture_default_str(),
         &st->aggregation);
  s.bind("no-distance",
         sub->add_flag("--no-distance", st->no_distance,
                       "Disable shortest-distance query features"),
         &st->no_distance);
  s.bind("distance-cap",
         sub->add_option("--distance-cap", st->distance_cap,
                         "Distances are clamped to this many hops")
             ->check(CLI::PositiveNumber)
             ->capture_default_str(),
         &st->distance_cap);
  s.bind("epochs",
         sub->add_option("--epochs", st->epochs, "Training epochs")
             ->check(CLI::PositiveNumber)
             ->capture_default_str(),
         &st->epochs);
  s.bind("batch-size",
         sub->add_option("--batch-size", st->batch_size, "Positives per optimizer step")
             ->check(CLI::PositiveNumber)
             ->capture_default_str(),
         &st->batch_size);
  s.bind("lr",
         sub->add_option("--lr", st->learning_rate,
                         "Learning rate (standard grid: 0.01, 0.001, 0.0001)")
             ->capture_default_str(),
         &st->learning_rate);
  s.bind("weight-decay",
         sub->add_option("--weight-decay", st->weight_decay, "Additive weight decay")
             ->capture_default_str(),
         &st->weight_decay);
  s.bind("patience",
         sub->add_option("--patience", st->patience,
                         "Early-stop patience on validation relation mrr")
             ->capture_default_str(),
         &st->patience);
  s.bind("node-negatives",
         sub->add_option("--node-negatives", st->node_negatives,
                         "Corrupted-endpoint negatives per positive")
             ->capture_default_str(),
         &st->node_negatives);
  s.bind("relation-negatives",
         sub->add_option("--relation-negatives", st->relation_negatives,
                         "Corrupted-relation negatives per positive")
             ->capture_default_str(),
         &st->relation_negatives);
  s.bind("mask-ratio",
         sub->add_option("--mask-ratio", st->mask_ratio,
                         "Fraction masked per epoch in remask mode")
             ->capture_default_str(),
         &st->mask_ratio);
  s.bind("remask",
         sub->add_flag("--remask", st->remask,
                       "Self-supervised mode: re-mask the pooled graph every epoch"),
         &st->remask);
  s.bind("no-augment",
         sub->add_flag("--no-augment", st->no_augment,
                       "Disable inverse-relation augmentation"),
         &st->no_augment);
  s.bind("seed",
         sub->add_option("--seed", st->seed,
                         "Seed for initialization, masking, negatives, and batch order")
             ->capture_default_str(),
         &st->seed);
  s.bind("audit-trials",
         sub->add_option("--audit-trials", st->audit_trials,
                         "Relabeling-audit trials on the final model")
             ->check(CLI::PositiveNumber)
             ->capture_default_str(),
         &st->audit_trials);
  s.bind("audit-tol",
         sub->add_option("--audit-tol", st->audit_tol, "Relabeling-audit tolerance")
             ->capture_default_str(),
         &st->audit_tol);
  add_common_flags(sub, st->common, s,
                   "Run directory; receives checkpoint.json, history.json, audit");
  sub->callback([st] { run_train(*st); });
}

// ---------------------------------------------------------------------------
// eval

struct EvalState {
  Common common;
  Settings settings;
  std::string checkpoint_path;
  bool random_scorer = false;
  std::string data_dir;
  std::string train_data_dir;
  std::string part = "test";
  std::string task = "node";
  std::size_t num_negatives = 50;
  bool corrupt_head = false;
  bool filtered = false;
  std::string relation_protocol = "auto";
  std::vector<std::size_t> hits_at{1, 2, 5, 10};
  bool expect_disjoint = false;
  std::uint64_t seed = 0;
};

json disjointness_block(const DatasetBundle& eval_bundle, const std::string& train_dir,
                        bool strict) {
  json block;
  if (train_dir.empty()) {
    block["checked"] = false;
    return block;
  }
  const DatasetBundle tb = read_bundle(train_dir);
  const std::unordered_set<std::string> tn(tb.node_names.begin(), tb.node_names.end());
  const std::unordered_set<std::string> tr(tb.relation_names.begin(),
                                           tb.relation_names.end());
  std::size_t node_overlap = 0, rel_overlap = 0;
  for (const std::string& n : eval_bundle.node_names) node_overlap += tn.count(n);
  for (const std::string& r : eval_bundle.relation_names) rel_overlap += tr.count(r);
  block["checked"] = true;
  block["node_overlap"] = node_overlap;
  block["relation_overlap"] = rel_overlap;
  block["disjoint"] = node_overlap == 0 && rel_overlap == 0;
  if (strict && (node_overlap > 0 || rel_overlap > 0))
    throw ValidationError("evaluation vocabulary overlaps the training bundle (" +
                          std::to_string(node_overlap) + " node names, " +
                          std::to_string(rel_overlap) +
                          " relation names); --expect-disjoint forbids this");
  return block;
}

void run_eval(EvalState& st) {
  json resolved;
  if (!resolve(st.common, st.settings, "eval", resolved)) return;
  require(!st.data_dir.empty(), "--data is required (a dataset bundle to evaluate on)");
  require(st.random_scorer || !st.checkpoint_path.empty(),
          "either --checkpoint or --random-scorer is required");
  require(!(st.random_scorer && !st.checkpoint_path.empty()),
          "--checkpoint and --random-scorer are mutually exclusive");

  const DatasetBundle b = read_bundle(st.data_dir);
  const std::vector<Triplet>& queries = st.part == "train"   ? b.train
                                        : st.part == "valid" ? b.valid
                                                             : b.test;
  require(!queries.empty(),
          "the '" + st.part + "' part of '" + st.data_dir + "' has no queries");

  const std::string family = bundle_family(st.data_dir);
  bool relation_all_others = false;
  if (st.relation_protocol == "all-others") relation_all_others = true;
  else if (st.relation_protocol == "sampled") relation_all_others = false;
  else relation_all_others = family == "fd2";

  const json disjoint = disjointness_block(b, st.train_data_dir, st.expect_disjoint);

  EvalConfig ec;
  ec.num_node_negatives = st.num_negatives;
  ec.num_relation_negatives = st.num_negatives;
  ec.corrupt_head = st.corrupt_head;
  ec.filtered = st.filtered;
  ec.relation_all_others = relation_all_others;
  ec.hits_at = st.hits_at;
  ec.seed = st.seed;

  TripletSet known;
  for (const auto* part : {&b.observed, &b.train, &b.valid, &b.test})
    for (const Triplet& t : *part) known.insert(t);

  const KnowledgeGraph g = b.observed_graph();
  SharedParams params;
  if (!st.random_scorer) params = load_params(st.checkpoint_path);

  // Candidate draws are keyed by query content, so evaluating contiguous
  // chunks in parallel reproduces the single-threaded records exactly.
  const std::size_t workers =
      std::max<std::size_t>(1, std::min(st.common.workers, queries.size()));
  const std::size_t per = (queries.size() + workers - 1) / workers;
  std::vector<std::pair<std::size_t, std::size_t>> chunks;
  for (std::size_t begin = 0; begin < queries.size(); begin += per)
    chunks.emplace_back(begin, std::min(begin + per, queries.size()));

  std::vector<RankingReport> parts(chunks.size());
  std::vector<std::exception_ptr> errors(chunks.size());
  auto eval_chunk = [&](std::size_t ci) {
    try {
      const std::vector<Triplet> slice(queries.begin() + chunks[ci].first,
                                       queries.begin() + chunks[ci].second);
      const ScoreFn scorer = st.random_scorer
                                 ? uniform_scorer(mix_key({st.seed, 0xc, ci}))
                                 : pipeline_scorer(params, g);
      parts[ci] = st.task == "node"
                      ? evaluate_node_task(scorer, b.num_nodes(), slice, ec, &known)
                      : evaluate_relation_task(scorer, b.num_relations(), slice, ec, &known);
    } catch (...) {
      errors[ci] = std::current_exception();
    }
  };
  if (chunks.size() == 1) {
    eval_chunk(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(chunks.size());
    for (std::size_t ci = 0; ci < chunks.size(); ++ci) pool.emplace_back(eval_chunk, ci);
    for (std::thread& t : pool) t.join();
  }
  for (const std::exception_ptr& e : errors)
    if (e) std::rethrow_exception(e);
  const RankingReport rep =
      parts.size() == 1 ? parts.front() : merge_reports(parts, ec.hits_at);

  json rj = report_to_json(rep);
  rj["config"] = resolved;
  rj["name_disjointness"] = disjoint;
  if (st.random_scorer) {
    // Reference values for a uniform scorer against n distinct negatives.
    json base;
    base["num_negatives"] = st.num_negatives;
    base["mrr"] = random_baseline_mrr(st.num_negatives);
    json hits = json::object();
    for (std::size_t k : st.hits_at)
      hits[std::to_string(k)] = random_baseline_hits(st.num_negatives, k);
    base["hits"] = hits;
    rj["analytic_baseline"] = base;
  }

  RunDir run(st.common.out_dir, st.common.force, resolved);
  run.write_json("report.json", rj);
  if (disjoint.value("checked", false))
    run.log(std::string("vocabulary disjointness vs training bundle: ") +
            (disjoint.value("disjoint", false) ? "disjoint" : "OVERLAPPING"));
  std::string hits_line;
  for (const auto& [k, v] : rep.hits)
    hits_line += " hits@" + std::to_string(k) + " " + fmt(v);
  run.log(st.task + " ranking over " + std::to_string(rep.num_queries) + " queries: mrr " +
          fmt(rep.mrr) + ", mean rank " + fmt(rep.mean_rank) + "," + hits_line +
          " (mean candidates " + fmt(rep.mean_candidates) + ")");
}

void setup_eval(CLI::App& app) {
  auto st = std::make_shared<EvalState>();
  CLI::App* sub = app.add_subcommand("eval", "Rank held-out queries with a trained model");
  Settings& s = st->settings;
  s.bind("checkpoint",
         sub->add_option("--checkpoint", st->checkpoint_path, "Model checkpoint to score with"),
         &st->checkpoint_path);
  s.bind("random-scorer",
         sub->add_flag("--random-scorer", st->random_scorer,
                       "Score with i.i.d. uniform noise (the analytic-baseline reference)"),
         &st->random_scorer);
  s.bind("data", sub->add_option("--data", st->data_dir, "Evaluation dataset bundle"),
         &st->data_dir);
  s.bind("train-data",
         sub->add_option("--train-data", st->train_data_dir,
                         "Training bundle to verify vocabulary disjointness against"),
         &st->train_data_dir);
  s.bind("part",
         sub->add_option("--part", st->part, "Which query set to evaluate")
             ->check(CLI::IsMember({"train", "valid", "test"}))
             ->capture_default_str(),
         &st->part);
  s.bind("task",
         sub->add_option("--task", st->task, "Ranking task")
             ->check(CLI::IsMember({"node", "relation"}))
             ->capture_default_str(),
         &st->task);
  s.bind("num-negatives",
         sub->add_option("--num-negatives", st->num_negatives, "Negatives per query")
             ->check(CLI::PositiveNumber)
             ->capture_default_str(),
         &st->num_negatives);
  s.bind("corrupt-head",
         sub->add_flag("--corrupt-head", st->corrupt_head,
                       "Node task corrupts the head instead of the tail"),
         &st->corrupt_head);
  s.bind("filtered",
         sub->add_flag("--filtered", st->filtered,
                       "Drop candidates that form known true triplets"),
         &st->filtered);
  s.bind("relation-protocol",
         sub->add_option("--relation-protocol", st->relation_protocol,
                         "Relation candidates: sampled, all-others, or auto "
                         "(all-others on fd2 bundles)")
             ->check(CLI::IsMember({"auto", "sampled", "all-others"}))
             ->capture_default_str(),
         &st->relation_protocol);
  s.bind("hits",
         sub->add_option("--hits", st->hits_at, "Hits@K cutoffs (comma separated)")
             ->delimiter(',')
             ->capture_default_str(),
         &st->hits_at);
  s.bind("expect-disjoint",
         sub->add_flag("--expect-disjoint", st->expect_disjoint,
                       "Fail when the vocabularies overlap the training bundle"),
         &st->expect_disjoint);
  s.bind("seed",
         sub->add_option("--seed", st->seed, "Seed for candidate sampling")
             ->capture_default_str(),
         &st->seed);
  add_common_flags(sub, st->common, s, "Run directory; receives report.json");
  sub->callback([st] { run_eval(*st); });
}

// ---------------------------------------------------------------------------
// check

struct CheckState {
  Common common;
  Settings settings;
  std::string what;
  std::string checkpoint_path;
  std::uint64_t seed = 0;
  double tol = 1e-5;
  std::size_t trials = 0;  // 0 = per-subject default
  std::size_t dim = 16;
  std::size_t graph_nodes = 12;
  std::size_t graph_relations = 3;
  std::size_t num_perms = 2;
  std::vector<std::size_t> draw_counts{1, 4, 16, 64};
  std::size_t depth = 3;
  std::size_t perm_trials = 20;
  std::size_t param_draws = 10;
  std::size_t budget = kUqerDefaultBudget;
};

// Writes the audit (when a run directory was requested) before failing, so
// unsuccessful audits still leave their evidence on disk.
void finish_check(CheckState& st, const json& resolved, json audit, bool passed,
                  const std::string& fail_msg) {
  audit["passed"] = passed;
  if (!st.common.out_dir.empty()) {
    RunDir run(st.common.out_dir, st.common.force, resolved);
    run.write_json("audit.json", audit);
  }
  std::cout << "check " << st.what << ": " << (passed ? "pass" : "FAIL") << "\n";
  if (!passed) throw AuditError(fail_msg);
}

SharedParams check_scorer_params(const CheckState& st) {
  if (!st.checkpoint_path.empty()) return load_params(st.checkpoint_path);
  return fresh_params(make_encoder_config(32, 2, "mean", true, 10, mix_key({st.seed, 0x1c17ULL})));
}

void run_check_invariance(CheckState& st, const json& resolved) {
  const std::size_t trials = st.trials != 0 ? st.trials : 100;
  const SharedParams params = check_scorer_params(st);
  const InvarianceAudit audit =
      check_double_invariance(pipeline_factory(params), trials, st.seed, st.tol);
  json aj;
  aj["trials"] = audit.trials;
  aj["queries_checked"] = audit.queries_checked;
  aj["max_abs_diff"] = audit.max_abs_diff;
  aj["max_scaled_diff"] = audit.max_scaled_diff;
  aj["tolerance"] = st.tol;
  aj["detail"] = audit.detail;
  std::cout << "relabeling trials " << audit.trials << ", queries "
            << audit.queries_checked << ", max scaled diff " << fmt(audit.max_scaled_diff)
            << " (tolerance " << fmt(st.tol) << ")\n";
  finish_check(st, resolved, aj, audit.passed,
               "scores change under relabeling: " + audit.detail);
}

void run_check_counterexample(CheckState& st, const json& resolved) {
  const CounterexampleFixture f = counterexample_fixture();
  json aj;
  aj["groups"] = json::array();
  bool passed = true;
  double worst = 0.0;

  std::vector<std::pair<std::string, SharedParams>> scorers;
  if (!st.checkpoint_path.empty()) {
    scorers.emplace_back("checkpoint", load_params(st.checkpoint_path));
  } else {
    for (std::size_t i = 0; i < st.param_draws; ++i)
      scorers.emplace_back(
          "draw " + std::to_string(i),
          fresh_params(make_encoder_config(32, 2, "mean", true, 10, mix_key({st.seed, i}))));
  }

  json draws = json::array();
  bool printed_table = false;
  for (const auto& [label, params] : scorers) {
    const ScoreFn fn = pipeline_scorer(params, f.observed);
    const CounterexampleAudit audit = audit_counterexample(fn, f, st.tol);
    passed = passed && audit.passed;
    worst = std::max(worst, audit.max_group_spread);
    json d;
    d["label"] = label;
    d["max_group_spread"] = audit.max_group_spread;
    d["passed"] = audit.passed;
    draws.push_back(d);
    if (!printed_table) {
      // Equality table: every query in a group must score identically.
      for (const auto& group : f.equal_score_groups) {
        const std::vector<double> scores = fn(group);
        std::string line = "  forced-equal group:";
        for (std::size_t i = 0; i < group.size(); ++i)
          line += " (" + std::to_string(group[i].head) + "," +
                  std::to_string(group[i].relation) + "," + std::to_string(group[i].tail) +
                  ")=" + fmt(scores[i]);
        std::cout << line << "\n";
      }
      printed_table = true;
    }
    std::cout << label << ": max group spread " << fmt(audit.max_group_spread) << "\n";
  }
  aj["draws"] = draws;
  aj["max_group_spread"] = worst;
  aj["tolerance"] = st.tol;
  finish_check(st, resolved, aj, passed,
               "forced score equalities violated (max spread " + fmt(worst) + " vs tolerance " +
                   fmt(st.tol) + ")");
}

void run_check_deq_trend(CheckState& st, const json& resolved) {
  const std::size_t trials = st.trials != 0 ? st.trials : 20;
  Rng rng = Rng::keyed({st.seed, 0x96ULL});
  const KnowledgeGraph g = random_er_graph(st.graph_nodes, st.graph_relations, rng);
  std::vector<Triplet> queries;
  for (std::size_t i = 0; i < std::min<std::size_t>(g.num_triplets(), 8); ++i)
    queries.push_back(g.triplets()[i]);
  for (std::size_t i = 0; i < 4; ++i)
    queries.push_back({rng.below(g.num_nodes()), rng.below(g.num_relations()),
                       rng.below(g.num_nodes())});
  std::vector<PermutationPair> perms;
  for (std::size_t i = 0; i < st.num_perms; ++i)
    perms.push_back(random_permutation_pair(g.num_nodes(), g.num_relations(),
                                            mix_key({st.seed, 0x9e2ULL, i})));

  const RandomFeatureScorer scorer(st.dim, 7);
  const McTrendResult trend =
      mc_gap_trend(scorer, g, queries, perms, st.draw_counts, trials, st.seed);

  // Conditional property: relabeling graph, queries, and feature rows
  // together must leave scores unchanged (up to summation order).
  double cond_max = 0.0;
  for (std::size_t t = 0; t < 5; ++t) {
    const FeatureDraw d =
        draw_features(g.num_nodes(), g.num_relations(), st.dim, mix_key({st.seed, 0xfeULL, t}));
    const PermutationPair p = random_permutation_pair(g.num_nodes(), g.num_relations(),
                                                      mix_key({st.seed, 0xffULL, t}));
    const KnowledgeGraph gp = apply_permutation(g, p);
    std::vector<Triplet> qp;
    for (const Triplet& q : queries) qp.push_back(p.apply(q));
    Matrix<double> nf(d.node_features.rows(), d.node_features.cols());
    for (std::size_t i = 0; i < nf.rows(); ++i)
      std::copy(d.node_features.row(i), d.node_features.row(i) + nf.cols(),
                nf.row(p.node_perm[i]));
    Matrix<double> rf(d.rel_features.rows(), d.rel_features.cols());
    for (std::size_t k = 0; k < rf.rows(); ++k)
      std::copy(d.rel_features.row(k), d.rel_features.row(k) + rf.cols(),
                rf.row(p.rel_perm[k]));
    const std::vector<double> a =
        scorer.score_with_embeddings(g, queries, d.node_features, d.rel_features);
    const std::vector<double> bb = scorer.score_with_embeddings(gp, qp, nf, rf);
    for (std::size_t i = 0; i < a.size(); ++i)
      cond_max = std::max(cond_max, std::abs(a[i] - bb[i]));
  }

  const std::size_t needed_decreasing =
      (trials * 9 + 9) / 10;  // ceil(0.9 * trials)
  const bool slope_ok = trend.slope >= -0.65 && trend.slope <= -0.35;
  const bool decreasing_ok = trend.decreasing_trials >= needed_decreasing;
  const bool cond_ok = cond_max <= 1e-10;

  json aj;
  aj["draw_counts"] = trend.draw_counts;
  aj["mean_log_gap"] = trend.mean_log_gap;
  aj["slope"] = trend.slope;
  aj["trials"] = trend.trials;
  aj["decreasing_trials"] = trend.decreasing_trials;
  aj["needed_decreasing"] = needed_decreasing;
  aj["conditional_equivariance_max_diff"] = cond_max;
  std::cout << "gap slope " << fmt(trend.slope) << " (want [-0.65, -0.35]); decreasing "
            << trend.decreasing_trials << "/" << trend.trials << " (want >= "
            << needed_decreasing << "); conditional equivariance max diff " << fmt(cond_max)
            << " (want <= 1e-10)\n";
  std::string msg;
  if (!slope_ok) msg = "gap-vs-draws slope " + fmt(trend.slope) + " outside [-0.65, -0.35]";
  else if (!decreasing_ok)
    msg = "gap decreased in only " + std::to_string(trend.decreasing_trials) + "/" +
          std::to_string(trend.trials) + " trials";
  else if (!cond_ok)
    msg = "conditional equivariance violated: max diff " + fmt(cond_max);
  finish_check(st, resolved, aj, slope_ok && decreasing_ok && cond_ok, msg);
}

void run_check_uqer(CheckState& st, const json& resolved) {
  // Part 1: the built-in clause pair reproduces the generator's query set.
  const Fd2Output data = gen_fd2({st.depth});
  const KnowledgeGraph g = fd2_observed_graph(data);
  std::vector<Triplet> derived = uqer_derive_union(g, fd2_uqer_clauses(), st.budget);
  std::vector<Triplet> expected = data.queries;
  auto by_value = [](const Triplet& a, const Triplet& b) {
    return std::tie(a.head, a.relation, a.tail) < std::tie(b.head, b.relation, b.tail);
  };
  std::sort(expected.begin(), expected.end(), by_value);
  expected.erase(std::unique(expected.begin(), expected.end()), expected.end());
  const bool exact = derived == expected;

  // Part 2: derivation commutes with relabeling on random graphs.
  std::size_t commute_failures = 0;
  for (std::size_t t = 0; t < st.perm_trials; ++t) {
    Rng rng = Rng::keyed({st.seed, 0x0c3ULL, t});
    const std::size_t n = 4 + rng.below(9);  // 4..12
    const KnowledgeGraph rg = random_er_graph(n, 2, rng);
    const PermutationPair p =
        random_permutation_pair(n, 2, mix_key({st.seed, 0x0c4ULL, t}));
    std::vector<Triplet> direct = uqer_derive_union(apply_permutation(rg, p),
                                                    fd2_uqer_clauses(), st.budget);
    std::vector<Triplet> moved;
    for (const Triplet& q : uqer_derive_union(rg, fd2_uqer_clauses(), st.budget))
      moved.push_back(p.apply(q));
    std::sort(moved.begin(), moved.end(), by_value);
    if (direct != moved) commute_failures += 1;
  }

  json aj;
  aj["depth"] = st.depth;
  aj["derived"] = derived.size();
  aj["expected"] = expected.size();
  aj["exact_match"] = exact;
  aj["perm_trials"] = st.perm_trials;
  aj["commute_failures"] = commute_failures;
  std::cout << "depth " << st.depth << ": derived " << derived.size() << " queries, expected "
            << expected.size() << (exact ? " (exact match)" : " (MISMATCH)") << "; relabeling "
            << "commutation failures " << commute_failures << "/" << st.perm_trials << "\n";
  std::string msg;
  if (!exact) msg = "derived query set does not match the generator at depth " +
                    std::to_string(st.depth);
  else if (commute_failures > 0)
    msg = "derivation failed to commute with relabeling in " +
          std::to_string(commute_failures) + " trials";
  finish_check(st, resolved, aj, exact && commute_failures == 0, msg);
}

void run_check(CheckState& st) {
  json resolved;
  if (!resolve(st.common, st.settings, "check", resolved)) return;
  if (st.what == "invariance") run_check_invariance(st, resolved);
  else if (st.what == "counterexample") run_check_counterexample(st, resolved);
  else if (st.what == "deq-trend") run_check_deq_trend(st, resolved);
  else run_check_uqer(st, resolved);
}

void setup_check(CLI::App& app) {
  auto st = std::make_shared<CheckState>();
  CLI::App* sub = app.add_subcommand("check", "Run an executable correctness audit");
  Settings& s = st->settings;
  sub->add_option("--what", st->what, "Audit to run")
      ->check(CLI::IsMember({"invariance", "counterexample", "deq-trend", "uqer"}))
      ->required();
  s.bind("checkpoint",
         sub->add_option("--checkpoint", st->checkpoint_path,
                         "Audit this checkpoint instead of a fresh model"),
         &st->checkpoint_path);
  s.bind("seed", sub->add_option("--seed", st->seed, "Audit seed")->capture_default_str(),
         &st->seed);
  s.bind("tol",
         sub->add_option("--tol", st->tol, "Score-equality tolerance")->capture_default_str(),
         &st->tol);
  s.bind("trials",
         sub->add_option("--trials", st->trials,
                         "Trial count; 0 uses the audit's default (100 invariance, 20 trend)"),
         &st->trials);
  s.bind("dim",
         sub->add_option("--dim", st->dim, "Feature width (deq-trend)")
             ->check(CLI::PositiveNumber)
             ->capture_default_str(),
         &st->dim);
  s.bind("graph-nodes",
         sub->add_option("--graph-nodes", st->graph_nodes, "Test graph size (deq-trend)")
             ->check(CLI::PositiveNumber)
             ->capture_default_str(),
         &st->graph_nodes);
  s.bind("graph-relations",
         sub->add_option("--graph-relations", st->graph_relations,
                         "Test graph relations (deq-trend)")
             ->check(CLI::PositiveNumber)
             ->capture_default_str(),
         &st->graph_relations);
  s.bind("num-perms",
         sub->add_option("--num-perms", st->num_perms, "Relabelings per gap (deq-trend)")
             ->check(CLI::PositiveNumber)
             ->capture_default_str(),
         &st->num_perms);
  s.bind("draw-counts",
         sub->add_option("--draw-counts", st->draw_counts,
                         "Feature-draw counts for the trend (comma separated)")
             ->delimiter(',')
             ->capture_default_str(),
         &st->draw_counts);
  s.bind("depth",
         sub->add_option("--depth", st->depth, "Generator depth to reproduce (uqer)")
             ->check(CLI::PositiveNumber)
             ->capture_default_str(),
         &st->depth);
  s.bind("perm-trials",
         sub->add_option("--perm-trials", st->perm_trials,
                         "Relabeling-commutation trials (uqer)")
             ->capture_default_str(),
         &st->perm_trials);
  s.bind("param-draws",
         sub->add_option("--param-draws", st->param_draws,
                         "Fresh models to audit (counterexample)")
             ->check(CLI::PositiveNumber)
             ->capture_default_str(),
         &st->param_draws);
  s.bind("budget",
         sub->add_option("--budget", st->budget, "Derivation work budget (uqer)")
             ->check(CLI::PositiveNumber)
             ->capture_default_str(),
         &st->budget);
  add_common_flags(sub, st->common, s, "Optional run directory; receives audit.json");
  sub->callback([st] { run_check(*st); });
}

// ---------------------------------------------------------------------------
// uqer

struct UqerState {
  Common common;
  Settings settings;
  std::string data_dir;
  std::vector<std::string> clause_paths;
  bool builtin_fd2 = false;
  std::string compare_path;
  std::size_t budget = kUqerDefaultBudget;
};

void run_uqer(UqerState& st) {
  json resolved;
  if (!resolve(st.common, st.settings, "uqer", resolved)) return;
  require(!st.data_dir.empty(), "--data is required (a dataset bundle to derive from)");
  require(st.builtin_fd2 || !st.clause_paths.empty(),
          "provide at least one --clause file or --builtin-fd2");

  const DatasetBundle b = read_bundle(st.data_dir);
  const KnowledgeGraph g = b.observed_graph();

  std::vector<UqerClause> clauses;
  if (st.builtin_fd2)
    for (const UqerClause& c : fd2_uqer_clauses()) clauses.push_back(c);
  for (const std::string& path : st.clause_paths) {
    std::ifstream in(path);
    if (!in) throw RuntimeFailure("cannot open clause file '" + path + "'");
    clauses.push_back(parse_uqer_clause(in, path));
  }

  const std::vector<Triplet> derived = uqer_derive_union(g, clauses, st.budget);
  std::cout << "derived " << derived.size() << " queries from " << clauses.size()
            << " clauses\n";

  bool compared = false, matched = true;
  std::size_t missing = 0, extra = 0;
  if (!st.compare_path.empty()) {
    compared = true;
    NameMap nodes, relations;
    for (const std::string& n : b.node_names) nodes.intern(n);
    for (const std::string& r : b.relation_names) relations.intern(r);
    const std::size_t n_before = nodes.size(), r_before = relations.size();
    std::ifstream in(st.compare_path);
    if (!in) throw RuntimeFailure("cannot open comparison file '" + st.compare_path + "'");
    std::vector<Triplet> expected = parse_triplets(in, st.compare_path, nodes, relations);
    if (nodes.size() != n_before || relations.size() != r_before)
      throw ValidationError("comparison file '" + st.compare_path +
                            "' uses names outside the bundle vocabulary");
    auto by_value = [](const Triplet& a, const Triplet& c) {
      return std::tie(a.head, a.relation, a.tail) < std::tie(c.head, c.relation, c.tail);
    };
    std::sort(expected.begin(), expected.end(), by_value);
    expected.erase(std::unique(expected.begin(), expected.end()), expected.end());
    std::set<std::array<std::size_t, 3>> ds, es;
    for (const Triplet& t : derived) ds.insert({t.head, t.relation, t.tail});
    for (const Triplet& t : expected) es.insert({t.head, t.relation, t.tail});
    for (const auto& t : es) missing += ds.count(t) == 0;
    for (const auto& t : ds) extra += es.count(t) == 0;
    matched = missing == 0 && extra == 0;
    std::cout << "comparison: " << (matched ? "exact match" : "MISMATCH") << " (missing "
              << missing << ", extra " << extra << ")\n";
  }

  if (!st.common.out_dir.empty()) {
    RunDir run(st.common.out_dir, st.common.force, resolved);
    NameMap nodes, relations;
    for (const std::string& n : b.node_names) nodes.intern(n);
    for (const std::string& r : b.relation_names) relations.intern(r);
    write_triplets(derived, nodes, relations, run.path() / "derived.tsv");
    json aj;
    aj["clauses"] = clauses.size();
    aj["derived"] = derived.size();
    aj["compared"] = compared;
    if (compared) {
      aj["matched"] = matched;
      aj["missing"] = missing;
      aj["extra"] = extra;
    }
    run.write_json("derivation.json", aj);
    run.log("derived.tsv written with " + std::to_string(derived.size()) + " queries");
  }
  if (compared && !matched)
    throw AuditError("derived queries differ from '" + st.compare_path + "': missing " +
                     std::to_string(missing) + ", extra " + std::to_string(extra));
}

void setup_uqer(CLI::App& app) {
  auto st = std::make_shared<UqerState>();
  CLI::App* sub = app.add_subcommand(
      "uqer", "Derive queries from universally quantified entailment clauses");
  Settings& s = st->settings;
  s.bind("data", sub->add_option("--data", st->data_dir, "Dataset bundle to derive from"),
         &st->data_dir);
  s.bind("clause",
         sub->add_option("--clause", st->clause_paths, "Clause file; repeatable"),
         &st->clause_paths);
  s.bind("builtin-fd2",
         sub->add_flag("--builtin-fd2", st->builtin_fd2,
                       "Use the built-in tree-closure clause pair"),
         &st->builtin_fd2);
  s.bind("compare",
         sub->add_option("--compare", st->compare_path,
                         "TSV of expected queries; mismatch fails the audit"),
         &st->compare_path);
  s.bind("budget",
         sub->add_option("--budget", st->budget, "Derivation work budget")
             ->check(CLI::PositiveNumber)
             ->capture_default_str(),
         &st->budget);
  add_common_flags(sub, st->common, s, "Optional run directory; receives derived.tsv");
  sub->callback([st] { run_uqer(*st); });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Doubly inductive knowledge-graph link prediction toolkit"};
  app.require_subcommand(1);
  try {
    setup_gen_fd2(app);
    setup_sample(app);
    setup_split(app);
    setup_topic_split(app);
    setup_train(app);
    setup_eval(app);
    setup_check(app);
    setup_uqer(app);
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const AuditError& e) {
    std::cerr << "audit failure: " << e.what() << "\n";
    return 2;
  } catch (const RuntimeFailure& e) {
    std::cerr << "runtime failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
