#pragma once

// Triplet file I/O.
//
// Format: UTF-8 text, one triplet per line as "head<TAB>relation<TAB>tail",
// lines starting with '#' ignored. Names map to dense 0-based indices in
// first-appearance order. Name-map sidecar files hold one name per line; the
// line number is the index.
//
// write_triplets emits lines in lexicographic (byte) order, so writing a
// canonicalized file reproduces it byte for byte.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "kgdeq/common.hpp"
#include "kgdeq/graph.hpp"

namespace kgdeq {

// Dense name <-> index bijection, assigned in first-appearance order.
class NameMap {
public:
  std::size_t intern(const std::string& name) {
    auto it = index_.find(name);
    if (it != index_.end()) return it->second;
    const std::size_t id = names_.size();
    index_.emplace(name, id);
    names_.push_back(name);
    return id;
  }

  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  std::size_t index_of(const std::string& name) const {
    auto it = index_.find(name);
    require(it != index_.end(), "NameMap: unknown name '" + name + "'");
    return it->second;
  }

  const std::string& name_of(std::size_t id) const {
    require(id < names_.size(), "NameMap: index out of range");
    return names_[id];
  }

  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct TripletFile {
  std::vector<Triplet> triplets;
  NameMap node_names;
  NameMap relation_names;
};

namespace detail {

inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find('\t', start);
    if (pos == std::string::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

inline bool is_blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

}  // namespace detail

// Parses triplet lines from a stream. `where` names the source in errors.
// Existing name maps may be passed in to share an index space across files.
inline std::vector<Triplet> parse_triplets(std::istream& in, const std::string& where,
                                           NameMap& node_names, NameMap& relation_names) {
  std::vector<Triplet> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || detail::is_blank(line) || line[0] == '#') continue;
    const auto fields = detail::split_tabs(line);
    if (fields.size() != 3) {
      throw ValidationError(where + ":" + std::to_string(line_no) +
                            ": expected 3 tab-separated fields (head, relation, tail), got " +
                            std::to_string(fields.size()) +
                            (fields.size() == 1 ? " — fields must be separated by a single tab"
                                                : ""));
    }
    for (const auto& f : fields) {
      if (f.empty()) {
        throw ValidationError(where + ":" + std::to_string(line_no) + ": empty field");
      }
    }
    out.push_back(Triplet{node_names.intern(fields[0]), relation_names.intern(fields[1]),
                          node_names.intern(fields[2])});
  }
  return out;
}

inline TripletFile read_triplets(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw RuntimeFailure("read_triplets: cannot open " + path.string());
  TripletFile tf;
  tf.triplets = parse_triplets(in, path.string(), tf.node_names, tf.relation_names);
  return tf;
}

// Writes triplets as named TSV lines in lexicographic byte order.
inline void write_triplets(const std::vector<Triplet>& triplets, const NameMap& node_names,
                           const NameMap& relation_names, const std::filesystem::path& path) {
  std::vector<std::string> lines;
  lines.reserve(triplets.size());
  for (const Triplet& t : triplets) {
    lines.push_back(node_names.name_of(t.head) + "\t" + relation_names.name_of(t.relation) + "\t" +
                    node_names.name_of(t.tail));
  }
  std::sort(lines.begin(), lines.end());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("write_triplets: cannot open " + path.string() + " for writing");
  for (const auto& l : lines) out << l << '\n';
}

inline std::vector<std::string> read_names(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw RuntimeFailure("read_names: cannot open " + path.string());
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    names.push_back(line);
  }
  return names;
}

inline void write_names(const std::vector<std::string>& names, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("write_names: cannot open " + path.string() + " for writing");
  for (const auto& n : names) out << n << '\n';
}

}  // namespace kgdeq
