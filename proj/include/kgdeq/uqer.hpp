#pragma once

// Second-order Horn-style rules over knowledge graphs ("uqer" clauses).
//
// A clause has M node variables E1..EM, K relation variables C1..CK, a body
// of atoms (Ea, Cc, Eb), and an answer index h in {1,2}. Against a graph it
// derives the triplet set
//   { (i, k, x_h) :  E1=i, E2=j, C1=k, and there exist injective values for
//                    E3..EM (distinct from each other and from i, j) and for
//                    C2..CK (distinct from each other and from k) making
//                    every body atom an edge of the graph },
// where x_h is the value of E_h. E1 and E2 may coincide. Because variables
// range over whole vocabularies and only the body constrains them, the
// derived set transforms exactly like the graph under node/relation
// relabelings.
//
// Side conditions: every existential node variable E_{h+1}..EM and every
// relation variable C2..CK must appear in the body.
//
// Derivation enumerates relation assignments first, then backtracks over
// node variables, restricting each variable's candidates through the first
// body atom that links it to an already-assigned variable. Work is counted
// in candidate visits and aborts beyond a budget.
//
// Clause file format (one clause per file, '#' starts a comment):
//   M 3
//   K 2
//   h 2
//   B 1 1 3        # atom (E1, C1, E3), all indices 1-based
//   B 3 2 2

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "kgdeq/common.hpp"
#include "kgdeq/graph.hpp"

namespace kgdeq {

struct UqerAtom {
  std::size_t head_var = 0;  // 0-based
  std::size_t rel_var = 0;
  std::size_t tail_var = 0;
};

struct UqerClause {
  std::size_t num_node_vars = 0;  // M
  std::size_t num_rel_vars = 0;   // K
  std::size_t answer_var = 2;     // h (1-based, 1 or 2)
  std::vector<UqerAtom> atoms;

  void validate() const {
    require(num_node_vars >= 2, "uqer clause: M must be >= 2");
    require(num_rel_vars >= 1, "uqer clause: K must be >= 1");
    require(answer_var == 1 || answer_var == 2, "uqer clause: h must be 1 or 2");
    require(!atoms.empty(), "uqer clause: body must not be empty");
    for (const UqerAtom& a : atoms) {
      require(a.head_var < num_node_vars && a.tail_var < num_node_vars,
              "uqer clause: atom node variable out of range");
      require(a.rel_var < num_rel_vars, "uqer clause: atom relation variable out of range");
    }
    for (std::size_t u = answer_var; u < num_node_vars; ++u) {
      bool seen = false;
      for (const UqerAtom& a : atoms)
        if (a.head_var == u || a.tail_var == u) seen = true;
      if (!seen)
        throw ValidationError("uqer clause: existential node variable E" +
                              std::to_string(u + 1) + " does not appear in the body");
    }
    for (std::size_t c = 1; c < num_rel_vars; ++c) {
      bool seen = false;
      for (const UqerAtom& a : atoms)
        if (a.rel_var == c) seen = true;
      if (!seen)
        throw ValidationError("uqer clause: relation variable C" + std::to_string(c + 1) +
                              " does not appear in the body");
    }
  }
};

inline UqerClause parse_uqer_clause(std::istream& in, const std::string& where) {
  UqerClause clause;
  bool saw_m = false, saw_k = false, saw_h = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    line_no += 1;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    auto fail = [&](const std::string& msg) {
      throw ValidationError(where + ":" + std::to_string(line_no) + ": " + msg);
    };
    if (tag == "M") {
      if (!(ls >> clause.num_node_vars)) fail("expected an integer after M");
      saw_m = true;
    } else if (tag == "K") {
      if (!(ls >> clause.num_rel_vars)) fail("expected an integer after K");
      saw_k = true;
    } else if (tag == "h") {
      if (!(ls >> clause.answer_var)) fail("expected an integer after h");
      saw_h = true;
    } else if (tag == "B") {
      std::size_t a = 0, c = 0, b = 0;
      if (!(ls >> a >> c >> b)) fail("expected three integers after B");
      if (a < 1 || c < 1 || b < 1) fail("atom indices are 1-based");
      clause.atoms.push_back({a - 1, c - 1, b - 1});
    } else {
      fail("unknown directive '" + tag + "' (expected M, K, h, or B)");
    }
    std::string rest;
    if (ls >> rest) fail("trailing token '" + rest + "'");
  }
  if (!saw_m || !saw_k || !saw_h)
    throw ValidationError(where + ": clause must define M, K, and h");
  clause.validate();
  return clause;
}

inline UqerClause read_uqer_clause(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw RuntimeFailure("uqer: cannot open '" + path.string() + "'");
  return parse_uqer_clause(in, path.string());
}

namespace detail {

struct UqerAdjacency {
  // out_by_rel[k][i] = sorted tails j of edges (i, k, j); in_by_rel likewise
  // heads of edges (j, k, i); self_by_rel[k] = nodes with a (i, k, i) loop.
  std::vector<std::vector<std::vector<std::size_t>>> out_by_rel, in_by_rel;
  std::vector<std::vector<std::size_t>> self_by_rel;

  explicit UqerAdjacency(const KnowledgeGraph& g) {
    const std::size_t N = g.num_nodes(), R = g.num_relations();
    out_by_rel.assign(R, std::vector<std::vector<std::size_t>>(N));
    in_by_rel.assign(R, std::vector<std::vector<std::size_t>>(N));
    self_by_rel.assign(R, {});
    for (const Triplet& t : g.triplets()) {
      out_by_rel[t.relation][t.head].push_back(t.tail);
      in_by_rel[t.relation][t.tail].push_back(t.head);
      if (t.head == t.tail) self_by_rel[t.relation].push_back(t.head);
    }
  }
};

class UqerSolver {
public:
  UqerSolver(const KnowledgeGraph& g, const UqerClause& clause, std::size_t budget)
      : g_(g), clause_(clause), adj_(g), budget_(budget) {}

  std::set<Triplet> run() {
    const std::size_t R = g_.num_relations();
    if (clause_.num_rel_vars > R) return derived_;  // no injective assignment
    rel_val_.assign(clause_.num_rel_vars, 0);
    rel_used_.assign(R, false);
    for (std::size_t k = 0; k < R; ++k) {
      rel_val_[0] = k;
      rel_used_[k] = true;
      assign_relations(1);
      rel_used_[k] = false;
    }
    return derived_;
  }

private:
  void assign_relations(std::size_t c) {
    if (c == clause_.num_rel_vars) {
      node_val_.assign(clause_.num_node_vars, 0);
      node_set_.assign(g_.num_nodes(), false);
      assign_nodes(0);
      return;
    }
    for (std::size_t r = 0; r < g_.num_relations(); ++r) {
      if (rel_used_[r]) continue;
      rel_val_[c] = r;
      rel_used_[r] = true;
      assign_relations(c + 1);
      rel_used_[r] = false;
    }
  }

  void assign_nodes(std::size_t v) {
    if (v == clause_.num_node_vars) {
      derived_.insert({node_val_[0], rel_val_[0], node_val_[clause_.answer_var - 1]});
      return;
    }
    // Atoms decidable once v is assigned: both variables <= v.
    std::vector<const UqerAtom*> checks;
    const std::vector<std::size_t>* candidates = nullptr;
    for (const UqerAtom& a : clause_.atoms) {
      const std::size_t hi = std::max(a.head_var, a.tail_var);
      if (hi != v) continue;
      checks.push_back(&a);
      if (candidates) continue;
      // Use the first constraining atom to restrict the candidate list.
      if (a.head_var == v && a.tail_var == v) {
        candidates = &adj_.self_by_rel[rel_val_[a.rel_var]];
      } else if (a.head_var == v) {
        candidates = &adj_.in_by_rel[rel_val_[a.rel_var]][node_val_[a.tail_var]];
      } else {
        candidates = &adj_.out_by_rel[rel_val_[a.rel_var]][node_val_[a.head_var]];
      }
    }

    auto try_value = [&](std::size_t x) {
      if (++visits_ > budget_)
        throw RuntimeFailure("uqer: assignment budget exceeded (more than " +
                             std::to_string(budget_) + " candidate visits)");
      if (v >= 2 && node_set_[x]) return;  // E3.. must be distinct from all others
      node_val_[v] = x;
      for (const UqerAtom* a : checks) {
        const Triplet t{node_val_[a->head_var], rel_val_[a->rel_var], node_val_[a->tail_var]};
        if (!g_.contains(t)) return;
      }
      const bool marked = !node_set_[x];
      if (marked) node_set_[x] = true;  // E1 == E2 may share a value
      assign_nodes(v + 1);
      if (marked) node_set_[x] = false;
    };

    if (candidates) {
      for (std::size_t x : *candidates) try_value(x);
    } else {
      for (std::size_t x = 0; x < g_.num_nodes(); ++x) try_value(x);
    }
  }

  const KnowledgeGraph& g_;
  const UqerClause& clause_;
  UqerAdjacency adj_;
  std::size_t budget_;
  std::size_t visits_ = 0;
  std::vector<std::size_t> rel_val_;
  std::vector<bool> rel_used_;
  std::vector<std::size_t> node_val_;
  std::vector<bool> node_set_;
  std::set<Triplet> derived_;
};

}  // namespace detail

inline constexpr std::size_t kUqerDefaultBudget = 10'000'000;

// Derives the clause's consequences over g, sorted and deduplicated. Derived
// triplets are reported whether or not they are already edges of g.
inline std::vector<Triplet> uqer_derive(const KnowledgeGraph& g, const UqerClause& clause,
                                        std::size_t budget = kUqerDefaultBudget) {
  clause.validate();
  detail::UqerSolver solver(g, clause, budget);
  std::set<Triplet> derived = solver.run();
  return std::vector<Triplet>(derived.begin(), derived.end());
}

inline std::vector<Triplet> uqer_derive_union(const KnowledgeGraph& g,
                                              const std::vector<UqerClause>& clauses,
                                              std::size_t budget = kUqerDefaultBudget) {
  std::set<Triplet> all;
  for (const UqerClause& c : clauses) {
    std::vector<Triplet> d = uqer_derive(g, c, budget);
    all.insert(d.begin(), d.end());
  }
  return std::vector<Triplet>(all.begin(), all.end());
}

// The grandparent composition as rules: child -C1-> parent -C2-> grandparent
// implies (child, C1, grandparent). Two clauses cover the two cases C2 != C1
// (injective two-relation clause) and C2 == C1 (single-relation clause).
inline std::vector<UqerClause> fd2_uqer_clauses() {
  UqerClause mixed;
  mixed.num_node_vars = 3;
  mixed.num_rel_vars = 2;
  mixed.answer_var = 2;
  mixed.atoms = {{0, 0, 2}, {2, 1, 1}};  // (E1,C1,E3), (E3,C2,E2)
  UqerClause same;
  same.num_node_vars = 3;
  same.num_rel_vars = 1;
  same.answer_var = 2;
  same.atoms = {{0, 0, 2}, {2, 0, 1}};  // (E1,C1,E3), (E3,C1,E2)
  return {mixed, same};
}

}  // namespace kgdeq
