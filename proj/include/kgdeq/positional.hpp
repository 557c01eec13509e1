#pragma once

// Positional scorers: models that consume explicit per-node and per-relation
// feature rows alongside the graph. Such models are NOT insensitive to
// relabeling on their own, but they satisfy a conditional property that the
// Monte Carlo wrapper (mc.hpp) exploits: relabeling the graph, the queries,
// AND the feature rows together leaves every score unchanged (up to float
// summation order).
//
// RandomFeatureScorer is the reference implementation: fixed seeded mixing
// weights, one relation round driven by relation co-occurrence (how many
// endpoint nodes two relations share), two entity message-passing rounds, and
// a trilinear readout over (head, relation, tail) features.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <unordered_set>
#include <vector>

#include "kgdeq/common.hpp"
#include "kgdeq/graph.hpp"
#include "kgdeq/matrix.hpp"
#include "kgdeq/rng.hpp"

namespace kgdeq {

class PositionalScorer {
public:
  virtual ~PositionalScorer() = default;
  virtual std::size_t feature_dim() const = 0;
  virtual std::vector<double> score_with_embeddings(const KnowledgeGraph& g,
                                                    const std::vector<Triplet>& queries,
                                                    const Matrix<double>& node_features,
                                                    const Matrix<double>& rel_features) const = 0;
};

// Uniform feature draws scaled by fan: entries ~ U(-a, a), a = sqrt(6/(n+d)).
inline Matrix<double> sample_feature_rows(std::size_t n, std::size_t dim, Rng& rng) {
  Matrix<double> m(n, dim);
  const double a = std::sqrt(6.0 / static_cast<double>(n + dim));
  for (auto& v : m.data()) v = rng.uniform(-a, a);
  return m;
}

struct FeatureDraw {
  Matrix<double> node_features;  // N x d
  Matrix<double> rel_features;   // R x d
};

inline FeatureDraw draw_features(std::size_t num_nodes, std::size_t num_relations,
                                 std::size_t dim, std::uint64_t seed) {
  Rng rng = Rng::keyed({seed, 0xfea7ULL});
  FeatureDraw d;
  d.node_features = sample_feature_rows(num_nodes, dim, rng);
  d.rel_features = sample_feature_rows(num_relations, dim, rng);
  return d;
}

class RandomFeatureScorer : public PositionalScorer {
public:
  explicit RandomFeatureScorer(std::size_t dim = 16, std::uint64_t weight_seed = 7)
      : dim_(dim) {
    require(dim >= 1, "RandomFeatureScorer: dim must be >= 1");
    Rng rng = Rng::keyed({0x5c03eULL, weight_seed});
    w_rel_self_ = Matrix<double>(dim, dim);
    w_rel_nbr_ = Matrix<double>(dim, dim);
    w_self_ = Matrix<double>(dim, dim);
    w_nbr_ = Matrix<double>(dim, dim);
    w_rel_self_.glorot_init(rng);
    w_rel_nbr_.glorot_init(rng);
    w_self_.glorot_init(rng);
    w_nbr_.glorot_init(rng);
  }

  std::size_t feature_dim() const override { return dim_; }

  std::vector<double> score_with_embeddings(const KnowledgeGraph& g,
                                            const std::vector<Triplet>& queries,
                                            const Matrix<double>& node_features,
                                            const Matrix<double>& rel_features) const override {
    const std::size_t N = g.num_nodes();
    const std::size_t R = g.num_relations();
    require(node_features.rows() == N && node_features.cols() == dim_,
            "RandomFeatureScorer: node feature shape mismatch");
    require(rel_features.rows() == R && rel_features.cols() == dim_,
            "RandomFeatureScorer: relation feature shape mismatch");

    // Relation round: mix each relation with its co-occurrence profile.
    const std::vector<std::vector<double>> P = cooccurrence_rows(g);
    Matrix<double> r1(R, dim_);
    {
      std::vector<double> mix(dim_), a(dim_), b(dim_);
      for (std::size_t k = 0; k < R; ++k) {
        std::fill(mix.begin(), mix.end(), 0.0);
        for (std::size_t k2 = 0; k2 < R; ++k2) {
          const double p = P[k][k2];
          if (p == 0.0) continue;
          const double* f = rel_features.row(k2);
          for (std::size_t c = 0; c < dim_; ++c) mix[c] += p * f[c];
        }
        w_rel_self_.matvec(rel_features.row(k), a.data());
        w_rel_nbr_.matvec(mix.data(), b.data());
        double* out = r1.row(k);
        for (std::size_t c = 0; c < dim_; ++c) out[c] = std::tanh(a[c] + b[c]);
      }
    }

    // Two entity rounds over relation-modulated incoming messages.
    NeighborIndex idx(g);
    Matrix<double> v = node_features;
    std::vector<double> msg(dim_), a(dim_), b(dim_);
    for (int round = 0; round < 2; ++round) {
      Matrix<double> next(N, dim_);
      for (std::size_t i = 0; i < N; ++i) {
        std::fill(msg.begin(), msg.end(), 0.0);
        const auto& in = idx.in[i];
        for (const auto& [j, k] : in) {
          const double* vj = v.row(j);
          const double* rk = r1.row(k);
          for (std::size_t c = 0; c < dim_; ++c) msg[c] += vj[c] * rk[c];
        }
        if (!in.empty()) {
          const double inv = 1.0 / static_cast<double>(in.size());
          for (std::size_t c = 0; c < dim_; ++c) msg[c] *= inv;
        }
        w_self_.matvec(v.row(i), a.data());
        w_nbr_.matvec(msg.data(), b.data());
        double* out = next.row(i);
        for (std::size_t c = 0; c < dim_; ++c) out[c] = std::tanh(a[c] + b[c]);
      }
      v = std::move(next);
    }

    std::vector<double> scores;
    scores.reserve(queries.size());
    for (const Triplet& q : queries) {
      require(q.head < N && q.tail < N && q.relation < R,
              "RandomFeatureScorer: query out of range");
      const double* vh = v.row(q.head);
      const double* rk = r1.row(q.relation);
      const double* vt = v.row(q.tail);
      double s = 0.0;
      for (std::size_t c = 0; c < dim_; ++c) s += vh[c] * rk[c] * vt[c];
      scores.push_back(s);
    }
    return scores;
  }

private:
  // P[k][k2] = |endpoints(k) ∩ endpoints(k2)| / row sum (0 row if isolated).
  static std::vector<std::vector<double>> cooccurrence_rows(const KnowledgeGraph& g) {
    const std::size_t R = g.num_relations();
    std::vector<std::unordered_set<std::size_t>> endpoints(R);
    for (const Triplet& t : g.triplets()) {
      endpoints[t.relation].insert(t.head);
      endpoints[t.relation].insert(t.tail);
    }
    std::vector<std::vector<double>> P(R, std::vector<double>(R, 0.0));
    for (std::size_t k = 0; k < R; ++k) {
      double sum = 0.0;
      for (std::size_t k2 = 0; k2 < R; ++k2) {
        std::size_t common = 0;
        const auto& small = endpoints[k].size() <= endpoints[k2].size() ? endpoints[k]
                                                                        : endpoints[k2];
        const auto& big = endpoints[k].size() <= endpoints[k2].size() ? endpoints[k2]
                                                                      : endpoints[k];
        for (std::size_t e : small)
          if (big.count(e)) common += 1;
        P[k][k2] = static_cast<double>(common);
        sum += P[k][k2];
      }
      if (sum > 0.0)
        for (std::size_t k2 = 0; k2 < R; ++k2) P[k][k2] /= sum;
    }
    return P;
  }

  std::size_t dim_;
  Matrix<double> w_rel_self_, w_rel_nbr_, w_self_, w_nbr_;
};

}  // namespace kgdeq
