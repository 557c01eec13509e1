#pragma once

// Relation-conditioned node encoder with paired channels.
//
// For every relation k the encoder computes, per node i, two feature chains:
//   * a channel chain driven by the in-neighborhood under k itself, and
//   * a complement chain driven by the in-neighborhood under every relation
//     other than k.
// Both chains share weights across relations (the k-chain has one weight set,
// the complement chain another), which is what makes the encoding insensitive
// to how nodes and relations happen to be numbered.
//
// The input feature is the constant scalar 1, so layer 0 maps dimension 1 to
// `hidden_dim`; deeper layers are dimension-preserving and aggregate over the
// union in-neighborhood (all relations), keeping the two chains' weights
// separate. There are no nonlinearities between propagation layers; instead
// the per-layer outputs are concatenated and passed through a small MLP per
// chain, and the two MLP outputs are summed into the final embedding X[k][i].
//
// A triplet (i,k,j) is scored by a sigmoid head over
// [X[k][i] ; X[k][j] ; enc(d(i,j)) ; enc(d(j,i))], where d is the
// query-excluded shortest-path distance.
//
// All forward passes are deterministic; backward passes are hand-written and
// validated against central finite differences.

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "kgdeq/common.hpp"
#include "kgdeq/distance.hpp"
#include "kgdeq/graph.hpp"
#include "kgdeq/matrix.hpp"
#include "kgdeq/rng.hpp"

namespace kgdeq {

enum class Aggregation { kMean, kSum, kMax };

inline Aggregation parse_aggregation(const std::string& s) {
  if (s == "mean") return Aggregation::kMean;
  if (s == "sum") return Aggregation::kSum;
  if (s == "max") return Aggregation::kMax;
  throw ValidationError("unknown aggregation '" + s + "' (expected mean|sum|max)");
}

inline std::string aggregation_name(Aggregation a) {
  switch (a) {
    case Aggregation::kMean: return "mean";
    case Aggregation::kSum: return "sum";
    case Aggregation::kMax: return "max";
  }
  return "mean";
}

struct EncoderConfig {
  std::size_t num_layers = 2;   // propagation layers per chain (>= 1)
  std::size_t hidden_dim = 32;  // width of every propagation layer output
  Aggregation aggregation = Aggregation::kMean;
  bool use_distance = true;
  std::size_t distance_cap = 10;
  std::vector<std::size_t> mlp_hidden_dims = {32};   // per-chain combiner MLP
  std::vector<std::size_t> head_hidden_dims = {32};  // scoring head
  std::uint64_t seed = 0;

  std::size_t concat_dim() const { return 1 + num_layers * hidden_dim; }
  std::size_t head_input_dim() const { return 2 * hidden_dim + (use_distance ? 2 : 0); }

  void validate() const {
    require(num_layers >= 1, "EncoderConfig: num_layers must be >= 1");
    require(hidden_dim >= 1, "EncoderConfig: hidden_dim must be >= 1");
    require(distance_cap >= 1, "EncoderConfig: distance_cap must be >= 1");
    for (std::size_t h : mlp_hidden_dims)
      require(h >= 1, "EncoderConfig: mlp hidden dims must be >= 1");
    for (std::size_t h : head_hidden_dims)
      require(h >= 1, "EncoderConfig: head hidden dims must be >= 1");
  }
};

// ---------------------------------------------------------------------------
// Small MLP on row matrices: Linear -> ReLU -> ... -> Linear (no final ReLU).

template <class Real>
struct Mlp {
  std::vector<Matrix<Real>> w;  // layer l: (out_l x in_l)
  std::vector<Matrix<Real>> b;  // layer l: (out_l x 1)
};

template <class Real>
inline Mlp<Real> make_mlp(const std::vector<std::size_t>& dims) {
  require(dims.size() >= 2, "make_mlp: need input and output dims");
  Mlp<Real> m;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    m.w.emplace_back(dims[l + 1], dims[l]);
    m.b.emplace_back(dims[l + 1], 1);
  }
  return m;
}

template <class Real>
struct MlpTrace {
  std::vector<Matrix<Real>> inputs;  // input rows to each layer
  std::vector<Matrix<Real>> pre;     // pre-activation rows of each layer
};

template <class Real>
inline Matrix<Real> mlp_forward_rows(const Mlp<Real>& m, const Matrix<Real>& x,
                                     MlpTrace<Real>* trace) {
  const std::size_t L = m.w.size();
  Matrix<Real> cur = x;
  if (trace) {
    trace->inputs.clear();
    trace->pre.clear();
  }
  for (std::size_t l = 0; l < L; ++l) {
    require(cur.cols() == m.w[l].cols(), "mlp_forward_rows: dimension mismatch");
    Matrix<Real> z(cur.rows(), m.w[l].rows());
    for (std::size_t r = 0; r < cur.rows(); ++r) {
      m.w[l].matvec(cur.row(r), z.row(r));
      Real* zr = z.row(r);
      for (std::size_t c = 0; c < z.cols(); ++c) zr[c] += m.b[l].at(c, 0);
    }
    if (trace) {
      trace->inputs.push_back(std::move(cur));
      trace->pre.push_back(z);
    }
    if (l + 1 < L) {
      for (auto& v : z.data())
        if (v < Real(0)) v = Real(0);
    }
    cur = std::move(z);
  }
  return cur;
}

// Backward through the MLP. `dout` is the gradient w.r.t. the final output
// rows; weight/bias gradients are accumulated into `grads`; if `dinput` is
// non-null the gradient w.r.t. the input rows is accumulated there.
template <class Real>
inline void mlp_backward_rows(const Mlp<Real>& m, const MlpTrace<Real>& trace,
                              const Matrix<Real>& dout, Mlp<Real>& grads, Matrix<Real>* dinput) {
  const std::size_t L = m.w.size();
  Matrix<Real> dz = dout;
  for (std::size_t li = L; li-- > 0;) {
    if (li + 1 < L) {
      // dz currently holds the gradient w.r.t. relu(pre[li]).
      const Matrix<Real>& pre = trace.pre[li];
      for (std::size_t idx = 0; idx < dz.size(); ++idx)
        if (pre.data()[idx] <= Real(0)) dz.data()[idx] = Real(0);
    }
    const Matrix<Real>& in = trace.inputs[li];
    Matrix<Real> din(in.rows(), in.cols());
    for (std::size_t r = 0; r < in.rows(); ++r) {
      grads.w[li].add_outer(Real(1), dz.row(r), in.row(r));
      const Real* dzr = dz.row(r);
      for (std::size_t c = 0; c < dz.cols(); ++c) grads.b[li].at(c, 0) += dzr[c];
      m.w[li].matvec_transpose_add(dzr, din.row(r));
    }
    if (li == 0) {
      if (dinput) {
        for (std::size_t idx = 0; idx < din.size(); ++idx)
          dinput->data()[idx] += din.data()[idx];
      }
    } else {
      dz = std::move(din);
    }
  }
}

// ---------------------------------------------------------------------------
// Parameters.

template <class Real>
struct EncoderParams {
  EncoderConfig config;
  // Propagation layer t: channel chain (suffix _ch) and complement chain
  // (suffix _co). Layer 0 is (d x 1); deeper layers are (d x d).
  std::vector<Matrix<Real>> w_self_ch, w_nbr_ch, w_self_co, w_nbr_co;
  Mlp<Real> mlp_channel;     // concat_dim -> ... -> hidden_dim
  Mlp<Real> mlp_complement;  // concat_dim -> ... -> hidden_dim
  Mlp<Real> head;            // head_input_dim -> ... -> 1
};

// Visits every parameter matrix in a fixed order. The callback receives
// (name, matrix, is_bias).
template <class Params, class Fn>
inline void for_each_param(Params& p, Fn&& f) {
  const std::size_t T = p.config.num_layers;
  for (std::size_t t = 0; t < T; ++t) {
    const std::string base = "prop" + std::to_string(t);
    f(base + ".channel.self", p.w_self_ch[t], false);
    f(base + ".channel.neighbor", p.w_nbr_ch[t], false);
    f(base + ".complement.self", p.w_self_co[t], false);
    f(base + ".complement.neighbor", p.w_nbr_co[t], false);
  }
  auto visit_mlp = [&](const std::string& base, auto& mlp) {
    for (std::size_t l = 0; l < mlp.w.size(); ++l) {
      f(base + ".w" + std::to_string(l), mlp.w[l], false);
      f(base + ".b" + std::to_string(l), mlp.b[l], true);
    }
  };
  visit_mlp("mlp_channel", p.mlp_channel);
  visit_mlp("mlp_complement", p.mlp_complement);
  visit_mlp("head", p.head);
}

template <class Real>
inline std::size_t count_parameters(const EncoderParams<Real>& p) {
  std::size_t n = 0;
  for_each_param(p, [&](const std::string&, const Matrix<Real>& m, bool) { n += m.size(); });
  return n;
}

// Fresh parameters with seeded uniform fan-balanced init; biases start at 0.
template <class Real = double>
inline EncoderParams<Real> init_encoder(const EncoderConfig& config) {
  config.validate();
  EncoderParams<Real> p;
  p.config = config;
  const std::size_t d = config.hidden_dim;
  for (std::size_t t = 0; t < config.num_layers; ++t) {
    const std::size_t din = (t == 0) ? 1 : d;
    p.w_self_ch.emplace_back(d, din);
    p.w_nbr_ch.emplace_back(d, din);
    p.w_self_co.emplace_back(d, din);
    p.w_nbr_co.emplace_back(d, din);
  }
  std::vector<std::size_t> mlp_dims{config.concat_dim()};
  mlp_dims.insert(mlp_dims.end(), config.mlp_hidden_dims.begin(), config.mlp_hidden_dims.end());
  mlp_dims.push_back(d);
  p.mlp_channel = make_mlp<Real>(mlp_dims);
  p.mlp_complement = make_mlp<Real>(mlp_dims);
  std::vector<std::size_t> head_dims{config.head_input_dim()};
  head_dims.insert(head_dims.end(), config.head_hidden_dims.begin(), config.head_hidden_dims.end());
  head_dims.push_back(1);
  p.head = make_mlp<Real>(head_dims);

  Rng rng = Rng::keyed({0x1c0de, config.seed});
  for_each_param(p, [&](const std::string&, Matrix<Real>& m, bool is_bias) {
    if (is_bias) {
      m.fill(Real(0));
    } else {
      m.glorot_init(rng);
    }
  });
  return p;
}

// Same-shaped parameter container filled with zeros (gradient accumulator).
template <class Real>
inline EncoderParams<Real> zero_gradients(const EncoderParams<Real>& p) {
  EncoderParams<Real> g = p;
  for_each_param(g, [](const std::string&, Matrix<Real>& m, bool) { m.fill(Real(0)); });
  return g;
}

// ---------------------------------------------------------------------------
// Neighborhood aggregation.

namespace detail {

// out[i] = AGG over j in lists[i] of src[j]; empty neighborhoods yield zero.
template <class Real>
inline void aggregate_rows(const Matrix<Real>& src,
                           const std::vector<std::vector<std::size_t>>& lists, Aggregation agg,
                           Matrix<Real>& out) {
  const std::size_t din = src.cols();
  out.fill(Real(0));
  for (std::size_t i = 0; i < lists.size(); ++i) {
    const auto& nb = lists[i];
    if (nb.empty()) continue;
    Real* o = out.row(i);
    if (agg == Aggregation::kMax) {
      for (std::size_t c = 0; c < din; ++c) {
        Real best = src.at(nb[0], c);
        for (std::size_t u = 1; u < nb.size(); ++u) best = std::max(best, src.at(nb[u], c));
        o[c] = best;
      }
    } else {
      for (std::size_t j : nb) {
        const Real* s = src.row(j);
        for (std::size_t c = 0; c < din; ++c) o[c] += s[c];
      }
      if (agg == Aggregation::kMean) {
        const Real inv = Real(1) / static_cast<Real>(nb.size());
        for (std::size_t c = 0; c < din; ++c) o[c] *= inv;
      }
    }
  }
}

// Scatter the gradient of the aggregate back to the source rows. For max,
// the gradient is routed to the first attaining index (deterministic).
template <class Real>
inline void aggregate_rows_backward(const Matrix<Real>& src,
                                    const std::vector<std::vector<std::size_t>>& lists,
                                    Aggregation agg, const Matrix<Real>& dagg,
                                    Matrix<Real>& dsrc) {
  const std::size_t din = src.cols();
  for (std::size_t i = 0; i < lists.size(); ++i) {
    const auto& nb = lists[i];
    if (nb.empty()) continue;
    const Real* da = dagg.row(i);
    if (agg == Aggregation::kMax) {
      for (std::size_t c = 0; c < din; ++c) {
        std::size_t arg = nb[0];
        Real best = src.at(nb[0], c);
        for (std::size_t u = 1; u < nb.size(); ++u) {
          if (src.at(nb[u], c) > best) {
            best = src.at(nb[u], c);
            arg = nb[u];
          }
        }
        dsrc.at(arg, c) += da[c];
      }
    } else {
      const Real scale = (agg == Aggregation::kMean) ? Real(1) / static_cast<Real>(nb.size())
                                                     : Real(1);
      for (std::size_t j : nb) {
        Real* dst = dsrc.row(j);
        for (std::size_t c = 0; c < din; ++c) dst[c] += scale * da[c];
      }
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Per-relation channel computation.

template <class Real>
struct ChannelActivations {
  // h = relation-k chain, c = complement chain. Index 0 is the constant input
  // (N x 1); index t in [1, T] is the output of propagation layer t-1 (N x d).
  std::vector<Matrix<Real>> h, c;
  // Aggregated neighbor inputs consumed by each propagation layer (saved for
  // the backward pass).
  std::vector<Matrix<Real>> hagg, cagg;
  Matrix<Real> hcat, ccat;  // N x (1 + T*d) concatenations
  MlpTrace<Real> mlp1_trace, mlp2_trace;
  Matrix<Real> x;  // N x d final embedding for this relation
};

// Shared per-graph adjacency material for the encoder.
struct EncoderAdjacency {
  const NeighborIndex* idx = nullptr;
  // Distinct union in-neighbors per node (same for every relation; used by
  // deep layers of both chains).
  std::vector<std::vector<std::size_t>> deep;

  explicit EncoderAdjacency(const NeighborIndex& index) : idx(&index) {
    deep.resize(index.in_union.size());
    for (std::size_t i = 0; i < deep.size(); ++i) {
      deep[i].reserve(index.in_union[i].size());
      for (const auto& [j, mult] : index.in_union[i]) {
        (void)mult;
        deep[i].push_back(j);
      }
    }
  }

  // In-neighbors of each node via relations other than k: j qualifies when it
  // reaches the node through at least one non-k relation.
  std::vector<std::vector<std::size_t>> complement_lists(std::size_t k) const {
    const auto& by_k = idx->in_by_rel[k];
    std::vector<std::vector<std::size_t>> lists(deep.size());
    for (std::size_t i = 0; i < deep.size(); ++i) {
      const auto& uni = idx->in_union[i];
      const auto& direct = by_k[i];
      std::size_t p = 0;
      for (const auto& [j, mult] : uni) {
        while (p < direct.size() && direct[p] < j) ++p;
        const std::size_t in_k = (p < direct.size() && direct[p] == j) ? 1 : 0;
        if (mult > in_k) lists[i].push_back(j);
      }
    }
    return lists;
  }
};

namespace detail {

template <class Real>
inline void propagate_forward(const Matrix<Real>& w_self, const Matrix<Real>& w_nbr,
                              const Matrix<Real>& hin, const Matrix<Real>& agg,
                              Matrix<Real>& hout) {
  const std::size_t N = hin.rows();
  std::vector<Real> tmp(w_self.rows());
  for (std::size_t i = 0; i < N; ++i) {
    Real* o = hout.row(i);
    w_self.matvec(hin.row(i), o);
    w_nbr.matvec(agg.row(i), tmp.data());
    for (std::size_t c = 0; c < hout.cols(); ++c) o[c] += tmp[c];
  }
}

}  // namespace detail

template <class Real>
inline ChannelActivations<Real> compute_channel(const EncoderParams<Real>& params,
                                                const EncoderAdjacency& adj, std::size_t k,
                                                bool keep_trace) {
  const EncoderConfig& cfg = params.config;
  const std::size_t N = adj.deep.size();
  const std::size_t d = cfg.hidden_dim;
  const std::size_t T = cfg.num_layers;

  ChannelActivations<Real> act;
  act.h.assign(1, Matrix<Real>(N, 1, Real(1)));
  act.c.assign(1, Matrix<Real>(N, 1, Real(1)));

  const auto& layer0_channel = adj.idx->in_by_rel[k];
  const auto layer0_complement = adj.complement_lists(k);

  for (std::size_t t = 0; t < T; ++t) {
    const auto& h_lists = (t == 0) ? layer0_channel : adj.deep;
    const auto& c_lists = (t == 0) ? layer0_complement : adj.deep;
    const Matrix<Real>& hin = act.h.back();
    const Matrix<Real>& cin = act.c.back();

    Matrix<Real> hagg(N, hin.cols()), cagg(N, cin.cols());
    detail::aggregate_rows(hin, h_lists, cfg.aggregation, hagg);
    detail::aggregate_rows(cin, c_lists, cfg.aggregation, cagg);

    Matrix<Real> hout(N, d), cout(N, d);
    detail::propagate_forward(params.w_self_ch[t], params.w_nbr_ch[t], hin, hagg, hout);
    detail::propagate_forward(params.w_self_co[t], params.w_nbr_co[t], cin, cagg, cout);

    act.hagg.push_back(std::move(hagg));
    act.cagg.push_back(std::move(cagg));
    act.h.push_back(std::move(hout));
    act.c.push_back(std::move(cout));
  }

  const std::size_t cd = cfg.concat_dim();
  act.hcat = Matrix<Real>(N, cd);
  act.ccat = Matrix<Real>(N, cd);
  for (std::size_t i = 0; i < N; ++i) {
    std::size_t col = 0;
    for (std::size_t t = 0; t <= T; ++t) {
      const std::size_t w = act.h[t].cols();
      for (std::size_t c = 0; c < w; ++c, ++col) {
        act.hcat.at(i, col) = act.h[t].at(i, c);
        act.ccat.at(i, col) = act.c[t].at(i, c);
      }
    }
  }

  Matrix<Real> x1 = mlp_forward_rows(params.mlp_channel, act.hcat,
                                     keep_trace ? &act.mlp1_trace : nullptr);
  Matrix<Real> x2 = mlp_forward_rows(params.mlp_complement, act.ccat,
                                     keep_trace ? &act.mlp2_trace : nullptr);
  act.x = Matrix<Real>(N, d);
  for (std::size_t idx2 = 0; idx2 < act.x.size(); ++idx2)
    act.x.data()[idx2] = x1.data()[idx2] + x2.data()[idx2];

  if (!keep_trace) {
    act.hagg.clear();
    act.cagg.clear();
  }
  return act;
}

// Backward through one relation channel: dX (N x d) -> accumulate weight
// gradients. Requires the activations to have been computed with traces.
template <class Real>
inline void channel_backward(const EncoderParams<Real>& params, const EncoderAdjacency& adj,
                             std::size_t k, const ChannelActivations<Real>& act,
                             const Matrix<Real>& dx, EncoderParams<Real>& grads) {
  const EncoderConfig& cfg = params.config;
  const std::size_t N = adj.deep.size();
  const std::size_t T = cfg.num_layers;

  Matrix<Real> dhcat(N, cfg.concat_dim());
  Matrix<Real> dccat(N, cfg.concat_dim());
  mlp_backward_rows(params.mlp_channel, act.mlp1_trace, dx, grads.mlp_channel, &dhcat);
  mlp_backward_rows(params.mlp_complement, act.mlp2_trace, dx, grads.mlp_complement, &dccat);

  // Split the concat gradient into per-layer slices.
  std::vector<Matrix<Real>> dh(T + 1), dc(T + 1);
  {
    std::size_t col = 0;
    for (std::size_t t = 0; t <= T; ++t) {
      const std::size_t w = act.h[t].cols();
      dh[t] = Matrix<Real>(N, w);
      dc[t] = Matrix<Real>(N, w);
      for (std::size_t i = 0; i < N; ++i)
        for (std::size_t c = 0; c < w; ++c) {
          dh[t].at(i, c) = dhcat.at(i, col + c);
          dc[t].at(i, c) = dccat.at(i, col + c);
        }
      col += w;
    }
  }

  const auto& layer0_channel = adj.idx->in_by_rel[k];
  const auto layer0_complement = adj.complement_lists(k);

  for (std::size_t t = T; t-- > 0;) {
    const auto& h_lists = (t == 0) ? layer0_channel : adj.deep;
    const auto& c_lists = (t == 0) ? layer0_complement : adj.deep;
    const Matrix<Real>& hin = act.h[t];
    const Matrix<Real>& cin = act.c[t];
    const Matrix<Real>& dhout = dh[t + 1];
    const Matrix<Real>& dcout = dc[t + 1];

    Matrix<Real> dhagg(N, hin.cols()), dcagg(N, cin.cols());
    for (std::size_t i = 0; i < N; ++i) {
      grads.w_self_ch[t].add_outer(Real(1), dhout.row(i), hin.row(i));
      grads.w_nbr_ch[t].add_outer(Real(1), dhout.row(i), act.hagg[t].row(i));
      grads.w_self_co[t].add_outer(Real(1), dcout.row(i), cin.row(i));
      grads.w_nbr_co[t].add_outer(Real(1), dcout.row(i), act.cagg[t].row(i));
      params.w_self_ch[t].matvec_transpose_add(dhout.row(i), dh[t].row(i));
      params.w_self_co[t].matvec_transpose_add(dcout.row(i), dc[t].row(i));
      params.w_nbr_ch[t].matvec_transpose_add(dhout.row(i), dhagg.row(i));
      params.w_nbr_co[t].matvec_transpose_add(dcout.row(i), dcagg.row(i));
    }
    detail::aggregate_rows_backward(hin, h_lists, cfg.aggregation, dhagg, dh[t]);
    detail::aggregate_rows_backward(cin, c_lists, cfg.aggregation, dcagg, dc[t]);
    // dh[0]/dc[0] reach the constant input and are discarded.
  }
}

// ---------------------------------------------------------------------------
// Scoring context: one parameter/graph binding, lazily computed channels.

template <class Real>
inline Real stable_sigmoid(Real z) {
  if (z >= Real(0)) {
    const Real e = std::exp(-z);
    return Real(1) / (Real(1) + e);
  }
  const Real e = std::exp(z);
  return e / (Real(1) + e);
}

template <class Real>
struct ForwardResult {
  std::vector<Real> logits;
  std::vector<Real> scores;
};

template <class Real>
class ScoringContext {
public:
  ScoringContext(const EncoderParams<Real>& params, const KnowledgeGraph& g,
                 const EncoderAdjacency& adj, bool keep_trace)
      : params_(params), graph_(g), adj_(adj), keep_trace_(keep_trace) {}

  const ChannelActivations<Real>& channel(std::size_t k) {
    require(k < graph_.num_relations(), "ScoringContext: relation index out of range");
    auto it = channels_.find(k);
    if (it != channels_.end()) return it->second;
    auto [ins, ok] = channels_.emplace(k, compute_channel(params_, adj_, k, keep_trace_));
    (void)ok;
    return ins->second;
  }

  const Matrix<Real>& embeddings(std::size_t k) { return channel(k).x; }

  // Scores `queries`; `feats[q]` are the distance features of queries[q]
  // (ignored when the config disables distances).
  ForwardResult<Real> forward(const std::vector<Triplet>& queries,
                              const std::vector<DistanceFeature>& feats) {
    const EncoderConfig& cfg = params_.config;
    if (cfg.use_distance)
      require(feats.size() == queries.size(), "ScoringContext: feats/queries length mismatch");
    const std::size_t d = cfg.hidden_dim;
    const std::size_t hin = cfg.head_input_dim();
    Matrix<Real> z(queries.size(), hin);
    for (std::size_t q = 0; q < queries.size(); ++q) {
      const Triplet& t = queries[q];
      require(t.head < graph_.num_nodes() && t.tail < graph_.num_nodes(),
              "ScoringContext: query node out of range");
      const Matrix<Real>& x = channel(t.relation).x;
      Real* zr = z.row(q);
      for (std::size_t c = 0; c < d; ++c) zr[c] = x.at(t.head, c);
      for (std::size_t c = 0; c < d; ++c) zr[d + c] = x.at(t.tail, c);
      if (cfg.use_distance) {
        zr[2 * d] = encode_distance<Real>(feats[q].dist_forward, cfg.distance_cap);
        zr[2 * d + 1] = encode_distance<Real>(feats[q].dist_backward, cfg.distance_cap);
      }
    }
    last_queries_ = queries;
    Matrix<Real> logits = mlp_forward_rows(params_.head, z, keep_trace_ ? &head_trace_ : nullptr);
    ForwardResult<Real> out;
    out.logits.resize(queries.size());
    out.scores.resize(queries.size());
    for (std::size_t q = 0; q < queries.size(); ++q) {
      out.logits[q] = logits.at(q, 0);
      out.scores[q] = stable_sigmoid(out.logits[q]);
    }
    return out;
  }

  // Backward for the most recent forward: `dlogit[q]` is dL/d(logit of query
  // q). Accumulates into `grads` (created via zero_gradients).
  void backward(const std::vector<Real>& dlogit, EncoderParams<Real>& grads) {
    require(keep_trace_, "ScoringContext: backward requires keep_trace");
    require(dlogit.size() == last_queries_.size(),
            "ScoringContext: dlogit length mismatch with last forward");
    const EncoderConfig& cfg = params_.config;
    const std::size_t d = cfg.hidden_dim;
    Matrix<Real> dout(dlogit.size(), 1);
    for (std::size_t q = 0; q < dlogit.size(); ++q) dout.at(q, 0) = dlogit[q];
    Matrix<Real> dz(dlogit.size(), cfg.head_input_dim());
    mlp_backward_rows(params_.head, head_trace_, dout, grads.head, &dz);

    // Route the embedding part of dz into per-relation dX accumulators.
    std::map<std::size_t, Matrix<Real>> dx;
    for (std::size_t q = 0; q < last_queries_.size(); ++q) {
      const Triplet& t = last_queries_[q];
      auto it = dx.find(t.relation);
      if (it == dx.end())
        it = dx.emplace(t.relation, Matrix<Real>(graph_.num_nodes(), d)).first;
      Matrix<Real>& m = it->second;
      const Real* dzr = dz.row(q);
      for (std::size_t c = 0; c < d; ++c) m.at(t.head, c) += dzr[c];
      for (std::size_t c = 0; c < d; ++c) m.at(t.tail, c) += dzr[d + c];
    }
    for (auto& [k, dxk] : dx) channel_backward(params_, adj_, k, channel(k), dxk, grads);
  }

private:
  const EncoderParams<Real>& params_;
  const KnowledgeGraph& graph_;
  const EncoderAdjacency& adj_;
  bool keep_trace_;
  std::map<std::size_t, ChannelActivations<Real>> channels_;
  std::vector<Triplet> last_queries_;
  MlpTrace<Real> head_trace_;
};

// ---------------------------------------------------------------------------
// Whole-graph embeddings and one-shot scoring.

template <class Real>
struct NodeRelEmbeddings {
  std::size_t num_nodes = 0, num_relations = 0, hidden_dim = 0;
  std::vector<Matrix<Real>> channel_concat;     // per k: N x (1+T*d)
  std::vector<Matrix<Real>> complement_concat;  // per k: N x (1+T*d)
  std::vector<Matrix<Real>> embeddings;         // per k: N x d (X)
};

template <class Real>
inline NodeRelEmbeddings<Real> encode_nodes(const EncoderParams<Real>& params,
                                            const KnowledgeGraph& g) {
  NeighborIndex idx(g);
  EncoderAdjacency adj(idx);
  NodeRelEmbeddings<Real> out;
  out.num_nodes = g.num_nodes();
  out.num_relations = g.num_relations();
  out.hidden_dim = params.config.hidden_dim;
  for (std::size_t k = 0; k < g.num_relations(); ++k) {
    ChannelActivations<Real> act = compute_channel(params, adj, k, /*keep_trace=*/false);
    out.channel_concat.push_back(std::move(act.hcat));
    out.complement_concat.push_back(std::move(act.ccat));
    out.embeddings.push_back(std::move(act.x));
  }
  return out;
}

// Scores queries against `g` exactly as given (no inverse augmentation);
// distances exclude each query triplet itself.
template <class Real>
inline std::vector<Real> score_triplets(const EncoderParams<Real>& params,
                                        const KnowledgeGraph& g,
                                        const std::vector<Triplet>& queries) {
  NeighborIndex idx(g);
  EncoderAdjacency adj(idx);
  std::vector<DistanceFeature> feats;
  if (params.config.use_distance)
    feats = distance_features(g, idx, queries, params.config.distance_cap);
  ScoringContext<Real> ctx(params, g, adj, /*keep_trace=*/false);
  return ctx.forward(queries, feats).scores;
}

// Canonical inference scorer: owns an inverse-augmented copy of the observed
// graph, and excludes both the query triplet and its inverse twin from the
// distance computation. Queries use original relation ids.
template <class Real>
class ScoringPipeline {
public:
  ScoringPipeline(const EncoderParams<Real>& params, const KnowledgeGraph& observed,
                  bool augment = true)
      : params_(params),
        original_relations_(observed.num_relations()),
        augment_(augment),
        graph_(augment ? augment_inverses(observed) : observed),
        idx_(graph_),
        adj_(idx_),
        ctx_(params_, graph_, adj_, /*keep_trace=*/false) {}

  const KnowledgeGraph& graph() const { return graph_; }
  std::size_t original_relations() const { return original_relations_; }

  std::vector<Real> score(const std::vector<Triplet>& queries) {
    for (const Triplet& q : queries)
      require(q.relation < original_relations_,
              "ScoringPipeline: query relation out of range");
    std::vector<DistanceFeature> feats;
    if (params_.config.use_distance) {
      std::vector<std::vector<Triplet>> extra(queries.size());
      if (augment_) {
        for (std::size_t i = 0; i < queries.size(); ++i) {
          const Triplet& q = queries[i];
          extra[i].push_back({q.tail, q.relation + original_relations_, q.head});
        }
      }
      feats = distance_features(graph_, idx_, queries, params_.config.distance_cap, &extra);
    }
    return ctx_.forward(queries, feats).scores;
  }

  // Final embedding X[k] on the (augmented) graph, original relation id k.
  const Matrix<Real>& embeddings(std::size_t k) { return ctx_.embeddings(k); }

private:
  const EncoderParams<Real>& params_;
  std::size_t original_relations_;
  bool augment_;
  KnowledgeGraph graph_;
  NeighborIndex idx_;
  EncoderAdjacency adj_;
  ScoringContext<Real> ctx_;
};

}  // namespace kgdeq
