#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "relgraph/autodiff.hpp"
#include "relgraph/errors.hpp"
#include "relgraph/graph.hpp"
#include "relgraph/rng.hpp"
#include "relgraph/tensor.hpp"
#include "relgraph/tokenizer.hpp"
#include "relgraph/vocabulary.hpp"

namespace relgraph {

// --- parameter groups -------------------------------------------------------

struct EncoderBlock {
    Param Wq, Wk, Wv, Wo;  // attention, each d_model × d_model
    Param W1, b1, W2, b2;  // feedforward d_model → d_ff → d_model
};

struct EncoderParams {
    std::size_t vocab_size = 0;
    std::size_t d_model = 0;
    std::size_t max_seq_len = 0;
    std::size_t n_enc = 0;
    std::size_t d_ff = 0;
    bool frozen = false;
    Param tok_emb;  // vocab_size × d_model
    Param pos_emb;  // max_seq_len × d_model
    std::vector<EncoderBlock> blocks;

    template <typename F>
    void for_each_param(F&& f) {
        f(tok_emb);
        f(pos_emb);
        for (EncoderBlock& blk : blocks) {
            f(blk.Wq);
            f(blk.Wk);
            f(blk.Wv);
            f(blk.Wo);
            f(blk.W1);
            f(blk.b1);
            f(blk.W2);
            f(blk.b2);
        }
    }
};

struct GCNParams {
    std::size_t num_layers = 0;
    std::size_t d_model = 0;
    std::vector<Param> W;  // each d_model × d_model
    std::vector<Param> b;  // each 1 × d_model
    // Learned additive lift of the optional column-statistics channel into
    // model space; zero-initialized so the core model starts stats-blind.
    Param stats_lift;  // kStatsDim × d_model

    template <typename F>
    void for_each_param(F&& f) {
        for (std::size_t l = 0; l < num_layers; ++l) {
            f(W[l]);
            f(b[l]);
        }
        f(stats_lift);
    }
};

struct DecoderParams {
    std::size_t vocab_size = 0;
    std::size_t d_model = 0;
    std::size_t max_decode_len = 0;
    bool frozen = false;
    Param Wout;      // d_model × vocab_size
    Param bout;      // 1 × vocab_size
    Param step_emb;  // max_decode_len × d_model

    template <typename F>
    void for_each_param(F&& f) {
        f(Wout);
        f(bout);
        f(step_emb);
    }
};

struct ModelConfig {
    std::size_t vocab_size = 0;
    std::size_t d_model = 64;
    std::size_t max_seq_len = 64;
    std::size_t n_enc = 1;
    std::size_t d_ff = 0;  // 0 → 2 · d_model
    std::size_t gcn_layers = 2;
    std::size_t max_decode_len = 4;
};

struct ModelState {
    EncoderParams enc;
    GCNParams gcn;
    DecoderParams dec;
    std::uint64_t step = 0;
    std::uint64_t seed = 0;
    bool grads_ready = false;

    // Canonical parameter order: encoder, GCN, decoder — the order used by
    // initialization, Adam, checkpoints, and fingerprints alike.
    template <typename F>
    void for_each_param(F&& f) {
        enc.for_each_param([&](Param& p) { f(p, enc.frozen); });
        gcn.for_each_param([&](Param& p) { f(p, false); });
        dec.for_each_param([&](Param& p) { f(p, dec.frozen); });
    }

    void zero_grads() {
        for_each_param([](Param& p, bool) { p.grad.zero(); });
        grads_ready = false;
    }

    void note_backward() { grads_ready = true; }
};

inline ModelState init_model(const ModelConfig& cfg, std::uint64_t seed) {
    if (cfg.vocab_size == 0 || cfg.d_model == 0 || cfg.max_seq_len == 0 ||
        cfg.gcn_layers == 0 || cfg.max_decode_len == 0)
        throw InvalidSpec("model dimensions must be positive");
    ModelState s;
    s.seed = seed;

    s.enc.vocab_size = cfg.vocab_size;
    s.enc.d_model = cfg.d_model;
    s.enc.max_seq_len = cfg.max_seq_len;
    s.enc.n_enc = cfg.n_enc;
    s.enc.d_ff = cfg.d_ff ? cfg.d_ff : 2 * cfg.d_model;
    s.enc.tok_emb.init(cfg.vocab_size, cfg.d_model);
    s.enc.pos_emb.init(cfg.max_seq_len, cfg.d_model);
    s.enc.blocks.resize(cfg.n_enc);
    for (EncoderBlock& blk : s.enc.blocks) {
        blk.Wq.init(cfg.d_model, cfg.d_model);
        blk.Wk.init(cfg.d_model, cfg.d_model);
        blk.Wv.init(cfg.d_model, cfg.d_model);
        blk.Wo.init(cfg.d_model, cfg.d_model);
        blk.W1.init(cfg.d_model, s.enc.d_ff);
        blk.b1.init(1, s.enc.d_ff);
        blk.W2.init(s.enc.d_ff, cfg.d_model);
        blk.b2.init(1, cfg.d_model);
    }

    s.gcn.num_layers = cfg.gcn_layers;
    s.gcn.d_model = cfg.d_model;
    s.gcn.W.resize(cfg.gcn_layers);
    s.gcn.b.resize(cfg.gcn_layers);
    for (std::size_t l = 0; l < cfg.gcn_layers; ++l) {
        s.gcn.W[l].init(cfg.d_model, cfg.d_model);
        s.gcn.b[l].init(1, cfg.d_model);
    }
    s.gcn.stats_lift.init(kStatsDim, cfg.d_model);

    s.dec.vocab_size = cfg.vocab_size;
    s.dec.d_model = cfg.d_model;
    s.dec.max_decode_len = cfg.max_decode_len;
    s.dec.Wout.init(cfg.d_model, cfg.vocab_size);
    s.dec.bout.init(1, cfg.vocab_size);
    s.dec.step_emb.init(cfg.max_decode_len, cfg.d_model);

    Rng rng(derive_seed(seed, 0x1417));
    s.for_each_param([&](Param& p, bool) { p.value.fill_uniform(rng, -0.05, 0.05); });
    s.gcn.stats_lift.value.zero();
    return s;
}

// --- encoder ----------------------------------------------------------------

// Builds the surrogate encoder on the tape: token + positional embeddings,
// n_enc single-head attention blocks with feedforward and residuals, then a
// mean-pool over non-PAD positions. PAD tokens are stripped up front with
// their original positions preserved, so trailing padding cannot change the
// pooled output. Returns the 1 × d_model pooled node id.
inline int encode_on_tape(Tape& t, EncoderParams& enc, const std::vector<TokenId>& ids) {
    if (ids.size() > enc.max_seq_len)
        throw SequenceTooLong("sequence of " + std::to_string(ids.size()) + " tokens exceeds " +
                              std::to_string(enc.max_seq_len));
    std::vector<std::size_t> tokens, positions;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= enc.vocab_size)
            throw TokenOutOfRange("token id " + std::to_string(ids[i]) + " outside vocabulary of " +
                                  std::to_string(enc.vocab_size));
        if (ids[i] == kPad) continue;
        tokens.push_back(static_cast<std::size_t>(ids[i]));
        positions.push_back(i);
    }
    if (tokens.empty()) throw InvalidSpec("sequence has no non-PAD tokens");

    int x = t.add(t.gather_rows(t.param(enc.tok_emb), tokens),
                  t.gather_rows(t.param(enc.pos_emb), positions));
    double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(enc.d_model));
    for (EncoderBlock& blk : enc.blocks) {
        int q = t.matmul(x, t.param(blk.Wq));
        int k = t.matmul(x, t.param(blk.Wk));
        int v = t.matmul(x, t.param(blk.Wv));
        int attn = t.matmul(t.softmax_rows(t.scale(t.matmul_nt(q, k), inv_sqrt_d)), v);
        int x1 = t.add(x, t.matmul(attn, t.param(blk.Wo)));
        int hidden = t.relu(t.add_bias(t.matmul(x1, t.param(blk.W1)), t.param(blk.b1)));
        int ff = t.add_bias(t.matmul(hidden, t.param(blk.W2)), t.param(blk.b2));
        x = t.add(x1, ff);
    }
    return t.mean_rows(x);
}

inline std::vector<double> encode_sequence(EncoderParams& enc, const TokenSequence& seq) {
    Tape t;
    int pooled = encode_on_tape(t, enc, seq.ids);
    return t.val(pooled).v;
}

// --- GCN --------------------------------------------------------------------

inline PropGraph make_prop_graph(const SchemaGraph& g) {
    PropGraph pg;
    pg.n = g.nodes.size();
    pg.edges.reserve(g.edges.size());
    for (const Edge& e : g.edges) pg.edges.emplace_back(e.dst, e.src);
    pg.inv_sqrt_deghat.reserve(pg.n);
    for (std::size_t u = 0; u < pg.n; ++u)
        pg.inv_sqrt_deghat.push_back(1.0 / std::sqrt(static_cast<double>(g.degree(u) + 1)));
    return pg;
}

inline PropGraph make_prop_graph(const Subgraph& s) {
    PropGraph pg;
    pg.n = s.nodes.size();
    pg.edges.reserve(s.edges.size());
    for (const Edge& e : s.edges) pg.edges.emplace_back(e.dst, e.src);
    pg.inv_sqrt_deghat.reserve(pg.n);
    for (std::size_t deg : s.parent_degree)
        pg.inv_sqrt_deghat.push_back(1.0 / std::sqrt(static_cast<double>(deg + 1)));
    return pg;
}

// L layers of symmetric-normalized propagation: each layer propagates,
// applies W_l and bias, ReLU between layers (last layer linear), and adds a
// per-layer residual so a node keeps its own content.
inline int gcn_on_tape(Tape& t, GCNParams& p, const PropGraph& pg, int h0) {
    int h = h0;
    for (std::size_t l = 0; l < p.num_layers; ++l) {
        int z = t.add_bias(t.matmul(t.edge_propagate(h, pg), t.param(p.W[l])), t.param(p.b[l]));
        int a = (l + 1 < p.num_layers) ? t.relu(z) : z;
        h = t.add(a, h);
    }
    return h;
}

inline Mat features_matrix(const NodeFeatures& f) {
    Mat h(f.features.size(), f.d_model);
    for (std::size_t i = 0; i < f.features.size(); ++i)
        for (std::size_t c = 0; c < f.d_model; ++c) h.at(i, c) = f.features[i][c];
    return h;
}

inline Mat stats_matrix(const NodeFeatures& f) {
    Mat s(f.stats.size(), kStatsDim);
    for (std::size_t i = 0; i < f.stats.size(); ++i)
        for (std::size_t c = 0; c < kStatsDim; ++c) s.at(i, c) = f.stats[i][c];
    return s;
}

// Tape entry point used by training: input features (constant) plus, when the
// stats channel is present, the learned lift of the stats into model space.
inline int gcn_input_on_tape(Tape& t, GCNParams& p, const NodeFeatures& f) {
    int h0 = t.constant(features_matrix(f));
    if (f.stats_enabled)
        h0 = t.add(h0, t.matmul(t.constant(stats_matrix(f)), t.param(p.stats_lift)));
    return h0;
}

inline NodeFeatures gcn_forward(GCNParams& p, const SchemaGraph& g, const NodeFeatures& f) {
    if (g.nodes.empty()) throw DimensionMismatch("gcn_forward on empty graph");
    if (f.d_model != p.d_model)
        throw DimensionMismatch("feature dim " + std::to_string(f.d_model) + " != d_model " +
                                std::to_string(p.d_model));
    PropGraph pg = make_prop_graph(g);
    Tape t;
    int out = gcn_on_tape(t, p, pg, gcn_input_on_tape(t, p, f));
    const Mat& h = t.val(out);
    NodeFeatures result;
    result.d_model = f.d_model;
    result.features.resize(h.rows);
    for (std::size_t i = 0; i < h.rows; ++i)
        result.features[i] = std::vector<double>(h.v.begin() + i * h.cols,
                                                 h.v.begin() + (i + 1) * h.cols);
    return result;
}

// --- decoder ----------------------------------------------------------------

// Per-step classifier: step s scores softmax((repr + step_emb[s]) · Wout + b).
// Returns the steps × vocab_size probability node.
inline int decode_on_tape(Tape& t, DecoderParams& dec, int repr, std::size_t steps) {
    if (steps == 0) throw TargetTooLong("decoder needs at least one step");
    if (steps > dec.max_decode_len)
        throw TargetTooLong(std::to_string(steps) + " steps exceeds max_decode_len " +
                            std::to_string(dec.max_decode_len));
    std::vector<std::size_t> step_ids(steps);
    for (std::size_t s = 0; s < steps; ++s) step_ids[s] = s;
    int x = t.add(t.repeat_row(repr, steps), t.gather_rows(t.param(dec.step_emb), step_ids));
    return t.softmax_rows(t.add_bias(t.matmul(x, t.param(dec.Wout)), t.param(dec.bout)));
}

inline Mat decode_tokens(DecoderParams& dec, const std::vector<double>& node_repr,
                         std::size_t target_len) {
    if (node_repr.size() != dec.d_model)
        throw DimensionMismatch("node representation dim " + std::to_string(node_repr.size()));
    Tape t;
    Mat r(1, dec.d_model);
    r.v = node_repr;
    return t.val(decode_on_tape(t, dec, t.constant(std::move(r)), target_len));
}

// Greedy argmax per step (ties → lowest token id), stopping at the first
// predicted PAD. The returned sequence never contains PAD.
inline std::vector<TokenId> greedy_decode(DecoderParams& dec, const std::vector<double>& repr) {
    Mat probs = decode_tokens(dec, repr, dec.max_decode_len);
    std::vector<TokenId> out;
    for (std::size_t s = 0; s < probs.rows; ++s) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < probs.cols; ++c)
            if (probs.at(s, c) > probs.at(s, best)) best = c;
        if (best == static_cast<std::size_t>(kPad)) break;
        out.push_back(static_cast<TokenId>(best));
    }
    return out;
}

inline double cross_entropy_value(const Mat& probs, const std::vector<TokenId>& targets) {
    if (targets.size() != probs.rows)
        throw LengthMismatch("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                             std::to_string(probs.rows) + " steps");
    double loss = 0.0;
    for (std::size_t r = 0; r < probs.rows; ++r) {
        if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= probs.cols)
            throw TokenOutOfRange("target id " + std::to_string(targets[r]));
        loss -= std::log(std::max(probs.at(r, static_cast<std::size_t>(targets[r])), 1e-300));
    }
    return loss / static_cast<double>(probs.rows);
}

// --- optimizer --------------------------------------------------------------

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Standard Adam with bias correction. Frozen parameter groups are skipped
// entirely — values and moments bit-unchanged. Gradients are consumed:
// cleared after the step.
inline void adam_step(ModelState& s, const AdamConfig& cfg) {
    if (!s.grads_ready)
        throw MissingGradients("adam_step without a preceding backward pass");
    s.step += 1;
    double t = static_cast<double>(s.step);
    double bc1 = 1.0 - std::pow(cfg.beta1, t);
    double bc2 = 1.0 - std::pow(cfg.beta2, t);
    s.for_each_param([&](Param& p, bool frozen) {
        if (frozen) return;
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            double g = p.grad.v[i];
            p.m.v[i] = cfg.beta1 * p.m.v[i] + (1.0 - cfg.beta1) * g;
            p.v.v[i] = cfg.beta2 * p.v.v[i] + (1.0 - cfg.beta2) * g * g;
            double mhat = p.m.v[i] / bc1;
            double vhat = p.v.v[i] / bc2;
            p.value.v[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    });
    s.zero_grads();
}

// Bitwise fingerprint of the encoder block (values and moments), used by the
// freeze contract checks.
inline std::uint64_t encoder_fingerprint(EncoderParams& enc) {
    std::uint64_t h = fnv1a_init();
    enc.for_each_param([&](Param& p) {
        h = fnv1a_bytes(h, p.value.v.data(), p.value.v.size() * sizeof(double));
        h = fnv1a_bytes(h, p.m.v.data(), p.m.v.size() * sizeof(double));
        h = fnv1a_bytes(h, p.v.v.data(), p.v.v.size() * sizeof(double));
    });
    return h;
}

}  // namespace relgraph
