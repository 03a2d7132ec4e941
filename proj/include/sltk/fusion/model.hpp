#pragma once

#include <cmath>
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sltk/corpus/vocab.hpp"
#include "sltk/error.hpp"
#include "sltk/fusion/autodiff.hpp"
#include "sltk/fusion/config.hpp"
#include "sltk/fusion/feature_stream.hpp"
#include "sltk/rng.hpp"

namespace sltk::fusion {

/// Ordered, name-addressable parameter blocks.
template <class S>
class ParamStore {
  public:
    std::size_t add(std::string name, Eigen::Index rows, Eigen::Index cols) {
        if (index_.count(name))
            throw InvariantError("duplicate parameter " + name);
        index_.emplace(name, tensors_.size());
        tensors_.push_back({std::move(name), Matrix<S>::Zero(rows, cols), Matrix<S>::Zero(rows, cols)});
        return tensors_.size() - 1;
    }

    Tensor<S> &operator[](std::size_t i) { return tensors_[i]; }
    const Tensor<S> &operator[](std::size_t i) const { return tensors_[i]; }

    Tensor<S> &at(const std::string &name) {
        auto it = index_.find(name);
        if (it == index_.end())
            throw InvariantError("no parameter named " + name);
        return tensors_[it->second];
    }

    bool contains(const std::string &name) const { return index_.count(name) != 0; }
    std::size_t size() const { return tensors_.size(); }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto &t : tensors_)
            n += static_cast<std::size_t>(t.value.size());
        return n;
    }

    void zero_grad() {
        for (auto &t : tensors_)
            t.grad.setZero();
    }

    auto begin() { return tensors_.begin(); }
    auto end() { return tensors_.end(); }
    auto begin() const { return tensors_.begin(); }
    auto end() const { return tensors_.end(); }

  private:
    std::deque<Tensor<S>> tensors_;
    std::map<std::string, std::size_t> index_;
};

/// Fixed sinusoidal position table, rows = positions.
template <class S>
Matrix<S> sinusoidal_positions(Eigen::Index length, Eigen::Index dim) {
    Matrix<S> pe(length, dim);
    for (Eigen::Index pos = 0; pos < length; ++pos)
        for (Eigen::Index i = 0; i < dim; ++i) {
            const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
            const double angle = static_cast<double>(pos) * rate;
            pe(pos, i) = static_cast<S>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
        }
    return pe;
}

/// One clip's target and input streams. `target` runs BOS ... EOS.
struct Example {
    std::string clip_id;
    std::vector<FeatureStream> streams;
    std::vector<int> target;
};

template <class S>
struct ForwardResult {
    std::vector<Matrix<S>> logits; // per item: positions x vocab
    double loss = 0.0;             // mean token cross-entropy over non-PAD labels
    std::size_t tokens = 0;
};

/// Attention output plus the per-head weight matrices.
template <class S>
struct AttentionResult {
    Matrix<S> context;
    std::vector<Matrix<S>> weights;
};

template <class S>
struct FusedContext {
    Var concat;
    Var fused;
};

/// Encoded source streams, in enabled-stream order, ready for decoding.
template <class S>
struct EncodedSource {
    std::vector<Modality> modalities;
    std::vector<Matrix<S>> encodings;
    std::vector<std::vector<char>> masks;
};

/// Multi-stream encoder-decoder translation model.
///
/// Each enabled stream has its own transformer encoder. Every decoder layer
/// runs causal self-attention, then one cross-attention block per stream
/// (all queried by the same decoder state), concatenates the contexts in
/// canonical stream order and projects them back to model width before the
/// residual, then a feedforward block. Layers are pre-norm.
template <class S>
class FusionModel {
  public:
    using Mat = Matrix<S>;

  private:
    struct Linear {
        std::size_t weight, bias;
    };
    struct Norm {
        std::size_t gamma, beta;
    };
    struct Attention {
        Linear q, k, v, o;
    };
    struct FeedForward {
        Linear in, out;
    };
    struct EncoderLayer {
        Norm ln_attn;
        Attention attn;
        Norm ln_ffn;
        FeedForward ffn;
    };
    struct Encoder {
        Linear input;
        std::vector<EncoderLayer> layers;
        Norm final;
    };
    struct DecoderLayer {
        Norm ln_self;
        Attention self;
        Norm ln_cross;
        std::vector<Attention> cross; // enabled-stream order
        Linear fuse;                  // (streams * d) x d
        Norm ln_ffn;
        FeedForward ffn;
    };
    struct Decoder {
        std::size_t embed;
        std::vector<DecoderLayer> layers;
        Norm final;
        Linear out;
    };

  public:

    explicit FusionModel(FusionConfig cfg) : cfg_(std::move(cfg)) {
        cfg_.validate();
        build();
        initialize(cfg_.seed);
    }

    const FusionConfig &config() const { return cfg_; }
    ParamStore<S> &params() { return params_; }
    const ParamStore<S> &params() const { return params_; }

    void initialize(std::uint64_t seed) {
        Rng rng(seed);
        const double d = cfg_.model_dim;
        for (auto &t : params_) {
            const bool is_bias = t.name.ends_with(".bias") || t.name.ends_with(".beta");
            if (t.name.ends_with(".gamma")) {
                t.value.setOnes();
            } else if (is_bias) {
                t.value.setZero();
            } else {
                double limit = std::sqrt(6.0 / static_cast<double>(t.value.rows() + t.value.cols()));
                if (t.name == "dec.embed")
                    limit = std::sqrt(3.0 / d);
                else if (t.name == "dec.out.weight")
                    limit = 0.1 / std::sqrt(d); // near-uniform initial output distribution
                for (Eigen::Index i = 0; i < t.value.size(); ++i)
                    t.value.data()[i] = static_cast<S>(rng.uniform(-limit, limit));
            }
            t.grad.setZero();
        }
    }

    // ------------------------------------------------------------------
    // Graph-level building blocks. `rng` non-null means training mode
    // (dropout active).

    Var encode(Graph<S> &g, Modality m, const Mat &features, std::size_t valid_len, Rng *rng) {
        const Encoder &enc = encoder(m);
        if (features.cols() != cfg_.stream_dims.of(m))
            throw InputError(to_string(m) + " stream has width " + std::to_string(features.cols()) + ", model expects " +
                             std::to_string(cfg_.stream_dims.of(m)));
        const std::vector<char> key_valid = prefix_mask(features.rows(), valid_len);
        Var x = linear(g, g.constant(features), enc.input);
        x = ops::add(g, x, g.constant(sinusoidal_positions<S>(features.rows(), cfg_.model_dim)));
        x = dropout(g, x, rng);
        for (const EncoderLayer &l : enc.layers) {
            Var h = norm(g, x, l.ln_attn);
            x = ops::add(g, x, dropout(g, attention(g, h, h, key_valid, false, l.attn), rng));
            h = norm(g, x, l.ln_ffn);
            x = ops::add(g, x, dropout(g, feedforward(g, h, l.ffn), rng));
        }
        return norm(g, x, enc.final);
    }

    /// Multi-head attention of `query` rows over `source` rows.
    Var attention(Graph<S> &g, Var query, Var source, const std::vector<char> &key_valid, bool causal,
                  const Attention &a, std::vector<Var> *weights_out = nullptr) {
        const Eigen::Index dk = cfg_.model_dim / cfg_.num_heads;
        Var q = linear(g, query, a.q), k = linear(g, source, a.k), v = linear(g, source, a.v);
        const S inv_sqrt = S(1) / std::sqrt(static_cast<S>(dk));
        std::vector<Var> heads;
        for (int h = 0; h < cfg_.num_heads; ++h) {
            Var qh = cfg_.num_heads == 1 ? q : ops::columns(g, q, h * dk, dk);
            Var kh = cfg_.num_heads == 1 ? k : ops::columns(g, k, h * dk, dk);
            Var vh = cfg_.num_heads == 1 ? v : ops::columns(g, v, h * dk, dk);
            Var w = ops::masked_softmax(g, ops::scale(g, ops::matmul_bt(g, qh, kh), inv_sqrt), key_valid, causal);
            if (weights_out)
                weights_out->push_back(w);
            heads.push_back(ops::matmul(g, w, vh));
        }
        Var o = heads.size() == 1 ? heads[0] : ops::hcat(g, heads);
        return linear(g, o, a.o);
    }

    /// Concatenates per-stream contexts (canonical order, enabled streams
    /// exactly) and projects the result back to model width.
    FusedContext<S> fuse_contexts(Graph<S> &g, std::size_t layer,
                                  const std::vector<std::pair<Modality, Var>> &contexts) {
        if (contexts.size() != cfg_.enabled_streams.size())
            throw InvariantError("fuse_contexts: expected one context per enabled stream");
        std::vector<Var> parts;
        for (std::size_t i = 0; i < contexts.size(); ++i) {
            if (contexts[i].first != cfg_.enabled_streams[i])
                throw InvariantError("fuse_contexts: contexts must follow the order global, mouthing, hand");
            parts.push_back(contexts[i].second);
        }
        Var concat = parts.size() == 1 ? parts[0] : ops::hcat(g, parts);
        return {concat, linear(g, concat, decoder_.layers.at(layer).fuse)};
    }

    /// Logits (positions x vocab) for decoder input `tokens` given encoded
    /// streams in enabled order.
    Var decode(Graph<S> &g, const std::vector<int> &tokens, const std::vector<Var> &encodings,
               const std::vector<std::vector<char>> &masks, Rng *rng) {
        if (tokens.empty())
            throw InputError("decoder input is empty");
        if (encodings.size() != cfg_.enabled_streams.size() || masks.size() != encodings.size())
            throw InvariantError("decode: one encoding and mask per enabled stream required");
        const Eigen::Index n = static_cast<Eigen::Index>(tokens.size());
        Var x = ops::embedding(g, g.parameter(params_[decoder_.embed]), tokens);
        x = ops::scale(g, x, std::sqrt(static_cast<S>(cfg_.model_dim)));
        x = ops::add(g, x, g.constant(sinusoidal_positions<S>(n, cfg_.model_dim)));
        x = dropout(g, x, rng);
        const std::vector<char> all(static_cast<std::size_t>(n), 1);
        for (std::size_t li = 0; li < decoder_.layers.size(); ++li) {
            const DecoderLayer &l = decoder_.layers[li];
            Var h = norm(g, x, l.ln_self);
            x = ops::add(g, x, dropout(g, attention(g, h, h, all, true, l.self), rng));
            h = norm(g, x, l.ln_cross);
            std::vector<std::pair<Modality, Var>> contexts;
            for (std::size_t s = 0; s < encodings.size(); ++s)
                contexts.emplace_back(cfg_.enabled_streams[s], attention(g, h, encodings[s], masks[s], false, l.cross[s]));
            x = ops::add(g, x, dropout(g, fuse_contexts(g, li, contexts).fused, rng));
            h = norm(g, x, l.ln_ffn);
            x = ops::add(g, x, dropout(g, feedforward(g, h, l.ffn), rng));
        }
        x = norm(g, x, decoder_.final);
        return linear(g, x, decoder_.out);
    }

    // ------------------------------------------------------------------
    // Value-level API.

    /// Eval-mode encoding of one stream, T x model_dim.
    Mat encode_stream(const FeatureStream &s) {
        require_enabled(s.modality);
        s.validate();
        Graph<S> g(false);
        return g.value(encode(g, s.modality, s.data.template cast<S>(), static_cast<std::size_t>(s.length()), nullptr));
    }

    /// Eval-mode encoding of same-modality streams zero-padded to a common
    /// length with padding keys masked. Each result has max-length rows;
    /// only the first length(i) rows are meaningful.
    std::vector<Mat> encode_padded(const std::vector<FeatureStream> &batch) {
        Eigen::Index tmax = 0;
        for (const auto &s : batch) {
            require_enabled(s.modality);
            s.validate();
            tmax = std::max(tmax, s.length());
        }
        std::vector<Mat> out;
        for (const auto &s : batch) {
            Graph<S> g(false);
            out.push_back(g.value(encode(g, s.modality, padded(s, tmax), static_cast<std::size_t>(s.length()), nullptr)));
        }
        return out;
    }

    /// Cross-attention of decoder states (n x d) over an encoding (T x d)
    /// with layer `layer`'s block for modality `m`.
    AttentionResult<S> cross_attend(std::size_t layer, Modality m, const Mat &query, const Mat &encoding,
                                    const std::vector<char> &key_valid) {
        require_enabled(m);
        const DecoderLayer &l = decoder_.layers.at(layer);
        Graph<S> g(false);
        std::vector<Var> w;
        Var c = attention(g, g.constant(query), g.constant(encoding), key_valid, false, l.cross[stream_slot(m)], &w);
        AttentionResult<S> r{g.value(c), {}};
        for (Var v : w)
            r.weights.push_back(g.value(v));
        return r;
    }

    EncodedSource<S> encode_source(const std::vector<FeatureStream> &streams) {
        EncodedSource<S> src;
        for (Modality m : cfg_.enabled_streams) {
            const FeatureStream *s = find_stream(streams, m);
            src.modalities.push_back(m);
            src.encodings.push_back(encode_stream(*s));
            src.masks.emplace_back(static_cast<std::size_t>(s->length()), 1);
        }
        return src;
    }

    /// Log-probabilities of the next token after `prefix` (BOS-initiated).
    Eigen::Matrix<S, 1, Eigen::Dynamic> next_log_probs(const EncodedSource<S> &src, const std::vector<int> &prefix) {
        Graph<S> g(false);
        std::vector<Var> enc;
        for (const auto &e : src.encodings)
            enc.push_back(g.constant(e));
        const Mat &logits = g.value(decode(g, prefix, enc, src.masks, nullptr));
        Eigen::Matrix<S, 1, Eigen::Dynamic> row = logits.row(logits.rows() - 1);
        const S mx = row.maxCoeff();
        const S lse = mx + std::log((row.array() - mx).exp().sum());
        return row.array() - lse;
    }

    /// Teacher-forced forward pass over a batch. Targets are padded with PAD
    /// to a common length; PAD labels are ignored by the loss. When `grad`
    /// is set the mean-loss gradient is accumulated into the parameters.
    /// `rng` non-null turns dropout on.
    ForwardResult<S> forward(const std::vector<Example> &batch, bool grad, Rng *rng = nullptr) {
        if (batch.empty())
            throw InputError("forward: empty batch");
        std::size_t len = 0;
        for (const auto &ex : batch) {
            if (ex.target.size() < 2 || ex.target.front() != corpus::Vocabulary::kBos ||
                ex.target.back() != corpus::Vocabulary::kEos)
                throw InputError("target for " + ex.clip_id + " must run BOS ... EOS");
            for (int t : ex.target)
                if (t < 0 || t >= cfg_.vocab_size)
                    throw InputError("target for " + ex.clip_id + " has token id " + std::to_string(t) +
                                     " outside vocabulary of size " + std::to_string(cfg_.vocab_size));
            len = std::max(len, ex.target.size());
        }
        std::map<Modality, Eigen::Index> tmax;
        for (Modality m : cfg_.enabled_streams)
            for (const auto &ex : batch)
                tmax[m] = std::max(tmax[m], find_stream(ex.streams, m)->length());
        std::size_t tokens = 0;
        for (const auto &ex : batch)
            tokens += ex.target.size() - 1;

        ForwardResult<S> res;
        res.tokens = tokens;
        double total = 0.0;
        for (const auto &ex : batch) {
            std::vector<int> seq = ex.target;
            seq.resize(len, corpus::Vocabulary::kPad);
            std::vector<int> input(seq.begin(), seq.end() - 1), labels(seq.begin() + 1, seq.end());
            Graph<S> g(grad);
            std::vector<Var> enc;
            std::vector<std::vector<char>> masks;
            for (Modality m : cfg_.enabled_streams) {
                const FeatureStream *s = find_stream(ex.streams, m);
                s->validate();
                enc.push_back(encode(g, m, padded(*s, tmax[m]), static_cast<std::size_t>(s->length()), rng));
                masks.push_back(prefix_mask(tmax[m], static_cast<std::size_t>(s->length())));
            }
            Var logits = decode(g, input, enc, masks, rng);
            Var ce = ops::cross_entropy_sum(g, logits, labels, corpus::Vocabulary::kPad);
            total += static_cast<double>(g.value(ce)(0, 0));
            if (grad)
                g.backward(ce, S(1) / static_cast<S>(tokens));
            res.logits.push_back(g.value(logits));
        }
        res.loss = total / static_cast<double>(tokens);
        return res;
    }

    std::size_t stream_slot(Modality m) const {
        for (std::size_t i = 0; i < cfg_.enabled_streams.size(); ++i)
            if (cfg_.enabled_streams[i] == m)
                return i;
        throw ConfigError("stream '" + to_string(m) + "' is not enabled in this model");
    }

  private:
    Linear make_linear(const std::string &prefix, Eigen::Index in, Eigen::Index out) {
        return {params_.add(prefix + ".weight", in, out), params_.add(prefix + ".bias", 1, out)};
    }
    Norm make_norm(const std::string &prefix) {
        return {params_.add(prefix + ".gamma", 1, cfg_.model_dim), params_.add(prefix + ".beta", 1, cfg_.model_dim)};
    }
    Attention make_attention(const std::string &prefix) {
        const Eigen::Index d = cfg_.model_dim;
        return {make_linear(prefix + ".q", d, d), make_linear(prefix + ".k", d, d), make_linear(prefix + ".v", d, d),
                make_linear(prefix + ".o", d, d)};
    }
    FeedForward make_ffn(const std::string &prefix) {
        return {make_linear(prefix + ".in", cfg_.model_dim, cfg_.ffn_dim),
                make_linear(prefix + ".out", cfg_.ffn_dim, cfg_.model_dim)};
    }

    void build() {
        const Eigen::Index d = cfg_.model_dim;
        for (Modality m : cfg_.enabled_streams) {
            const std::string p = "enc." + to_string(m);
            Encoder e;
            e.input = make_linear(p + ".input", cfg_.stream_dims.of(m), d);
            for (int i = 0; i < cfg_.enc_layers; ++i) {
                const std::string lp = p + ".layer" + std::to_string(i);
                e.layers.push_back(
                    {make_norm(lp + ".ln_attn"), make_attention(lp + ".attn"), make_norm(lp + ".ln_ffn"), make_ffn(lp + ".ffn")});
            }
            e.final = make_norm(p + ".ln_final");
            encoders_.push_back(std::move(e));
        }
        decoder_.embed = params_.add("dec.embed", cfg_.vocab_size, d);
        for (int i = 0; i < cfg_.dec_layers; ++i) {
            const std::string lp = "dec.layer" + std::to_string(i);
            DecoderLayer l;
            l.ln_self = make_norm(lp + ".ln_self");
            l.self = make_attention(lp + ".self");
            l.ln_cross = make_norm(lp + ".ln_cross");
            for (Modality m : cfg_.enabled_streams)
                l.cross.push_back(make_attention(lp + ".cross." + to_string(m)));
            l.fuse = make_linear(lp + ".fuse", static_cast<Eigen::Index>(cfg_.enabled_streams.size()) * d, d);
            l.ln_ffn = make_norm(lp + ".ln_ffn");
            l.ffn = make_ffn(lp + ".ffn");
            decoder_.layers.push_back(std::move(l));
        }
        decoder_.final = make_norm("dec.ln_final");
        decoder_.out = make_linear("dec.out", d, cfg_.vocab_size);
    }

    const Encoder &encoder(Modality m) const { return encoders_[stream_slot(m)]; }

    void require_enabled(Modality m) const { (void)stream_slot(m); }

    static const FeatureStream *find_stream(const std::vector<FeatureStream> &streams, Modality m) {
        for (const auto &s : streams)
            if (s.modality == m)
                return &s;
        throw InputError("missing " + to_string(m) + " stream");
    }

    static std::vector<char> prefix_mask(Eigen::Index length, std::size_t valid) {
        std::vector<char> mask(static_cast<std::size_t>(length), 0);
        for (std::size_t i = 0; i < valid && i < mask.size(); ++i)
            mask[i] = 1;
        return mask;
    }

    static Mat padded(const FeatureStream &s, Eigen::Index rows) {
        Mat m = Mat::Zero(rows, s.dim());
        m.topRows(s.length()) = s.data.template cast<S>();
        return m;
    }

    Var linear(Graph<S> &g, Var x, const Linear &l) {
        return ops::add_row(g, ops::matmul(g, x, g.parameter(params_[l.weight])), g.parameter(params_[l.bias]));
    }

    Var norm(Graph<S> &g, Var x, const Norm &n) {
        return ops::layer_norm(g, x, g.parameter(params_[n.gamma]), g.parameter(params_[n.beta]));
    }

    Var feedforward(Graph<S> &g, Var x, const FeedForward &f) {
        return linear(g, ops::gelu(g, linear(g, x, f.in)), f.out);
    }

    Var dropout(Graph<S> &g, Var x, Rng *rng) {
        if (!rng || cfg_.dropout <= 0.0)
            return x;
        const auto &v = g.value(x);
        Mat mask(v.rows(), v.cols());
        const S keep = static_cast<S>(1.0 - cfg_.dropout);
        for (Eigen::Index i = 0; i < mask.size(); ++i)
            mask.data()[i] = rng->uniform() < cfg_.dropout ? S(0) : S(1) / keep;
        return ops::mul_const(g, x, std::move(mask));
    }

    FusionConfig cfg_;
    ParamStore<S> params_;
    std::vector<Encoder> encoders_;
    Decoder decoder_;
};

} // namespace sltk::fusion
