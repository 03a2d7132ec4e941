#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "sltk/error.hpp"

namespace sltk::fusion {

// Declaration order is the canonical stream order.
enum class Modality : int { global = 0, mouthing = 1, hand = 2 };

inline constexpr std::array<Modality, 3> kAllModalities = {Modality::global, Modality::mouthing, Modality::hand};

NLOHMANN_JSON_SERIALIZE_ENUM(Modality,
                             {{Modality::global, "global"}, {Modality::mouthing, "mouthing"}, {Modality::hand, "hand"}})

inline std::string to_string(Modality m) { return nlohmann::json(m).get<std::string>(); }

inline Modality modality_from_string(const std::string &s) {
    for (Modality m : kAllModalities)
        if (to_string(m) == s)
            return m;
    throw ConfigError("unknown modality '" + s + "'");
}

struct StreamDims {
    int global = 64;
    int mouthing = 64;
    int hand = 64; // left + right hand features, concatenated

    int of(Modality m) const {
        switch (m) {
        case Modality::global: return global;
        case Modality::mouthing: return mouthing;
        case Modality::hand: return hand;
        }
        return 0;
    }

    bool operator==(const StreamDims &) const = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(StreamDims, global, mouthing, hand)

struct FusionConfig {
    std::vector<Modality> enabled_streams = {Modality::global, Modality::mouthing, Modality::hand};
    StreamDims stream_dims;
    int model_dim = 32;
    int num_heads = 2;
    int enc_layers = 2;
    int dec_layers = 2;
    int ffn_dim = 128;
    int vocab_size = 0; // filled from the vocabulary at train time
    int max_len = 64; // decode limit on generated tokens
    double dropout = 0.1;
    double lr_peak = 1e-3;
    int warmup_iters = 200;
    int total_iters = 2000;
    int batch_size = 16;
    std::uint64_t seed = 1;

    bool enabled(Modality m) const {
        return std::find(enabled_streams.begin(), enabled_streams.end(), m) != enabled_streams.end();
    }

    void validate() const {
        if (enabled_streams.empty())
            throw ConfigError("fusion.enabled_streams must not be empty");
        for (std::size_t i = 1; i < enabled_streams.size(); ++i)
            if (static_cast<int>(enabled_streams[i]) <= static_cast<int>(enabled_streams[i - 1]))
                throw ConfigError("fusion.enabled_streams must be distinct and ordered global, mouthing, hand");
        if (model_dim <= 0 || num_heads <= 0 || model_dim % num_heads != 0)
            throw ConfigError("fusion.model_dim must be a positive multiple of fusion.num_heads");
        if (enc_layers < 0 || dec_layers < 0 || ffn_dim <= 0)
            throw ConfigError("fusion layer counts must be non-negative and ffn_dim positive");
        for (Modality m : enabled_streams)
            if (stream_dims.of(m) <= 0)
                throw ConfigError("fusion.stream_dims." + to_string(m) + " must be positive");
        if (enabled(Modality::hand) && stream_dims.hand % 2 != 0)
            throw ConfigError("fusion.stream_dims.hand must be even (left + right features)");
        if (vocab_size < 5)
            throw ConfigError("fusion.vocab_size must cover the 4 special tokens and at least one word");
        if (max_len < 1)
            throw ConfigError("fusion.max_len must be positive");
        if (!(dropout >= 0.0 && dropout < 1.0))
            throw ConfigError("fusion.dropout must lie in [0,1)");
        if (!(lr_peak > 0.0))
            throw ConfigError("fusion.lr_peak must be positive");
        if (warmup_iters < 0 || total_iters <= 0 || warmup_iters >= total_iters)
            throw ConfigError("fusion.warmup_iters must be smaller than fusion.total_iters");
        if (batch_size <= 0)
            throw ConfigError("fusion.batch_size must be positive");
    }

    bool operator==(const FusionConfig &) const = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(FusionConfig, enabled_streams, stream_dims, model_dim, num_heads,
                                                enc_layers, dec_layers, ffn_dim, vocab_size, max_len,
                                                dropout, lr_peak, warmup_iters, total_iters, batch_size, seed)

/// Parameter count implied by a configuration.
inline std::size_t attention_params(std::size_t d) { return 4 * (d * d + d); }
inline std::size_t ffn_params(std::size_t d, std::size_t f) { return d * f + f + f * d + d; }
inline std::size_t norm_params(std::size_t d) { return 2 * d; }

inline std::size_t encoder_params(const FusionConfig &c, Modality m) {
    const std::size_t d = static_cast<std::size_t>(c.model_dim), f = static_cast<std::size_t>(c.ffn_dim);
    const std::size_t in = static_cast<std::size_t>(c.stream_dims.of(m)) * d + d;
    const std::size_t layer = attention_params(d) + ffn_params(d, f) + 2 * norm_params(d);
    return in + static_cast<std::size_t>(c.enc_layers) * layer + norm_params(d);
}

// Per decoder layer: one cross-attention block plus d rows of the fuse projection.
inline std::size_t stream_decoder_params(const FusionConfig &c) {
    const std::size_t d = static_cast<std::size_t>(c.model_dim);
    return static_cast<std::size_t>(c.dec_layers) * (attention_params(d) + d * d);
}

inline std::size_t expected_param_count(const FusionConfig &c) {
    const std::size_t d = static_cast<std::size_t>(c.model_dim), f = static_cast<std::size_t>(c.ffn_dim);
    const std::size_t v = static_cast<std::size_t>(c.vocab_size);
    std::size_t total = 0;
    for (Modality m : c.enabled_streams)
        total += encoder_params(c, m) + stream_decoder_params(c);
    const std::size_t shared_layer = attention_params(d) + d /* fuse bias */ + ffn_params(d, f) + 3 * norm_params(d);
    total += v * d + static_cast<std::size_t>(c.dec_layers) * shared_layer + norm_params(d) + d * v + v;
    return total;
}

} // namespace sltk::fusion
