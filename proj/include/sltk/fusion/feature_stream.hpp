#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include <Eigen/Core>

#include "sltk/error.hpp"
#include "sltk/fusion/config.hpp"
#include "sltk/spotting/streams.hpp"

namespace sltk::fusion {

using FeatureMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct FeatureStream {
    std::string clip_id;
    Modality modality = Modality::global;
    FeatureMatrix data; // T x D

    Eigen::Index length() const { return data.rows(); }
    Eigen::Index dim() const { return data.cols(); }

    void validate() const {
        const std::string what = clip_id + "." + to_string(modality);
        if (data.rows() < 1)
            throw InputError(what + ": feature stream needs at least one frame");
        if (data.cols() < 1)
            throw InputError(what + ": feature stream has zero width");
        if (!data.allFinite())
            throw InputError(what + ": feature stream contains non-finite values");
        if (modality == Modality::hand && data.cols() % 2 != 0)
            throw InputError(what + ": hand features must concatenate left and right (even width)");
    }
};

inline std::string feature_filename(const std::string &clip_id, Modality m) {
    return clip_id + "." + to_string(m) + ".fst";
}

/// FST1: magic, u32 T, u32 D, T*D f32 row-major.
inline void write_features(std::ostream &out, const FeatureMatrix &m) {
    out.write("FST1", 4);
    io::write_u32(out, static_cast<std::uint32_t>(m.rows()));
    io::write_u32(out, static_cast<std::uint32_t>(m.cols()));
    out.write(reinterpret_cast<const char *>(m.data()), static_cast<std::streamsize>(m.size() * 4));
}

inline FeatureMatrix read_features(std::istream &in, const std::string &what) {
    io::expect_magic(in, "FST1", what);
    const std::uint32_t t = io::read_u32(in, what);
    const std::uint32_t d = io::read_u32(in, what);
    FeatureMatrix m(t, d);
    io::read_f32s(in, m.data(), static_cast<std::size_t>(t) * d, what);
    return m;
}

inline void save_stream(const std::filesystem::path &dir, const FeatureStream &s) {
    const auto path = dir / feature_filename(s.clip_id, s.modality);
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw InputError("cannot write " + path.string());
    write_features(out, s.data);
}

inline FeatureStream load_stream(const std::filesystem::path &dir, const std::string &clip_id, Modality m) {
    const auto path = dir / feature_filename(clip_id, m);
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw InputError("missing feature file " + path.string());
    FeatureStream s{clip_id, m, read_features(in, path.string())};
    s.validate();
    return s;
}

} // namespace sltk::fusion
