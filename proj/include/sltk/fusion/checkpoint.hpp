#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sltk/error.hpp"
#include "sltk/fusion/model.hpp"
#include "sltk/spotting/streams.hpp"

namespace sltk::fusion {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout: "SLTKCKPT", u32 version, u64 header length, JSON header
// {version, scalar, config, tensors:[{name, rows, cols, offset}]}, then f64
// little-endian tensor data at the listed element offsets.
template <class S>
void save_checkpoint(std::ostream &out, const FusionModel<S> &model) {
    nlohmann::json tensors = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto &t : model.params()) {
        tensors.push_back({{"name", t.name}, {"rows", t.value.rows()}, {"cols", t.value.cols()}, {"offset", offset}});
        offset += static_cast<std::uint64_t>(t.value.size());
    }
    const nlohmann::json header{
        {"version", kCheckpointVersion}, {"scalar", "f64"}, {"config", model.config()}, {"tensors", tensors}};
    const std::string h = header.dump();
    out.write("SLTKCKPT", 8);
    io::write_u32(out, kCheckpointVersion);
    const std::uint64_t len = h.size();
    out.write(reinterpret_cast<const char *>(&len), 8);
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    for (const auto &t : model.params())
        for (Eigen::Index i = 0; i < t.value.size(); ++i) {
            const double v = static_cast<double>(t.value.data()[i]);
            out.write(reinterpret_cast<const char *>(&v), 8);
        }
}

template <class S>
FusionModel<S> load_checkpoint(std::istream &in, const std::string &what = "checkpoint") {
    char magic[8] = {};
    if (!in.read(magic, 8) || std::memcmp(magic, "SLTKCKPT", 8) != 0)
        throw InputError(what + ": not a checkpoint");
    const std::uint32_t version = io::read_u32(in, what);
    if (version != kCheckpointVersion)
        throw InputError(what + ": unsupported checkpoint version " + std::to_string(version));
    std::uint64_t len = 0;
    if (!in.read(reinterpret_cast<char *>(&len), 8) || len > (1u << 30))
        throw InputError(what + ": bad header");
    std::string h(len, '\0');
    if (!in.read(h.data(), static_cast<std::streamsize>(len)))
        throw InputError(what + ": truncated header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(h);
    } catch (const nlohmann::json::exception &e) {
        throw InputError(what + ": bad header: " + e.what());
    }
    if (header.value("version", 0u) != kCheckpointVersion || header.value("scalar", "") != "f64")
        throw InputError(what + ": header version/scalar mismatch");
    FusionModel<S> model(header.at("config").get<FusionConfig>());
    const auto &tensors = header.at("tensors");
    if (tensors.size() != model.params().size())
        throw InputError(what + ": tensor count does not match its configuration");
    std::vector<double> buf;
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        Tensor<S> &t = model.params()[i];
        const auto &d = tensors[i];
        if (d.at("name").get<std::string>() != t.name || d.at("rows").get<Eigen::Index>() != t.value.rows() ||
            d.at("cols").get<Eigen::Index>() != t.value.cols())
            throw InputError(what + ": tensor " + d.at("name").get<std::string>() + " does not match the model layout");
        buf.resize(static_cast<std::size_t>(t.value.size()));
        if (!in.read(reinterpret_cast<char *>(buf.data()), static_cast<std::streamsize>(buf.size() * 8)))
            throw InputError(what + ": truncated tensor data");
        for (std::size_t k = 0; k < buf.size(); ++k)
            t.value.data()[k] = static_cast<S>(buf[k]);
    }
    return model;
}

template <class S>
void save_checkpoint_file(const std::string &path, const FusionModel<S> &model) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw InputError("cannot write " + path);
    save_checkpoint(out, model);
}

template <class S>
FusionModel<S> load_checkpoint_file(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw InputError("cannot open checkpoint " + path);
    return load_checkpoint<S>(in, path);
}

} // namespace sltk::fusion
