#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "slimstack/matrix.hpp"
#include "slimstack/model.hpp"
#include "slimstack/quantize.hpp"
#include "slimstack/rng.hpp"

namespace slimstack {

struct ContainerExtras {
    std::map<std::string, std::string> metadata;        // free-form
    std::map<std::string, LayerQuantInfo> quant;        // keyed by layer name
};

namespace detail {

// Tensor payloads are stored as raw little-endian IEEE-754 doubles,
// independent of host endianness.
inline void append_f64_le(std::string& out, double v) {
    std::uint64_t bits;
    static_assert(sizeof(bits) == sizeof(v));
    std::memcpy(&bits, &v, sizeof(bits));
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
}

inline double read_f64_le(const char* p) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) {
        bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[b])) << (8 * b);
    }
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
}

inline std::string checksum_hex(std::string_view bytes) {
    std::ostringstream os;
    os << "0x" << std::hex << fnv1a64(bytes);
    return os.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("write failed: " + path.string());
}

inline std::string read_file(const std::filesystem::path& path, const char* what) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error(std::string(what) + ": " + path.string());
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

}  // namespace detail

// Writes `model.json`-style manifest at `manifest_path` plus one blob file
// next to it holding every tensor back to back. Round-trip is bit-exact.
inline void save_model(const LinearModel& model, const std::string& manifest_path,
                       const ContainerExtras* extras = nullptr) {
    validate_model(model);
    const std::filesystem::path mpath(manifest_path);
    const std::filesystem::path dir = mpath.parent_path();
    if (!dir.empty()) std::filesystem::create_directories(dir);
    const std::string data_name = mpath.stem().string() + ".bin";

    nlohmann::json manifest;
    manifest["format"] = "slimstack-tensors";
    manifest["version"] = 1;
    manifest["dtype"] = "f64";
    manifest["data_file"] = data_name;

    std::string blob;
    nlohmann::json tensors = nlohmann::json::array();
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& layer : model.layers) {
        const std::size_t offset = blob.size();
        std::string bytes;
        bytes.reserve(layer.w.rows() * layer.w.cols() * 8);
        for (std::size_t i = 0; i < layer.w.rows(); ++i) {
            for (std::size_t j = 0; j < layer.w.cols(); ++j) {
                detail::append_f64_le(bytes, layer.w(i, j));
            }
        }
        tensors.push_back({{"name", layer.name},
                           {"rows", layer.w.rows()},
                           {"cols", layer.w.cols()},
                           {"offset", offset},
                           {"checksum", detail::checksum_hex(bytes)}});
        blob += bytes;

        nlohmann::json lj = {{"name", layer.name},
                             {"activation", activation_name(layer.act)},
                             {"tensor", layer.name}};
        if (extras) {
            auto it = extras->quant.find(layer.name);
            if (it != extras->quant.end()) {
                nlohmann::json rows = nlohmann::json::array();
                for (const QuantGrid& g : it->second.rows) {
                    rows.push_back({{"scale", g.scale}, {"zero_point", g.zero_point}});
                }
                lj["quant"] = {{"bits", it->second.bits}, {"rows", rows}};
            }
        }
        layers.push_back(lj);
    }
    manifest["layers"] = layers;
    manifest["tensors"] = tensors;
    if (extras && !extras->metadata.empty()) manifest["metadata"] = extras->metadata;

    detail::write_file(dir.empty() ? std::filesystem::path(data_name) : dir / data_name, blob);
    detail::write_file(mpath, manifest.dump(2) + "\n");
}

namespace detail {

inline nlohmann::json load_manifest(const std::string& manifest_path) {
    const std::string text = read_file(manifest_path, "cannot open manifest");
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("malformed manifest: " + std::string(e.what()));
    }
}

struct TensorIndex {
    std::string blob;
    std::map<std::string, nlohmann::json> entries;
};

inline TensorIndex load_tensors(const nlohmann::json& manifest,
                                const std::string& manifest_path) {
    TensorIndex idx;
    const std::filesystem::path dir = std::filesystem::path(manifest_path).parent_path();
    const std::string data_name = manifest.at("data_file").get<std::string>();
    idx.blob = read_file(dir.empty() ? std::filesystem::path(data_name) : dir / data_name,
                         "missing tensor file");
    for (const auto& t : manifest.at("tensors")) {
        idx.entries[t.at("name").get<std::string>()] = t;
    }
    return idx;
}

inline Matrix extract_tensor(const TensorIndex& idx, const std::string& name) {
    auto it = idx.entries.find(name);
    if (it == idx.entries.end()) throw std::runtime_error("missing tensor: " + name);
    const nlohmann::json& t = it->second;
    const auto rows = t.at("rows").get<std::size_t>();
    const auto cols = t.at("cols").get<std::size_t>();
    const auto offset = t.at("offset").get<std::size_t>();
    const std::size_t bytes = rows * cols * 8;
    if (offset + bytes > idx.blob.size()) {
        throw std::runtime_error("missing tensor data: " + name);
    }
    const std::string_view payload(idx.blob.data() + offset, bytes);
    if (t.contains("checksum") &&
        t.at("checksum").get<std::string>() != checksum_hex(payload)) {
        throw std::runtime_error("checksum mismatch in tensor " + name);
    }
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < rows * cols; ++i) {
        m.data()[i] = read_f64_le(idx.blob.data() + offset + i * 8);
    }
    require_finite(m, "tensor " + name);
    return m;
}

}  // namespace detail

inline LinearModel load_model(const std::string& manifest_path,
                              ContainerExtras* extras = nullptr) {
    const nlohmann::json manifest = detail::load_manifest(manifest_path);
    const detail::TensorIndex idx = detail::load_tensors(manifest, manifest_path);

    LinearModel model;
    for (const auto& lj : manifest.at("layers")) {
        LinearLayer layer;
        layer.name = lj.at("name").get<std::string>();
        layer.act = activation_from_name(lj.at("activation").get<std::string>());
        layer.w = detail::extract_tensor(idx, lj.at("tensor").get<std::string>());
        if (extras && lj.contains("quant")) {
            LayerQuantInfo qi;
            qi.bits = lj.at("quant").at("bits").get<int>();
            for (const auto& rj : lj.at("quant").at("rows")) {
                QuantGrid g;
                g.bits = qi.bits;
                g.scale = rj.at("scale").get<double>();
                g.zero_point = rj.at("zero_point").get<long long>();
                qi.rows.push_back(g);
            }
            extras->quant[layer.name] = qi;
        }
        model.layers.push_back(std::move(layer));
    }
    if (extras && manifest.contains("metadata")) {
        for (const auto& [k, v] : manifest.at("metadata").items()) {
            extras->metadata[k] = v.get<std::string>();
        }
    }
    validate_model(model);
    return model;
}

// Calibration sets use the same container with a single tensor named "x0".
inline void save_calibration(const CalibrationSet& calib, const std::string& manifest_path) {
    require_finite(calib.x0, "calibration x0");
    if (calib.x0.cols() == 0) throw std::invalid_argument("calibration needs at least one sample");
    const std::filesystem::path mpath(manifest_path);
    const std::filesystem::path dir = mpath.parent_path();
    if (!dir.empty()) std::filesystem::create_directories(dir);
    const std::string data_name = mpath.stem().string() + ".bin";

    std::string blob;
    blob.reserve(calib.x0.rows() * calib.x0.cols() * 8);
    for (std::size_t i = 0; i < calib.x0.rows(); ++i) {
        for (std::size_t j = 0; j < calib.x0.cols(); ++j) {
            detail::append_f64_le(blob, calib.x0(i, j));
        }
    }
    nlohmann::json manifest;
    manifest["format"] = "slimstack-tensors";
    manifest["version"] = 1;
    manifest["dtype"] = "f64";
    manifest["data_file"] = data_name;
    manifest["tensors"] = nlohmann::json::array({{{"name", "x0"},
                                                  {"rows", calib.x0.rows()},
                                                  {"cols", calib.x0.cols()},
                                                  {"offset", 0},
                                                  {"checksum", detail::checksum_hex(blob)}}});
    detail::write_file(dir.empty() ? std::filesystem::path(data_name) : dir / data_name, blob);
    detail::write_file(mpath, manifest.dump(2) + "\n");
}

inline CalibrationSet load_calibration(const std::string& manifest_path) {
    const nlohmann::json manifest = detail::load_manifest(manifest_path);
    const detail::TensorIndex idx = detail::load_tensors(manifest, manifest_path);
    CalibrationSet calib;
    calib.x0 = detail::extract_tensor(idx, "x0");
    if (calib.x0.cols() == 0) throw std::runtime_error("calibration needs at least one sample");
    return calib;
}

}  // namespace slimstack
