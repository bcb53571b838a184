#pragma once

// Binary checkpoint:
//
//   "TCFCKPT\0"  u32 version  u64 manifest_bytes  manifest (JSON)  payload
//
// All integers and the payload doubles are little-endian. The manifest lists
// each array with its shape and byte offset into the payload, plus the
// dimensions, hyperparameters, index maps and vocabulary.

#include "tcf/common.hpp"
#include "tcf/corpus.hpp"
#include "tcf/factor.hpp"
#include "tcf/model.hpp"

#include "json.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <type_traits>
#include <vector>

namespace tcf {

using Json = nlohmann::json;

inline constexpr std::array<char, 8> checkpoint_magic{'T', 'C', 'F', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t checkpoint_version = 1;

// ---------------------------------------------------------------------------
// Hyperparameters as JSON

inline Json to_json(const SdaeConfig& c) {
    return Json{{"layer_widths", c.layer_widths},
                {"noise_rate", c.noise_rate},
                {"pretrain_epochs", c.pretrain_epochs},
                {"learning_rate", c.learning_rate},
                {"pretrain_learning_rate", c.pretrain_learning_rate},
                {"pretrain_batch_size", c.pretrain_batch_size}};
}

inline Json to_json(const Hyperparams& h) {
    return Json{{"latent_dim", h.latent_dim},   {"lambda_s", h.lambda_s},
                {"lambda_theta", h.lambda_theta}, {"lambda_beta", h.lambda_beta},
                {"lambda_alpha", h.lambda_alpha}, {"lambda_x", h.lambda_x},
                {"lambda_w", h.lambda_w},         {"sdae", to_json(h.sdae)},
                {"max_epochs", h.max_epochs},     {"patience", h.patience},
                {"seed", h.seed},                 {"init_stddev", h.init_stddev},
                {"center", h.center},
                {"deterministic", h.deterministic}};
}

namespace detail {

/// Rejects keys outside `allowed` so typos in config files do not pass silently.
inline void check_keys(const Json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [key, value] : j.items())
        if (!allowed.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
}

template <class T>
void read_key(const Json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const Json::exception&) {
        throw ConfigError(where + ": bad value for '" + key + "'");
    }
}

}  // namespace detail

/// Overlays the keys present in `j` onto `cfg`.
inline void update_from_json(SdaeConfig& cfg, const Json& j, const std::string& where = "sdae") {
    detail::check_keys(j, {"layer_widths", "noise_rate", "pretrain_epochs", "learning_rate", "pretrain_learning_rate",
                           "pretrain_batch_size"},
                       where);
    detail::read_key(j, "layer_widths", cfg.layer_widths, where);
    detail::read_key(j, "noise_rate", cfg.noise_rate, where);
    detail::read_key(j, "pretrain_epochs", cfg.pretrain_epochs, where);
    detail::read_key(j, "learning_rate", cfg.learning_rate, where);
    detail::read_key(j, "pretrain_learning_rate", cfg.pretrain_learning_rate, where);
    detail::read_key(j, "pretrain_batch_size", cfg.pretrain_batch_size, where);
}

inline void update_from_json(Hyperparams& h, const Json& j, const std::string& where = "hyper") {
    detail::check_keys(j, {"latent_dim", "lambda_s", "lambda_theta", "lambda_beta", "lambda_alpha", "lambda_x", "lambda_w",
                           "sdae", "max_epochs", "patience", "seed", "init_stddev", "center", "threads", "deterministic"},
                       where);
    detail::read_key(j, "latent_dim", h.latent_dim, where);
    detail::read_key(j, "lambda_s", h.lambda_s, where);
    detail::read_key(j, "lambda_theta", h.lambda_theta, where);
    detail::read_key(j, "lambda_beta", h.lambda_beta, where);
    detail::read_key(j, "lambda_alpha", h.lambda_alpha, where);
    detail::read_key(j, "lambda_x", h.lambda_x, where);
    detail::read_key(j, "lambda_w", h.lambda_w, where);
    if (j.contains("sdae")) update_from_json(h.sdae, j.at("sdae"), where + ".sdae");
    detail::read_key(j, "max_epochs", h.max_epochs, where);
    detail::read_key(j, "patience", h.patience, where);
    detail::read_key(j, "seed", h.seed, where);
    detail::read_key(j, "init_stddev", h.init_stddev, where);
    detail::read_key(j, "center", h.center, where);
    detail::read_key(j, "threads", h.threads, where);
    detail::read_key(j, "deterministic", h.deterministic, where);
}

// ---------------------------------------------------------------------------
// Checkpoint

struct Checkpoint {
    ModelState state;
    Hyperparams hyper;
    std::vector<std::string> user_ids;
    std::vector<std::string> item_ids;
    std::vector<std::string> vocab;
    SplitMode mode = SplitMode::in_matrix;
    std::string label;
    std::string fingerprint;
};

struct CheckpointOptions {
    /// Leave beta and alpha out of the file (they are not needed for
    /// out-of-matrix prediction). Loading then yields 0 x K matrices.
    bool item_factors = true;
};

namespace detail {

template <class T>
void write_le(std::ostream& out, T v) {
    static_assert(std::is_integral_v<T> || std::is_floating_point_v<T>);
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    auto bits = std::bit_cast<U>(v);
    char buf[sizeof(U)];
    for (std::size_t b = 0; b < sizeof(U); ++b) buf[b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
    out.write(buf, sizeof buf);
}

template <class T>
T read_le(std::istream& in, const char* what) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    unsigned char buf[sizeof(U)];
    if (!in.read(reinterpret_cast<char*>(buf), sizeof buf)) throw ValidationError(std::string("checkpoint truncated in ") + what);
    U bits = 0;
    for (std::size_t b = 0; b < sizeof(U); ++b) bits |= static_cast<U>(buf[b]) << (8 * b);
    return std::bit_cast<T>(bits);
}

struct NamedArray {
    std::string name;
    const Matrix* data;
};

}  // namespace detail

inline void save_checkpoint(std::ostream& out, const Checkpoint& ck, const CheckpointOptions& opt = {}) {
    const ModelState& st = ck.state;
    std::vector<detail::NamedArray> arrays{{"theta", &st.theta}};
    if (opt.item_factors) {
        arrays.push_back({"beta", &st.beta});
        arrays.push_back({"alpha", &st.alpha});
    }
    std::vector<Matrix> biases;
    biases.reserve(st.sdae.layers.size());
    for (const auto& layer : st.sdae.layers) biases.emplace_back(layer.bias);
    for (std::size_t l = 0; l < st.sdae.layers.size(); ++l) {
        arrays.push_back({"sdae.weight." + std::to_string(l), &st.sdae.layers[l].weight});
        arrays.push_back({"sdae.bias." + std::to_string(l), &biases[l]});
    }

    Json manifest;
    manifest["format_version"] = checkpoint_version;
    manifest["dims"] = {{"n_users", st.n_users()},
                        {"n_items", opt.item_factors ? st.n_items() : static_cast<Index>(ck.item_ids.size())},
                        {"latent_dim", st.latent_dim()},
                        {"vocab_size", st.sdae.empty() ? Index{0} : st.sdae.input_width()}};
    manifest["layer_widths"] = st.sdae.widths();
    manifest["hyperparams"] = to_json(ck.hyper);
    manifest["epoch"] = st.epoch;
    manifest["global_mean"] = st.global_mean;
    manifest["split_mode"] = to_string(ck.mode);
    manifest["run"] = ck.label;
    manifest["fingerprint"] = ck.fingerprint;
    manifest["item_factors"] = opt.item_factors;
    manifest["user_ids"] = ck.user_ids;
    manifest["item_ids"] = ck.item_ids;
    manifest["vocab"] = ck.vocab;
    Json list = Json::array();
    std::uint64_t offset = 0;
    for (const auto& a : arrays) {
        list.push_back({{"name", a.name}, {"rows", a.data->rows()}, {"cols", a.data->cols()}, {"offset", offset}});
        offset += 8 * static_cast<std::uint64_t>(a.data->size());
    }
    manifest["arrays"] = list;
    const std::string text = manifest.dump();

    out.write(checkpoint_magic.data(), checkpoint_magic.size());
    detail::write_le(out, checkpoint_version);
    detail::write_le(out, static_cast<std::uint64_t>(text.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& a : arrays)
        for (Index k = 0; k < a.data->size(); ++k) detail::write_le(out, a.data->data()[k]);
    if (!out) throw Error("checkpoint: write failed");
}

inline Checkpoint load_checkpoint(std::istream& in) {
    std::array<char, 8> magic{};
    if (!in.read(magic.data(), magic.size()) || magic != checkpoint_magic)
        throw ValidationError("checkpoint: bad magic (not a checkpoint file)");
    const auto version = detail::read_le<std::uint32_t>(in, "header");
    if (version != checkpoint_version)
        throw ValidationError("checkpoint: unsupported format version " + std::to_string(version) + " (expected " +
                              std::to_string(checkpoint_version) + ")");
    const auto length = detail::read_le<std::uint64_t>(in, "header");
    std::string text(length, '\0');
    if (!in.read(text.data(), static_cast<std::streamsize>(length))) throw ValidationError("checkpoint truncated in manifest");
    const std::streampos payload = in.tellg();

    Checkpoint ck;
    try {
        const Json m = Json::parse(text);
        const auto& dims = m.at("dims");
        const Index N = dims.at("n_users"), M = dims.at("n_items"), K = dims.at("latent_dim"), V = dims.at("vocab_size");
        update_from_json(ck.hyper, m.at("hyperparams"), "checkpoint.hyperparams");
        ck.state.epoch = m.at("epoch");
        ck.state.global_mean = m.at("global_mean");
        ck.mode = parse_split_mode(m.at("split_mode").get<std::string>());
        ck.label = m.at("run");
        ck.fingerprint = m.at("fingerprint");
        ck.user_ids = m.at("user_ids").get<std::vector<std::string>>();
        ck.item_ids = m.at("item_ids").get<std::vector<std::string>>();
        ck.vocab = m.at("vocab").get<std::vector<std::string>>();
        const auto widths = m.at("layer_widths").get<std::vector<Index>>();

        std::map<std::string, Matrix> arrays;
        for (const auto& a : m.at("arrays")) {
            const Index rows = a.at("rows"), cols = a.at("cols");
            const std::uint64_t offset = a.at("offset");
            Matrix x(rows, cols);
            in.seekg(payload + static_cast<std::streamoff>(offset));
            for (Index k = 0; k < x.size(); ++k) x.data()[k] = detail::read_le<double>(in, "payload");
            arrays.emplace(a.at("name").get<std::string>(), std::move(x));
        }
        auto take = [&](const std::string& name, Index rows, Index cols) {
            auto it = arrays.find(name);
            if (it == arrays.end()) throw ValidationError("checkpoint: missing array '" + name + "'");
            if (it->second.rows() != rows || it->second.cols() != cols)
                throw ValidationError("checkpoint: array '" + name + "' has shape " + std::to_string(it->second.rows()) +
                                      "x" + std::to_string(it->second.cols()) + ", manifest dimensions require " +
                                      std::to_string(rows) + "x" + std::to_string(cols));
            return std::move(it->second);
        };
        ck.state.theta = take("theta", N, K);
        if (m.at("item_factors").get<bool>()) {
            ck.state.beta = take("beta", M, K);
            ck.state.alpha = take("alpha", M, K);
        } else {
            ck.state.beta = Matrix(0, K);
            ck.state.alpha = Matrix(0, K);
        }
        if (!widths.empty()) {
            if (widths.front() != V || widths[widths.size() / 2] != K)
                throw ValidationError("checkpoint: layer widths disagree with the vocabulary size or latent dimension");
            for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
                SdaeLayer layer;
                layer.weight = take("sdae.weight." + std::to_string(l), widths[l], widths[l + 1]);
                layer.bias = take("sdae.bias." + std::to_string(l), 1, widths[l + 1]).row(0);
                ck.state.sdae.layers.push_back(std::move(layer));
            }
        }
        if (static_cast<Index>(ck.user_ids.size()) != N || static_cast<Index>(ck.item_ids.size()) != M ||
            (!widths.empty() && static_cast<Index>(ck.vocab.size()) != V))
            throw ValidationError("checkpoint: index maps disagree with the stored dimensions");
    } catch (const Json::exception& e) {
        throw ValidationError(std::string("checkpoint: malformed manifest: ") + e.what());
    }
    return ck;
}

}  // namespace tcf
