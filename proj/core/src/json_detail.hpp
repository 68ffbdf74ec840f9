#pragma once

// Internal JSON (de)serialization helpers. Strict by construction: unknown
// keys are configuration errors, reported with their path.

#include <json.hpp>

#include <initializer_list>
#include <string>

#include "hfw/backbones.hpp"

namespace hfw::jsondetail {

using nlohmann::json;

inline void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& path) {
    if (!j.is_object()) throw ConfigError(path + ": expected an object");
    for (const auto& [key, value] : j.items()) {
        bool found = false;
        for (const char* a : allowed)
            if (key == a) {
                found = true;
                break;
            }
        if (!found) throw ConfigError("unknown key '" + path + "." + key + "'");
    }
}

template <typename V>
V get_or(const json& j, const char* key, V fallback, const std::string& path) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<V>();
    } catch (const json::exception&) {
        throw ConfigError("bad value at '" + path + "." + key + "'");
    }
}

inline json hfw_to_json(const HfwConfig& c) {
    return json{{"d", c.d},
                {"heads", c.heads},
                {"eta_max", c.eta_max},
                {"delta", c.delta},
                {"eps", c.eps},
                {"memory_scope", memory_scope_name(c.memory_scope)},
                {"gate_scale", c.gate_scale}};
}

inline HfwConfig hfw_from_json(const json& j, const std::string& path) {
    check_keys(j, {"d", "heads", "eta_max", "delta", "eps", "memory_scope", "gate_scale"}, path);
    HfwConfig c;
    c.d = get_or<int64_t>(j, "d", 0, path);
    c.heads = get_or<int64_t>(j, "heads", 0, path);
    c.eta_max = get_or<double>(j, "eta_max", c.eta_max, path);
    c.delta = get_or<double>(j, "delta", c.delta, path);
    c.eps = get_or<double>(j, "eps", c.eps, path);
    c.gate_scale = get_or<double>(j, "gate_scale", c.gate_scale, path);
    const std::string scope = get_or<std::string>(j, "memory_scope", "per_forward", path);
    if (scope == "per_forward")
        c.memory_scope = MemoryScope::PerForward;
    else if (scope == "per_episode")
        c.memory_scope = MemoryScope::PerEpisode;
    else
        throw ConfigError("'" + path + ".memory_scope' must be per_forward or per_episode");
    return c;
}

inline json flat_to_json(const FlatBackboneConfig& c) {
    json j{{"depth", c.depth},     {"d", c.d},
           {"heads", c.heads},     {"mlp_ratio", c.mlp_ratio},
           {"patch", c.patch},     {"image", c.image},
           {"channels", c.channels}, {"embed_mode", c.embed_mode == EmbedMode::Gap ? "gap" : "cls"},
           {"pad_input", c.pad_input}, {"pad_fill", c.pad_fill}};
    if (c.hfw) j["hfw"] = hfw_to_json(*c.hfw);
    return j;
}

inline FlatBackboneConfig flat_from_json(const json& j, const std::string& path) {
    check_keys(j,
               {"depth", "d", "heads", "mlp_ratio", "patch", "image", "channels", "embed_mode", "pad_input",
                "pad_fill", "hfw"},
               path);
    FlatBackboneConfig c;
    c.depth = get_or<int64_t>(j, "depth", c.depth, path);
    c.d = get_or<int64_t>(j, "d", c.d, path);
    c.heads = get_or<int64_t>(j, "heads", c.heads, path);
    c.mlp_ratio = get_or<int64_t>(j, "mlp_ratio", c.mlp_ratio, path);
    c.patch = get_or<int64_t>(j, "patch", c.patch, path);
    c.image = get_or<int64_t>(j, "image", c.image, path);
    c.channels = get_or<int64_t>(j, "channels", c.channels, path);
    c.pad_input = get_or<bool>(j, "pad_input", c.pad_input, path);
    c.pad_fill = get_or<std::vector<double>>(j, "pad_fill", c.pad_fill, path);
    const std::string mode = get_or<std::string>(j, "embed_mode", "gap", path);
    if (mode == "gap")
        c.embed_mode = EmbedMode::Gap;
    else if (mode == "cls")
        c.embed_mode = EmbedMode::Cls;
    else
        throw ConfigError("'" + path + ".embed_mode' must be gap or cls");
    if (j.contains("hfw") && !j.at("hfw").is_null()) c.hfw = hfw_from_json(j.at("hfw"), path + ".hfw");
    return c;
}

inline json hier_to_json(const HierBackboneConfig& c) {
    json j{{"stage_depths", c.stage_depths},
           {"stage_dims", c.stage_dims},
           {"stage_heads", c.stage_heads},
           {"window", c.window},
           {"patch", c.patch},
           {"image", c.image},
           {"channels", c.channels},
           {"mlp_ratio", c.mlp_ratio},
           {"shift", c.shift},
           {"pad_input", c.pad_input},
           {"pad_fill", c.pad_fill}};
    if (c.hfw) j["hfw"] = hfw_to_json(*c.hfw);
    return j;
}

inline HierBackboneConfig hier_from_json(const json& j, const std::string& path) {
    check_keys(j,
               {"stage_depths", "stage_dims", "stage_heads", "window", "patch", "image", "channels", "mlp_ratio",
                "shift", "pad_input", "pad_fill", "hfw"},
               path);
    HierBackboneConfig c;
    c.stage_depths = get_or<std::vector<int64_t>>(j, "stage_depths", c.stage_depths, path);
    c.stage_dims = get_or<std::vector<int64_t>>(j, "stage_dims", c.stage_dims, path);
    c.stage_heads = get_or<std::vector<int64_t>>(j, "stage_heads", c.stage_heads, path);
    c.window = get_or<int64_t>(j, "window", c.window, path);
    c.patch = get_or<int64_t>(j, "patch", c.patch, path);
    c.image = get_or<int64_t>(j, "image", c.image, path);
    c.channels = get_or<int64_t>(j, "channels", c.channels, path);
    c.mlp_ratio = get_or<int64_t>(j, "mlp_ratio", c.mlp_ratio, path);
    c.shift = get_or<bool>(j, "shift", c.shift, path);
    c.pad_input = get_or<bool>(j, "pad_input", c.pad_input, path);
    c.pad_fill = get_or<std::vector<double>>(j, "pad_fill", c.pad_fill, path);
    if (j.contains("hfw") && !j.at("hfw").is_null()) c.hfw = hfw_from_json(j.at("hfw"), path + ".hfw");
    return c;
}

}  // namespace hfw::jsondetail
