#pragma once

// Module parameters on disk: a directory of tensor files plus a JSON
// manifest naming each weight and its shape.

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "agent_module.hpp"
#include "tensor_io.hpp"

namespace agentattn {

namespace detail {

template <typename T>
void manifest_weight(nlohmann::json& weights, const std::filesystem::path& dir,
                     const std::string& name, const Tensor<T>& t) {
    const std::string file = name + ".atns";
    save_tensor(t, dir / file);
    weights.push_back({{"name", name}, {"file", file}, {"shape", t.shape()}});
}

}  // namespace detail

template <typename T>
void save_module_params(const AgentModuleParams<T>& p, const std::filesystem::path& dir) {
    p.check();
    std::filesystem::create_directories(dir);
    nlohmann::json manifest;
    manifest["dim"] = p.dim;
    manifest["heads"] = p.heads;
    manifest["n"] = p.n;
    manifest["h"] = p.h;
    manifest["w"] = p.w;
    manifest["qkv_bias"] = p.qkv_bias;
    manifest["share_bias"] = p.share_bias;
    manifest["scale1"] = double(p.scale1);
    manifest["scale2"] = double(p.scale2);
    manifest["shortcut_k"] = double(p.shortcut_k);
    manifest["dtype"] = std::is_same_v<T, float> ? "f32" : "f64";

    nlohmann::json weights = nlohmann::json::array();
    detail::manifest_weight(weights, dir, "wq", p.wq);
    detail::manifest_weight(weights, dir, "wk", p.wk);
    detail::manifest_weight(weights, dir, "wv", p.wv);
    detail::manifest_weight(weights, dir, "wo", p.wo);
    detail::manifest_weight(weights, dir, "bo", p.bo);
    if (p.qkv_bias) {
        detail::manifest_weight(weights, dir, "bq", p.bq);
        detail::manifest_weight(weights, dir, "bk", p.bk);
        detail::manifest_weight(weights, dir, "bv", p.bv);
    }
    detail::manifest_weight(weights, dir, "dwc_kernel", p.dwc_kernel);
    for (std::size_t i = 0; i < p.bias.size(); ++i) {
        const std::string tag = "bias" + std::to_string(i) + "_";
        const AgentBiasParams<T>& b = p.bias[i];
        detail::manifest_weight(weights, dir, tag + "b1_col", b.b1_col);
        detail::manifest_weight(weights, dir, tag + "b1_row", b.b1_row);
        detail::manifest_weight(weights, dir, tag + "b1_block", b.b1_block);
        detail::manifest_weight(weights, dir, tag + "b2_col", b.b2_col);
        detail::manifest_weight(weights, dir, tag + "b2_row", b.b2_row);
        detail::manifest_weight(weights, dir, tag + "b2_block", b.b2_block);
    }
    manifest["weights"] = std::move(weights);
    manifest["bias_h0"] = p.bias.empty() ? 7 : p.bias[0].h0;
    manifest["bias_w0"] = p.bias.empty() ? 7 : p.bias[0].w0;

    std::ofstream os(dir / "manifest.json");
    if (!os) throw io_error("save_module_params: cannot write manifest");
    os << manifest.dump(2) << '\n';
}

template <typename T>
AgentModuleParams<T> load_module_params(const std::filesystem::path& dir) {
    std::ifstream is(dir / "manifest.json");
    if (!is) throw io_error("load_module_params: missing manifest in " + dir.string());
    nlohmann::json manifest;
    is >> manifest;

    AgentModuleParams<T> p;
    p.dim = manifest.at("dim").get<std::size_t>();
    p.heads = manifest.at("heads").get<std::size_t>();
    p.n = manifest.at("n").get<std::size_t>();
    p.h = manifest.at("h").get<std::size_t>();
    p.w = manifest.at("w").get<std::size_t>();
    p.qkv_bias = manifest.at("qkv_bias").get<bool>();
    p.share_bias = manifest.at("share_bias").get<bool>();
    p.scale1 = T(manifest.at("scale1").get<double>());
    p.scale2 = T(manifest.at("scale2").get<double>());
    p.shortcut_k = T(manifest.at("shortcut_k").get<double>());

    auto load = [&](const std::string& name) {
        return load_tensor_as<T>(dir / (name + ".atns"));
    };
    p.wq = load("wq");
    p.wk = load("wk");
    p.wv = load("wv");
    p.wo = load("wo");
    p.bo = load("bo");
    if (p.qkv_bias) {
        p.bq = load("bq");
        p.bk = load("bk");
        p.bv = load("bv");
    } else {
        p.bq = p.bk = p.bv = Tensor<T>({p.dim});
    }
    p.dwc_kernel = load("dwc_kernel");

    const std::size_t tables = p.share_bias ? 1 : p.heads;
    const std::size_t h0 = manifest.at("bias_h0").get<std::size_t>();
    const std::size_t w0 = manifest.at("bias_w0").get<std::size_t>();
    for (std::size_t i = 0; i < tables; ++i) {
        const std::string tag = "bias" + std::to_string(i) + "_";
        AgentBiasParams<T> b = AgentBiasParams<T>::zeros(p.n, p.h, p.w, h0, w0);
        b.b1_col = load(tag + "b1_col");
        b.b1_row = load(tag + "b1_row");
        b.b1_block = load(tag + "b1_block");
        b.b2_col = load(tag + "b2_col");
        b.b2_row = load(tag + "b2_row");
        b.b2_block = load(tag + "b2_block");
        p.bias.push_back(std::move(b));
    }
    p.check();
    return p;
}

}  // namespace agentattn
