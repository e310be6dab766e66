#pragma once

// Toy Agent-DeiT backbone assembled from presets: patch embed, pre-norm
// transformer blocks whose attention is either the agent module or plain
// multi-head softmax attention, final norm, mean-pool classifier head.
// Carries enough caching to backpropagate a scalar loss to the patch-embed
// weights for gradient verification.

#include <filesystem>
#include <fstream>
#include <utility>

#include <nlohmann/json.hpp>

#include "agent_module.hpp"
#include "attention.hpp"
#include "tensor.hpp"

namespace agentattn {

struct ModelPreset {
    std::string name;
    std::string family = "deit";  // only "deit" is assembled
    std::size_t img_size = 224;
    std::size_t patch_size = 16;
    std::size_t depth = 12;
    std::size_t dim = 192;
    std::size_t heads = 3;
    std::vector<std::size_t> agent_n;  // per block; 0 = plain softmax block
    std::size_t mlp_ratio = 4;
    bool qkv_bias = true;
    std::size_t bias_h0 = 7, bias_w0 = 7;
    std::size_t num_classes = 1000;
    bool abs_pos_embed = false;

    std::size_t grid() const { return img_size / patch_size; }
    std::size_t tokens() const { return grid() * grid(); }

    void check() const {
        if (family != "deit")
            throw config_error("preset: only the deit family is assembled (" + family + ")");
        if (img_size == 0 || patch_size == 0 || img_size % patch_size != 0)
            throw config_error("preset: img_size must be divisible by patch_size");
        if (dim == 0 || heads == 0 || dim % heads != 0)
            throw config_error("preset: dim must be divisible by heads");
        if (agent_n.size() != depth)
            throw config_error("preset: agent_n must list one entry per block");
        std::size_t root = 0;
        for (std::size_t n : agent_n)
            if (n != 0 && !detail::perfect_square(n, root))
                throw config_error("preset: agent counts must be perfect squares");
    }
};

inline ModelPreset preset_from_json(const nlohmann::json& j) {
    ModelPreset p;
    p.name = j.at("name").get<std::string>();
    if (j.contains("family")) p.family = j.at("family").get<std::string>();
    p.img_size = j.at("img_size").get<std::size_t>();
    p.patch_size = j.at("patch_size").get<std::size_t>();
    p.depth = j.at("depth").get<std::size_t>();
    p.dim = j.at("dim").get<std::size_t>();
    p.heads = j.at("heads").get<std::size_t>();
    const auto& an = j.at("agent_n");
    if (an.is_array())
        p.agent_n = an.get<std::vector<std::size_t>>();
    else
        p.agent_n.assign(p.depth, an.get<std::size_t>());
    if (j.contains("mlp_ratio")) p.mlp_ratio = j.at("mlp_ratio").get<std::size_t>();
    if (j.contains("qkv_bias")) p.qkv_bias = j.at("qkv_bias").get<bool>();
    if (j.contains("bias_h0")) p.bias_h0 = j.at("bias_h0").get<std::size_t>();
    if (j.contains("bias_w0")) p.bias_w0 = j.at("bias_w0").get<std::size_t>();
    if (j.contains("num_classes")) p.num_classes = j.at("num_classes").get<std::size_t>();
    if (j.contains("abs_pos_embed")) p.abs_pos_embed = j.at("abs_pos_embed").get<bool>();
    return p;
}

inline ModelPreset load_preset(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw io_error("load_preset: cannot open " + path.string());
    nlohmann::json j;
    is >> j;
    return preset_from_json(j);
}

struct ParamReport {
    std::vector<std::pair<std::string, std::size_t>> components;
    std::size_t total = 0;

    void add(std::string name, std::size_t count) {
        components.emplace_back(std::move(name), count);
        total += count;
    }
};

// ---------------------------------------------------------------------------
// layers

template <typename T>
struct LayerNorm {
    Tensor<T> gamma, beta;  // C
    static constexpr T eps = T(1e-5);

    explicit LayerNorm(std::size_t c = 1) : gamma({c}, T(1)), beta({c}) {}

    struct Cache {
        Tensor<T> xhat;      // normalized input
        std::vector<T> inv_sigma;  // per row
    };

    Tensor<T> forward(const Tensor<T>& x, Cache* cache = nullptr) const {
        const std::size_t m = x.dim(0), c = x.dim(1);
        Tensor<T> y({m, c});
        Cache local;
        Cache& cc = cache ? *cache : local;
        cc.xhat = Tensor<T>({m, c});
        cc.inv_sigma.resize(m);
        for (std::size_t i = 0; i < m; ++i) {
            T mu = T(0);
            for (std::size_t j = 0; j < c; ++j) mu += x.at(i, j);
            mu /= T(c);
            T var = T(0);
            for (std::size_t j = 0; j < c; ++j) {
                const T dlt = x.at(i, j) - mu;
                var += dlt * dlt;
            }
            var /= T(c);
            const T inv = T(1) / std::sqrt(var + eps);
            cc.inv_sigma[i] = inv;
            for (std::size_t j = 0; j < c; ++j) {
                const T xh = (x.at(i, j) - mu) * inv;
                cc.xhat.at(i, j) = xh;
                y.at(i, j) = gamma.data()[j] * xh + beta.data()[j];
            }
        }
        return y;
    }

    Tensor<T> backward(const Cache& cc, const Tensor<T>& dy) const {
        const std::size_t m = dy.dim(0), c = dy.dim(1);
        Tensor<T> dx({m, c});
        for (std::size_t i = 0; i < m; ++i) {
            T mean_dxh = T(0), mean_dxh_xh = T(0);
            for (std::size_t j = 0; j < c; ++j) {
                const T dxh = dy.at(i, j) * gamma.data()[j];
                mean_dxh += dxh;
                mean_dxh_xh += dxh * cc.xhat.at(i, j);
            }
            mean_dxh /= T(c);
            mean_dxh_xh /= T(c);
            for (std::size_t j = 0; j < c; ++j) {
                const T dxh = dy.at(i, j) * gamma.data()[j];
                dx.at(i, j) = cc.inv_sigma[i] *
                              (dxh - mean_dxh - cc.xhat.at(i, j) * mean_dxh_xh);
            }
        }
        return dx;
    }
};

template <typename T>
T gelu(T x) {
    return T(0.5) * x * (T(1) + std::erf(x / std::sqrt(T(2))));
}

template <typename T>
T gelu_grad(T x) {
    const T phi = std::exp(-x * x / T(2)) / std::sqrt(T(2) * T(M_PI));
    return T(0.5) * (T(1) + std::erf(x / std::sqrt(T(2)))) + x * phi;
}

template <typename T>
struct Mlp {
    Tensor<T> w1, b1, w2, b2;

    Mlp() : w1({1, 1}), b1({1}), w2({1, 1}), b2({1}) {}
    Mlp(std::size_t c, std::size_t hidden)
        : w1({c, hidden}), b1({hidden}), w2({hidden, c}), b2({c}) {}

    struct Cache {
        Tensor<T> x, pre;  // input, pre-activation
    };

    Tensor<T> forward(const Tensor<T>& x, Cache* cache = nullptr) const {
        Tensor<T> h = detail::linear_xw_b(x, w1, &b1);
        Cache local;
        Cache& cc = cache ? *cache : local;
        cc.x = x;
        cc.pre = h;
        for (T& v : h.data()) v = gelu(v);
        return detail::linear_xw_b(h, w2, &b2);
    }

    Tensor<T> backward(const Cache& cc, const Tensor<T>& dy) const {
        Tensor<T> dh = matmul(dy, transpose2d(w2));
        for (std::size_t i = 0; i < dh.size(); ++i)
            dh.data()[i] *= gelu_grad(cc.pre.data()[i]);
        return matmul(dh, transpose2d(w1));
    }
};

// Plain multi-head softmax attention (DeiT block) for presets mixing agent
// and vanilla blocks.
template <typename T>
struct PlainAttention {
    std::size_t dim = 1, heads = 1;
    Tensor<T> wq, wk, wv, wo;
    Tensor<T> bq, bk, bv, bo;
    bool qkv_bias = true;

    struct Cache {
        Tensor<T> q, k, v;
        std::vector<Tensor<T>> weights;  // per head
    };

    Tensor<T> forward(const Tensor<T>& x, Cache* cache = nullptr) const {
        const std::size_t N = x.dim(0), d = dim / heads;
        const T scale = T(1) / std::sqrt(T(d));
        const Tensor<T>* pbq = qkv_bias ? &bq : nullptr;
        const Tensor<T>* pbk = qkv_bias ? &bk : nullptr;
        const Tensor<T>* pbv = qkv_bias ? &bv : nullptr;
        const Tensor<T> q = detail::linear_xw_b(x, wq, pbq);
        const Tensor<T> k = detail::linear_xw_b(x, wk, pbk);
        const Tensor<T> v = detail::linear_xw_b(x, wv, pbv);
        Cache local;
        Cache& cc = cache ? *cache : local;
        cc.q = q;
        cc.k = k;
        cc.v = v;
        cc.weights.clear();
        Tensor<T> heads_out({N, dim});
        for (std::size_t hd = 0; hd < heads; ++hd) {
            const std::size_t lo = hd * d;
            const Tensor<T> qh = detail::slice_cols(q, lo, d);
            const Tensor<T> kh = detail::slice_cols(k, lo, d);
            const Tensor<T> vh = detail::slice_cols(v, lo, d);
            const Tensor<T> w = row_softmax(matmul(qh, transpose2d(kh)), scale);
            detail::write_cols(heads_out, matmul(w, vh), lo);
            cc.weights.push_back(w);
        }
        return detail::linear_xw_b(heads_out, wo, &bo);
    }

    Tensor<T> backward(const Cache& cc, const Tensor<T>& dy) const {
        const std::size_t N = dy.dim(0), d = dim / heads;
        const T scale = T(1) / std::sqrt(T(d));
        const Tensor<T> dpre = matmul(dy, transpose2d(wo));
        Tensor<T> dq({N, dim}), dk({N, dim}), dv({N, dim});
        for (std::size_t hd = 0; hd < heads; ++hd) {
            const std::size_t lo = hd * d;
            const Tensor<T> doh = detail::slice_cols(dpre, lo, d);
            const Tensor<T>& w = cc.weights[hd];
            const Tensor<T> qh = detail::slice_cols(cc.q, lo, d);
            const Tensor<T> kh = detail::slice_cols(cc.k, lo, d);
            const Tensor<T> vh = detail::slice_cols(cc.v, lo, d);
            const Tensor<T> dw = matmul(doh, transpose2d(vh));
            detail::add_cols(dv, matmul(transpose2d(w), doh), lo);
            const Tensor<T> ds = row_softmax_backward(w, dw, scale);
            detail::add_cols(dq, matmul(ds, kh), lo);
            detail::add_cols(dk, matmul(transpose2d(ds), qh), lo);
        }
        Tensor<T> dx = matmul(dq, transpose2d(wq));
        dx = add(dx, matmul(dk, transpose2d(wk)));
        dx = add(dx, matmul(dv, transpose2d(wv)));
        return dx;
    }
};

template <typename T>
struct Block {
    bool is_agent = true;
    AgentModuleParams<T> agent;
    PlainAttention<T> plain;
    LayerNorm<T> ln1, ln2;
    Mlp<T> mlp;

    struct Cache {
        typename LayerNorm<T>::Cache ln1c, ln2c;
        ModuleCache<T> agentc;
        typename PlainAttention<T>::Cache plainc;
        typename Mlp<T>::Cache mlpc;
    };

    Tensor<T> forward(const Tensor<T>& x, Cache* cache = nullptr) const {
        Cache local;
        Cache& cc = cache ? *cache : local;
        const Tensor<T> n1 = ln1.forward(x, &cc.ln1c);
        Tensor<T> attn_out = is_agent
                                 ? agent_module_forward(agent, n1, false, &cc.agentc).out
                                 : plain.forward(n1, &cc.plainc);
        const Tensor<T> x1 = add(x, attn_out);
        const Tensor<T> n2 = ln2.forward(x1, &cc.ln2c);
        return add(x1, mlp.forward(n2, &cc.mlpc));
    }

    Tensor<T> backward(const Cache& cc, const Tensor<T>& dy) const {
        const Tensor<T> dmlp_in = mlp.backward(cc.mlpc, dy);
        const Tensor<T> dx1 = add(dy, ln2.backward(cc.ln2c, dmlp_in));
        const Tensor<T> dattn_in =
            is_agent ? agent_module_backward_input(agent, cc.agentc, dx1)
                     : plain.backward(cc.plainc, dx1);
        return add(dx1, ln1.backward(cc.ln1c, dattn_in));
    }
};

template <typename T>
struct Model {
    ModelPreset preset;
    Tensor<T> patch_w;  // (patch^2 * 3) x C
    Tensor<T> patch_b;  // C
    Tensor<T> pos_embed;  // N x C, used when preset.abs_pos_embed
    std::vector<Block<T>> blocks;
    LayerNorm<T> norm;
    Tensor<T> head_w;  // C x num_classes
    Tensor<T> head_b;  // num_classes
};

template <typename T>
Model<T> build(const ModelPreset& preset, std::uint64_t seed) {
    preset.check();
    std::mt19937_64 rng(seed);
    const std::size_t C = preset.dim, g = preset.grid(), N = preset.tokens();
    const T std_w = T(0.02);

    Model<T> m;
    m.preset = preset;
    m.patch_w = random_trunc_normal<T>({preset.patch_size * preset.patch_size * 3, C},
                                       rng, std_w);
    m.patch_b = Tensor<T>({C});
    m.pos_embed = preset.abs_pos_embed ? random_trunc_normal<T>({N, C}, rng, std_w)
                                       : Tensor<T>({1});

    for (std::size_t b = 0; b < preset.depth; ++b) {
        Block<T> blk;
        blk.ln1 = LayerNorm<T>(C);
        blk.ln2 = LayerNorm<T>(C);
        blk.mlp = Mlp<T>(C, C * preset.mlp_ratio);
        blk.mlp.w1 = random_trunc_normal<T>({C, C * preset.mlp_ratio}, rng, std_w);
        blk.mlp.w2 = random_trunc_normal<T>({C * preset.mlp_ratio, C}, rng, std_w);
        const std::size_t n = preset.agent_n[b];
        if (n != 0) {
            blk.is_agent = true;
            blk.agent = AgentModuleParams<T>::random(C, preset.heads, n, g, g, rng,
                                                     preset.qkv_bias);
            for (auto& bias : blk.agent.bias) {
                bias = AgentBiasParams<T>::random(n, g, g, rng,
                                                  std::min(preset.bias_h0, g),
                                                  std::min(preset.bias_w0, g));
            }
        } else {
            blk.is_agent = false;
            blk.plain.dim = C;
            blk.plain.heads = preset.heads;
            blk.plain.qkv_bias = preset.qkv_bias;
            blk.plain.wq = random_trunc_normal<T>({C, C}, rng, std_w);
            blk.plain.wk = random_trunc_normal<T>({C, C}, rng, std_w);
            blk.plain.wv = random_trunc_normal<T>({C, C}, rng, std_w);
            blk.plain.wo = random_trunc_normal<T>({C, C}, rng, std_w);
            blk.plain.bq = blk.plain.bk = blk.plain.bv = blk.plain.bo = Tensor<T>({C});
        }
        m.blocks.push_back(std::move(blk));
    }
    m.norm = LayerNorm<T>(C);
    m.head_w = random_trunc_normal<T>({C, preset.num_classes}, rng, std_w);
    m.head_b = Tensor<T>({preset.num_classes});
    return m;
}

template <typename T>
ParamReport count_params(const Model<T>& m) {
    const ModelPreset& p = m.preset;
    const std::size_t C = p.dim;
    ParamReport r;
    r.add("patch_embed", p.patch_size * p.patch_size * 3 * C + C);
    if (p.abs_pos_embed) r.add("pos_embed", p.tokens() * C);
    for (std::size_t b = 0; b < m.blocks.size(); ++b) {
        const Block<T>& blk = m.blocks[b];
        std::size_t count = 0;
        count += 2 * 2 * C;  // two layer norms
        if (blk.is_agent) {
            count += blk.agent.param_count();
        } else {
            count += 4 * C * C + C;  // projections + output bias
            if (blk.plain.qkv_bias) count += 3 * C;
        }
        count += C * C * p.mlp_ratio + C * p.mlp_ratio;  // fc1
        count += C * p.mlp_ratio * C + C;                // fc2
        r.add("block_" + std::to_string(b), count);
    }
    r.add("final_norm", 2 * C);
    r.add("head", C * p.num_classes + p.num_classes);
    return r;
}

// Cut the image into non-overlapping patches, one flattened row per patch.
template <typename T>
Tensor<T> patchify(const Tensor<T>& image, std::size_t patch) {
    if (image.rank() != 3 || image.dim(2) != 3)
        throw dimension_error("patchify: image must be h x w x 3");
    const std::size_t h = image.dim(0), w = image.dim(1);
    if (h % patch != 0 || w % patch != 0)
        throw dimension_error("patchify: image dims must be divisible by patch size");
    const std::size_t gh = h / patch, gw = w / patch;
    Tensor<T> out({gh * gw, patch * patch * 3});
    for (std::size_t pi = 0; pi < gh; ++pi)
        for (std::size_t pj = 0; pj < gw; ++pj) {
            const std::size_t row = pi * gw + pj;
            std::size_t col = 0;
            for (std::size_t i = 0; i < patch; ++i)
                for (std::size_t j = 0; j < patch; ++j)
                    for (std::size_t c = 0; c < 3; ++c)
                        out.at(row, col++) = image.at(pi * patch + i, pj * patch + j, c);
        }
    return out;
}

template <typename T>
struct ModelCache {
    Tensor<T> patches;
    std::vector<typename Block<T>::Cache> blockc;
    typename LayerNorm<T>::Cache normc;
};

template <typename T>
Tensor<T> forward_logits(const Model<T>& m, const Tensor<T>& image,
                         ModelCache<T>* cache = nullptr) {
    const ModelPreset& p = m.preset;
    if (image.rank() != 3 || image.dim(0) != p.img_size || image.dim(1) != p.img_size)
        throw dimension_error("forward_logits: image size mismatch");
    ModelCache<T> local;
    ModelCache<T>& cc = cache ? *cache : local;
    cc.patches = patchify(image, p.patch_size);
    Tensor<T> x = detail::linear_xw_b(cc.patches, m.patch_w, &m.patch_b);
    if (p.abs_pos_embed) x = add(x, m.pos_embed);
    cc.blockc.resize(m.blocks.size());
    for (std::size_t b = 0; b < m.blocks.size(); ++b)
        x = m.blocks[b].forward(x, &cc.blockc[b]);
    const Tensor<T> n = m.norm.forward(x, &cc.normc);
    // mean pool over tokens
    const std::size_t N = n.dim(0), C = n.dim(1);
    Tensor<T> pooled({1, C});
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < C; ++j) pooled.at(0, j) += n.at(i, j) / T(N);
    Tensor<T> logits = detail::linear_xw_b(pooled, m.head_w, &m.head_b);
    if (!logits.all_finite()) throw numeric_error("forward_logits: non-finite logits");
    return logits.reshaped({p.num_classes});
}

// Gradient of sum(logits) w.r.t. the patch-embed weight matrix.
template <typename T>
Tensor<T> grad_patch_embed(const Model<T>& m, const Tensor<T>& image) {
    ModelCache<T> cc;
    forward_logits(m, image, &cc);
    const ModelPreset& p = m.preset;
    const std::size_t N = p.tokens(), C = p.dim;

    // d sum(logits) / d pooled = row sums of head_w
    Tensor<T> dn({N, C});
    for (std::size_t j = 0; j < C; ++j) {
        T s = T(0);
        for (std::size_t c = 0; c < p.num_classes; ++c) s += m.head_w.at(j, c);
        const T per_token = s / T(N);
        for (std::size_t i = 0; i < N; ++i) dn.at(i, j) = per_token;
    }
    Tensor<T> dx = m.norm.backward(cc.normc, dn);
    for (std::size_t b = m.blocks.size(); b-- > 0;)
        dx = m.blocks[b].backward(cc.blockc[b], dx);
    return matmul(transpose2d(cc.patches), dx);
}

// ---------------------------------------------------------------------------
// shipped presets

inline ModelPreset agent_deit_t() {
    ModelPreset p;
    p.name = "agent-deit-t";
    p.depth = 12;
    p.dim = 192;
    p.heads = 3;
    p.agent_n.assign(12, 49);
    return p;
}

inline ModelPreset agent_deit_s() {
    ModelPreset p;
    p.name = "agent-deit-s";
    p.depth = 12;
    p.dim = 384;
    p.heads = 6;
    p.agent_n.assign(12, 49);
    return p;
}

// Mixed stack: four agent blocks (n = 81) followed by eight plain DeiT
// blocks.
inline ModelPreset agent_deit_b() {
    ModelPreset p;
    p.name = "agent-deit-b";
    p.depth = 12;
    p.dim = 768;
    p.heads = 12;
    p.agent_n.assign(12, 0);
    for (std::size_t i = 0; i < 4; ++i) p.agent_n[i] = 81;
    return p;
}

}  // namespace agentattn
