#pragma once

// Full agent attention module: multi-head agent attention with pooled agent
// tokens, per-head agent bias inside both softmaxes, a depthwise convolution
// on V for feature diversity, and an output projection. Also the
// training-free variant O = softmax(Q A^T) softmax(A K^T) V + k V.

#include <optional>
#include <vector>

#include "agent_bias.hpp"
#include "attention.hpp"
#include "tensor.hpp"

namespace agentattn {

// Reshape q (N x C) to h x w x C, adaptive-average-pool to sqrt(n) x sqrt(n),
// flatten row-major to n x C.
template <typename T>
Tensor<T> pool_agents(const Tensor<T>& q, std::size_t h, std::size_t w, std::size_t n) {
    if (q.rank() != 2 || q.dim(0) != h * w)
        throw dimension_error("pool_agents: q must be (h*w) x C");
    std::size_t root = 0;
    if (!detail::perfect_square(n, root))
        throw config_error("pool_agents: agent count must be a perfect square");
    if (root > std::min(h, w))
        throw config_error("pool_agents: sqrt(n) must not exceed min(h, w)");
    const std::size_t c = q.dim(1);
    const Tensor<T> pooled = adaptive_avg_pool2d(q.reshaped({h, w, c}), root, root);
    return pooled.reshaped({n, c});
}

template <typename T>
Tensor<T> pool_agents_backward(const Tensor<T>& da, std::size_t h, std::size_t w) {
    const std::size_t n = da.dim(0), c = da.dim(1);
    std::size_t root = 0;
    detail::perfect_square(n, root);
    const Tensor<T> dx =
        adaptive_avg_pool2d_backward(da.reshaped({root, root, c}), h, w);
    return dx.reshaped({h * w, c});
}

template <typename T>
struct AgentModuleParams {
    std::size_t dim = 0;       // channel count C
    std::size_t heads = 1;
    std::size_t n = 0;         // agent tokens, perfect square
    std::size_t h = 0, w = 0;  // spatial dims, N = h*w

    Tensor<T> wq, wk, wv, wo;  // C x C
    Tensor<T> bq, bk, bv;      // C, used when qkv_bias
    Tensor<T> bo;              // C
    bool qkv_bias = false;

    std::vector<AgentBiasParams<T>> bias;  // one per head, or one if shared
    bool share_bias = false;

    Tensor<T> dwc_kernel;  // 3 x 3 x C

    T scale1 = T(0), scale2 = T(0);  // 0 means 1/sqrt(per-head d)
    T shortcut_k = T(0);

    std::size_t head_dim() const { return dim / heads; }
    std::size_t tokens() const { return h * w; }

    T eff_scale1() const {
        return scale1 > T(0) ? scale1 : T(1) / std::sqrt(T(head_dim()));
    }
    T eff_scale2() const {
        return scale2 > T(0) ? scale2 : T(1) / std::sqrt(T(head_dim()));
    }

    void check() const {
        if (dim == 0 || heads == 0 || dim % heads != 0)
            throw config_error("agent_module: dim must be divisible by heads");
        std::size_t root = 0;
        if (!detail::perfect_square(n, root))
            throw config_error("agent_module: agent count must be a perfect square");
        const std::vector<std::size_t> cc{dim, dim};
        if (wq.shape() != cc || wk.shape() != cc || wv.shape() != cc || wo.shape() != cc)
            throw dimension_error("agent_module: projections must be C x C");
        const std::size_t want = share_bias ? 1 : heads;
        if (bias.size() != want)
            throw config_error("agent_module: bias table count mismatch");
        if (dwc_kernel.shape() != std::vector<std::size_t>{3, 3, dim})
            throw dimension_error("agent_module: dwc kernel must be 3 x 3 x C");
    }

    const AgentBiasParams<T>& bias_for_head(std::size_t head) const {
        return share_bias ? bias[0] : bias[head];
    }

    std::size_t param_count() const {
        std::size_t total = 4 * dim * dim + dim;  // projections + output bias
        if (qkv_bias) total += 3 * dim;
        total += 9 * dim;  // dwc
        for (const auto& b : bias) total += b.param_count();
        return total;
    }

    static AgentModuleParams identity_like(std::size_t dim, std::size_t heads,
                                           std::size_t n, std::size_t h, std::size_t w) {
        AgentModuleParams p;
        p.dim = dim;
        p.heads = heads;
        p.n = n;
        p.h = h;
        p.w = w;
        p.wq = p.wk = p.wv = p.wo = Tensor<T>({dim, dim});
        for (std::size_t i = 0; i < dim; ++i) p.wq.at(i, i) = p.wk.at(i, i) =
            p.wv.at(i, i) = p.wo.at(i, i) = T(1);
        p.bq = p.bk = p.bv = p.bo = Tensor<T>({dim});
        const std::size_t d = dim / heads;
        for (std::size_t hd = 0; hd < heads; ++hd)
            p.bias.push_back(AgentBiasParams<T>::zeros(n, h, w, std::min<std::size_t>(7, h),
                                                       std::min<std::size_t>(7, w)));
        (void)d;
        p.dwc_kernel = Tensor<T>({3, 3, dim});
        return p;
    }

    static AgentModuleParams random(std::size_t dim, std::size_t heads, std::size_t n,
                                    std::size_t h, std::size_t w, std::mt19937_64& rng,
                                    bool qkv_bias = false) {
        AgentModuleParams p = identity_like(dim, heads, n, h, w);
        const T std_w = T(0.02);
        p.wq = random_trunc_normal<T>({dim, dim}, rng, std_w);
        p.wk = random_trunc_normal<T>({dim, dim}, rng, std_w);
        p.wv = random_trunc_normal<T>({dim, dim}, rng, std_w);
        p.wo = random_trunc_normal<T>({dim, dim}, rng, std_w);
        p.qkv_bias = qkv_bias;
        for (auto& b : p.bias)
            b = AgentBiasParams<T>::random(n, h, w, rng, std::min<std::size_t>(7, h),
                                           std::min<std::size_t>(7, w));
        p.dwc_kernel = random_trunc_normal<T>({3, 3, dim}, rng, std_w);
        return p;
    }
};

template <typename T>
struct ModuleAux {
    Tensor<T> agents;                 // n x C pooled agent tokens
    std::vector<T> entropy_stage1;    // mean row entropy of softmax(A K^T + B1), per head
    std::vector<T> entropy_stage2;    // mean row entropy of softmax(Q A^T + B2), per head
};

template <typename T>
struct ModuleOutput {
    Tensor<T> out;  // N x C
    std::optional<ModuleAux<T>> aux;
};

namespace detail {

template <typename T>
Tensor<T> linear_xw_b(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* b) {
    Tensor<T> y = matmul(x, w);
    if (b) {
        const std::size_t m = y.dim(0), c = y.dim(1);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < c; ++j) y.at(i, j) += b->data()[j];
    }
    return y;
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t lo, std::size_t count) {
    const std::size_t m = x.dim(0);
    Tensor<T> out({m, count});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < count; ++j) out.at(i, j) = x.at(i, lo + j);
    return out;
}

template <typename T>
void write_cols(Tensor<T>& dst, const Tensor<T>& src, std::size_t lo) {
    const std::size_t m = src.dim(0), c = src.dim(1);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < c; ++j) dst.at(i, lo + j) = src.at(i, j);
}

template <typename T>
void add_cols(Tensor<T>& dst, const Tensor<T>& src, std::size_t lo) {
    const std::size_t m = src.dim(0), c = src.dim(1);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < c; ++j) dst.at(i, lo + j) += src.at(i, j);
}

template <typename T>
T mean_row_entropy(const Tensor<T>& p) {
    const std::size_t m = p.dim(0), c = p.dim(1);
    T total = T(0);
    for (std::size_t i = 0; i < m; ++i) {
        T ent = T(0);
        for (std::size_t j = 0; j < c; ++j) {
            const T v = p.at(i, j);
            if (v > T(0)) ent -= v * std::log(v);
        }
        total += ent;
    }
    return total / T(m);
}

}  // namespace detail

template <typename T>
struct ModuleCache {
    Tensor<T> x, q, k, v, agents;
    std::vector<Tensor<T>> p1, p2, va;  // per head
};

template <typename T>
ModuleOutput<T> agent_module_forward(const AgentModuleParams<T>& p, const Tensor<T>& x,
                                     bool want_aux = false,
                                     ModuleCache<T>* cache = nullptr) {
    p.check();
    if (x.rank() != 2 || x.dim(0) != p.tokens() || x.dim(1) != p.dim)
        throw dimension_error("agent_module: x must be N x C with N = h*w");
    const std::size_t N = p.tokens(), C = p.dim, d = p.head_dim();
    const T s1 = p.eff_scale1(), s2 = p.eff_scale2();

    const Tensor<T>* bq = p.qkv_bias ? &p.bq : nullptr;
    const Tensor<T>* bk = p.qkv_bias ? &p.bk : nullptr;
    const Tensor<T>* bv = p.qkv_bias ? &p.bv : nullptr;
    const Tensor<T> q = detail::linear_xw_b(x, p.wq, bq);
    const Tensor<T> k = detail::linear_xw_b(x, p.wk, bk);
    const Tensor<T> v = detail::linear_xw_b(x, p.wv, bv);
    const Tensor<T> agents = pool_agents(q, p.h, p.w, p.n);

    ModuleAux<T> aux;
    if (want_aux) aux.agents = agents;
    if (cache) {
        cache->x = x;
        cache->q = q;
        cache->k = k;
        cache->v = v;
        cache->agents = agents;
        cache->p1.clear();
        cache->p2.clear();
        cache->va.clear();
    }

    Tensor<T> heads_out({N, C});
    for (std::size_t hd = 0; hd < p.heads; ++hd) {
        const std::size_t lo = hd * d;
        const Tensor<T> qh = detail::slice_cols(q, lo, d);
        const Tensor<T> kh = detail::slice_cols(k, lo, d);
        const Tensor<T> vh = detail::slice_cols(v, lo, d);
        const Tensor<T> ah = detail::slice_cols(agents, lo, d);
        const AgentBiasParams<T>& bp = p.bias_for_head(hd);
        const Tensor<T> b1 = materialize_b1(bp);
        const Tensor<T> b2 = materialize_b2(bp);

        const Tensor<T> p1 =
            row_softmax(add(scaled(matmul(ah, transpose2d(kh)), s1), b1), T(1));
        const Tensor<T> va = matmul(p1, vh);
        const Tensor<T> p2 =
            row_softmax(add(scaled(matmul(qh, transpose2d(ah)), s2), b2), T(1));
        detail::write_cols(heads_out, matmul(p2, va), lo);

        if (want_aux) {
            aux.entropy_stage1.push_back(detail::mean_row_entropy(p1));
            aux.entropy_stage2.push_back(detail::mean_row_entropy(p2));
        }
        if (cache) {
            cache->p1.push_back(p1);
            cache->p2.push_back(p2);
            cache->va.push_back(va);
        }
    }

    const Tensor<T> dwc =
        depthwise_conv2d(v.reshaped({p.h, p.w, C}), p.dwc_kernel).reshaped({N, C});
    const Tensor<T> pre = add(heads_out, dwc);
    Tensor<T> out = detail::linear_xw_b(pre, p.wo, &p.bo);

    ModuleOutput<T> result{std::move(out), std::nullopt};
    if (want_aux) result.aux = std::move(aux);
    return result;
}

// Gradient of agent_module_forward w.r.t. the input x, by reverse-mode chain
// through the output projection, DWC, per-head biased agent attention, and
// the agent pooling path (agents depend on Q).
template <typename T>
Tensor<T> agent_module_backward_input(const AgentModuleParams<T>& p,
                                      const ModuleCache<T>& c, const Tensor<T>& dout) {
    const std::size_t N = p.tokens(), C = p.dim, d = p.head_dim();
    const T s1 = p.eff_scale1(), s2 = p.eff_scale2();

    const Tensor<T> dpre = matmul(dout, transpose2d(p.wo));
    Tensor<T> dq({N, C}), dk({N, C});
    Tensor<T> dv = depthwise_conv2d_backward_input(dpre.reshaped({p.h, p.w, C}),
                                                   p.dwc_kernel)
                       .reshaped({N, C});
    Tensor<T> dagents({p.n, C});

    for (std::size_t hd = 0; hd < p.heads; ++hd) {
        const std::size_t lo = hd * d;
        const Tensor<T> doh = detail::slice_cols(dpre, lo, d);
        const Tensor<T>& p1 = c.p1[hd];
        const Tensor<T>& p2 = c.p2[hd];
        const Tensor<T>& va = c.va[hd];
        const Tensor<T> qh = detail::slice_cols(c.q, lo, d);
        const Tensor<T> kh = detail::slice_cols(c.k, lo, d);
        const Tensor<T> vh = detail::slice_cols(c.v, lo, d);
        const Tensor<T> ah = detail::slice_cols(c.agents, lo, d);

        const Tensor<T> dp2 = matmul(doh, transpose2d(va));
        const Tensor<T> dva = matmul(transpose2d(p2), doh);
        const Tensor<T> ds2 = row_softmax_backward(p2, dp2, T(1));
        detail::add_cols(dq, scaled(matmul(ds2, ah), s2), lo);
        Tensor<T> dah = scaled(matmul(transpose2d(ds2), qh), s2);

        const Tensor<T> dp1 = matmul(dva, transpose2d(vh));
        detail::add_cols(dv, matmul(transpose2d(p1), dva), lo);
        const Tensor<T> ds1 = row_softmax_backward(p1, dp1, T(1));
        detail::add_cols(dk, scaled(matmul(transpose2d(ds1), ah), s1), lo);
        dah = add(dah, scaled(matmul(ds1, kh), s1));

        detail::add_cols(dagents, dah, lo);
    }

    dq = add(dq, pool_agents_backward(dagents, p.h, p.w));

    Tensor<T> dx = matmul(dq, transpose2d(p.wq));
    dx = add(dx, matmul(dk, transpose2d(p.wk)));
    dx = add(dx, matmul(dv, transpose2d(p.wv)));
    return dx;
}

// Training-free variant: pure agent attention plus an identity shortcut k*V,
// no bias and no DWC. The second softmax conventionally runs at the hotter
// d^-0.15 scale; scales are taken from `in`.
template <typename T>
Tensor<T> agent_attention_training_free(const AttentionInputs<T>& in, T shortcut_k) {
    if (shortcut_k < T(0))
        throw config_error("agent_attention_training_free: k must be >= 0");
    Tensor<T> out = agent_attention_pure(in);
    if (shortcut_k != T(0)) {
        for (std::size_t i = 0; i < out.size(); ++i)
            out.data()[i] += shortcut_k * in.v.data()[i];
    }
    return out;
}

// Default temperatures for the training-free variant at per-head dim d.
template <typename T>
std::pair<T, T> training_free_scales(std::size_t d) {
    return {std::pow(T(d), T(-0.5)), std::pow(T(d), T(-0.15))};
}

}  // namespace agentattn
