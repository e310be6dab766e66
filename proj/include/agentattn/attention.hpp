#pragma once

// The three attention paradigms as pure single-head kernels over explicit
// (Q, K, V[, A]) inputs: softmax attention, linear attention with a feature
// map, and agent attention (two chained softmax attentions). The analytic
// backward of agent attention is the verification target for the gradient
// checks.

#include <optional>

#include "tensor.hpp"

namespace agentattn {

template <typename T>
struct AttentionInputs {
    Tensor<T> q;  // N x d
    Tensor<T> k;  // N x d
    Tensor<T> v;  // N x d
    std::optional<Tensor<T>> a;  // n x d agent tokens
    T scale1 = T(0);  // first softmax temperature, 0 means 1/sqrt(d)
    T scale2 = T(0);  // second softmax temperature, 0 means 1/sqrt(d)

    std::size_t tokens() const { return q.dim(0); }
    std::size_t head_dim() const { return q.dim(1); }
    std::size_t agents() const { return a ? a->dim(0) : 0; }

    T eff_scale1() const {
        return scale1 > T(0) ? scale1 : T(1) / std::sqrt(T(head_dim()));
    }
    T eff_scale2() const {
        return scale2 > T(0) ? scale2 : T(1) / std::sqrt(T(head_dim()));
    }

    void check() const {
        if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2)
            throw dimension_error("attention: q/k/v must be rank 2");
        if (!q.same_shape(k) || !q.same_shape(v))
            throw dimension_error("attention: q/k/v shapes must match");
        if (a) {
            if (a->rank() != 2 || a->dim(1) != q.dim(1))
                throw dimension_error("attention: agent head dim mismatch");
            if (a->dim(0) < 1 || a->dim(0) > q.dim(0))
                throw dimension_error("attention: need 1 <= n <= N");
        }
    }
};

// O = softmax(scale1 * Q K^T) V
template <typename T>
Tensor<T> softmax_attention(const AttentionInputs<T>& in) {
    in.check();
    const Tensor<T> scores = matmul(in.q, transpose2d(in.k));
    const Tensor<T> weights = row_softmax(scores, in.eff_scale1());
    return matmul(weights, in.v);
}

enum class PhiMap { elu_plus_one, relu };

template <typename T>
Tensor<T> apply_phi(const Tensor<T>& x, PhiMap phi) {
    Tensor<T> out = x;
    for (T& v : out.data()) {
        if (phi == PhiMap::relu)
            v = std::max(v, T(0));
        else
            v = v > T(0) ? v + T(1) : std::exp(v);  // elu(x)+1
    }
    return out;
}

// O_i = phi(Q)_i (phi(K)^T V) / (phi(Q)_i sum_j phi(K)_j), computed in the
// reordered O(N d^2) form. `normalized` disables the denominator.
template <typename T>
Tensor<T> linear_attention(const AttentionInputs<T>& in, PhiMap phi,
                           bool normalized = true) {
    in.check();
    const Tensor<T> pq = apply_phi(in.q, phi);
    const Tensor<T> pk = apply_phi(in.k, phi);
    const std::size_t n_tok = in.tokens(), d = in.head_dim();

    const Tensor<T> kv = matmul(transpose2d(pk), in.v);  // d x d
    Tensor<T> out = matmul(pq, kv);                      // N x d
    if (!normalized) return out;

    // per-row denominator: phi(Q)_i . sum_j phi(K)_j
    std::vector<T> ksum(d, T(0));
    for (std::size_t j = 0; j < n_tok; ++j)
        for (std::size_t c = 0; c < d; ++c) ksum[c] += pk.at(j, c);
    for (std::size_t i = 0; i < n_tok; ++i) {
        T denom = T(0);
        for (std::size_t c = 0; c < d; ++c) denom += pq.at(i, c) * ksum[c];
        if (std::abs(denom) < T(1e-12))
            throw numeric_error("linear_attention: vanishing denominator at row " +
                                std::to_string(i));
        const T inv = T(1) / denom;
        for (std::size_t c = 0; c < d; ++c) out.at(i, c) *= inv;
    }
    return out;
}

// Agent attention, Eq. form: V_A = softmax(scale1 * A K^T) V, then
// O = softmax(scale2 * Q A^T) V_A. Cost O(N n d).
template <typename T>
Tensor<T> agent_attention_pure(const AttentionInputs<T>& in) {
    in.check();
    if (!in.a) throw config_error("agent_attention_pure: agent tokens required");
    const Tensor<T> p1 = row_softmax(matmul(*in.a, transpose2d(in.k)), in.eff_scale1());
    const Tensor<T> va = matmul(p1, in.v);  // n x d
    const Tensor<T> p2 = row_softmax(matmul(in.q, transpose2d(*in.a)), in.eff_scale2());
    return matmul(p2, va);
}

// Generalized-linear-attention maps: phi_q = softmax(scale2 * Q A^T),
// phi_k = softmax(scale1 * A K^T)^T. phi_q (phi_k^T V) reproduces
// agent_attention_pure.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> equivalent_phi(const AttentionInputs<T>& in) {
    in.check();
    if (!in.a) throw config_error("equivalent_phi: agent tokens required");
    Tensor<T> phi_q = row_softmax(matmul(in.q, transpose2d(*in.a)), in.eff_scale2());
    Tensor<T> phi_k =
        transpose2d(row_softmax(matmul(*in.a, transpose2d(in.k)), in.eff_scale1()));
    return {std::move(phi_q), std::move(phi_k)};
}

template <typename T>
struct AgentAttentionGrads {
    Tensor<T> dq, dk, dv, da;
};

// Analytic gradients of agent_attention_pure w.r.t. all four inputs.
// Softmax-Jacobian chain rule applied to each of the two stages; optional
// additive biases b1 (n x N, first stage) and b2 (N x n, second stage)
// participate in the forward scores but have constant Jacobian, so the
// score gradients are also the bias gradients.
template <typename T>
struct BiasedAgentAttentionGrads {
    Tensor<T> dq, dk, dv, da, db1, db2;
};

template <typename T>
BiasedAgentAttentionGrads<T> agent_attention_backward_biased(
    const AttentionInputs<T>& in, const Tensor<T>& grad_out,
    const Tensor<T>* b1 = nullptr, const Tensor<T>* b2 = nullptr) {
    in.check();
    if (!in.a) throw config_error("agent_attention_backward: agent tokens required");
    if (!grad_out.same_shape(in.q))
        throw dimension_error("agent_attention_backward: grad_out shape mismatch");
    const T s1 = in.eff_scale1(), s2 = in.eff_scale2();
    const Tensor<T>& a = *in.a;

    Tensor<T> scores1 = scaled(matmul(a, transpose2d(in.k)), s1);
    if (b1) scores1 = add(scores1, *b1);
    const Tensor<T> p1 = row_softmax(scores1, T(1));
    const Tensor<T> va = matmul(p1, in.v);
    Tensor<T> scores2 = scaled(matmul(in.q, transpose2d(a)), s2);
    if (b2) scores2 = add(scores2, *b2);
    const Tensor<T> p2 = row_softmax(scores2, T(1));

    // stage 2: O = p2 va
    const Tensor<T> dp2 = matmul(grad_out, transpose2d(va));
    const Tensor<T> dva = matmul(transpose2d(p2), grad_out);
    const Tensor<T> ds2 = row_softmax_backward(p2, dp2, T(1));
    Tensor<T> dq = scaled(matmul(ds2, a), s2);
    Tensor<T> da = scaled(matmul(transpose2d(ds2), in.q), s2);

    // stage 1: va = p1 v
    const Tensor<T> dp1 = matmul(dva, transpose2d(in.v));
    Tensor<T> dv = matmul(transpose2d(p1), dva);
    const Tensor<T> ds1 = row_softmax_backward(p1, dp1, T(1));
    Tensor<T> dk = scaled(matmul(transpose2d(ds1), a), s1);
    da = add(da, scaled(matmul(ds1, in.k), s1));

    return {std::move(dq), std::move(dk), std::move(dv), std::move(da), ds1, ds2};
}

template <typename T>
AgentAttentionGrads<T> agent_attention_backward(const AttentionInputs<T>& in,
                                                const Tensor<T>& grad_out) {
    auto g = agent_attention_backward_biased(in, grad_out);
    return {std::move(g.dq), std::move(g.dk), std::move(g.dv), std::move(g.da)};
}

}  // namespace agentattn
