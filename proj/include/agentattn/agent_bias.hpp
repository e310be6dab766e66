#pragma once

// Spatial agent biases B1 (n x N) and B2 (N x n) built from six compact
// learnable components: per-agent column, row, and block biases. Column and
// row components are repeated across the grid; block components are
// bilinearly resized from an h0 x w0 base.

#include <cmath>

#include "tensor.hpp"

namespace agentattn {

template <typename T>
struct AgentBiasParams {
    std::size_t n = 0;   // agent count
    std::size_t h = 0, w = 0;    // feature map dims, N = h*w
    std::size_t h0 = 7, w0 = 7;  // block-bias base sizes

    Tensor<T> b1_col;    // n x 1 x w
    Tensor<T> b1_row;    // n x h x 1
    Tensor<T> b1_block;  // n x h0 x w0
    Tensor<T> b2_col;    // 1 x w x n
    Tensor<T> b2_row;    // h x 1 x n
    Tensor<T> b2_block;  // h0 x w0 x n

    std::size_t tokens() const { return h * w; }

    void check() const {
        if (h0 < 1 || h0 > h || w0 < 1 || w0 > w)
            throw config_error("agent_bias: need 1 <= h0 <= h, 1 <= w0 <= w");
        auto expect = [](const Tensor<T>& t, std::vector<std::size_t> s, const char* name) {
            if (t.shape() != s) throw dimension_error(std::string("agent_bias: bad shape for ") + name);
        };
        expect(b1_col, {n, 1, w}, "b1_col");
        expect(b1_row, {n, h, 1}, "b1_row");
        expect(b1_block, {n, h0, w0}, "b1_block");
        expect(b2_col, {1, w, n}, "b2_col");
        expect(b2_row, {h, 1, n}, "b2_row");
        expect(b2_block, {h0, w0, n}, "b2_block");
    }

    std::size_t param_count() const {
        return 2 * (n * w + n * h + n * h0 * w0);
    }

    static AgentBiasParams zeros(std::size_t n, std::size_t h, std::size_t w,
                                 std::size_t h0 = 7, std::size_t w0 = 7) {
        h0 = std::min(h0, h);
        w0 = std::min(w0, w);
        AgentBiasParams p;
        p.n = n;
        p.h = h;
        p.w = w;
        p.h0 = h0;
        p.w0 = w0;
        p.b1_col = Tensor<T>({n, 1, w});
        p.b1_row = Tensor<T>({n, h, 1});
        p.b1_block = Tensor<T>({n, h0, w0});
        p.b2_col = Tensor<T>({1, w, n});
        p.b2_row = Tensor<T>({h, 1, n});
        p.b2_block = Tensor<T>({h0, w0, n});
        return p;
    }

    static AgentBiasParams random(std::size_t n, std::size_t h, std::size_t w,
                                  std::mt19937_64& rng, std::size_t h0 = 7,
                                  std::size_t w0 = 7, T stddev = T(0.02)) {
        AgentBiasParams p = zeros(n, h, w, h0, w0);
        p.b1_col = random_trunc_normal<T>({n, 1, w}, rng, stddev);
        p.b1_row = random_trunc_normal<T>({n, h, 1}, rng, stddev);
        p.b1_block = random_trunc_normal<T>({n, p.h0, p.w0}, rng, stddev);
        p.b2_col = random_trunc_normal<T>({1, w, n}, rng, stddev);
        p.b2_row = random_trunc_normal<T>({h, 1, n}, rng, stddev);
        p.b2_block = random_trunc_normal<T>({p.h0, p.w0, n}, rng, stddev);
        return p;
    }
};

// B1[a][i*w+j] = b1_col[a][0][j] + b1_row[a][i][0] + resize(b1_block)[a][i][j]
template <typename T>
Tensor<T> materialize_b1(const AgentBiasParams<T>& p) {
    p.check();
    const std::size_t n = p.n, h = p.h, w = p.w;
    // resize each agent's block to h x w; treat agent axis as channels
    Tensor<T> blocks({p.h0, p.w0, n});
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t i = 0; i < p.h0; ++i)
            for (std::size_t j = 0; j < p.w0; ++j)
                blocks.at(i, j, a) = p.b1_block.at(a, i, j);
    const Tensor<T> big = bilinear_resize(blocks, h, w);
    Tensor<T> out({n, h * w});
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j)
                out.at(a, i * w + j) =
                    p.b1_col.at(a, 0, j) + p.b1_row.at(a, i, 0) + big.at(i, j, a);
    return out;
}

// Mirror of materialize_b1 with the agent axis last; N x n row-major.
template <typename T>
Tensor<T> materialize_b2(const AgentBiasParams<T>& p) {
    p.check();
    const std::size_t n = p.n, h = p.h, w = p.w;
    const Tensor<T> big = bilinear_resize(p.b2_block, h, w);
    Tensor<T> out({h * w, n});
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j)
            for (std::size_t a = 0; a < n; ++a)
                out.at(i * w + j, a) =
                    p.b2_col.at(0, j, a) + p.b2_row.at(i, 0, a) + big.at(i, j, a);
    return out;
}

namespace detail {

inline bool perfect_square(std::size_t n, std::size_t& root) {
    root = std::size_t(std::llround(std::sqrt(double(n))));
    return root * root == n;
}

// Interpolate along the agent axis. Agents are treated as a sqrt(n) x sqrt(n)
// grid when both counts are perfect squares, else a 1-D axis. `values` holds
// one scalar row of length `per` for each agent.
template <typename T>
Tensor<T> resize_agent_axis(const Tensor<T>& flat /* n x per */, std::size_t new_n) {
    const std::size_t n = flat.dim(0), per = flat.dim(1);
    std::size_t r_old = 0, r_new = 0;
    if (perfect_square(n, r_old) && perfect_square(new_n, r_new)) {
        Tensor<T> grid({r_old, r_old, per});
        for (std::size_t a = 0; a < n; ++a)
            for (std::size_t c = 0; c < per; ++c)
                grid.at(a / r_old, a % r_old, c) = flat.at(a, c);
        const Tensor<T> resized = bilinear_resize(grid, r_new, r_new);
        Tensor<T> out({new_n, per});
        for (std::size_t a = 0; a < new_n; ++a)
            for (std::size_t c = 0; c < per; ++c)
                out.at(a, c) = resized.at(a / r_new, a % r_new, c);
        return out;
    }
    Tensor<T> line({n, 1, per});
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t c = 0; c < per; ++c) line.at(a, 0, c) = flat.at(a, c);
    const Tensor<T> resized = bilinear_resize(line, new_n, 1);
    Tensor<T> out({new_n, per});
    for (std::size_t a = 0; a < new_n; ++a)
        for (std::size_t c = 0; c < per; ++c) out.at(a, c) = resized.at(a, 0, c);
    return out;
}

}  // namespace detail

// Adapt bias components to a new agent count and feature-map size by
// bilinear interpolation along the spatial axes and the agent axis.
template <typename T>
AgentBiasParams<T> resize_bias_for(const AgentBiasParams<T>& p, std::size_t new_n,
                                   std::size_t new_h, std::size_t new_w) {
    p.check();
    if (new_n < 1 || new_h < 1 || new_w < 1)
        throw config_error("resize_bias_for: sizes must be >= 1");
    if (new_n == p.n && new_h == p.h && new_w == p.w) return p;

    AgentBiasParams<T> out = AgentBiasParams<T>::zeros(
        new_n, new_h, new_w, std::min(p.h0, new_h), std::min(p.w0, new_w));

    const std::size_t n = p.n;
    auto spatial = [](const Tensor<T>& t, std::size_t oh, std::size_t ow) {
        return bilinear_resize(t, oh, ow);
    };

    // b1_col: per agent a 1-D signal of length w
    {
        Tensor<T> sig({1, p.w, n});
        for (std::size_t a = 0; a < n; ++a)
            for (std::size_t j = 0; j < p.w; ++j) sig.at(0, j, a) = p.b1_col.at(a, 0, j);
        const Tensor<T> rs = spatial(sig, 1, new_w);
        Tensor<T> flat({n, new_w});
        for (std::size_t a = 0; a < n; ++a)
            for (std::size_t j = 0; j < new_w; ++j) flat.at(a, j) = rs.at(0, j, a);
        const Tensor<T> fin = detail::resize_agent_axis(flat, new_n);
        for (std::size_t a = 0; a < new_n; ++a)
            for (std::size_t j = 0; j < new_w; ++j) out.b1_col.at(a, 0, j) = fin.at(a, j);
    }
    // b1_row: per agent a 1-D signal of length h
    {
        Tensor<T> sig({p.h, 1, n});
        for (std::size_t a = 0; a < n; ++a)
            for (std::size_t i = 0; i < p.h; ++i) sig.at(i, 0, a) = p.b1_row.at(a, i, 0);
        const Tensor<T> rs = spatial(sig, new_h, 1);
        Tensor<T> flat({n, new_h});
        for (std::size_t a = 0; a < n; ++a)
            for (std::size_t i = 0; i < new_h; ++i) flat.at(a, i) = rs.at(i, 0, a);
        const Tensor<T> fin = detail::resize_agent_axis(flat, new_n);
        for (std::size_t a = 0; a < new_n; ++a)
            for (std::size_t i = 0; i < new_h; ++i) out.b1_row.at(a, i, 0) = fin.at(a, i);
    }
    // b1_block: base grid kept at (h0', w0')
    {
        Tensor<T> sig({p.h0, p.w0, n});
        for (std::size_t a = 0; a < n; ++a)
            for (std::size_t i = 0; i < p.h0; ++i)
                for (std::size_t j = 0; j < p.w0; ++j) sig.at(i, j, a) = p.b1_block.at(a, i, j);
        const Tensor<T> rs = spatial(sig, out.h0, out.w0);
        Tensor<T> flat({n, out.h0 * out.w0});
        for (std::size_t a = 0; a < n; ++a)
            for (std::size_t c = 0; c < out.h0 * out.w0; ++c)
                flat.at(a, c) = rs.data()[c * n + a];
        const Tensor<T> fin = detail::resize_agent_axis(flat, new_n);
        for (std::size_t a = 0; a < new_n; ++a)
            for (std::size_t i = 0; i < out.h0; ++i)
                for (std::size_t j = 0; j < out.w0; ++j)
                    out.b1_block.at(a, i, j) = fin.at(a, i * out.w0 + j);
    }
    // b2 family mirrors b1 with the agent axis already last
    {
        const Tensor<T> rs = spatial(p.b2_col, 1, new_w);
        Tensor<T> flat({n, new_w});
        for (std::size_t a = 0; a < n; ++a)
            for (std::size_t j = 0; j < new_w; ++j) flat.at(a, j) = rs.at(0, j, a);
        const Tensor<T> fin = detail::resize_agent_axis(flat, new_n);
        for (std::size_t a = 0; a < new_n; ++a)
            for (std::size_t j = 0; j < new_w; ++j) out.b2_col.at(0, j, a) = fin.at(a, j);
    }
    {
        const Tensor<T> rs = spatial(p.b2_row, new_h, 1);
        Tensor<T> flat({n, new_h});
        for (std::size_t a = 0; a < n; ++a)
            for (std::size_t i = 0; i < new_h; ++i) flat.at(a, i) = rs.at(i, 0, a);
        const Tensor<T> fin = detail::resize_agent_axis(flat, new_n);
        for (std::size_t a = 0; a < new_n; ++a)
            for (std::size_t i = 0; i < new_h; ++i) out.b2_row.at(i, 0, a) = fin.at(a, i);
    }
    {
        const Tensor<T> rs = spatial(p.b2_block, out.h0, out.w0);
        Tensor<T> flat({n, out.h0 * out.w0});
        for (std::size_t a = 0; a < n; ++a)
            for (std::size_t c = 0; c < out.h0 * out.w0; ++c)
                flat.at(a, c) = rs.data()[c * n + a];
        const Tensor<T> fin = detail::resize_agent_axis(flat, new_n);
        for (std::size_t a = 0; a < new_n; ++a)
            for (std::size_t i = 0; i < out.h0; ++i)
                for (std::size_t j = 0; j < out.w0; ++j)
                    out.b2_block.at(i, j, a) = fin.at(a, i * out.w0 + j);
    }
    return out;
}

}  // namespace agentattn
