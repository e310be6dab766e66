#pragma once

// Exact multiply-accumulate accounting and wall-clock scaling measurements.
// Counting convention: one MAC per multiply-add inside a matrix product;
// softmax exponentials and divisions are reported separately, never in the
// headline count. Model-level figures follow the attention-paper convention
// of quoting MACs as "FLOPs".

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "model.hpp"
#include "tensor.hpp"

namespace agentattn {

struct FlopModel {
    std::string kernel;
    std::size_t N = 0, n = 0, d = 0, heads = 1;
    std::uint64_t mac_count = 0;
    std::uint64_t exp_count = 0;  // softmax exponentials, side column
};

// softmax: scores (N^2 d) + aggregation (N^2 d) per head
// agent:   A K^T (N n d) + P1 V (N n d) + Q A^T (N n d) + P2 V_A (N n d)
inline FlopModel flop_model(const std::string& kernel, std::size_t N, std::size_t n,
                            std::size_t d, std::size_t heads) {
    if (N == 0 || d == 0 || heads == 0)
        throw config_error("flop_model: sizes must be positive");
    FlopModel m;
    m.kernel = kernel;
    m.N = N;
    m.n = n;
    m.d = d;
    m.heads = heads;
    const std::uint64_t uN = N, un = n, ud = d, uh = heads;
    if (kernel == "softmax") {
        m.mac_count = 2 * uN * uN * ud * uh;
        m.exp_count = uN * uN * uh;
    } else if (kernel == "agent") {
        if (n == 0) throw config_error("flop_model: agent kernel needs n > 0");
        m.mac_count = 4 * uN * un * ud * uh;
        m.exp_count = 2 * uN * un * uh;
    } else {
        throw config_error("flop_model: unknown kernel " + kernel);
    }
    return m;
}

inline std::uint64_t flop_count(const std::string& kernel, std::size_t N, std::size_t n,
                                std::size_t d, std::size_t heads) {
    return flop_model(kernel, N, n, d, heads).mac_count;
}

// MAC count of one model forward at the preset's native resolution, itemized
// over patch embed, attention blocks, MLPs, DWC, and head. Reported in the
// paper tables' convention (MACs quoted as FLOPs).
inline std::uint64_t flops_model_forward(const ModelPreset& p) {
    p.check();
    const std::uint64_t N = p.tokens(), C = p.dim;
    const std::uint64_t d = C / p.heads;
    std::uint64_t total = N * (p.patch_size * p.patch_size * 3) * C;  // patch embed
    for (std::size_t b = 0; b < p.depth; ++b) {
        const std::uint64_t n = p.agent_n[b];
        total += 3 * N * C * C;  // qkv projections
        if (n != 0) {
            total += flop_count("agent", N, n, d, p.heads);
            total += N * 9 * C;  // dwc
        } else {
            total += flop_count("softmax", N, 0, d, p.heads);
        }
        total += N * C * C;                        // output projection
        total += 2 * N * C * (C * p.mlp_ratio);    // mlp fc1 + fc2
    }
    total += C * p.num_classes;  // head
    return total;
}

struct BenchRow {
    std::string kernel;
    std::size_t N = 0, n = 0, d = 0;
    std::string dtype;
    std::uint64_t wall_ns = 0;
    std::uint64_t mac_count = 0;
};

inline void write_csv_header(std::ostream& os) {
    os << "kernel,N,n,d,dtype,wall_ns,mac_count\n";
}

inline void write_csv_row(std::ostream& os, const BenchRow& r) {
    os << r.kernel << ',' << r.N << ',' << r.n << ',' << r.d << ',' << r.dtype << ','
       << r.wall_ns << ',' << r.mac_count << '\n';
}

namespace detail {

// Row-streaming softmax attention: O(N^2 d) time, O(N d) memory.
template <typename T>
void softmax_attention_rows(const T* q, const T* k, const T* v, T* out, std::size_t N,
                            std::size_t d, T scale, std::size_t row_lo,
                            std::size_t row_hi) {
    std::vector<T> scores(N);
    for (std::size_t i = row_lo; i < row_hi; ++i) {
        const T* qi = q + i * d;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < N; ++j) {
            const T* kj = k + j * d;
            T s = T(0);
            for (std::size_t c = 0; c < d; ++c) s += qi[c] * kj[c];
            s *= scale;
            scores[j] = s;
            mx = std::max(mx, s);
        }
        T sum = T(0);
        for (std::size_t j = 0; j < N; ++j) {
            scores[j] = std::exp(scores[j] - mx);
            sum += scores[j];
        }
        const T inv = T(1) / sum;
        T* oi = out + i * d;
        std::fill(oi, oi + d, T(0));
        for (std::size_t j = 0; j < N; ++j) {
            const T wgt = scores[j] * inv;
            const T* vj = v + j * d;
            for (std::size_t c = 0; c < d; ++c) oi[c] += wgt * vj[c];
        }
    }
}

// Agent attention: aggregate agent features once, then stream query rows.
template <typename T>
void agent_attention_stream(const T* q, const T* k, const T* v, const T* a, T* out,
                            std::size_t N, std::size_t n, std::size_t d, T s1, T s2,
                            std::size_t threads) {
    std::vector<T> va(n * d, T(0));
    // aggregation: rows of `a` attend over all N keys
    softmax_attention_rows(a, k, v, va.data(), N, d, s1, 0, n);
    auto broadcast = [&](std::size_t lo, std::size_t hi) {
        std::vector<T> scores(n);
        for (std::size_t i = lo; i < hi; ++i) {
            const T* qi = q + i * d;
            T mx = -std::numeric_limits<T>::infinity();
            for (std::size_t j = 0; j < n; ++j) {
                const T* aj = a + j * d;
                T s = T(0);
                for (std::size_t c = 0; c < d; ++c) s += qi[c] * aj[c];
                s *= s2;
                scores[j] = s;
                mx = std::max(mx, s);
            }
            T sum = T(0);
            for (std::size_t j = 0; j < n; ++j) {
                scores[j] = std::exp(scores[j] - mx);
                sum += scores[j];
            }
            const T inv = T(1) / sum;
            T* oi = out + i * d;
            std::fill(oi, oi + d, T(0));
            for (std::size_t j = 0; j < n; ++j) {
                const T wgt = scores[j] * inv;
                const T* vj = va.data() + j * d;
                for (std::size_t c = 0; c < d; ++c) oi[c] += wgt * vj[c];
            }
        }
    };
    if (threads <= 1) {
        broadcast(0, N);
    } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (N + threads - 1) / threads;
        for (std::size_t t = 0; t < threads; ++t) {
            const std::size_t lo = t * chunk, hi = std::min(N, lo + chunk);
            if (lo < hi) pool.emplace_back(broadcast, lo, hi);
        }
        for (auto& th : pool) th.join();
    }
}

template <typename T>
void softmax_attention_threaded(const T* q, const T* k, const T* v, T* out,
                                std::size_t N, std::size_t d, T scale,
                                std::size_t threads) {
    if (threads <= 1) {
        softmax_attention_rows(q, k, v, out, N, d, scale, 0, N);
        return;
    }
    std::vector<std::thread> pool;
    const std::size_t chunk = (N + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
        const std::size_t lo = t * chunk, hi = std::min(N, lo + chunk);
        if (lo < hi)
            pool.emplace_back([=] { softmax_attention_rows(q, k, v, out, N, d, scale, lo, hi); });
    }
    for (auto& th : pool) th.join();
}

inline std::size_t thread_cap_from_env(std::size_t requested) {
    if (const char* env = std::getenv("AGENTATTN_THREADS")) {
        const unsigned long cap = std::strtoul(env, nullptr, 10);
        if (cap >= 1) requested = std::min<std::size_t>(requested, cap);
    }
    return std::max<std::size_t>(requested, 1);
}

}  // namespace detail

// Median wall time per N for the named kernel. Warmup runs are discarded;
// rows come back in ascending N. On allocation failure the rows measured so
// far are preserved.
template <typename T>
std::vector<BenchRow> run_scaling(const std::string& kernel,
                                  const std::vector<std::size_t>& Ns, std::size_t n,
                                  std::size_t d, std::size_t repeats = 5,
                                  std::size_t warmup = 2, std::uint64_t seed = 0,
                                  std::size_t threads = 1) {
    if (repeats < 5) throw config_error("run_scaling: repeats must be >= 5");
    if (warmup < 2) throw config_error("run_scaling: warmup must be >= 2");
    for (std::size_t i = 1; i < Ns.size(); ++i)
        if (Ns[i] <= Ns[i - 1]) throw config_error("run_scaling: Ns must be ascending");
    if (kernel != "agent" && kernel != "softmax")
        throw config_error("run_scaling: unknown kernel " + kernel);
    threads = detail::thread_cap_from_env(threads);

    std::vector<BenchRow> rows;
    for (std::size_t N : Ns) {
        try {
            std::mt19937_64 rng(seed ^ N);
            std::uniform_real_distribution<double> dist(-1.0, 1.0);
            std::vector<T> q(N * d), k(N * d), v(N * d), a(n * d), out(N * d);
            for (auto* buf : {&q, &k, &v, &a})
                for (T& x : *buf) x = T(dist(rng));
            const T scale = T(1) / std::sqrt(T(d));

            auto run_once = [&] {
                if (kernel == "softmax")
                    detail::softmax_attention_threaded(q.data(), k.data(), v.data(),
                                                       out.data(), N, d, scale, threads);
                else
                    detail::agent_attention_stream(q.data(), k.data(), v.data(), a.data(),
                                                   out.data(), N, n, d, scale, scale,
                                                   threads);
            };
            std::vector<std::uint64_t> samples;
            for (std::size_t r = 0; r < warmup + repeats; ++r) {
                const auto t0 = std::chrono::steady_clock::now();
                run_once();
                const auto t1 = std::chrono::steady_clock::now();
                if (r >= warmup)
                    samples.push_back(std::uint64_t(
                        std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0)
                            .count()));
            }
            std::sort(samples.begin(), samples.end());
            BenchRow row;
            row.kernel = kernel;
            row.N = N;
            row.n = kernel == "agent" ? n : 0;
            row.d = d;
            row.dtype = std::is_same_v<T, float> ? "f32" : "f64";
            row.wall_ns = samples[samples.size() / 2];
            row.mac_count = flop_count(kernel, N, row.n, d, 1);
            rows.push_back(std::move(row));
        } catch (const std::bad_alloc&) {
            break;  // partial results preserved
        }
    }
    return rows;
}

// Least-squares slope of log(wall_ns) against log(N).
inline double loglog_slope(const std::vector<BenchRow>& rows) {
    if (rows.size() < 2) throw config_error("loglog_slope: need at least 2 rows");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double m = double(rows.size());
    for (const BenchRow& r : rows) {
        const double x = std::log(double(r.N));
        const double y = std::log(double(r.wall_ns));
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    return (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

inline nlohmann::json scaling_summary(const std::vector<BenchRow>& rows) {
    nlohmann::json j;
    j["kernel"] = rows.empty() ? "" : rows.front().kernel;
    j["points"] = rows.size();
    if (rows.size() >= 2) j["loglog_slope"] = loglog_slope(rows);
    return j;
}

}  // namespace agentattn
