#pragma once

// Independent oracles and property drivers. composed_matrix_oracle is the
// O(N^2) reference path for agent attention; gradient_check compares
// analytic backward passes against central finite differences; the property
// suite runs every library invariant on random instances and supports fault
// injection so it can demonstrably fail.

#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "agent_module.hpp"
#include "attention.hpp"
#include "tensor.hpp"

namespace agentattn {

struct CheckReport {
    std::string name;
    double max_abs_err = 0.0;
    double rel_err = 0.0;
    double tolerance = 0.0;
    bool passed = false;

    static CheckReport from_metric(std::string name, double metric, double tolerance) {
        CheckReport r;
        r.name = std::move(name);
        r.max_abs_err = metric;
        r.rel_err = metric;
        r.tolerance = tolerance;
        r.passed = metric <= tolerance;
        return r;
    }
};

inline nlohmann::json to_json(const CheckReport& r) {
    return {{"name", r.name},
            {"max_abs_err", r.max_abs_err},
            {"rel_err", r.rel_err},
            {"tolerance", r.tolerance},
            {"passed", r.passed}};
}

// Explicitly form M = softmax(s2 Q A^T) softmax(s1 A K^T), an N x N
// row-stochastic matrix, then M V. The O(N^2) reference for agent attention.
template <typename T>
Tensor<T> composed_matrix_oracle(const AttentionInputs<T>& in) {
    in.check();
    if (!in.a) throw config_error("composed_matrix_oracle: agent tokens required");
    const Tensor<T> p2 = row_softmax(matmul(in.q, transpose2d(*in.a)), in.eff_scale2());
    const Tensor<T> p1 = row_softmax(matmul(*in.a, transpose2d(in.k)), in.eff_scale1());
    const Tensor<T> m = matmul(p2, p1);  // N x N
    return matmul(m, in.v);
}

template <typename T>
Tensor<T> composed_matrix(const AttentionInputs<T>& in) {
    const Tensor<T> p2 = row_softmax(matmul(in.q, transpose2d(*in.a)), in.eff_scale2());
    const Tensor<T> p1 = row_softmax(matmul(*in.a, transpose2d(in.k)), in.eff_scale1());
    return matmul(p2, p1);
}

namespace detail {

inline AttentionInputs<double> random_inputs(std::size_t N, std::size_t n, std::size_t d,
                                             std::mt19937_64& rng) {
    AttentionInputs<double> in;
    in.q = random_normal<double>({N, d}, rng);
    in.k = random_normal<double>({N, d}, rng);
    in.v = random_normal<double>({N, d}, rng);
    in.a = random_normal<double>({n, d}, rng);
    return in;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// gradient checks

// Central-difference gradient of loss(x) w.r.t. every entry of x.
template <typename F>
Tensor<double> finite_difference_grad(Tensor<double> x, F&& loss, double h) {
    Tensor<double> g(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = x.data()[i];
        x.data()[i] = orig + h;
        const double up = loss(x);
        x.data()[i] = orig - h;
        const double dn = loss(x);
        x.data()[i] = orig;
        g.data()[i] = (up - dn) / (2.0 * h);
    }
    return g;
}

inline double grad_rel_err(const Tensor<double>& fd, const Tensor<double>& an) {
    double num = 0.0, den = 1.0;
    for (std::size_t i = 0; i < fd.size(); ++i) {
        num = std::max(num, std::abs(fd.data()[i] - an.data()[i]));
        den = std::max(den, std::abs(an.data()[i]));
    }
    return num / den;
}

// Gradient check for agent_attention_pure against all four inputs.
inline CheckReport gradient_check_agent_attention(std::uint64_t seed, double h,
                                                  double tolerance = 1e-5,
                                                  std::size_t N = 4, std::size_t n = 2,
                                                  std::size_t d = 2) {
    std::mt19937_64 rng(seed);
    AttentionInputs<double> in = detail::random_inputs(N, n, d, rng);
    const Tensor<double> grad_out = random_normal<double>({N, d}, rng);
    const auto g = agent_attention_backward(in, grad_out);

    auto loss_with = [&](const AttentionInputs<double>& probe) {
        const Tensor<double> out = agent_attention_pure(probe);
        double s = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) s += out.data()[i] * grad_out.data()[i];
        return s;
    };
    double worst = 0.0;
    {
        auto fd = finite_difference_grad(in.q, [&](const Tensor<double>& t) {
            AttentionInputs<double> probe = in;
            probe.q = t;
            return loss_with(probe);
        }, h);
        worst = std::max(worst, grad_rel_err(fd, g.dq));
    }
    {
        auto fd = finite_difference_grad(in.k, [&](const Tensor<double>& t) {
            AttentionInputs<double> probe = in;
            probe.k = t;
            return loss_with(probe);
        }, h);
        worst = std::max(worst, grad_rel_err(fd, g.dk));
    }
    {
        auto fd = finite_difference_grad(in.v, [&](const Tensor<double>& t) {
            AttentionInputs<double> probe = in;
            probe.v = t;
            return loss_with(probe);
        }, h);
        worst = std::max(worst, grad_rel_err(fd, g.dv));
    }
    {
        auto fd = finite_difference_grad(*in.a, [&](const Tensor<double>& t) {
            AttentionInputs<double> probe = in;
            probe.a = t;
            return loss_with(probe);
        }, h);
        worst = std::max(worst, grad_rel_err(fd, g.da));
    }
    return CheckReport::from_metric("gradient_agent_attention", worst, tolerance);
}

// Gradient check for the full module w.r.t. its input x.
inline CheckReport gradient_check_agent_module(std::uint64_t seed, double h,
                                               double tolerance = 1e-4) {
    std::mt19937_64 rng(seed);
    const std::size_t hgrid = 4, wgrid = 4, C = 4, heads = 2, n = 4;
    AgentModuleParams<double> p =
        AgentModuleParams<double>::random(C, heads, n, hgrid, wgrid, rng, true);
    const Tensor<double> x = random_normal<double>({hgrid * wgrid, C}, rng);
    const Tensor<double> grad_out = random_normal<double>({hgrid * wgrid, C}, rng);

    ModuleCache<double> cache;
    agent_module_forward(p, x, false, &cache);
    const Tensor<double> an = agent_module_backward_input(p, cache, grad_out);

    auto fd = finite_difference_grad(x, [&](const Tensor<double>& t) {
        const Tensor<double> out = agent_module_forward(p, t).out;
        double s = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) s += out.data()[i] * grad_out.data()[i];
        return s;
    }, h);
    return CheckReport::from_metric("gradient_agent_module", grad_rel_err(fd, an),
                                    tolerance);
}

// Check for a plain linear map, where central differences are exact up to
// rounding.
inline CheckReport gradient_check_linear_map(std::uint64_t seed, double h,
                                             double tolerance = 1e-10) {
    std::mt19937_64 rng(seed);
    const std::size_t m = 3, k = 4;
    const Tensor<double> w = random_normal<double>({m, k}, rng);
    const Tensor<double> x0 = random_normal<double>({k, 1}, rng);
    // loss = sum(W x); analytic gradient = column sums of W
    Tensor<double> an({k, 1});
    for (std::size_t j = 0; j < k; ++j)
        for (std::size_t i = 0; i < m; ++i) an.at(j, 0) += w.at(i, j);
    auto fd = finite_difference_grad(x0, [&](const Tensor<double>& t) {
        const Tensor<double> y = matmul(w, t);
        double s = 0.0;
        for (double v : y.data()) s += v;
        return s;
    }, h);
    return CheckReport::from_metric("gradient_linear_map", grad_rel_err(fd, an),
                                    tolerance);
}

inline CheckReport gradient_check(const std::string& op, std::uint64_t seed, double h) {
    if (op == "linear_map") return gradient_check_linear_map(seed, h);
    if (op == "agent_attention_pure") return gradient_check_agent_attention(seed, h);
    if (op == "agent_module_forward") return gradient_check_agent_module(seed, h);
    throw config_error("gradient_check: unknown op " + op);
}

// ---------------------------------------------------------------------------
// property suite

namespace detail {

template <typename T>
std::vector<std::size_t> random_permutation(std::size_t n, std::mt19937_64& rng) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), std::size_t(0));
    std::shuffle(p.begin(), p.end(), rng);
    return p;
}

template <typename T>
Tensor<T> permute_rows(const Tensor<T>& x, const std::vector<std::size_t>& p) {
    Tensor<T> out(x.shape());
    for (std::size_t i = 0; i < p.size(); ++i)
        for (std::size_t j = 0; j < x.dim(1); ++j) out.at(i, j) = x.at(p[i], j);
    return out;
}

}  // namespace detail

// Runs every registered invariant on `trials` random instances. `inject`
// names a property whose computation is deliberately perturbed; the suite
// must then report exactly that property as failed.
inline std::vector<CheckReport> property_suite(std::uint64_t seed, std::size_t trials,
                                               const std::string& inject = "") {
    if (trials < 1) throw config_error("property_suite: trials must be >= 1");
    static const std::vector<std::string> injectable = {
        "rowsum", "oracle_agreement", "phi_reconstruction", "linear_reorder",
        "gradient_agent_attention"};
    if (!inject.empty() &&
        std::find(injectable.begin(), injectable.end(), inject) == injectable.end())
        throw config_error("property_suite: unknown injection target " + inject);

    std::vector<CheckReport> reports;
    const double eps64 = std::numeric_limits<double>::epsilon();

    // 1. composed matrix is row-stochastic
    {
        double worst = 0.0;
        for (std::size_t t = 0; t < trials; ++t) {
            std::mt19937_64 rng(seed + t);
            auto in = detail::random_inputs(8, 3, 4, rng);
            Tensor<double> m = composed_matrix(in);
            if (inject == "rowsum") m.at(0, 0) += 0.1;
            for (std::size_t i = 0; i < m.dim(0); ++i) {
                double s = 0.0;
                for (std::size_t j = 0; j < m.dim(1); ++j) s += m.at(i, j);
                worst = std::max(worst, std::abs(s - 1.0));
            }
        }
        reports.push_back(CheckReport::from_metric("rowsum", worst, 1e-12));
    }
    // 2. pure kernel vs O(N^2) oracle
    {
        double worst = 0.0;
        for (std::size_t t = 0; t < trials; ++t) {
            std::mt19937_64 rng(seed * 31 + t);
            auto in = detail::random_inputs(12, 4, 3, rng);
            Tensor<double> fast = agent_attention_pure(in);
            if (inject == "oracle_agreement") fast.data()[0] += 1e-6;
            worst = std::max(worst, double(max_abs_diff(fast, composed_matrix_oracle(in))));
        }
        reports.push_back(CheckReport::from_metric("oracle_agreement", worst, 1e-12));
    }
    // 3. equivalent phi maps reproduce the kernel
    {
        double worst = 0.0;
        for (std::size_t t = 0; t < trials; ++t) {
            std::mt19937_64 rng(seed * 37 + t);
            auto in = detail::random_inputs(10, 4, 3, rng);
            auto [phi_q, phi_k] = equivalent_phi(in);
            Tensor<double> rebuilt = matmul(phi_q, matmul(transpose2d(phi_k), in.v));
            if (inject == "phi_reconstruction") rebuilt.data()[0] += 1e-6;
            worst = std::max(worst,
                             double(max_abs_diff(rebuilt, agent_attention_pure(in))));
        }
        reports.push_back(CheckReport::from_metric("phi_reconstruction", worst, 1e-12));
    }
    // 4. convex-hull bound on output coordinates
    {
        double worst = 0.0;
        for (std::size_t t = 0; t < trials; ++t) {
            std::mt19937_64 rng(seed * 41 + t);
            auto in = detail::random_inputs(9, 3, 4, rng);
            const Tensor<double> out = agent_attention_pure(in);
            for (std::size_t c = 0; c < out.dim(1); ++c) {
                double lo = std::numeric_limits<double>::infinity(), hi = -lo;
                for (std::size_t j = 0; j < in.v.dim(0); ++j) {
                    lo = std::min(lo, in.v.at(j, c));
                    hi = std::max(hi, in.v.at(j, c));
                }
                for (std::size_t i = 0; i < out.dim(0); ++i) {
                    worst = std::max(worst, lo - out.at(i, c));
                    worst = std::max(worst, out.at(i, c) - hi);
                }
            }
        }
        reports.push_back(CheckReport::from_metric("convex_hull", std::max(worst, 0.0), 1e-12));
    }
    // 5. permuting Q rows permutes output rows identically
    {
        double worst = 0.0;
        for (std::size_t t = 0; t < trials; ++t) {
            std::mt19937_64 rng(seed * 43 + t);
            auto in = detail::random_inputs(8, 3, 3, rng);
            const auto perm = detail::random_permutation<double>(8, rng);
            const Tensor<double> base = agent_attention_pure(in);
            AttentionInputs<double> shuffled = in;
            shuffled.q = detail::permute_rows(in.q, perm);
            worst = std::max(worst, double(max_abs_diff(agent_attention_pure(shuffled),
                                                        detail::permute_rows(base, perm))));
        }
        reports.push_back(CheckReport::from_metric("perm_equivariance_q", worst, 1e-13));
    }
    // 6. jointly permuting (K, V) rows leaves output unchanged
    {
        double worst = 0.0;
        for (std::size_t t = 0; t < trials; ++t) {
            std::mt19937_64 rng(seed * 47 + t);
            auto in = detail::random_inputs(8, 3, 3, rng);
            const auto perm = detail::random_permutation<double>(8, rng);
            AttentionInputs<double> shuffled = in;
            shuffled.k = detail::permute_rows(in.k, perm);
            shuffled.v = detail::permute_rows(in.v, perm);
            worst = std::max(worst, double(max_abs_diff(agent_attention_pure(shuffled),
                                                        agent_attention_pure(in))));
        }
        reports.push_back(CheckReport::from_metric("perm_invariance_kv", worst, 1e-13));
    }
    // 7. linear attention reorder equivalence
    {
        double worst = 0.0;
        for (std::size_t t = 0; t < trials; ++t) {
            std::mt19937_64 rng(seed * 53 + t);
            AttentionInputs<double> in;
            in.q = random_normal<double>({6, 3}, rng);
            in.k = random_normal<double>({6, 3}, rng);
            in.v = random_normal<double>({6, 3}, rng);
            const Tensor<double> reordered = linear_attention(in, PhiMap::elu_plus_one);
            // unreordered: full N x N similarity matrix
            const Tensor<double> pq = apply_phi(in.q, PhiMap::elu_plus_one);
            const Tensor<double> pk = apply_phi(in.k, PhiMap::elu_plus_one);
            const Tensor<double> sim = matmul(pq, transpose2d(pk));
            Tensor<double> full = matmul(sim, in.v);
            for (std::size_t i = 0; i < full.dim(0); ++i) {
                double denom = 0.0;
                for (std::size_t j = 0; j < sim.dim(1); ++j) denom += sim.at(i, j);
                for (std::size_t c = 0; c < full.dim(1); ++c) full.at(i, c) /= denom;
            }
            if (inject == "linear_reorder") full.data()[0] += 1e-6;
            worst = std::max(worst, double(max_abs_diff(reordered, full)));
        }
        reports.push_back(CheckReport::from_metric("linear_reorder", worst, 1e-10));
    }
    // 8. softmax rows sum to 1, including extreme spread
    {
        double worst = 0.0;
        for (std::size_t t = 0; t < trials; ++t) {
            std::mt19937_64 rng(seed * 59 + t);
            const std::size_t p = 16;
            Tensor<double> x = random_uniform<double>({4, p}, rng, -350.0, 350.0);
            const Tensor<double> y = row_softmax(x, 1.0);
            for (std::size_t i = 0; i < y.dim(0); ++i) {
                double s = 0.0;
                for (std::size_t j = 0; j < p; ++j) s += y.at(i, j);
                worst = std::max(worst, std::abs(s - 1.0));
            }
        }
        reports.push_back(
            CheckReport::from_metric("softmax_rowsum", worst, 8.0 * eps64 * 16));
    }
    // 9. matmul linearity
    {
        double worst = 0.0;
        for (std::size_t t = 0; t < trials; ++t) {
            std::mt19937_64 rng(seed * 61 + t);
            const Tensor<double> a = random_normal<double>({5, 4}, rng);
            const Tensor<double> b = random_normal<double>({5, 4}, rng);
            const Tensor<double> c = random_normal<double>({4, 3}, rng);
            worst = std::max(worst, double(max_abs_diff(matmul(add(a, b), c),
                                                        add(matmul(a, c), matmul(b, c)))));
        }
        reports.push_back(CheckReport::from_metric("matmul_linearity", worst, 4.0 * eps64 * 16));
    }
    // 10. adaptive pooling preserves the global mean for exact divisions
    {
        double worst = 0.0;
        for (std::size_t t = 0; t < trials; ++t) {
            std::mt19937_64 rng(seed * 67 + t);
            const Tensor<double> x = random_normal<double>({8, 8, 2}, rng);
            const Tensor<double> y = adaptive_avg_pool2d(x, 4, 4);
            for (std::size_t c = 0; c < 2; ++c) {
                double mx = 0.0, my = 0.0;
                for (std::size_t i = 0; i < 8; ++i)
                    for (std::size_t j = 0; j < 8; ++j) mx += x.at(i, j, c);
                for (std::size_t i = 0; i < 4; ++i)
                    for (std::size_t j = 0; j < 4; ++j) my += y.at(i, j, c);
                worst = std::max(worst, std::abs(mx / 64.0 - my / 16.0));
            }
        }
        reports.push_back(CheckReport::from_metric("pool_mean_preservation", worst, 1e-13));
    }
    // 11. one-hot center DWC kernel is the identity, bit for bit
    {
        double worst = 0.0;
        for (std::size_t t = 0; t < trials; ++t) {
            std::mt19937_64 rng(seed * 71 + t);
            const Tensor<double> x = random_normal<double>({5, 6, 3}, rng);
            Tensor<double> kernel({3, 3, 3});
            for (std::size_t c = 0; c < 3; ++c) kernel.at(1, 1, c) = 1.0;
            const Tensor<double> y = depthwise_conv2d(x, kernel);
            for (std::size_t i = 0; i < x.size(); ++i)
                if (x.data()[i] != y.data()[i]) worst = 1.0;
        }
        reports.push_back(CheckReport::from_metric("dwc_identity", worst, 0.0));
    }
    // 12. adding a constant to B1 leaves biased agent attention unchanged
    {
        double worst = 0.0;
        for (std::size_t t = 0; t < trials; ++t) {
            std::mt19937_64 rng(seed * 73 + t);
            auto in = detail::random_inputs(8, 4, 3, rng);
            const Tensor<double> b1 = random_normal<double>({4, 8}, rng);
            auto biased = [&](const Tensor<double>& bias) {
                const Tensor<double> p1 = row_softmax(
                    add(scaled(matmul(*in.a, transpose2d(in.k)), in.eff_scale1()), bias),
                    1.0);
                const Tensor<double> p2 = row_softmax(
                    matmul(in.q, transpose2d(*in.a)), in.eff_scale2());
                return matmul(p2, matmul(p1, in.v));
            };
            Tensor<double> shifted = b1;
            for (double& v : shifted.data()) v += 3.25;
            worst = std::max(worst, double(max_abs_diff(biased(b1), biased(shifted))));
        }
        reports.push_back(
            CheckReport::from_metric("bias_shift_invariance", worst, 4.0 * eps64 * 16));
    }
    // 13. analytic gradients vs finite differences
    {
        double worst = 0.0;
        for (std::size_t t = 0; t < trials; ++t) {
            const double h = inject == "gradient_agent_attention" ? 1e-1 : 1e-6;
            worst = std::max(worst,
                             gradient_check_agent_attention(seed * 79 + t, h).rel_err);
        }
        reports.push_back(
            CheckReport::from_metric("gradient_agent_attention", worst, 1e-5));
    }
    return reports;
}

}  // namespace agentattn
