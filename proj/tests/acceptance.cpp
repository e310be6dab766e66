// Acceptance suite: one pass/fail line per criterion, nonzero exit if any
// criterion fails. Tolerances are pinned in code next to each check.

#include <chrono>
#include <cstdio>
#include <limits>

#include <agentattn/agentattn.hpp>

using namespace agentattn;

namespace {

int failures = 0;

void report(int criterion, const char* what, bool passed, double metric, double tol) {
    std::printf("%s criterion %d: %s (metric %.3e, tolerance %.3e)\n",
                passed ? "PASS" : "FAIL", criterion, what, metric, tol);
    if (!passed) ++failures;
}

void report_bool(int criterion, const char* what, bool passed) {
    std::printf("%s criterion %d: %s\n", passed ? "PASS" : "FAIL", criterion, what);
    if (!passed) ++failures;
}

constexpr double kEps = std::numeric_limits<double>::epsilon();

// criteria 1 + 2 share the trial grid
void criterion_1_2() {
    double worst_oracle = 0.0, worst_rowsum = 0.0;
    for (std::size_t N : {4u, 16u, 64u}) {
        for (std::size_t n : {1u, 4u, 16u}) {
            if (n > N) continue;
            for (std::uint64_t seed = 0; seed < 50; ++seed) {
                std::mt19937_64 rng(seed * 7919 + N * 131 + n);
                auto in = detail::random_inputs(N, n, 8, rng);
                worst_oracle = std::max(
                    worst_oracle,
                    double(max_abs_diff(agent_attention_pure(in), composed_matrix_oracle(in))));
                const Tensor<double> m = composed_matrix(in);
                for (std::size_t i = 0; i < N; ++i) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < N; ++j) s += m.at(i, j);
                    worst_rowsum = std::max(worst_rowsum, std::abs(s - 1.0));
                }
            }
        }
    }
    report(1, "oracle equivalence agent_attention_pure vs composed matrix",
           worst_oracle < 1e-12, worst_oracle, 1e-12);
    report(2, "row-stochasticity of the composed matrix", worst_rowsum < 1e-12,
           worst_rowsum, 1e-12);
}

void criterion_3() {
    double worst_kernel = 0.0, worst_module = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed)
        worst_kernel =
            std::max(worst_kernel, gradient_check_agent_attention(seed, 1e-6).rel_err);
    for (std::uint64_t seed = 0; seed < 20; ++seed)
        worst_module =
            std::max(worst_module, gradient_check_agent_module(seed, 1e-6).rel_err);
    report(3, "gradient check of agent_attention_pure (20 seeds)", worst_kernel < 1e-5,
           worst_kernel, 1e-5);
    report(3, "gradient check of agent_module forward (20 seeds)", worst_module < 1e-4,
           worst_module, 1e-4);
}

void criterion_4() {
    std::mt19937_64 rng(404);
    // (a) training-free variant, k = 0, default 1/sqrt(d) scales: bit-for-bit
    {
        AttentionInputs<double> in = detail::random_inputs(16, 4, 8, rng);
        const Tensor<double> pure = agent_attention_pure(in);
        const Tensor<double> tf = agent_attention_training_free(in, 0.0);
        bool exact = true;
        for (std::size_t i = 0; i < pure.size(); ++i)
            if (tf.data()[i] != pure.data()[i]) exact = false;
        report_bool(4, "training-free variant with k=0 is bit-identical", exact);
    }
    // (b) zero bias + zero DWC + identity W_O reduces to the pure multi-head path
    {
        const std::size_t C = 4, heads = 2, d = 2, g = 4;
        auto p = AgentModuleParams<double>::identity_like(C, heads, 4, g, g);
        const Tensor<double> x = random_normal<double>({16, C}, rng);
        const Tensor<double> out = agent_module_forward(p, x).out;
        const Tensor<double> agents = pool_agents(x, g, g, 4);
        double worst = 0.0;
        for (std::size_t hd = 0; hd < heads; ++hd) {
            AttentionInputs<double> in;
            in.q = in.k = in.v = detail::slice_cols(x, hd * d, d);
            in.a = detail::slice_cols(agents, hd * d, d);
            const Tensor<double> want = agent_attention_pure(in);
            for (std::size_t i = 0; i < 16; ++i)
                for (std::size_t c = 0; c < d; ++c)
                    worst = std::max(worst, std::abs(out.at(i, hd * d + c) - want.at(i, c)));
        }
        report(4, "zero-bias zero-DWC forward equals pure multi-head path",
               worst <= 4 * kEps, worst, 4 * kEps);
    }
    // (c) constant shift of B1 / B2 leaves forward output unchanged
    {
        auto p = AgentModuleParams<double>::random(4, 2, 4, 4, 4, rng, true);
        const Tensor<double> x = random_normal<double>({16, 4}, rng);
        const Tensor<double> base = agent_module_forward(p, x).out;
        auto s1 = p;
        for (auto& b : s1.bias)
            for (double& v : b.b1_col.data()) v += 2.0;
        auto s2 = p;
        for (auto& b : s2.bias)
            for (double& v : b.b2_row.data()) v += -1.5;
        const double worst =
            std::max(double(max_abs_diff(agent_module_forward(s1, x).out, base)),
                     double(max_abs_diff(agent_module_forward(s2, x).out, base)));
        report(4, "constant shift of B1 or B2 leaves forward unchanged",
               worst <= 4 * kEps, worst, 4 * kEps);
    }
}

void criterion_5() {
    const std::size_t t = count_params(build<float>(agent_deit_t(), 0)).total;
    const double rel_t = std::abs(double(t) - 6.0e6) / 6.0e6;
    report(5, "agent-deit-t parameter count within 3% of 6.0M", rel_t < 0.03, rel_t, 0.03);

    const std::size_t b = count_params(build<float>(agent_deit_b(), 0)).total;
    const double rel_b = std::abs(double(b) - 87.2e6) / 87.2e6;
    report(5, "agent-deit-b parameter count within 3% of 87.2M", rel_b < 0.03, rel_b, 0.03);
}

void criterion_6() {
    const std::uint64_t f = flops_model_forward(agent_deit_t());
    const double rel = std::abs(double(f) - 1.2e9) / 1.2e9;
    report(6, "agent-deit-t forward FLOPs within 10% of 1.2G", rel < 0.10, rel, 0.10);

    bool exact = true;
    for (std::size_t N : {8u, 32u, 64u})
        for (std::size_t n : {1u, 4u, 16u})
            for (std::size_t d : {4u, 16u, 64u}) {
                if (n > N) continue;
                std::mt19937_64 rng(N + n + d);
                auto in = detail::random_inputs(N, n, d, rng);
                reset_mac_count();
                agent_attention_pure(in);
                if (mac_count() != flop_count("agent", N, n, d, 1)) exact = false;
                reset_mac_count();
                softmax_attention(in);
                if (mac_count() != flop_count("softmax", N, 0, d, 1)) exact = false;
            }
    report_bool(6, "flop formulas match MAC instrumentation exactly", exact);
}

void criterion_7() {
    const std::vector<std::size_t> Ns = {1024, 2048, 4096, 8192};
    const auto agent_rows = run_scaling<float>("agent", Ns, 49, 64, 5, 2, 1, 1);
    const auto softmax_rows = run_scaling<float>("softmax", Ns, 49, 64, 5, 2, 1, 1);
    const double agent_slope = loglog_slope(agent_rows);
    const double softmax_slope = loglog_slope(softmax_rows);
    report(7, "agent kernel log-log slope in [0.8, 1.2]",
           agent_slope >= 0.8 && agent_slope <= 1.2, agent_slope, 1.2);
    report(7, "softmax kernel log-log slope in [1.8, 2.2]",
           softmax_slope >= 1.8 && softmax_slope <= 2.2, softmax_slope, 2.2);
}

void criterion_8() {
    double worst_q = 0.0, worst_kv = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(seed + 808);
        auto in = detail::random_inputs(12, 4, 4, rng);
        const auto perm = detail::random_permutation<double>(12, rng);
        const Tensor<double> base = agent_attention_pure(in);

        AttentionInputs<double> qperm = in;
        qperm.q = detail::permute_rows(in.q, perm);
        worst_q = std::max(worst_q, double(max_abs_diff(agent_attention_pure(qperm),
                                                        detail::permute_rows(base, perm))));

        AttentionInputs<double> kvperm = in;
        kvperm.k = detail::permute_rows(in.k, perm);
        kvperm.v = detail::permute_rows(in.v, perm);
        worst_kv =
            std::max(worst_kv, double(max_abs_diff(agent_attention_pure(kvperm), base)));
    }
    report(8, "Q-row permutation equivariance", worst_q <= 4 * kEps, worst_q, 4 * kEps);
    report(8, "joint (K,V)-row permutation invariance", worst_kv <= 4 * kEps, worst_kv,
           4 * kEps);
}

void criterion_9() {
    // integer-valued components, identity block resize: exact componentwise sum
    const std::size_t n = 3, h = 4, w = 5;
    auto p = AgentBiasParams<double>::zeros(n, h, w, h, w);
    int v = 0;
    for (double& x : p.b1_col.data()) x = double(v++ % 11 - 5);
    for (double& x : p.b1_row.data()) x = double(v++ % 7 - 3);
    for (double& x : p.b1_block.data()) x = double(v++ % 13 - 6);
    const Tensor<double> b1 = materialize_b1(p);
    bool exact = true;
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j)
                if (b1.at(a, i * w + j) !=
                    p.b1_col.at(a, 0, j) + p.b1_row.at(a, i, 0) + p.b1_block.at(a, i, j))
                    exact = false;
    report_bool(9, "materialize_b1 equals the componentwise sum exactly", exact);

    std::mt19937_64 rng(909);
    const auto q = AgentBiasParams<double>::random(4, 6, 6, rng, 2, 2);
    const auto same = resize_bias_for(q, 4, 6, 6);
    const bool identity = max_abs_diff(same.b1_col, q.b1_col) == 0.0 &&
                          max_abs_diff(same.b1_row, q.b1_row) == 0.0 &&
                          max_abs_diff(same.b1_block, q.b1_block) == 0.0 &&
                          max_abs_diff(same.b2_col, q.b2_col) == 0.0 &&
                          max_abs_diff(same.b2_row, q.b2_row) == 0.0 &&
                          max_abs_diff(same.b2_block, q.b2_block) == 0.0;
    report_bool(9, "resize_bias_for is the identity at unchanged sizes", identity);
}

}  // namespace

int main() {
    const auto t0 = std::chrono::steady_clock::now();
    criterion_1_2();
    criterion_3();
    criterion_4();
    criterion_5();
    criterion_6();
    criterion_7();
    criterion_8();
    criterion_9();
    const auto secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0);
    std::printf("%d failure(s), %.1f s total\n", failures, secs.count());
    return failures == 0 ? 0 : 1;
}
