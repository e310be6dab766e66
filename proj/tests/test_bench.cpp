#include <catch2/catch_amalgamated.hpp>

#include <agentattn/bench.hpp>
#include <agentattn/model.hpp>

#include <sstream>

using namespace agentattn;

TEST_CASE("flop_count closed forms") {
    CHECK(flop_count("agent", 1024, 49, 64, 1) == 12845056ull);
    CHECK(flop_count("softmax", 1024, 0, 64, 1) == 134217728ull);
    // agent with n = N costs exactly twice softmax at the same sizes
    CHECK(flop_count("agent", 256, 256, 32, 2) == 2 * flop_count("softmax", 256, 0, 32, 2));
    CHECK_THROWS_AS(flop_count("winograd", 16, 4, 4, 1), config_error);
}

TEST_CASE("mac ratio invariance: agent/softmax = 2n/N") {
    for (std::size_t N : {64u, 256u, 1024u}) {
        for (std::size_t n : {4u, 16u, 49u}) {
            const double ratio = double(flop_count("agent", N, n, 32, 3)) /
                                 double(flop_count("softmax", N, 0, 32, 3));
            CHECK(ratio == Catch::Approx(2.0 * double(n) / double(N)).epsilon(1e-12));
        }
    }
}

TEST_CASE("flop formulas match brute-force MAC instrumentation") {
    // counting build of matmul vs the closed forms, N,n,d <= 64
    for (std::size_t N : {8u, 32u, 64u}) {
        for (std::size_t n : {1u, 4u, 16u}) {
            for (std::size_t d : {4u, 16u, 64u}) {
                if (n > N) continue;
                std::mt19937_64 rng(N * 1000 + n * 10 + d);
                AttentionInputs<double> in;
                in.q = random_normal<double>({N, d}, rng);
                in.k = random_normal<double>({N, d}, rng);
                in.v = random_normal<double>({N, d}, rng);
                in.a = random_normal<double>({n, d}, rng);

                reset_mac_count();
                agent_attention_pure(in);
                CHECK(mac_count() == flop_count("agent", N, n, d, 1));

                reset_mac_count();
                softmax_attention(in);
                CHECK(mac_count() == flop_count("softmax", N, 0, d, 1));
            }
        }
    }
}

TEST_CASE("exponential side count is reported separately") {
    const FlopModel m = flop_model("agent", 100, 9, 16, 2);
    CHECK(m.mac_count == 4ull * 100 * 9 * 16 * 2);
    CHECK(m.exp_count == 2ull * 100 * 9 * 2);
    const FlopModel s = flop_model("softmax", 100, 0, 16, 2);
    CHECK(s.exp_count == 100ull * 100 * 2);
}

TEST_CASE("model flops: published figure, depth additivity, depth 0") {
    const std::uint64_t t = flops_model_forward(agent_deit_t());
    CHECK(std::abs(double(t) - 1.2e9) / 1.2e9 < 0.10);

    ModelPreset p = agent_deit_t();
    p.depth = 0;
    p.agent_n.clear();
    const std::uint64_t embed_head = flops_model_forward(p);
    CHECK(embed_head == 196ull * 768 * 192 + 192ull * 1000);

    ModelPreset one = agent_deit_t();
    one.depth = 1;
    one.agent_n.assign(1, 49);
    ModelPreset two = agent_deit_t();
    two.depth = 2;
    two.agent_n.assign(2, 49);
    const std::uint64_t block = flops_model_forward(one) - embed_head;
    CHECK(flops_model_forward(two) == embed_head + 2 * block);
    CHECK(t == embed_head + 12 * block);
}

TEST_CASE("run_scaling emits ascending rows with sane timings") {
    const auto rows = run_scaling<float>("agent", {64, 128, 256}, 16, 16, 5, 2, 1);
    REQUIRE(rows.size() == 3);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(rows[i].wall_ns > 0);
        CHECK(rows[i].mac_count == flop_count("agent", rows[i].N, 16, 16, 1));
        if (i > 0) CHECK(rows[i].N > rows[i - 1].N);
    }
    CHECK_THROWS_AS(run_scaling<float>("agent", {256, 128}, 16, 16, 5, 2, 1),
                    config_error);
    CHECK_THROWS_AS(run_scaling<float>("agent", {64}, 16, 16, 3, 2, 1), config_error);
}

TEST_CASE("bench kernels agree with the tensor-path kernels") {
    const std::size_t N = 32, n = 4, d = 8;
    std::mt19937_64 rng(5);
    AttentionInputs<double> in;
    in.q = random_normal<double>({N, d}, rng);
    in.k = random_normal<double>({N, d}, rng);
    in.v = random_normal<double>({N, d}, rng);
    in.a = random_normal<double>({n, d}, rng);
    const double scale = 1.0 / std::sqrt(double(d));

    std::vector<double> out(N * d);
    detail::softmax_attention_threaded(in.q.ptr(), in.k.ptr(), in.v.ptr(), out.data(), N,
                                       d, scale, 1);
    const Tensor<double> ref = softmax_attention(in);
    double worst = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i)
        worst = std::max(worst, std::abs(out[i] - ref.data()[i]));
    CHECK(worst < 1e-12);

    detail::agent_attention_stream(in.q.ptr(), in.k.ptr(), in.v.ptr(), in.a->ptr(),
                                   out.data(), N, n, d, scale, scale, 1);
    const Tensor<double> aref = agent_attention_pure(in);
    worst = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i)
        worst = std::max(worst, std::abs(out[i] - aref.data()[i]));
    CHECK(worst < 1e-12);
}

TEST_CASE("threaded kernels match single-threaded output") {
    const std::size_t N = 64, n = 16, d = 8;
    std::mt19937_64 rng(6);
    std::vector<double> q(N * d), k(N * d), v(N * d), a(n * d);
    std::normal_distribution<double> dist;
    for (auto* buf : {&q, &k, &v, &a})
        for (double& x : *buf) x = dist(rng);
    std::vector<double> o1(N * d), o4(N * d);
    detail::agent_attention_stream(q.data(), k.data(), v.data(), a.data(), o1.data(), N,
                                   n, d, 0.3, 0.3, 1);
    detail::agent_attention_stream(q.data(), k.data(), v.data(), a.data(), o4.data(), N,
                                   n, d, 0.3, 0.3, 4);
    CHECK(o1 == o4);
}

TEST_CASE("csv rows follow the contract header") {
    std::ostringstream os;
    write_csv_header(os);
    BenchRow r;
    r.kernel = "agent";
    r.N = 256;
    r.n = 49;
    r.d = 64;
    r.dtype = "f32";
    r.wall_ns = 123456;
    r.mac_count = flop_count("agent", 256, 49, 64, 1);
    write_csv_row(os, r);
    CHECK(os.str() == "kernel,N,n,d,dtype,wall_ns,mac_count\n"
                      "agent,256,49,64,f32,123456,3211264\n");
}

TEST_CASE("loglog slope recovers an exact power law") {
    std::vector<BenchRow> rows;
    for (std::size_t N : {256u, 512u, 1024u, 2048u}) {
        BenchRow r;
        r.kernel = "synthetic";
        r.N = N;
        r.wall_ns = std::uint64_t(double(N) * double(N) / 16.0);
        rows.push_back(r);
    }
    CHECK(loglog_slope(rows) == Catch::Approx(2.0).epsilon(1e-6));
}
