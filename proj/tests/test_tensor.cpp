#include <catch2/catch_amalgamated.hpp>

#include <agentattn/tensor.hpp>
#include <agentattn/tensor_io.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace agentattn;

namespace {

// Independent matmul oracle: naive triple loop accumulating in f64 with
// Kahan compensation.
template <typename T>
Tensor<double> matmul_oracle(const Tensor<T>& a, const Tensor<T>& b) {
    const std::size_t m = a.dim(0), k = a.dim(1), p = b.dim(1);
    Tensor<double> c({m, p});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < p; ++j) {
            double sum = 0.0, comp = 0.0;
            for (std::size_t t = 0; t < k; ++t) {
                const double term = double(a.at(i, t)) * double(b.at(t, j)) - comp;
                const double next = sum + term;
                comp = (next - sum) - term;
                sum = next;
            }
            c.at(i, j) = sum;
        }
    return c;
}

}  // namespace

TEST_CASE("tensor shape invariants") {
    CHECK_THROWS_AS(Tensor<double>(std::vector<std::size_t>{}), dimension_error);
    CHECK_THROWS_AS(Tensor<double>({2, 0}), dimension_error);
    CHECK_THROWS_AS(Tensor<double>({2, 2}, std::vector<double>{1.0}), dimension_error);
    const Tensor<double> t({2, 3}, 1.5);
    CHECK(t.size() == 6);
    CHECK(t.all_finite());
}

TEST_CASE("matmul identity and projector rows") {
    const Tensor<double> i2({2, 2}, {1, 0, 0, 1});
    const Tensor<double> m({2, 2}, {1, 2, 3, 4});
    CHECK(matmul(i2, m).data() == std::vector<double>{1, 2, 3, 4});

    const Tensor<double> proj({2, 2}, {1, 0, 0, 0});
    const Tensor<double> b({2, 2}, {5, 6, 7, 8});
    CHECK(matmul(proj, b).data() == std::vector<double>{5, 6, 0, 0});
}

TEST_CASE("matmul matches Kahan triple-loop oracle") {
    std::mt19937_64 rng(42);
    const Tensor<double> a = random_normal<double>({3, 4}, rng);
    const Tensor<double> b = random_normal<double>({4, 2}, rng);
    const Tensor<double> got = matmul(a, b);
    const Tensor<double> want = matmul_oracle(a, b);
    CHECK(max_abs_diff(got, want) < 1e-14);
}

TEST_CASE("matmul shape errors") {
    const Tensor<double> a({2, 3});
    const Tensor<double> b({4, 2});
    CHECK_THROWS_AS(matmul(a, b), dimension_error);
}

TEST_CASE("matmul counts multiply-accumulates") {
    reset_mac_count();
    matmul(Tensor<double>({3, 4}), Tensor<double>({4, 5}));
    CHECK(mac_count() == 60);
}

TEST_CASE("row_softmax closed forms") {
    const Tensor<double> constant({1, 3}, {2.5, 2.5, 2.5});
    const Tensor<double> y = row_softmax(constant, 1.0);
    for (double v : y.data()) CHECK(v == Catch::Approx(1.0 / 3.0).epsilon(1e-15));

    CHECK(row_softmax(Tensor<double>({1, 1}, {0.0}), 1.0).data()[0] == 1.0);

    const Tensor<double> two({1, 2}, {0.0, std::log(3.0)});
    const Tensor<double> z = row_softmax(two, 1.0);
    CHECK(z.at(0, 0) == Catch::Approx(0.25).epsilon(1e-14));
    CHECK(z.at(0, 1) == Catch::Approx(0.75).epsilon(1e-14));
}

TEST_CASE("row_softmax survives spread >= 700 in f64") {
    const Tensor<double> wide({1, 3}, {-350.0, 0.0, 350.0});
    const Tensor<double> y = row_softmax(wide, 1.0);
    REQUIRE(y.all_finite());
    double s = 0.0;
    for (double v : y.data()) s += v;
    CHECK(std::abs(s - 1.0) < 8 * std::numeric_limits<double>::epsilon() * 3);
}

TEST_CASE("row_softmax rejects nonpositive scale") {
    CHECK_THROWS_AS(row_softmax(Tensor<double>({1, 2}), 0.0), config_error);
}

TEST_CASE("adaptive pool: constants, identity, hand mean") {
    const Tensor<double> constant({4, 6, 2}, 3.25);
    const Tensor<double> pooled = adaptive_avg_pool2d(constant, 2, 3);
    for (double v : pooled.data()) CHECK(v == 3.25);

    std::mt19937_64 rng(7);
    const Tensor<double> x = random_normal<double>({3, 5, 2}, rng);
    CHECK(max_abs_diff(adaptive_avg_pool2d(x, 3, 5), x) == 0.0);

    const Tensor<double> quad({2, 2, 1}, {1, 2, 3, 4});
    CHECK(adaptive_avg_pool2d(quad, 1, 1).data()[0] == 2.5);

    CHECK_THROWS_AS(adaptive_avg_pool2d(quad, 3, 1), dimension_error);
}

TEST_CASE("adaptive pool bins follow floor/ceil rule for non-dividing sizes") {
    // 5 rows into 2 bins: [0,3) and [2,5) per start=floor, end=ceil
    const Tensor<double> x({5, 1, 1}, {0, 1, 2, 3, 4});
    const Tensor<double> y = adaptive_avg_pool2d(x, 2, 1);
    CHECK(y.at(0, 0, 0) == Catch::Approx((0 + 1 + 2) / 3.0));
    CHECK(y.at(1, 0, 0) == Catch::Approx((2 + 3 + 4) / 3.0));
}

TEST_CASE("bilinear resize: constants, identity, hand formula") {
    const Tensor<double> constant({2, 3, 1}, 1.75);
    const Tensor<double> resized = bilinear_resize(constant, 5, 7);
    for (double v : resized.data())
        CHECK(v == Catch::Approx(1.75).epsilon(1e-15));

    std::mt19937_64 rng(11);
    const Tensor<double> x = random_normal<double>({3, 4, 2}, rng);
    CHECK(max_abs_diff(bilinear_resize(x, 3, 4), x) < 1e-15);

    const Tensor<double> line({2, 1, 1}, {0.0, 1.0});
    const Tensor<double> up = bilinear_resize(line, 4, 1);
    CHECK(up.at(0, 0, 0) == Catch::Approx(0.0).margin(1e-15));
    CHECK(up.at(1, 0, 0) == Catch::Approx(0.25).epsilon(1e-14));
    CHECK(up.at(2, 0, 0) == Catch::Approx(0.75).epsilon(1e-14));
    CHECK(up.at(3, 0, 0) == Catch::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("depthwise conv: one-hot identity, zero kernel, ones kernel") {
    std::mt19937_64 rng(13);
    const Tensor<double> x = random_normal<double>({3, 3, 2}, rng);

    Tensor<double> onehot({3, 3, 2});
    onehot.at(1, 1, 0) = 1.0;
    onehot.at(1, 1, 1) = 1.0;
    const Tensor<double> ident = depthwise_conv2d(x, onehot);
    for (std::size_t i = 0; i < x.size(); ++i)
        CHECK(ident.data()[i] == x.data()[i]);  // bit-for-bit

    const Tensor<double> zeros({3, 3, 2});
    const Tensor<double> conv_zero = depthwise_conv2d(x, zeros);
    for (double v : conv_zero.data()) CHECK(v == 0.0);

    const Tensor<double> single({3, 3, 1},
                                {1, 2, 3, 4, 5, 6, 7, 8, 9});
    const Tensor<double> ones({3, 3, 1}, 1.0);
    const Tensor<double> summed = depthwise_conv2d(single, ones);
    // each cell = sum of its in-bounds 3x3 neighborhood
    CHECK(summed.at(0, 0, 0) == 1 + 2 + 4 + 5);
    CHECK(summed.at(1, 1, 0) == 45);
    CHECK(summed.at(2, 2, 0) == 5 + 6 + 8 + 9);

    CHECK_THROWS_AS(depthwise_conv2d(x, Tensor<double>({2, 2, 2})), config_error);
}

TEST_CASE("tensor file format round-trips and is bit-exact on disk") {
    namespace fs = std::filesystem;
    const fs::path path = fs::temp_directory_path() / "agentattn_io_test.atns";

    std::mt19937_64 rng(17);
    const Tensor<float> t = random_normal<float>({2, 3, 4}, rng);
    save_tensor(t, path);

    // header layout check
    std::ifstream is(path, std::ios::binary);
    std::vector<unsigned char> head(16);
    is.read(reinterpret_cast<char*>(head.data()), 16);
    CHECK(head[0] == 'A');
    CHECK(head[1] == 'T');
    CHECK(head[2] == 'N');
    CHECK(head[3] == 'S');
    CHECK(head[4] == 1);  // version u32 LE
    CHECK(head[5] == 0);
    CHECK(head[8] == 0);  // dtype f32
    CHECK(head[9] == 3);  // rank
    for (int i = 10; i < 16; ++i) CHECK(head[i] == 0);
    is.close();
    CHECK(fs::file_size(path) == 16 + 3 * 8 + t.size() * sizeof(float));

    const Tensor<float> back = load_tensor_as<float>(path);
    CHECK(back.shape() == t.shape());
    CHECK(back.data() == t.data());
    CHECK_THROWS_AS(load_tensor_as<double>(path), io_error);
    fs::remove(path);
}

TEST_CASE("tensor io round-trip property across dtypes and ranks") {
    namespace fs = std::filesystem;
    const fs::path path = fs::temp_directory_path() / "agentattn_io_prop.atns";
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 10; ++trial) {
        std::uniform_int_distribution<std::size_t> rdim(1, 5);
        std::vector<std::size_t> shape(1 + std::size_t(trial) % 3);
        for (auto& d : shape) d = rdim(rng);
        if (trial % 2 == 0) {
            const Tensor<double> t = random_normal<double>(shape, rng);
            save_tensor(t, path);
            const Tensor<double> back = load_tensor_as<double>(path);
            CHECK(back.shape() == t.shape());
            CHECK(back.data() == t.data());
        } else {
            const Tensor<float> t = random_normal<float>(shape, rng);
            save_tensor(t, path);
            const Tensor<float> back = load_tensor_as<float>(path);
            CHECK(back.data() == t.data());
        }
    }
    fs::remove(path);
}
