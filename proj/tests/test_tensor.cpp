#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <vector>

#include "grela/common.hpp"
#include "grela/params.hpp"
#include "grela/tensor.hpp"
#include "oracles.hpp"

using namespace grela;

TEST_CASE("matmul matches a triple-loop reference") {
    Rng rng(11);
    int m = 7, k = 5, n = 4;
    auto av = oracle::rand_vec(static_cast<std::size_t>(m) * k, rng, -2.0, 2.0);
    auto bv = oracle::rand_vec(static_cast<std::size_t>(k) * n, rng, -2.0, 2.0);
    Tensor a = Tensor::from_data({m, k}, av);
    Tensor b = Tensor::from_data({k, n}, bv);
    Tensor c = matmul(a, b);
    auto want = oracle::naive_matmul(av, bv, m, k, n);
    REQUIRE(c.shape == std::vector<int>({m, n}));
    for (std::size_t i = 0; i < want.size(); ++i)
        CHECK(std::abs(c.at(i) - want[i]) <= 1e-12);
}

TEST_CASE("matmul rejects mismatched shapes") {
    Tensor a = Tensor::zeros({3, 4});
    Tensor b = Tensor::zeros({5, 2});
    CHECK_THROWS_AS(matmul(a, b), DimError);
    Tensor v = Tensor::zeros({4});
    CHECK_THROWS_AS(matmul(a, v), DimError);
}

TEST_CASE("elementwise ops validate shapes") {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({3, 2});
    CHECK_THROWS_AS(add(a, b), DimError);
    CHECK_THROWS_AS(mul(a, b), DimError);
    CHECK_THROWS_AS(bce(a, b), DimError);
}

TEST_CASE("transpose flips indices and is an involution") {
    Rng rng(3);
    auto v = oracle::rand_vec(12, rng);
    Tensor a = Tensor::from_data({3, 4}, v);
    Tensor t = transpose(a);
    REQUIRE(t.shape == std::vector<int>({4, 3}));
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 4; ++j) CHECK(t.at(j, i) == a.at(i, j));
    Tensor tt = transpose(t);
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(tt.at(i) == a.at(i));
}

TEST_CASE("softmax rows match exp/sum and rows sum to one") {
    Rng rng(7);
    int rows = 6, cols = 9;
    auto v = oracle::rand_vec(static_cast<std::size_t>(rows) * cols, rng, -50.0, 50.0);
    Tensor x = Tensor::from_data({rows, cols}, v);
    Tensor y = softmax_rows(x);
    auto want = oracle::naive_softmax_rows(v, rows, cols);
    for (std::size_t i = 0; i < want.size(); ++i)
        CHECK(std::abs(y.at(i) - want[i]) <= 1e-12);
    for (int r = 0; r < rows; ++r) {
        double s = 0.0;
        for (int c = 0; c < cols; ++c) s += y.at(r, c);
        CHECK(std::abs(s - 1.0) <= 1e-12);
    }
}

TEST_CASE("softmax stays finite at extreme magnitudes") {
    Tensor x = Tensor::from_data({1, 3}, {700.0, -700.0, 0.0});
    Tensor y = softmax_rows(x);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(std::isfinite(y.at(i)));
        CHECK(y.at(i) >= 0.0);
    }
    CHECK(y.at(std::size_t{0}) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("gelu equals x times the Gaussian CDF") {
    for (double x = -6.0; x <= 6.0; x += 0.25) {
        Tensor t = Tensor::from_data({1}, {x});
        CHECK(std::abs(gelu(t).at(std::size_t{0}) - oracle::naive_gelu(x)) <= 1e-14);
    }
    Tensor z = Tensor::from_data({1}, {0.0});
    CHECK(gelu(z).at(std::size_t{0}) == 0.0);
    Tensor big = Tensor::from_data({1}, {10.0});
    CHECK(gelu(big).at(std::size_t{0}) == doctest::Approx(10.0).epsilon(1e-12));
}

TEST_CASE("sigmoid value and saturation behaviour") {
    Tensor one = Tensor::from_data({1}, {1.0});
    CHECK(std::abs(sigmoid(one).at(std::size_t{0}) - 1.0 / (1.0 + std::exp(-1.0))) <= 1e-15);
    Tensor hot = Tensor::from_data({1, 2}, {1000.0, -1000.0});
    Tensor s = sigmoid(hot);
    CHECK(std::isfinite(s.at(std::size_t{0})));
    CHECK(std::isfinite(s.at(std::size_t{1})));
    CHECK(s.at(std::size_t{0}) <= 1.0);
    CHECK(s.at(std::size_t{1}) >= 0.0);
    CHECK(std::abs(s.at(std::size_t{0}) + s.at(std::size_t{1}) - 1.0) <= 1e-15);
}

TEST_CASE("binary cross-entropy matches the clamped elementwise formula") {
    Rng rng(19);
    std::size_t n = 24;
    std::vector<double> p = oracle::rand_vec(n, rng, 0.001, 0.999);
    std::vector<double> t(n);
    for (std::size_t i = 0; i < n; ++i) t[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;
    Tensor tp = Tensor::from_data({4, 6}, p);
    Tensor tt = Tensor::from_data({4, 6}, t);
    CHECK(std::abs(bce(tp, tt).item() - oracle::naive_bce(p, t)) <= 1e-12);

    Tensor half = Tensor::constant({5}, 0.5);
    CHECK(bce(half, half).item() == doctest::Approx(std::log(2.0)).epsilon(1e-6));

    Tensor zero = Tensor::constant({3}, 0.0);
    Tensor ones = Tensor::constant({3}, 1.0);
    CHECK(std::isfinite(bce(zero, ones).item()));
    CHECK(bce(zero, ones).item() > 10.0);
}

TEST_CASE("binary cross-entropy is bounded below") {
    Rng rng(23);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> p = oracle::rand_vec(8, rng, 0.0, 1.0);
        std::vector<double> t = oracle::rand_vec(8, rng, 0.0, 1.0);
        CHECK(bce(Tensor::from_data({8}, p), Tensor::from_data({8}, t)).item() >= -1e-6);
    }
}

TEST_CASE("backward: sum gives ones, quadratic gives twice the input") {
    Rng rng(5);
    Tensor w = Tensor::from_data({3, 4}, oracle::rand_vec(12, rng), true);
    backward(sum_all(w));
    for (std::size_t i = 0; i < w.size(); ++i) CHECK(w.grad_at(i) == 1.0);

    w.zero_grad();
    backward(sum_all(mul(w, w)));
    for (std::size_t i = 0; i < w.size(); ++i)
        CHECK(std::abs(w.grad_at(i) - 2.0 * w.at(i)) <= 1e-15);
}

TEST_CASE("backward accumulates across passes until cleared") {
    Tensor w = Tensor::from_data({2}, {3.0, -1.0}, true);
    backward(sum_all(mul(w, w)));
    backward(sum_all(mul(w, w)));
    CHECK(w.grad_at(0) == doctest::Approx(4.0 * 3.0).epsilon(1e-15));
    CHECK(w.grad_at(1) == doctest::Approx(4.0 * -1.0).epsilon(1e-15));
    w.zero_grad();
    CHECK(w.grad_at(0) == 0.0);
}

TEST_CASE("backward requires a scalar loss") {
    Tensor w = Tensor::from_data({2, 2}, {1, 2, 3, 4}, true);
    Tensor y = mul(w, w);
    CHECK_THROWS_AS(backward(y), ContractError);
}

TEST_CASE("shared subexpressions accumulate gradient once per use") {
    // loss = sum((x + x)^2) so dloss/dx = 8x
    Tensor x = Tensor::from_data({3}, {0.5, -2.0, 1.25}, true);
    Tensor y = add(x, x);
    backward(sum_all(mul(y, y)));
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(std::abs(x.grad_at(i) - 8.0 * x.at(i)) <= 1e-12);
}

TEST_CASE("finite differences confirm gradients of every op") {
    Rng rng(101);

    SUBCASE("matmul, both operands") {
        Tensor a = Tensor::from_data({3, 4}, oracle::rand_vec(12, rng), true);
        Tensor b = Tensor::from_data({4, 2}, oracle::rand_vec(8, rng), true);
        Tensor c = Tensor::from_data({3, 2}, oracle::rand_vec(6, rng));
        auto loss = [&] { return sum_all(mul(matmul(a, b), c)); };
        CHECK(oracle::max_grad_err(a, loss) < 1e-3);
        CHECK(oracle::max_grad_err(b, loss) < 1e-3);
    }
    SUBCASE("add, scale, transpose chain") {
        Tensor a = Tensor::from_data({2, 3}, oracle::rand_vec(6, rng), true);
        Tensor c = Tensor::from_data({3, 2}, oracle::rand_vec(6, rng));
        auto loss = [&] { return sum_all(mul(transpose(scale(add(a, a), 0.7)), c)); };
        CHECK(oracle::max_grad_err(a, loss) < 1e-3);
    }
    SUBCASE("gelu across negative and positive inputs") {
        Tensor x = Tensor::from_data({2, 4}, {-3.0, -1.5, -0.3, -0.01, 0.02, 0.4, 1.7, 3.2}, true);
        auto loss = [&] { return sum_all(gelu(x)); };
        CHECK(oracle::max_grad_err(x, loss) < 1e-3);
    }
    SUBCASE("sigmoid then cross-entropy") {
        Tensor x = Tensor::from_data({2, 3}, oracle::rand_vec(6, rng, -2.0, 2.0), true);
        Tensor t = Tensor::from_data({2, 3}, {1, 0, 1, 0, 0, 1});
        auto loss = [&] { return bce(sigmoid(x), t); };
        CHECK(oracle::max_grad_err(x, loss) < 1e-3);
    }
    SUBCASE("softmax rows") {
        Tensor x = Tensor::from_data({3, 5}, oracle::rand_vec(15, rng, -3.0, 3.0), true);
        Tensor c = Tensor::from_data({3, 5}, oracle::rand_vec(15, rng));
        auto loss = [&] { return sum_all(mul(softmax_rows(x), c)); };
        CHECK(oracle::max_grad_err(x, loss) < 1e-3);
    }
    SUBCASE("row bias and row broadcast") {
        Tensor x = Tensor::from_data({4, 3}, oracle::rand_vec(12, rng), true);
        Tensor b = Tensor::from_data({3}, oracle::rand_vec(3, rng), true);
        Tensor v = Tensor::from_data({3}, oracle::rand_vec(3, rng, 0.5, 1.5), true);
        Tensor c = Tensor::from_data({4, 3}, oracle::rand_vec(12, rng));
        auto loss = [&] { return sum_all(mul(mul_row_broadcast(add_row_bias(x, b), v), c)); };
        CHECK(oracle::max_grad_err(x, loss) < 1e-3);
        CHECK(oracle::max_grad_err(b, loss) < 1e-3);
        CHECK(oracle::max_grad_err(v, loss) < 1e-3);
    }
    SUBCASE("mean of rows") {
        Tensor x = Tensor::from_data({5, 3}, oracle::rand_vec(15, rng), true);
        Tensor c = Tensor::from_data({1, 3}, oracle::rand_vec(3, rng));
        auto loss = [&] { return sum_all(mul(mean_rows(x), c)); };
        CHECK(oracle::max_grad_err(x, loss) < 1e-3);
    }
    SUBCASE("row gather with repeated ids") {
        Tensor table = Tensor::from_data({4, 3}, oracle::rand_vec(12, rng), true);
        std::vector<int> ids = {2, 0, 2, 3};
        Tensor c = Tensor::from_data({4, 3}, oracle::rand_vec(12, rng));
        auto loss = [&] { return sum_all(mul(gather_rows(table, ids), c)); };
        CHECK(oracle::max_grad_err(table, loss) < 1e-3);
    }
    SUBCASE("sum normalization") {
        Tensor x = Tensor::from_data({1, 6}, oracle::rand_vec(6, rng, 0.1, 1.0), true);
        Tensor c = Tensor::from_data({1, 6}, oracle::rand_vec(6, rng));
        auto loss = [&] { return sum_all(mul(normalize_sum(x, 1e-8), c)); };
        CHECK(oracle::max_grad_err(x, loss) < 1e-3);
    }
    SUBCASE("upper clamp away from the hinge") {
        Tensor x = Tensor::from_data({1, 4}, {0.2, 0.7, 1.4, 2.5}, true);
        Tensor c = Tensor::from_data({1, 4}, oracle::rand_vec(4, rng));
        auto loss = [&] { return sum_all(mul(clamp_max(x, 1.0), c)); };
        CHECK(oracle::max_grad_err(x, loss) < 1e-3);
    }
    SUBCASE("reshape is gradient transparent") {
        Tensor x = Tensor::from_data({2, 6}, oracle::rand_vec(12, rng), true);
        Tensor c = Tensor::from_data({3, 4}, oracle::rand_vec(12, rng));
        auto loss = [&] { return sum_all(mul(reshape(x, {3, 4}), c)); };
        CHECK(oracle::max_grad_err(x, loss) < 1e-3);
    }
}

TEST_CASE("clamp passes gradient only below the cap") {
    Tensor x = Tensor::from_data({4}, {0.2, 0.9, 1.5, 3.0}, true);
    backward(sum_all(clamp_max(x, 1.0)));
    CHECK(x.grad_at(0) == 1.0);
    CHECK(x.grad_at(1) == 1.0);
    CHECK(x.grad_at(2) == 0.0);
    CHECK(x.grad_at(3) == 0.0);
}

TEST_CASE("disabling gradients records no graph") {
    Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4}, true);
    Tensor b = Tensor::from_data({2, 2}, {5, 6, 7, 8}, true);
    {
        NoGradGuard ng;
        CHECK_FALSE(grad_enabled());
        Tensor c = matmul(a, b);
        CHECK(c.node == nullptr);
        CHECK_FALSE(c.requires_grad);
    }
    CHECK(grad_enabled());
    Tensor c = matmul(a, b);
    CHECK(c.node != nullptr);
    CHECK(c.requires_grad);
}

TEST_CASE("reshape shares storage with its source") {
    Tensor x = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor y = reshape(x, {3, 2});
    x.at(std::size_t{0}) = 42.0;
    CHECK(y.at(std::size_t{0}) == 42.0);
    CHECK_THROWS_AS(reshape(x, {4, 2}), DimError);
}

TEST_CASE("gather places the right rows and rejects bad ids") {
    Tensor table = Tensor::from_data({3, 2}, {1, 2, 3, 4, 5, 6});
    Tensor g = gather_rows(table, {2, 2, 0});
    REQUIRE(g.shape == std::vector<int>({3, 2}));
    CHECK(g.at(0, 0) == 5.0);
    CHECK(g.at(1, 1) == 6.0);
    CHECK(g.at(2, 0) == 1.0);
    CHECK_THROWS_AS(gather_rows(table, {3}), InputError);
    CHECK_THROWS_AS(gather_rows(table, {-1}), InputError);
}

TEST_CASE("rng: stream mixing, range, and reproducible shuffles") {
    CHECK(mix_seed(42, 0) != mix_seed(42, 1));
    CHECK(mix_seed(42, 0) != mix_seed(43, 0));
    Rng rng(9);
    for (int i = 0; i < 1000; ++i) {
        double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
    std::vector<int> a = {1, 2, 3, 4, 5, 6, 7};
    std::vector<int> b = a;
    Rng r1(77), r2(77);
    r1.shuffle(a);
    r2.shuffle(b);
    CHECK(a == b);
}

TEST_CASE("parameter store: bounds, determinism, and unique names") {
    Rng r1(123), r2(123);
    ParamStore p1, p2;
    Tensor w1 = p1.create("w", {8, 16}, 8, 16, r1);
    Tensor w2 = p2.create("w", {8, 16}, 8, 16, r2);
    double bound = std::sqrt(6.0 / 24.0);
    for (std::size_t i = 0; i < w1.size(); ++i) {
        CHECK(w1.at(i) == w2.at(i));
        CHECK(std::abs(w1.at(i)) <= bound);
    }
    CHECK_THROWS_AS(p1.create("w", {2, 2}, 2, 2, r1), ContractError);
    Tensor b = p1.create_zeros("b", {16});
    for (std::size_t i = 0; i < b.size(); ++i) CHECK(b.at(i) == 0.0);
    CHECK(p1.scalar_count() == 8 * 16 + 16);
}

TEST_CASE("checkpoints restore exact bits") {
    Rng rng(55);
    ParamStore a;
    a.create("layer.weight", {3, 5}, 3, 5, rng);
    Tensor special = a.create_zeros("layer.special", {4});
    special.at(std::size_t{0}) = 0.1;
    special.at(std::size_t{1}) = -1.0 / 3.0;
    special.at(std::size_t{2}) = 1e-300;
    special.at(std::size_t{3}) = 3.14159265358979323846;

    std::string path = "ckpt_roundtrip.bin";
    save_checkpoint(a, path);

    Rng rng2(999);
    ParamStore b;
    b.create("layer.weight", {3, 5}, 3, 5, rng2);
    b.create_zeros("layer.special", {4});
    load_checkpoint(b, path);

    for (const auto& [name, t] : a) {
        const Tensor& u = b.at(name);
        REQUIRE(u.size() == t.size());
        CHECK(std::memcmp(u.data->data(), t.data->data(),
                          t.size() * sizeof(double)) == 0);
    }
    std::remove(path.c_str());
}

TEST_CASE("checkpoint loading rejects incompatible stores") {
    Rng rng(66);
    ParamStore a;
    a.create("w", {2, 2}, 2, 2, rng);
    std::string path = "ckpt_invalid.bin";
    save_checkpoint(a, path);

    ParamStore wrong_shape;
    wrong_shape.create("w", {2, 3}, 2, 3, rng);
    CHECK_THROWS_AS(load_checkpoint(wrong_shape, path), IoError);

    ParamStore wrong_name;
    wrong_name.create("v", {2, 2}, 2, 2, rng);
    CHECK_THROWS_AS(load_checkpoint(wrong_name, path), IoError);

    std::ofstream bad("ckpt_badmagic.bin", std::ios::binary);
    bad << "NOTAMAGIC\n";
    bad.close();
    CHECK_THROWS_AS(read_checkpoint("ckpt_badmagic.bin"), IoError);
    CHECK_THROWS_AS(read_checkpoint("ckpt_missing_file.bin"), IoError);

    std::remove(path.c_str());
    std::remove("ckpt_badmagic.bin");
}
