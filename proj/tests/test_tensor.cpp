#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "cidis/error.hpp"
#include "cidis/tensor.hpp"
#include "oracle.hpp"

using namespace cidis;

TEST_CASE("zeros produces all-zero tensors of the requested shape") {
    auto t = Tensor::zeros({2, 2});
    REQUIRE(t.size() == 4);
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(t[i] == 0.0f);

    auto one = Tensor::zeros({1});
    REQUIRE(one.size() == 1);
    CHECK(one[0] == 0.0f);

    auto img = Tensor::zeros({3, 224, 224});
    CHECK(img.size() == 150528);
}

TEST_CASE("zeros rejects malformed shapes") {
    std::vector<std::uint32_t> empty;
    CHECK_THROWS_AS(Tensor::zeros(std::span<const std::uint32_t>(empty)), ShapeError);
    CHECK_THROWS_AS(Tensor::zeros({3, 0, 2}), ShapeError);
}

TEST_CASE("rng streams are reproducible for equal seeds") {
    Rng a(42), b(42);
    for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());

    Rng c(1), d(2);
    bool all_equal = true;
    for (int i = 0; i < 16; ++i)
        if (c.next_u64() != d.next_u64()) all_equal = false;
    CHECK_FALSE(all_equal);
}

TEST_CASE("fork derives stable, distinct child seeds") {
    CHECK(Rng::fork(42, 7) == Rng::fork(42, 7));
    CHECK(Rng::fork(42, 7) != Rng::fork(42, 8));
    CHECK(Rng::fork(42, 7) != Rng::fork(43, 7));
}

TEST_CASE("uniform_init is deterministic per seed and respects the range") {
    Rng r1(42), r2(42);
    auto a = uniform_init({4}, 0.0f, 1.0f, r1);
    auto b = uniform_init({4}, 0.0f, 1.0f, r2);
    for (std::size_t i = 0; i < 4; ++i) CHECK(a[i] == b[i]);

    Rng r3(7);
    auto c = uniform_init({1000}, 0.0f, 1.0f, r3);
    for (std::size_t i = 0; i < c.size(); ++i) {
        CHECK(c[i] >= 0.0f);
        CHECK(c[i] < 1.0f);
    }
}

TEST_CASE("uniform_init sample mean matches the distribution") {
    Rng r(123);
    auto t = uniform_init({10000}, -1.0f, 1.0f, r);
    double mean = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) mean += t[i];
    mean /= static_cast<double>(t.size());
    CHECK(std::abs(mean) < 0.05);
}

TEST_CASE("uniform_init rejects inverted ranges") {
    Rng r(1);
    CHECK_THROWS_AS(uniform_init({2}, 1.0f, 1.0f, r), RangeError);
    CHECK_THROWS_AS(uniform_init({2}, 2.0f, -1.0f, r), RangeError);
}

TEST_CASE("serialization round-trips random tensors bit-identically") {
    Rng r(99);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<std::uint32_t> shape;
        std::size_t rank = 1 + r.next_range(0, 3);
        for (std::size_t i = 0; i < rank; ++i)
            shape.push_back(static_cast<std::uint32_t>(1 + r.next_range(0, 5)));
        auto t = uniform_init(std::span<const std::uint32_t>(shape), -10.0f, 10.0f, r);
        auto back = deserialize(serialize(t));
        REQUIRE(back.shape() == t.shape());
        CHECK(std::memcmp(back.data(), t.data(), t.size() * sizeof(float)) == 0);
    }
}

TEST_CASE("serialized payload uses little-endian IEEE-754") {
    auto t = Tensor::from({1}, {1.0f});
    auto bytes = serialize(t);
    REQUIRE(bytes.size() >= 4);
    CHECK(bytes[bytes.size() - 4] == 0x00);
    CHECK(bytes[bytes.size() - 3] == 0x00);
    CHECK(bytes[bytes.size() - 2] == 0x80);
    CHECK(bytes[bytes.size() - 1] == 0x3F);
}

TEST_CASE("deserialize rejects malformed byte streams") {
    std::vector<std::uint8_t> garbage = {0xDE, 0xAD, 0xBE, 0xEF, 0x01};
    CHECK_THROWS_AS(deserialize(garbage), CorruptDataError);

    auto good = serialize(Tensor::from({2, 2}, {1, 2, 3, 4}));
    auto truncated = good;
    truncated.pop_back();
    CHECK_THROWS_AS(deserialize(truncated), CorruptDataError);
    auto padded = good;
    padded.push_back(0);
    CHECK_THROWS_AS(deserialize(padded), CorruptDataError);
}

TEST_CASE("element-wise helpers and matmul agree with the naive oracle") {
    Rng r(2024);
    for (int trial = 0; trial < 8; ++trial) {
        std::uint32_t m = static_cast<std::uint32_t>(1 + r.next_range(0, 4));
        std::uint32_t k = static_cast<std::uint32_t>(1 + r.next_range(0, 4));
        std::uint32_t n = static_cast<std::uint32_t>(1 + r.next_range(0, 4));
        auto a = uniform_init({m, k}, -2.0f, 2.0f, r);
        auto b = uniform_init({m, k}, -2.0f, 2.0f, r);

        auto sum = add(a, b);
        auto prod = mul(a, b);
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(sum[i] == doctest::Approx(a[i] + b[i]).epsilon(1e-6));
            CHECK(prod[i] == doctest::Approx(a[i] * b[i]).epsilon(1e-6));
        }

        auto w = uniform_init({k, n}, -2.0f, 2.0f, r);
        auto mm = matmul(a, w);
        REQUIRE(mm.shape() == std::vector<std::uint32_t>{m, n});
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                double acc = 0.0;
                for (std::size_t kk = 0; kk < k; ++kk)
                    acc += static_cast<double>(a.at2(i, kk)) * w.at2(kk, j);
                CHECK(mm.at2(i, j) == doctest::Approx(acc).epsilon(1e-5));
            }
    }
}

TEST_CASE("shape mismatches in arithmetic helpers are rejected") {
    auto a = Tensor::zeros({2, 2});
    auto b = Tensor::zeros({2, 3});
    CHECK_THROWS_AS(add(a, b), ShapeError);
    CHECK_THROWS_AS(mul(a, b), ShapeError);
    CHECK_THROWS_AS(matmul(b, b), ShapeError);
}
