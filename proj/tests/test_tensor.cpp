#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <sstream>

#include "pahs/pt4.hpp"
#include "pahs/rng.hpp"
#include "pahs/tensor.hpp"

using namespace pahs;

TEST_CASE("dims and indexing") {
    Tensor4f t{Dims4{2, 3, 4, 5}};
    CHECK(t.count() == 120);
    t.at(1, 2, 3, 4) = 7.0f;
    CHECK(t.data()[119] == 7.0f);
    t.at(0, 0, 0, 0) = -1.0f;
    CHECK(t.data()[0] == -1.0f);
    CHECK(t.all_finite());
}

TEST_CASE("zero-extent dims are allowed") {
    Tensor4f t{Dims4{3, 0, 4, 5}};
    CHECK(t.count() == 0);
    CHECK(t.all_finite());
}

TEST_CASE("negative dims rejected") {
    CHECK_THROWS_AS((Tensor4f{Dims4{-1, 1, 1, 1}}), ShapeError);
}

TEST_CASE("require_dims_equal names the offending axis") {
    try {
        require_dims_equal(Dims4{1, 2, 3, 4}, Dims4{1, 2, 9, 4}, "op");
        FAIL("expected throw");
    } catch (const ShapeError& e) {
        CHECK(std::string(e.what()).find("height") != std::string::npos);
    }
}

TEST_CASE("pt4 round trip is bit-exact") {
    Rng rng(42);
    Tensor4f t{Dims4{2, 3, 5, 7}};
    for (std::int64_t i = 0; i < t.count(); ++i) {
        t.data()[i] = static_cast<float>(rng.uniform(-10.0, 10.0));
    }
    std::stringstream ss;
    write_pt4(ss, t);
    const Tensor4f back = read_pt4<float>(ss, "buf");
    CHECK(back.same_bits(t));
}

TEST_CASE("pt4 round trip f64") {
    Tensor4d t{Dims4{1, 1, 2, 2}};
    t.data()[0] = 0.1;
    t.data()[1] = -1e300;
    t.data()[2] = 3.0;
    t.data()[3] = 5e-324;
    std::stringstream ss;
    write_pt4(ss, t);
    const Tensor4d back = read_pt4<double>(ss, "buf");
    CHECK(back.same_bits(t));
}

TEST_CASE("pt4 dtype conversion and strictness") {
    Tensor4f t{Dims4{1, 1, 1, 3}};
    t.data()[0] = 1.5f;
    t.data()[1] = -2.0f;
    t.data()[2] = 0.25f;
    std::stringstream ss;
    write_pt4(ss, t);
    const Tensor4d asd = read_pt4<double>(ss, "buf");
    CHECK(asd.data()[1] == -2.0);
    ss.clear();
    ss.seekg(0);
    CHECK_THROWS_AS(read_pt4<double>(ss, "buf", /*strict_dtype=*/true), IoError);
}

TEST_CASE("pt4 rejects bad magic") {
    std::stringstream ss;
    ss << "JUNKJUNKJUNKJUNK";
    CHECK_THROWS_AS(read_pt4<float>(ss, "buf"), IoError);
}

TEST_CASE("rng is reproducible and normalized") {
    Rng a(123), b(123);
    for (int i = 0; i < 1000; ++i) {
        const double u = a.uniform();
        CHECK(u == b.uniform());
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
    Rng c(9);
    for (int i = 0; i < 100; ++i) {
        const std::int64_t k = c.index(7);
        CHECK(k >= 0);
        CHECK(k < 7);
    }
}
