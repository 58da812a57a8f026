#include <doctest.h>

#include <cmath>
#include <set>

#include "refpaint/rng.hpp"

using namespace refpaint;

TEST_SUITE("rng") {
TEST_CASE("same seed gives the same stream") {
    Rng a(123), b(123);
    for (int i = 0; i < 100; ++i) {
        CHECK(a.next_u64() == b.next_u64());
    }
}

TEST_CASE("derived streams differ by key and are reproducible") {
    Rng a = Rng::derive(5, {1, 2});
    Rng b = Rng::derive(5, {1, 3});
    Rng c = Rng::derive(5, {1, 2});
    const auto va = a.next_u64();
    CHECK(va != b.next_u64());
    CHECK(va == c.next_u64());
}

TEST_CASE("uniform_int stays in range and hits every value") {
    Rng r(9);
    std::set<std::int64_t> seen;
    for (int i = 0; i < 2000; ++i) {
        const auto v = r.uniform_int(-3, 4);
        CHECK(v >= -3);
        CHECK(v <= 4);
        seen.insert(v);
    }
    CHECK(seen.size() == 8);
    CHECK(r.uniform_int(7, 7) == 7);
}

TEST_CASE("uniform lies in [0,1) and normal has unit moments") {
    Rng r(1);
    double s = 0, s2 = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double u = r.uniform();
        CHECK_FALSE((u < 0.0 || u >= 1.0));
        const double z = r.normal();
        s += z;
        s2 += z * z;
    }
    const double mean = s / n, var = s2 / n - mean * mean;
    CHECK(std::abs(mean) < 4.0 / std::sqrt(double(n)));
    CHECK(std::abs(var - 1.0) < 4.0 * std::sqrt(2.0 / n));
}
}
