#include <doctest.h>

#include "mmkg/rng.hpp"

using namespace mmkg;

TEST_CASE("rng streams are deterministic and independent") {
    Rng a(42), b(42), c(43);
    for (int i = 0; i < 100; ++i) {
        const uint64_t va = a.next();
        CHECK(va == b.next());
    }
    CHECK(Rng(42).next() != c.next());

    CHECK(stream_seed(1, Stream::TripletImage, 3) != stream_seed(1, Stream::TripletSentence, 3));
    CHECK(stream_seed(1, Stream::TripletImage, 3) != stream_seed(2, Stream::TripletImage, 3));
}

TEST_CASE("uniform lies in [0,1) and uniform_u32 in range") {
    Rng r(7);
    for (int i = 0; i < 10000; ++i) {
        const double u = r.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        CHECK(r.uniform_u32(13) < 13);
    }
}

TEST_CASE("normal draws have sane moments") {
    Rng r(11);
    double sum = 0.0, sq = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double x = r.normal();
        sum += x;
        sq += x * x;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    CHECK(std::fabs(mean) < 0.05);
    CHECK(var == doctest::Approx(1.0).epsilon(0.05));
}
