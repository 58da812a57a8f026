#include <doctest.h>

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <vector>

#include "refpaint/parallel.hpp"

using namespace refpaint;

TEST_SUITE("parallel") {
TEST_CASE("parallel_for visits each index exactly once") {
    std::vector<std::atomic<int>> hits(1000);
    parallel_for(hits.size(), [&](std::size_t i) { hits[i]++; });
    for (auto& h : hits) CHECK(h.load() == 1);
}

TEST_CASE("REFPAINT_THREADS caps the worker count") {
    const char* old = std::getenv("REFPAINT_THREADS");
    const std::string saved = old ? old : "";
    setenv("REFPAINT_THREADS", "3", 1);
    CHECK(worker_count() == 3);
    setenv("REFPAINT_THREADS", "junk", 1);
    CHECK(worker_count() >= 1);
    if (old) setenv("REFPAINT_THREADS", saved.c_str(), 1); else unsetenv("REFPAINT_THREADS");
}

TEST_CASE("exceptions propagate to the caller") {
    CHECK_THROWS_AS(parallel_for(64, [](std::size_t i) {
                        if (i == 40) throw std::runtime_error("boom");
                    }),
                    std::runtime_error);
}
}
