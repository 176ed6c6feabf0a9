// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <set>

#include "wiseopen/common.hpp"
#include "wiseopen/parallel.hpp"

using namespace wiseopen;

TEST_CASE("derived seeds are deterministic and spread out") {
  CHECK(derive_seed(1, 2) == derive_seed(1, 2));
  CHECK(derive_seed(1, 2) != derive_seed(2, 1));
  CHECK(derive_seed(1, 2, 3) != derive_seed(1, 3, 2));
  std::set<std::uint64_t> seen;
  for (std::uint64_t a = 0; a < 1000; ++a) seen.insert(derive_seed(7, a));
  CHECK(seen.size() == 1000);
}

TEST_CASE("vector helpers") {
  const Vector a{1.0, 2.0, 2.0};
  const Vector b{0.0, 0.0, 1.0};
  CHECK(dot(a, b) == 2.0);
  CHECK(squared_norm(a) == 9.0);
  CHECK(norm(a) == 3.0);
  CHECK(squared_distance(a, b) == 6.0);
  CHECK(all_finite(a));
  CHECK_FALSE(all_finite(Vector{1.0, std::nan("")}));
  CHECK_THROWS_AS(dot(a, Vector{1.0}), ShapeError);
}

TEST_CASE("random unit vectors and orthonormal frames") {
  Rng rng(4);
  const auto u = random_unit_vector(7, rng);
  CHECK(norm(u) == doctest::Approx(1.0).epsilon(1e-14));
  const auto q = random_orthonormal_frame(6, 6, rng);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j)
      CHECK(dot(q[i], q[j]) == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-12));
}

TEST_CASE("parallel_for visits every index once for any worker count") {
  for (int threads : {1, 2, 3, 8, 64}) {
    std::vector<int> hits(37, 0);
    parallel_for(hits.size(), threads, [&](std::size_t i) { hits[i] += 1; });
    for (int h : hits) CHECK(h == 1);
  }
  std::atomic<int> calls{0};
  parallel_for(0, 4, [&](std::size_t) { ++calls; });
  CHECK(calls == 0);
}

TEST_CASE("parallel_for rethrows worker exceptions") {
  CHECK_THROWS_AS(parallel_for(10, 4,
                               [](std::size_t i) {
                                 if (i == 7) throw DomainError("boom");
                               }),
                  DomainError);
}
