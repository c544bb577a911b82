#include "doctest.h"
#include "gradcheck.hpp"

TEST_CASE("every loss configuration matches central differences") {
  for (const auto& c : gradcheck::cases()) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto e = gradcheck::check_objective(c, 100 + seed);
      INFO(c.name << " seed " << seed);
      CHECK(e.value < 1e-10);
      CHECK(e.prototypes < 1e-4);
      CHECK(e.class_connections < 1e-4);
      CHECK(e.features < 1e-4);
    }
  }
}

TEST_CASE("warm-up leaves the L1 term out of the connection gradient") {
  gradcheck::Case c{"warm l1", protoeeg::Stage::Warm, gradcheck::only(0, 0, 0, 0.5)};
  const auto e = gradcheck::check_objective(c, 1);
  CHECK(e.class_connections < 1e-4);
}

TEST_CASE("extractor parameter gradient matches central differences in double precision") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    INFO("seed " << seed);
    CHECK(gradcheck::check_extractor(seed) < 1e-4);
  }
}
