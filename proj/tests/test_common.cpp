#include <algorithm>
#include <atomic>
#include <cmath>
#include <set>
#include <sstream>
#include <vector>

#include "doctest.h"

#include "asc/common.hpp"

using namespace asc;

TEST_CASE("rng determinism and stream splitting") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  Rng c(42);
  Rng s1 = c.split(1), s2 = c.split(2), s1b = c.split(1);
  CHECK(s1.next_u64() == s1b.next_u64());
  CHECK(s1.next_u64() != s2.next_u64());
}

TEST_CASE("rng uniform bounds") {
  Rng rng(7);
  for (int i = 0; i < 1000; ++i) {
    double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  for (int i = 0; i < 1000; ++i) {
    double u = rng.uniform(-2.0, 3.0);
    CHECK(u >= -2.0);
    CHECK(u < 3.0);
  }
}

TEST_CASE("rng uniform_int covers its range") {
  Rng rng(11);
  std::set<int64_t> seen;
  for (int i = 0; i < 2000; ++i) {
    int64_t v = rng.uniform_int(7);
    CHECK(v >= 0);
    CHECK(v < 7);
    seen.insert(v);
  }
  CHECK(seen.size() == 7);
}

TEST_CASE("rng normal is finite and roughly centered") {
  Rng rng(3);
  double sum = 0.0;
  for (int i = 0; i < 10000; ++i) {
    double n = rng.normal();
    REQUIRE(std::isfinite(n));
    sum += n;
  }
  CHECK(std::abs(sum / 10000.0) < 0.05);
}

TEST_CASE("shuffle is a permutation and seed-stable") {
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[static_cast<size_t>(i)] = i;
  std::vector<int> w = v;
  Rng(5).shuffle(v);
  Rng(5).shuffle(w);
  CHECK(v == w);
  std::sort(v.begin(), v.end());
  for (int i = 0; i < 50; ++i) CHECK(v[static_cast<size_t>(i)] == i);
}

TEST_CASE("parallel_for covers every index exactly once") {
  for (int threads : {1, 4}) {
    set_thread_count(threads);
    std::vector<std::atomic<int>> hits(1000);
    parallel_for(1000, [&](int64_t lo, int64_t hi) {
      for (int64_t i = lo; i < hi; ++i) hits[static_cast<size_t>(i)]++;
    });
    for (auto& h : hits) CHECK(h.load() == 1);
  }
  set_thread_count(1);
}

TEST_CASE("binary io round trip") {
  std::stringstream ss;
  bin::write_u8(ss, 0xab);
  bin::write_u16(ss, 0x1234);
  bin::write_u32(ss, 0xdeadbeef);
  bin::write_f32(ss, 1.5f);
  bin::write_f64(ss, -2.25);
  CHECK(bin::read_u8(ss) == 0xab);
  CHECK(bin::read_u16(ss) == 0x1234);
  CHECK(bin::read_u32(ss) == 0xdeadbeef);
  CHECK(bin::read_f32(ss) == 1.5f);
  CHECK(bin::read_f64(ss) == -2.25);
}

TEST_CASE("error kinds map to exit classes") {
  CHECK(is_validation_error(ErrorKind::kInvalidConfig));
  CHECK(is_validation_error(ErrorKind::kUnknownLabel));
  CHECK_FALSE(is_validation_error(ErrorKind::kIOFailure));
  try {
    raise(ErrorKind::kEmptyClip, "nothing here");
    FAIL("raise returned");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kEmptyClip);
    CHECK(std::string(e.what()).find("nothing here") != std::string::npos);
  }
}

TEST_CASE("strf formats like printf") {
  CHECK(strf("%d-%s-%.2f", 7, "x", 1.5) == "7-x-1.50");
  CHECK(strf("%lld", 1234567890123ll) == "1234567890123");
}
