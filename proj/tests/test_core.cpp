#include <doctest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <cstring>
#include <set>
#include <thread>

#include "mmcp/core/binio.hpp"
#include "mmcp/core/errors.hpp"
#include "mmcp/core/parallel.hpp"
#include "mmcp/core/rng.hpp"

namespace fs = std::filesystem;
using namespace mmcp;

TEST_SUITE("core") {
  TEST_CASE("rng is deterministic and distinct across seeds") {
    Rng a(42), b(42), c(43);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    bool any_diff = false;
    Rng a2(42);
    for (int i = 0; i < 100; ++i) any_diff = any_diff || (a2.next_u64() != c.next_u64());
    CHECK(any_diff);
  }

  TEST_CASE("uniform stays in [0,1) and covers the range") {
    Rng rng(7);
    double lo = 1.0, hi = 0.0;
    for (int i = 0; i < 10000; ++i) {
      const double u = rng.uniform();
      CHECK(u >= 0.0);
      CHECK(u < 1.0);
      lo = std::min(lo, u);
      hi = std::max(hi, u);
    }
    CHECK(lo < 0.05);
    CHECK(hi > 0.95);
  }

  TEST_CASE("uniform_int is unbiased enough and in range") {
    Rng rng(11);
    std::vector<int> counts(7, 0);
    for (int i = 0; i < 70000; ++i) {
      const auto v = rng.uniform_int(7);
      REQUIRE(v < 7);
      ++counts[static_cast<int>(v)];
    }
    for (int c : counts) CHECK(std::abs(c - 10000) < 600);
  }

  TEST_CASE("normal has roughly standard moments") {
    Rng rng(13);
    double sum = 0.0, sumsq = 0.0;
    const int n = 50000;
    for (int i = 0; i < n; ++i) {
      const double x = rng.normal();
      sum += x;
      sumsq += x * x;
    }
    CHECK(std::abs(sum / n) < 0.02);
    CHECK(std::abs(sumsq / n - 1.0) < 0.03);
  }

  TEST_CASE("mix_seed separates streams") {
    std::set<std::uint64_t> seen;
    for (std::uint64_t base = 0; base < 10; ++base)
      for (std::uint64_t stream = 0; stream < 10; ++stream)
        seen.insert(mix_seed(base, stream));
    CHECK(seen.size() == 100);
  }

  TEST_CASE("f32 round trip is bit exact and validates byte counts") {
    const fs::path dir = fs::temp_directory_path() / "mmcp_binio_test";
    fs::create_directories(dir);
    const fs::path file = dir / "x.f32";

    std::vector<float> data{1.0f, -2.5f, 3.25e-8f, 0.0f, -0.0f};
    write_f32_le(file, data);
    const std::vector<float> back = read_f32_le(file, data.size());
    REQUIRE(back.size() == data.size());
    for (std::size_t i = 0; i < data.size(); ++i)
      CHECK(std::memcmp(&back[i], &data[i], sizeof(float)) == 0);

    CHECK_THROWS_AS((void)read_f32_le(file, data.size() + 1), FormatError);
    CHECK_THROWS_AS((void)read_f32_le(dir / "absent.f32", 1), FormatError);
    try {
      (void)read_f32_le(file, 2);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      // The message must name the file so a user can locate the bad payload.
      CHECK(std::string(e.what()).find("x.f32") != std::string::npos);
    }
    fs::remove_all(dir);
  }

  TEST_CASE("parallel_for covers every index exactly once") {
    for (int threads : {1, 2, 5}) {
      std::vector<int> hits(100, 0);
      parallel_for(100, threads, [&](int i) { hits[i] += 1; });
      for (int h : hits) CHECK(h == 1);
    }
  }
}
