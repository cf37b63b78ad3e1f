#include <doctest.h>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <unistd.h>

#include "mmcp/core/binio.hpp"
#include "mmcp/world/dataset_io.hpp"
#include "mmcp/world/world.hpp"

using namespace mmcp;
using namespace mmcp::world;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("mmcp_io_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

DatasetConfig tiny_dataset_config() {
  DatasetConfig dc;
  dc.world.map_size = 160;
  dc.world.crop_size = 16;
  dc.world.n_obstacles = 4;
  dc.world.texture_seed = 11;
  dc.n_sequences = 3;
  dc.seq_len = 6;
  dc.base_seed = 42;
  dc.environment_ids = {0, 3};
  return dc;
}

void patch_file(const fs::path& p, const std::string& from, const std::string& to) {
  std::ifstream in(p);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto pos = text.find(from);
  REQUIRE(pos != std::string::npos);
  text.replace(pos, from.size(), to);
  std::ofstream out(p, std::ios::trunc);
  out << text;
}

void patch_manifest(const fs::path& p, const std::function<void(nlohmann::json&)>& fn) {
  std::ifstream in(p);
  nlohmann::json j = nlohmann::json::parse(in);
  fn(j);
  std::ofstream out(p, std::ios::trunc);
  out << j.dump(2) << "\n";
}

}  // namespace

TEST_SUITE("dataset_io") {
  TEST_CASE("sequence round trip preserves every byte") {
    TempDir tmp("seq");
    const auto rec = generate_sequence(tiny_dataset_config().world, 7, 6);
    write_sequence(rec, tmp.path / "s0");
    const auto back = read_sequence(tmp.path / "s0");
    CHECK(back == rec);
    CHECK(back.seed == rec.seed);
    CHECK(back.config.environment_id == rec.config.environment_id);
    CHECK(back.config.texture_seed == rec.config.texture_seed);
  }

  TEST_CASE("dataset round trip preserves config and all sequences") {
    TempDir tmp("ds");
    const auto dc = tiny_dataset_config();
    const Dataset ds = generate_dataset(dc, 2);
    write_dataset(ds, tmp.path / "d");
    const Dataset back = read_dataset(tmp.path / "d");
    REQUIRE(back.sequences.size() == ds.sequences.size());
    for (std::size_t i = 0; i < ds.sequences.size(); ++i) {
      CHECK(back.sequences[i] == ds.sequences[i]);
    }
    CHECK(back.config.n_sequences == dc.n_sequences);
    CHECK(back.config.seq_len == dc.seq_len);
    CHECK(back.config.base_seed == dc.base_seed);
    CHECK(back.config.environment_ids == dc.environment_ids);
    CHECK(back.config.world.map_size == dc.world.map_size);
    CHECK(back.config.world.crop_size == dc.world.crop_size);
  }

  TEST_CASE("rewriting a dataset produces byte-identical files") {
    TempDir tmp("bytes");
    const Dataset ds = generate_dataset(tiny_dataset_config(), 1);
    write_dataset(ds, tmp.path / "a");
    write_dataset(ds, tmp.path / "b");
    int files = 0;
    for (const auto& entry : fs::recursive_directory_iterator(tmp.path / "a")) {
      if (!entry.is_regular_file()) continue;
      ++files;
      const auto rel = fs::relative(entry.path(), tmp.path / "a");
      std::ifstream fa(entry.path(), std::ios::binary);
      std::ifstream fb(tmp.path / "b" / rel, std::ios::binary);
      REQUIRE(fb.good());
      const std::string ba((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
      const std::string bb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
      CHECK(ba == bb);
    }
    CHECK(files == 1 + 3 * 6);  // root manifest + 3 sequences x (manifest + 5 arrays)
  }

  TEST_CASE("tampered shape in the manifest fails before any array is loaded") {
    TempDir tmp("shape");
    const auto rec = generate_sequence(tiny_dataset_config().world, 1, 6);
    write_sequence(rec, tmp.path / "s");
    // Corrupt the rgb shape; the reader must notice from the manifest alone.
    patch_manifest(tmp.path / "s" / "manifest.json", [](nlohmann::json& j) {
      for (auto& a : j["arrays"]) {
        if (a["name"] == "rgb") a["shape"] = {6, 16, 16, 4};
      }
    });
    CHECK_THROWS_WITH_AS((void)read_sequence(tmp.path / "s"),
                         doctest::Contains("rgb"), FormatError);
  }

  TEST_CASE("truncated payload file is reported by name with byte counts") {
    TempDir tmp("trunc");
    const auto rec = generate_sequence(tiny_dataset_config().world, 2, 6);
    write_sequence(rec, tmp.path / "s");
    const fs::path victim = tmp.path / "s" / "depth.f32";
    const auto full = fs::file_size(victim);
    fs::resize_file(victim, full - 8);
    try {
      (void)read_sequence(tmp.path / "s");
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("depth.f32") != std::string::npos);
      CHECK(msg.find(std::to_string(full)) != std::string::npos);
      CHECK(msg.find(std::to_string(full - 8)) != std::string::npos);
    }
  }

  TEST_CASE("wrong manifest type and broken JSON are format errors") {
    TempDir tmp("type");
    const auto rec = generate_sequence(tiny_dataset_config().world, 3, 6);
    write_sequence(rec, tmp.path / "s");
    patch_file(tmp.path / "s" / "manifest.json", "mmcp-sequence", "mmcp-other");
    CHECK_THROWS_AS((void)read_sequence(tmp.path / "s"), FormatError);

    write_sequence(rec, tmp.path / "j");
    patch_file(tmp.path / "j" / "manifest.json", "{", "{{");
    CHECK_THROWS_AS((void)read_sequence(tmp.path / "j"), FormatError);

    CHECK_THROWS_AS((void)read_sequence(tmp.path / "missing"), FormatError);
    CHECK_THROWS_AS((void)read_dataset(tmp.path / "missing"), FormatError);
  }
}
