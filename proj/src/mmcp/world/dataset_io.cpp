#include "mmcp/world/dataset_io.hpp"

#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "mmcp/core/binio.hpp"
#include "mmcp/core/errors.hpp"

namespace mmcp::world {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json config_to_json(const WorldConfig& c) {
  return json{{"map_size", c.map_size},
              {"crop_size", c.crop_size},
              {"n_obstacles", c.n_obstacles},
              {"track_curvature_scale", c.track_curvature_scale},
              {"texture_seed", c.texture_seed},
              {"environment_id", c.environment_id}};
}

WorldConfig config_from_json(const json& j, const std::string& where) {
  WorldConfig c;
  try {
    j.at("map_size").get_to(c.map_size);
    j.at("crop_size").get_to(c.crop_size);
    j.at("n_obstacles").get_to(c.n_obstacles);
    j.at("track_curvature_scale").get_to(c.track_curvature_scale);
    j.at("texture_seed").get_to(c.texture_seed);
    j.at("environment_id").get_to(c.environment_id);
  } catch (const json::exception& e) {
    throw FormatError(where + ": bad world config: " + e.what());
  }
  return c;
}

json parse_manifest(const fs::path& file, const std::string& expected_type) {
  const std::string text = read_text_file(file);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(file.string() + ": invalid JSON: " + e.what());
  }
  if (!j.is_object() || j.value("type", std::string{}) != expected_type)
    throw FormatError(file.string() + ": expected manifest of type '" + expected_type + "'");
  return j;
}

struct ArraySpec {
  const char* name;
  const char* kind;
  NdArray SequenceRecord::* member;
};

constexpr ArraySpec kArrays[] = {
    {"rgb", "spatial", &SequenceRecord::rgb},     {"depth", "spatial", &SequenceRecord::depth},
    {"flow", "temporal", &SequenceRecord::flow},  {"labels", "labels", &SequenceRecord::labels},
    {"poses", "poses", &SequenceRecord::poses},
};

std::vector<int> expected_shape(const char* name, int T, int S) {
  const std::string n = name;
  if (n == "rgb") return {T, S, S, 3};
  if (n == "depth") return {T, S, S, 1};
  if (n == "flow") return {T - 1, S, S, 2};
  if (n == "labels") return {T - 1, 8};
  return {T, 4};
}

}  // namespace

std::string sequence_dir_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "seq_%04d", index);
  return buf;
}

void write_sequence(const SequenceRecord& rec, const fs::path& dir) {
  fs::create_directories(dir);

  json arrays = json::array();
  for (const ArraySpec& spec : kArrays) {
    const NdArray& arr = rec.*(spec.member);
    arrays.push_back(json{{"name", spec.name},
                          {"kind", spec.kind},
                          {"file", std::string(spec.name) + ".f32"},
                          {"dtype", "float32-le"},
                          {"shape", arr.shape}});
    write_f32_le(dir / (std::string(spec.name) + ".f32"), arr.data);
  }

  json manifest{{"type", "mmcp-sequence"},
                {"seed", rec.seed},
                {"length", rec.length},
                {"config", config_to_json(rec.config)},
                {"arrays", arrays},
                {"label_names", json::array({"steering", "vx", "vy", "vz", "vyaw", "dx",
                                             "dy", "dtheta"})}};
  write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

SequenceRecord read_sequence(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  const json manifest = parse_manifest(manifest_path, "mmcp-sequence");

  SequenceRecord rec;
  try {
    manifest.at("seed").get_to(rec.seed);
    manifest.at("length").get_to(rec.length);
  } catch (const json::exception& e) {
    throw FormatError(manifest_path.string() + ": " + e.what());
  }
  rec.config = config_from_json(manifest.value("config", json::object()),
                                manifest_path.string());
  if (rec.length < 2)
    throw FormatError(manifest_path.string() + ": length must be >= 2, got " +
                      std::to_string(rec.length));

  const json arrays = manifest.value("arrays", json::array());
  if (!arrays.is_array() || arrays.size() != std::size(kArrays))
    throw FormatError(manifest_path.string() + ": expected " +
                      std::to_string(std::size(kArrays)) + " array entries");

  // First pass: validate every entry and payload size so no array is loaded
  // from an inconsistent directory.
  const int T = rec.length;
  const int S = rec.config.crop_size;
  std::vector<fs::path> files;
  std::vector<std::vector<int>> shapes;
  for (std::size_t i = 0; i < std::size(kArrays); ++i) {
    const json& entry = arrays[i];
    const std::string name = entry.value("name", std::string{});
    if (name != kArrays[i].name)
      throw FormatError(manifest_path.string() + ": array " + std::to_string(i) +
                        " expected name '" + kArrays[i].name + "', got '" + name + "'");
    if (entry.value("dtype", std::string{}) != "float32-le")
      throw FormatError(manifest_path.string() + ": array '" + name +
                        "' has unsupported dtype");
    std::vector<int> shape;
    try {
      entry.at("shape").get_to(shape);
    } catch (const json::exception& e) {
      throw FormatError(manifest_path.string() + ": array '" + name + "': " + e.what());
    }
    if (shape != expected_shape(kArrays[i].name, T, S))
      throw FormatError(manifest_path.string() + ": array '" + name +
                        "' shape is inconsistent with length " + std::to_string(T) +
                        " and crop_size " + std::to_string(S));
    const fs::path file = dir / entry.value("file", std::string{});
    std::size_t count = 1;
    for (int d : shape) count *= static_cast<std::size_t>(d);
    const std::uintmax_t want = count * sizeof(float);
    std::error_code ec;
    const std::uintmax_t have = fs::file_size(file, ec);
    if (ec)
      throw FormatError(file.string() + ": cannot stat payload: " + ec.message());
    if (have != want)
      throw FormatError(file.string() + ": expected " + std::to_string(want) +
                        " bytes for shape " + shape_to_string(shape) + ", found " +
                        std::to_string(have));
    files.push_back(file);
    shapes.push_back(std::move(shape));
  }

  for (std::size_t i = 0; i < std::size(kArrays); ++i) {
    NdArray arr(shapes[i]);
    arr.data = read_f32_le(files[i], arr.data.size());
    rec.*(kArrays[i].member) = std::move(arr);
  }
  return rec;
}

void write_dataset(const Dataset& ds, const fs::path& dir) {
  fs::create_directories(dir);
  json manifest{{"type", "mmcp-dataset"},
                {"n_sequences", static_cast<int>(ds.sequences.size())},
                {"seq_len", ds.config.seq_len},
                {"base_seed", ds.config.base_seed},
                {"environment_ids", ds.config.environment_ids},
                {"world", config_to_json(ds.config.world)}};
  write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
  for (std::size_t i = 0; i < ds.sequences.size(); ++i)
    write_sequence(ds.sequences[i], dir / sequence_dir_name(static_cast<int>(i)));
}

Dataset read_dataset(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  const json manifest = parse_manifest(manifest_path, "mmcp-dataset");

  Dataset ds;
  int n = 0;
  try {
    manifest.at("n_sequences").get_to(n);
    manifest.at("seq_len").get_to(ds.config.seq_len);
    manifest.at("base_seed").get_to(ds.config.base_seed);
    manifest.at("environment_ids").get_to(ds.config.environment_ids);
  } catch (const json::exception& e) {
    throw FormatError(manifest_path.string() + ": " + e.what());
  }
  ds.config.world = config_from_json(manifest.value("world", json::object()),
                                     manifest_path.string());
  if (n < 0) throw FormatError(manifest_path.string() + ": negative n_sequences");
  ds.config.n_sequences = n;

  ds.sequences.reserve(n);
  for (int i = 0; i < n; ++i) ds.sequences.push_back(read_sequence(dir / sequence_dir_name(i)));
  return ds;
}

}  // namespace mmcp::world
