#include "mmcp/train/checkpoint_io.hpp"

#include <cinttypes>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "mmcp/core/binio.hpp"
#include "mmcp/core/errors.hpp"

namespace mmcp::train {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <typename T>
constexpr const char* dtype_name() {
  if constexpr (std::is_same_v<T, float>) {
    return "float32-le";
  } else {
    return "float64-le";
  }
}

json sim_to_json(const objectives::SimilarityConfig& s) {
  return json{{"normalize", s.normalize}, {"temperature", s.temperature}};
}

json batch_to_json(const graph::BatchParams& b) {
  return json{{"span", b.span},
              {"horizon", b.horizon},
              {"negatives", b.negatives},
              {"window", b.window},
              {"step", b.step}};
}

json model_to_json(const model::ModelConfig& m) {
  return json{{"latent_dim", m.latent_dim},
              {"crop_size", m.crop_size},
              {"window", m.window},
              {"spatial_channels", m.spatial_channels},
              {"temporal_channels", m.temporal_channels},
              {"gru_hidden", m.gru_hidden},
              {"pred_hidden", m.pred_hidden}};
}

json train_config_to_json(const TrainConfig& c) {
  return json{{"mode", train_mode_to_string(c.mode)},
              {"steps", c.steps},
              {"lr", c.lr},
              {"seed", c.seed},
              {"clips_per_step", c.clips_per_step},
              {"precision", c.precision},
              {"sim", sim_to_json(c.sim)},
              {"batch", batch_to_json(c.batch)},
              {"model", model_to_json(c.model)}};
}

TrainConfig train_config_from_json(const json& j, const std::string& where) {
  TrainConfig c;
  try {
    c.mode = train_mode_from_string(j.at("mode").get<std::string>());
    j.at("steps").get_to(c.steps);
    j.at("lr").get_to(c.lr);
    j.at("seed").get_to(c.seed);
    j.at("clips_per_step").get_to(c.clips_per_step);
    j.at("precision").get_to(c.precision);
    const json& s = j.at("sim");
    s.at("normalize").get_to(c.sim.normalize);
    s.at("temperature").get_to(c.sim.temperature);
    const json& b = j.at("batch");
    b.at("span").get_to(c.batch.span);
    b.at("horizon").get_to(c.batch.horizon);
    b.at("negatives").get_to(c.batch.negatives);
    b.at("window").get_to(c.batch.window);
    b.at("step").get_to(c.batch.step);
    const json& m = j.at("model");
    m.at("latent_dim").get_to(c.model.latent_dim);
    m.at("crop_size").get_to(c.model.crop_size);
    m.at("window").get_to(c.model.window);
    m.at("spatial_channels").get_to(c.model.spatial_channels);
    m.at("temporal_channels").get_to(c.model.temporal_channels);
    m.at("gru_hidden").get_to(c.model.gru_hidden);
    m.at("pred_hidden").get_to(c.model.pred_hidden);
  } catch (const json::exception& e) {
    throw FormatError(where + ": bad training config: " + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(where + ": bad training config: " + e.what());
  }
  return c;
}

json finetune_config_to_json(const FinetuneConfig& c) {
  return json{{"task", task_to_string(c.task)},
              {"fraction", c.fraction},
              {"freeze_encoder", c.freeze_encoder},
              {"steps", c.steps},
              {"batch", c.batch},
              {"lr", c.lr},
              {"seed", c.seed},
              {"head_hidden", c.head_hidden}};
}

FinetuneConfig finetune_config_from_json(const json& j, const std::string& where) {
  FinetuneConfig c;
  try {
    c.task = task_from_string(j.at("task").get<std::string>());
    j.at("fraction").get_to(c.fraction);
    j.at("freeze_encoder").get_to(c.freeze_encoder);
    j.at("steps").get_to(c.steps);
    j.at("batch").get_to(c.batch);
    j.at("lr").get_to(c.lr);
    j.at("seed").get_to(c.seed);
    j.at("head_hidden").get_to(c.head_hidden);
  } catch (const json::exception& e) {
    throw FormatError(where + ": bad finetune config: " + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(where + ": bad finetune config: " + e.what());
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

template <typename T>
json store_to_manifest(const nn::ParamStore<T>& store) {
  json table = json::array();
  long offset = 0;
  for (const auto& e : store.entries) {
    table.push_back(json{{"name", e.name},
                         {"rows", static_cast<int>(e.value.rows())},
                         {"cols", static_cast<int>(e.value.cols())},
                         {"shape", e.logical_shape},
                         {"offset", offset}});
    offset += static_cast<long>(e.value.size());
  }
  return table;
}

template <typename T>
void write_params_bin(const nn::ParamStore<T>& store, const fs::path& file) {
  std::vector<T> flat;
  flat.reserve(store.parameter_count());
  for (const auto& e : store.entries)
    flat.insert(flat.end(), e.value.data(), e.value.data() + e.value.size());
  if constexpr (std::is_same_v<T, float>) {
    write_f32_le(file, flat);
  } else {
    write_f64_le(file, flat);
  }
}

template <typename T>
nn::ParamStore<T> read_store(const json& manifest, const fs::path& manifest_path,
                             const fs::path& bin) {
  if (manifest.value("dtype", std::string{}) != dtype_name<T>())
    throw FormatError(manifest_path.string() + ": dtype '" +
                      manifest.value("dtype", std::string{}) + "' does not match the " +
                      dtype_name<T>() + " loader");

  const json table = manifest.value("params", json::array());
  if (!table.is_array() || table.empty())
    throw FormatError(manifest_path.string() + ": missing tensor table");

  nn::ParamStore<T> store;
  std::size_t total = 0;
  for (const json& row : table) {
    std::string name;
    int rows = 0, cols = 0;
    long offset = 0;
    std::vector<int> shape;
    try {
      row.at("name").get_to(name);
      row.at("rows").get_to(rows);
      row.at("cols").get_to(cols);
      row.at("offset").get_to(offset);
      row.at("shape").get_to(shape);
    } catch (const json::exception& e) {
      throw FormatError(manifest_path.string() + ": bad tensor table row: " + e.what());
    }
    if (rows < 1 || cols < 1)
      throw FormatError(manifest_path.string() + ": tensor '" + name +
                        "' has impossible shape " + std::to_string(rows) + "x" +
                        std::to_string(cols));
    if (offset != static_cast<long>(total))
      throw FormatError(manifest_path.string() + ": tensor '" + name + "' offset " +
                        std::to_string(offset) + " does not match the running total " +
                        std::to_string(total));
    store.add(name, rows, cols, std::move(shape));
    total += static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  }

  std::vector<T> flat;
  if constexpr (std::is_same_v<T, float>) {
    flat = read_f32_le(bin, total);
  } else {
    flat = read_f64_le(bin, total);
  }
  std::size_t pos = 0;
  for (auto& e : store.entries) {
    e.value = Eigen::Map<const nn::Mat<T>>(flat.data() + pos, e.value.rows(), e.value.cols());
    pos += static_cast<std::size_t>(e.value.size());
  }
  return store;
}

// The graph is rebuilt from the mode rather than parsed; the stored echo is an
// integrity check and a human-readable record.
graph::GraphSpec rebuild_graph(const json& manifest, const fs::path& manifest_path,
                               TrainMode mode) {
  graph::GraphSpec g = graph_for_mode(mode);
  if (manifest.value("graph", json{}) != graph::graph_to_json(g))
    throw FormatError(manifest_path.string() +
                      ": graph echo does not match the one its mode produces");
  return g;
}

std::string format_row(long step, const double* values, int n) {
  char buf[256];
  std::string out = std::to_string(step);
  for (int i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof(buf), "\t%.17g", values[i]);
    out += buf;
  }
  out += '\n';
  return out;
}

std::vector<std::vector<std::string>> read_tsv(const fs::path& path,
                                               const std::string& header, int columns) {
  const std::string text = read_text_file(path);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != header)
    throw FormatError(path.string() + ": expected header '" + header + "'");
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, '\t')) cells.push_back(cell);
    if (static_cast<int>(cells.size()) != columns)
      throw FormatError(path.string() + ": row " + std::to_string(rows.size() + 1) +
                        " has " + std::to_string(cells.size()) + " columns, expected " +
                        std::to_string(columns));
    rows.push_back(std::move(cells));
  }
  return rows;
}

double parse_double(const std::string& s, const fs::path& path) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw FormatError(path.string() + ": bad number '" + s + "'");
  }
}

long parse_long(const std::string& s, const fs::path& path) {
  try {
    std::size_t used = 0;
    const long v = std::stol(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw FormatError(path.string() + ": bad step index '" + s + "'");
  }
}

}  // namespace

void write_history(const fs::path& path, const std::vector<HistoryRow>& rows) {
  std::string text = "step\tL_m\tL_s\tL_sm\ttotal\n";
  for (const auto& r : rows) {
    const double values[] = {r.temporal, r.spatial, r.spatiotemporal, r.total};
    text += format_row(r.step, values, 4);
  }
  write_text_file(path, text);
}

std::vector<HistoryRow> read_history(const fs::path& path) {
  const auto rows = read_tsv(path, "step\tL_m\tL_s\tL_sm\ttotal", 5);
  std::vector<HistoryRow> out;
  out.reserve(rows.size());
  for (const auto& cells : rows) {
    HistoryRow r;
    r.step = parse_long(cells[0], path);
    r.temporal = parse_double(cells[1], path);
    r.spatial = parse_double(cells[2], path);
    r.spatiotemporal = parse_double(cells[3], path);
    r.total = parse_double(cells[4], path);
    out.push_back(r);
  }
  return out;
}

void write_finetune_history(const fs::path& path, const std::vector<FinetuneRow>& rows) {
  std::string text = "step\tloss\n";
  for (const auto& r : rows) text += format_row(r.step, &r.loss, 1);
  write_text_file(path, text);
}

std::vector<FinetuneRow> read_finetune_history(const fs::path& path) {
  const auto rows = read_tsv(path, "step\tloss", 2);
  std::vector<FinetuneRow> out;
  out.reserve(rows.size());
  for (const auto& cells : rows)
    out.push_back({parse_long(cells[0], path), parse_double(cells[1], path)});
  return out;
}

template <typename T>
void save_checkpoint(const Checkpoint<T>& ckpt, const fs::path& dir) {
  fs::create_directories(dir);
  json manifest{{"type", "mmcp-checkpoint"},
                {"dtype", dtype_name<T>()},
                {"seed", ckpt.config.seed},
                {"steps_completed", ckpt.steps_completed},
                {"config", train_config_to_json(ckpt.config)},
                {"graph", graph::graph_to_json(ckpt.graph)},
                {"params", store_to_manifest(ckpt.params)}};
  write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
  write_params_bin(ckpt.params, dir / "params.bin");
  write_history(dir / "history.tsv", ckpt.history);
}

template <typename T>
Checkpoint<T> load_checkpoint(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  const json manifest = parse_manifest(manifest_path, "mmcp-checkpoint");

  Checkpoint<T> ckpt;
  ckpt.config = train_config_from_json(manifest.value("config", json::object()),
                                       manifest_path.string());
  ckpt.graph = rebuild_graph(manifest, manifest_path, ckpt.config.mode);
  try {
    manifest.at("steps_completed").get_to(ckpt.steps_completed);
  } catch (const json::exception& e) {
    throw FormatError(manifest_path.string() + ": " + e.what());
  }
  ckpt.params = read_store<T>(manifest, manifest_path, dir / "params.bin");
  ckpt.history = read_history(dir / "history.tsv");
  if (ckpt.steps_completed != static_cast<long>(ckpt.history.size()))
    throw FormatError(manifest_path.string() + ": steps_completed " +
                      std::to_string(ckpt.steps_completed) + " does not match " +
                      std::to_string(ckpt.history.size()) + " history rows");
  model::check_params_match(ckpt.params, ckpt.config.model, ckpt.graph);
  return ckpt;
}

template <typename T>
void save_task_model(const TaskModel<T>& tm, const fs::path& dir) {
  fs::create_directories(dir);
  json manifest{{"type", "mmcp-task-model"},
                {"dtype", dtype_name<T>()},
                {"task", task_to_string(tm.config.task)},
                {"pretrain", train_config_to_json(tm.pretrain)},
                {"finetune", finetune_config_to_json(tm.config)},
                {"graph", graph::graph_to_json(tm.graph)},
                {"train_sequences", tm.train_sequences},
                {"params", store_to_manifest(tm.params)}};
  write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
  write_params_bin(tm.params, dir / "params.bin");
  write_finetune_history(dir / "history.tsv", tm.history);
}

template <typename T>
TaskModel<T> load_task_model(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  const json manifest = parse_manifest(manifest_path, "mmcp-task-model");

  TaskModel<T> tm;
  tm.pretrain = train_config_from_json(manifest.value("pretrain", json::object()),
                                       manifest_path.string());
  tm.config = finetune_config_from_json(manifest.value("finetune", json::object()),
                                        manifest_path.string());
  tm.graph = rebuild_graph(manifest, manifest_path, tm.pretrain.mode);
  try {
    manifest.at("train_sequences").get_to(tm.train_sequences);
  } catch (const json::exception& e) {
    throw FormatError(manifest_path.string() + ": " + e.what());
  }
  tm.params = read_store<T>(manifest, manifest_path, dir / "params.bin");
  tm.history = read_finetune_history(dir / "history.tsv");
  model::check_params_match(tm.params, tm.pretrain.model, tm.graph);
  return tm;
}

template void save_checkpoint<float>(const Checkpoint<float>&, const fs::path&);
template void save_checkpoint<double>(const Checkpoint<double>&, const fs::path&);
template Checkpoint<float> load_checkpoint<float>(const fs::path&);
template Checkpoint<double> load_checkpoint<double>(const fs::path&);
template void save_task_model<float>(const TaskModel<float>&, const fs::path&);
template void save_task_model<double>(const TaskModel<double>&, const fs::path&);
template TaskModel<float> load_task_model<float>(const fs::path&);
template TaskModel<double> load_task_model<double>(const fs::path&);

}  // namespace mmcp::train
