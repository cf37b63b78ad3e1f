#include "mmcp/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mmcp::train {

TrainMode train_mode_from_string(const std::string& s) {
  if (s == "compass") return TrainMode::COMPASS;
  if (s == "cpc") return TrainMode::CPC;
  if (s == "cmc") return TrainMode::CMC;
  if (s == "joint") return TrainMode::JOINT;
  if (s == "disjoint") return TrainMode::DISJOINT;
  if (s == "rgb_only") return TrainMode::RGB_ONLY;
  if (s == "scratch") return TrainMode::SCRATCH;
  throw std::invalid_argument("unknown training mode '" + s + "'");
}

std::string train_mode_to_string(TrainMode m) {
  switch (m) {
    case TrainMode::COMPASS: return "compass";
    case TrainMode::CPC: return "cpc";
    case TrainMode::CMC: return "cmc";
    case TrainMode::JOINT: return "joint";
    case TrainMode::DISJOINT: return "disjoint";
    case TrainMode::RGB_ONLY: return "rgb_only";
    case TrainMode::SCRATCH: return "scratch";
  }
  throw std::invalid_argument("unknown training mode value");
}

graph::GraphSpec graph_for_mode(TrainMode mode) {
  switch (mode) {
    case TrainMode::COMPASS:
    case TrainMode::SCRATCH:
      return graph::build_graph(graph::Mode::COMPASS, graph::default_modalities());
    case TrainMode::RGB_ONLY:
      return graph::build_graph(graph::Mode::COMPASS, graph::rgb_only_modalities());
    case TrainMode::CPC:
      return graph::build_graph(graph::Mode::CPC, graph::default_modalities());
    case TrainMode::CMC:
      return graph::build_graph(graph::Mode::CMC, graph::default_modalities());
    case TrainMode::JOINT:
      return graph::build_graph(graph::Mode::JOINT, graph::default_modalities());
    case TrainMode::DISJOINT:
      return graph::build_graph(graph::Mode::DISJOINT, graph::default_modalities());
  }
  throw std::invalid_argument("unknown training mode value");
}

void TrainConfig::validate() const {
  if (steps <= 0) throw std::invalid_argument("TrainConfig: steps must be positive");
  if (!(lr > 0.0)) throw std::invalid_argument("TrainConfig: lr must be positive");
  if (clips_per_step < 1)
    throw std::invalid_argument("TrainConfig: clips_per_step must be at least 1");
  if (precision != "f32" && precision != "f64")
    throw std::invalid_argument("TrainConfig: precision must be 'f32' or 'f64', got '" +
                                precision + "'");
  if (!(sim.temperature > 0.0))
    throw std::invalid_argument("TrainConfig: temperature must be positive");
  batch.validate();
  model.validate();
  if (batch.window != model.window)
    throw std::invalid_argument(
        "TrainConfig: batch window " + std::to_string(batch.window) +
        " and model window " + std::to_string(model.window) +
        " must agree (the temporal encoders are built for one window length)");
}

Task task_from_string(const std::string& s) {
  if (s == "steering") return Task::Steering;
  if (s == "odometry") return Task::Odometry;
  if (s == "velocity") return Task::Velocity;
  throw std::invalid_argument("unknown task '" + s + "'");
}

std::string task_to_string(Task t) { return task_spec(t).name; }

const TaskSpec& task_spec(Task t) {
  // Label columns index the per-transition label table:
  // steering, vx, vy, vz, vyaw, dx, dy, dtheta.
  static const TaskSpec steering{"steering", "rgb", false, false, true, true, 1, 0};
  static const TaskSpec odometry{"odometry", "flow", true, false, false, false, 3, 5};
  static const TaskSpec velocity{"velocity", "rgb", true, true, false, false, 4, 1};
  switch (t) {
    case Task::Steering: return steering;
    case Task::Odometry: return odometry;
    case Task::Velocity: return velocity;
  }
  throw std::invalid_argument("unknown task value");
}

int task_t_max(Task t, int length, int window) {
  switch (t) {
    case Task::Steering: return length - 2;
    case Task::Odometry: return length - 1 - window;
    case Task::Velocity: return length - window;
  }
  throw std::invalid_argument("unknown task value");
}

int task_label_row(Task t, int t0, int window) {
  switch (t) {
    case Task::Steering: return t0;
    case Task::Odometry: return t0 + window - 1;
    case Task::Velocity: return t0 + window - 2;
  }
  throw std::invalid_argument("unknown task value");
}

std::vector<double> task_label(Task task, const world::SequenceRecord& rec, int t,
                               int window) {
  const TaskSpec& spec = task_spec(task);
  const int row = task_label_row(task, t, window);
  if (t < 0 || t > task_t_max(task, rec.length, window))
    throw OutOfBoundsError("task_label: time " + std::to_string(t) +
                           " outside the valid sample range for task '" + spec.name + "'");
  std::vector<double> out(static_cast<std::size_t>(spec.out_dim));
  for (int i = 0; i < spec.out_dim; ++i)
    out[static_cast<std::size_t>(i)] =
        static_cast<double>(rec.labels.at({row, spec.label_col + i}));
  return out;
}

void FinetuneConfig::validate() const {
  if (!(fraction > 0.0) || fraction > 1.0)
    throw std::invalid_argument("FinetuneConfig: fraction must be in (0, 1], got " +
                                std::to_string(fraction));
  if (steps <= 0) throw std::invalid_argument("FinetuneConfig: steps must be positive");
  if (batch <= 0) throw std::invalid_argument("FinetuneConfig: batch must be positive");
  if (!(lr > 0.0)) throw std::invalid_argument("FinetuneConfig: lr must be positive");
  if (head_hidden < 1)
    throw std::invalid_argument("FinetuneConfig: head_hidden must be >= 1");
}

std::vector<int> select_fraction(const std::vector<int>& pool, double fraction,
                                 std::uint64_t seed) {
  if (!(fraction > 0.0) || fraction > 1.0)
    throw std::invalid_argument("select_fraction: fraction must be in (0, 1], got " +
                                std::to_string(fraction));
  if (pool.empty()) throw std::invalid_argument("select_fraction: empty pool");
  const auto n = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(pool.size())));

  // Partial shuffle: the first n slots end up holding a uniform subset.
  std::vector<int> work = pool;
  Rng rng(mix_seed(seed, 0x73756273ull));
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j =
        i + static_cast<std::size_t>(rng.uniform_int(static_cast<int>(work.size() - i)));
    std::swap(work[i], work[j]);
  }
  work.resize(n);
  std::sort(work.begin(), work.end());
  return work;
}

}  // namespace mmcp::train
