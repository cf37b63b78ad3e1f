#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "mmcp/train/trainer.hpp"
#include "mmcp/world/world.hpp"

namespace mmcp::eval {

struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
};

using Trajectory = std::vector<Pose2>;

// Left-composes 2D rigid transforms starting at `origin`. The result has one
// more pose than there are relative steps. Throws std::invalid_argument on an
// empty input and NumericError on non-finite values.
Trajectory compose_trajectory(const std::vector<std::array<double, 3>>& relposes,
                              const Pose2& origin = {});

// Body-frame relative poses between consecutive trajectory poses; the exact
// inverse of compose_trajectory up to the starting pose.
std::vector<std::array<double, 3>> extract_relposes(const Trajectory& traj);

struct DriftResult {
  double t_rel_pct = 0.0;         // translational drift, percent of distance
  double r_rel_deg_per_100 = 0.0; // rotational drift, degrees per 100 units
  int segments = 0;               // (length, start) pairs that entered the average
};

std::vector<double> default_segment_lengths();  // {10, 20, ..., 80} units

// Relative-segment drift. For each segment length L, every start index whose
// forward truth path length reaches L contributes one segment: the estimated
// and true relative transforms are compared, and the translational and
// rotational errors are divided by the segment's actual truth path length (the
// first distance at or past L, so the scaled-trajectory identity is exact on
// any step discretization). Per length the errors aggregate as RMSE over
// starts; lengths average arithmetically. Lengths no start can reach are
// skipped; a truth path shorter than the smallest length is an error.
DriftResult rpe_drift(const Trajectory& estimated, const Trajectory& truth,
                      const std::vector<double>& segment_lengths = default_segment_lengths());

// ---- task metrics --------------------------------------------------------------

// Predictors are plain callables so oracles and constants are as easy to
// evaluate as trained models.
using ScalarPredictor = std::function<double(const world::SequenceRecord&, int)>;
using VectorPredictor = std::function<std::vector<double>(const world::SequenceRecord&, int)>;

// Mean absolute steering error over every labeled frame of the split.
double steering_l1(const ScalarPredictor& predict, const world::Dataset& ds,
                   const std::vector<int>& split);

struct VelocityErrors {
  std::array<double, 4> component{};  // per-component mean absolute error
  double mean = 0.0;
};

// Per-component mean absolute velocity error over every sample position the
// window allows.
VelocityErrors velocity_errors(const VectorPredictor& predict, const world::Dataset& ds,
                               const std::vector<int>& split, int window);

// Sequence indices by environment parity: even environment ids are the
// training ("seen") side, odd ids are held out ("unseen").
std::vector<int> split_indices(const world::Dataset& ds, bool seen);

struct MetricsReport {
  std::string task;
  std::string split;  // "seen" | "unseen"
  std::string config_echo;
  std::vector<double> per_seed;
  double mean = 0.0;
  double stddev = 0.0;  // unbiased (n-1); zero when fewer than two seeds
};

MetricsReport make_report(const std::string& task, const std::string& split,
                          const std::vector<double>& per_seed);

// ---- representation probes ------------------------------------------------------

struct ProbeResult {
  double r2 = 0.0;
  bool degenerate = false;
  int n_train = 0;
  int n_test = 0;
};

// Closed-form affine least squares on the even rows, R² on the odd rows,
// averaged over label columns. Constant codes are flagged degenerate with
// R² = 0 rather than inverted.
ProbeResult linear_probe(const std::vector<std::vector<double>>& codes,
                         const std::vector<std::vector<double>>& labels);

// The projected code of one space member, mirroring how pretraining builds
// codes: temporal members encode a window at t, spatial members encode frame t
// for instance spaces and an aggregated window of frame codes for predictive
// spaces.
template <typename T>
std::vector<double> probe_code(nn::ParamStore<T>& params, const model::ModelConfig& mcfg,
                               const graph::GraphSpec& g, const std::string& space,
                               const std::string& member, const world::SequenceRecord& rec,
                               int t) {
  const graph::LatentSpace* sp = g.find_space(space);
  if (!sp) throw std::invalid_argument("probe_code: unknown space '" + space + "'");
  nn::Tape<T> tape;
  model::Forward<T> fwd(tape, params, mcfg, g);
  int code;
  if (g.modality(member).temporal) {
    code = fwd.encode(member, world::window_view(rec, member, t, mcfg.window));
  } else if (sp->predictive) {
    std::vector<int> frames;
    frames.reserve(mcfg.window);
    for (int u = t; u < t + mcfg.window; ++u)
      frames.push_back(fwd.encode(member, world::frame_view(rec, member, u)));
    code = fwd.aggregate(frames);
  } else {
    code = fwd.encode(member, world::frame_view(rec, member, t));
  }
  const int node = fwd.project(space, member, code);
  const auto& v = tape.value(node);
  std::vector<double> out(static_cast<std::size_t>(v.rows()));
  for (Eigen::Index i = 0; i < v.rows(); ++i) out[static_cast<std::size_t>(i)] = v(i, 0);
  return out;
}

struct ProbeData {
  std::vector<std::vector<double>> codes;
  std::vector<std::vector<double>> labels;
};

// Motion-space probe data: flow window codes against the body-frame relative
// pose at the window's middle transition. Flow frame t covers the transition
// t -> t+1, so a record holds one fewer flow frame than rgb frames and the
// window's middle frame indexes the label row directly.
template <typename T>
ProbeData collect_motion_probe(nn::ParamStore<T>& params, const model::ModelConfig& mcfg,
                               const graph::GraphSpec& g, const world::Dataset& ds,
                               const std::vector<int>& split, int stride = 1) {
  if (stride < 1) throw std::invalid_argument("collect_motion_probe: stride must be >= 1");
  ProbeData out;
  for (int idx : split) {
    const auto& rec = ds.sequences.at(static_cast<std::size_t>(idx));
    const int mid_offset = (mcfg.window - 1) / 2;
    for (int t = 0; t + mcfg.window <= rec.length - 1; t += stride) {
      out.codes.push_back(probe_code(params, mcfg, g, "motion", "flow", rec, t));
      const int row = t + mid_offset;
      out.labels.push_back({static_cast<double>(rec.labels.at({row, 5})),
                            static_cast<double>(rec.labels.at({row, 6})),
                            static_cast<double>(rec.labels.at({row, 7}))});
    }
  }
  return out;
}

// State-space probe data: rgb frame codes against the mean scene depth of the
// matching depth frame.
template <typename T>
ProbeData collect_state_probe(nn::ParamStore<T>& params, const model::ModelConfig& mcfg,
                              const graph::GraphSpec& g, const world::Dataset& ds,
                              const std::vector<int>& split, int stride = 1) {
  if (stride < 1) throw std::invalid_argument("collect_state_probe: stride must be >= 1");
  ProbeData out;
  for (int idx : split) {
    const auto& rec = ds.sequences.at(static_cast<std::size_t>(idx));
    const int pixels = rec.config.crop_size * rec.config.crop_size;
    for (int t = 0; t < rec.length; t += stride) {
      out.codes.push_back(probe_code(params, mcfg, g, "state", "rgb", rec, t));
      double sum = 0.0;
      const std::size_t base = static_cast<std::size_t>(t) * static_cast<std::size_t>(pixels);
      for (int p = 0; p < pixels; ++p)
        sum += static_cast<double>(rec.depth.data[base + static_cast<std::size_t>(p)]);
      out.labels.push_back({sum / pixels});
    }
  }
  return out;
}

// ---- data-efficiency sweep -------------------------------------------------------

struct SweepPoint {
  double fraction = 0.0;
  bool pretrained = false;
  std::vector<double> per_seed;  // evaluation error per seed, seed order
  double mean = 0.0;
  double stddev = 0.0;
};

struct SweepReport {
  train::Task task = train::Task::Velocity;
  std::vector<double> fractions;
  std::vector<SweepPoint> points;  // fractions x {pretrained, scratch}
  // The headline comparison: pretrained on a 40% subset against scratch on
  // everything (medians over seeds). Populated when both points exist.
  double pretrained_low_fraction = 0.0;
  double scratch_full = 0.0;
  bool comparison_available = false;
};

double median(std::vector<double> values);

// Finetunes pretrained and scratch checkpoints at every fraction and seed and
// evaluates the task error on the held-out dataset.
template <typename T>
SweepReport data_efficiency_sweep(const train::Checkpoint<T>& pretrained,
                                  const train::Checkpoint<T>& scratch,
                                  const world::Dataset& finetune_ds,
                                  const std::vector<int>& train_pool,
                                  const world::Dataset& eval_ds,
                                  const std::vector<int>& eval_split,
                                  const train::FinetuneConfig& base,
                                  const std::vector<double>& fractions,
                                  const std::vector<std::uint64_t>& seeds) {
  if (fractions.empty()) throw std::invalid_argument("data_efficiency_sweep: no fractions");
  if (seeds.empty()) throw std::invalid_argument("data_efficiency_sweep: no seeds");
  for (double f : fractions)
    if (!(f > 0.0) || f > 1.0)
      throw std::invalid_argument("data_efficiency_sweep: fraction " + std::to_string(f) +
                                  " outside (0, 1]");

  SweepReport report;
  report.task = base.task;
  report.fractions = fractions;

  const auto evaluate = [&](const train::Checkpoint<T>& ckpt, double fraction,
                            std::uint64_t seed) {
    train::FinetuneConfig fcfg = base;
    fcfg.fraction = fraction;
    fcfg.seed = seed;
    auto tm = train::finetune(ckpt, finetune_ds, train_pool, fcfg);
    const auto& mcfg = ckpt.config.model;
    if (base.task == train::Task::Steering) {
      return steering_l1(
          [&](const world::SequenceRecord& rec, int t) {
            return train::predict_task(tm.params, mcfg, tm.graph, base.task, rec, t)[0];
          },
          eval_ds, eval_split);
    }
    return velocity_errors(
               [&](const world::SequenceRecord& rec, int t) {
                 return train::predict_task(tm.params, mcfg, tm.graph, base.task, rec, t);
               },
               eval_ds, eval_split, mcfg.window)
        .mean;
  };

  for (double f : fractions) {
    for (bool use_pretrained : {true, false}) {
      SweepPoint point;
      point.fraction = f;
      point.pretrained = use_pretrained;
      for (std::uint64_t seed : seeds)
        point.per_seed.push_back(
            evaluate(use_pretrained ? pretrained : scratch, f, seed));
      const auto agg = make_report("sweep", "eval", point.per_seed);
      point.mean = agg.mean;
      point.stddev = agg.stddev;
      report.points.push_back(std::move(point));
    }
  }

  const SweepPoint* low = nullptr;
  const SweepPoint* full = nullptr;
  for (const auto& p : report.points) {
    if (p.pretrained && std::abs(p.fraction - 0.4) < 1e-9) low = &p;
    if (!p.pretrained && std::abs(p.fraction - 1.0) < 1e-9) full = &p;
  }
  if (low && full) {
    report.pretrained_low_fraction = median(low->per_seed);
    report.scratch_full = median(full->per_seed);
    report.comparison_available = true;
  }
  return report;
}

}  // namespace mmcp::eval
