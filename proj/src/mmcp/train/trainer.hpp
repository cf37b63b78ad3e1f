#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mmcp/core/errors.hpp"
#include "mmcp/core/rng.hpp"
#include "mmcp/graph/graph.hpp"
#include "mmcp/model/model.hpp"
#include "mmcp/objectives/objectives.hpp"
#include "mmcp/world/dataset_io.hpp"
#include "mmcp/world/world.hpp"

namespace mmcp::train {

// Pretraining recipes. The first five map directly onto graph layouts;
// RGB_ONLY is the factorized layout restricted to the rgb stream, and SCRATCH
// skips pretraining entirely so downstream tasks start from the seeded init.
enum class TrainMode { COMPASS, CPC, CMC, JOINT, DISJOINT, RGB_ONLY, SCRATCH };

TrainMode train_mode_from_string(const std::string& s);
std::string train_mode_to_string(TrainMode m);

// SCRATCH shares the full factorized layout so its untrained parameters can
// feed any downstream task.
graph::GraphSpec graph_for_mode(TrainMode mode);

struct TrainConfig {
  TrainMode mode = TrainMode::COMPASS;
  long steps = 2000;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  // Clips drawn and averaged per optimizer step. A single random clip gives
  // gradients too noisy for the predictive objectives to make progress, so
  // real runs want 32 or more; 1 is the cheap setting unit tests rely on.
  int clips_per_step = 1;
  std::string precision = "f32";  // "f64" exists for gradient checks only
  objectives::SimilarityConfig sim;
  graph::BatchParams batch;
  model::ModelConfig model;

  void validate() const;
};

struct HistoryRow {
  long step = 0;
  double temporal = 0.0;
  double spatial = 0.0;
  double spatiotemporal = 0.0;
  double total = 0.0;

  bool operator==(const HistoryRow&) const = default;
};

template <typename T>
struct Checkpoint {
  TrainConfig config;
  graph::GraphSpec graph;
  long steps_completed = 0;
  std::vector<HistoryRow> history;  // one row per completed step
  nn::ParamStore<T> params;
};

// Runs the contrastive pretraining loop: clips_per_step assembled batch sets
// per step, their losses averaged on one tape, full backward, Adam update.
// History rows store the per-step mean of each component. Deterministic and
// single threaded. A non-finite loss aborts with the step index and the
// component at fault. SCRATCH returns the seeded init untouched.
template <typename T>
Checkpoint<T> pretrain(const TrainConfig& cfg, const world::Dataset& ds);

// ---- downstream tasks --------------------------------------------------------

enum class Task { Steering, Odometry, Velocity };

Task task_from_string(const std::string& s);
std::string task_to_string(Task t);

struct TaskSpec {
  const char* name;
  const char* modality;  // input stream
  bool windowed;         // consumes a window of frames rather than one frame
  bool aggregated;       // frame codes run through the sequence aggregator
  bool bounded;          // output squashed into [0, 1]
  bool l1;               // absolute-error loss instead of squared
  int out_dim;
  int label_col;  // first label column in the record's label table
};

const TaskSpec& task_spec(Task t);

// Latest sample time with a full input window and a label. Negative means the
// record is too short for the task.
int task_t_max(Task t, int length, int window);

// Label row index: steering is labeled at the sample frame, windowed tasks at
// the last transition their window covers.
int task_label_row(Task task, int t, int window);

std::vector<double> task_label(Task task, const world::SequenceRecord& rec, int t, int window);

struct FinetuneConfig {
  Task task = Task::Steering;
  double fraction = 1.0;  // share of the training pool, in (0, 1]
  bool freeze_encoder = false;
  long steps = 400;
  int batch = 8;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  int head_hidden = 32;

  void validate() const;
};

struct FinetuneRow {
  long step = 0;
  double loss = 0.0;

  bool operator==(const FinetuneRow&) const = default;
};

// A finetuned model: the pretraining provenance plus the adapted parameters
// (pretrained tensors, a fresh two-layer head, and a fresh aggregator when the
// task needs one the pretraining graph never created).
template <typename T>
struct TaskModel {
  TrainConfig pretrain;  // config echo of the originating checkpoint
  graph::GraphSpec graph;
  FinetuneConfig config;
  std::vector<int> train_sequences;
  std::vector<FinetuneRow> history;
  nn::ParamStore<T> params;
};

// ceil(fraction * pool.size()) entries drawn without replacement,
// deterministic in seed, returned sorted.
std::vector<int> select_fraction(const std::vector<int>& pool, double fraction,
                                 std::uint64_t seed);

// Builds the task head forward pass on the caller's tape: encoder (or window
// aggregation) into a two-layer head. `head` is the parameter prefix.
template <typename T>
int task_forward(model::Forward<T>& fwd, const TaskSpec& spec, const std::string& head,
                 const world::SequenceRecord& rec, int t) {
  const int window = fwd.config().window;
  int code;
  if (!spec.windowed) {
    code = fwd.encode(spec.modality, world::frame_view(rec, spec.modality, t));
  } else if (spec.aggregated) {
    std::vector<int> frames;
    frames.reserve(window);
    for (int u = t; u < t + window; ++u)
      frames.push_back(fwd.encode(spec.modality, world::frame_view(rec, spec.modality, u)));
    code = fwd.aggregate(frames);
  } else {
    code = fwd.encode(spec.modality, world::window_view(rec, spec.modality, t, window));
  }
  auto& tape = fwd.tape();
  auto& bind = fwd.binding();
  const int hidden = tape.tanh_(tape.add(tape.matmul(bind.use(head + "/fc0/W"), code),
                                         bind.use(head + "/fc0/b")));
  int y = tape.add(tape.matmul(bind.use(head + "/fc1/W"), hidden), bind.use(head + "/fc1/b"));
  if (spec.bounded) y = tape.sigmoid_(y);
  return y;
}

// Adapts a checkpoint to one task on the given pool of training sequences.
// When freeze_encoder is set only head tensors move; everything else stays
// bit-identical.
template <typename T>
TaskModel<T> finetune(const Checkpoint<T>& ckpt, const world::Dataset& ds,
                      const std::vector<int>& train_pool, const FinetuneConfig& fcfg);

// One prediction from a finetuned parameter set, values only.
template <typename T>
std::vector<double> predict_task(nn::ParamStore<T>& params, const model::ModelConfig& mcfg,
                                 const graph::GraphSpec& g, Task task,
                                 const world::SequenceRecord& rec, int t) {
  const TaskSpec& spec = task_spec(task);
  if (t < 0 || t > task_t_max(task, rec.length, mcfg.window))
    throw OutOfBoundsError("predict_task: time " + std::to_string(t) +
                           " outside the valid sample range");
  nn::Tape<T> tape;
  model::Forward<T> fwd(tape, params, mcfg, g);
  const int y = task_forward(fwd, spec, "head/" + std::string(spec.name), rec, t);
  const auto& v = tape.value(y);
  std::vector<double> out(static_cast<std::size_t>(v.rows()));
  for (Eigen::Index i = 0; i < v.rows(); ++i) out[static_cast<std::size_t>(i)] = v(i, 0);
  return out;
}

// ---- implementation ----------------------------------------------------------

template <typename T>
Checkpoint<T> pretrain(const TrainConfig& cfg, const world::Dataset& ds) {
  cfg.validate();
  Checkpoint<T> ckpt;
  ckpt.config = cfg;
  ckpt.graph = graph_for_mode(cfg.mode);
  ckpt.params = model::init_params<T>(cfg.model, ckpt.graph, cfg.seed);
  if (cfg.mode == TrainMode::SCRATCH) return ckpt;

  nn::Adam<T> opt(cfg.lr);
  graph::BatchParams bp = cfg.batch;
  const int clips = cfg.clips_per_step;
  ckpt.history.reserve(static_cast<std::size_t>(cfg.steps));
  for (long step = 0; step < cfg.steps; ++step) {
    nn::Tape<T> tape;
    model::Forward<T> fwd(tape, ckpt.params, cfg.model, ckpt.graph);

    // All clips of a step share the tape so one backward pass covers the
    // averaged loss. The batch stream index keeps advancing across clips,
    // which preserves the one-clip schedule when clips_per_step is 1.
    double mean_temporal = 0.0, mean_spatial = 0.0, mean_st = 0.0, mean_total = 0.0;
    int total_node = -1;
    for (int clip = 0; clip < clips; ++clip) {
      bp.step = step * clips + clip;
      const auto batches = graph::assemble_batches(ds, ckpt.graph, bp, cfg.seed);
      const auto codes =
          model::build_codes(fwd, ds.sequences[batches[0].seq_index], batches);
      objectives::LossBreakdown<T> loss;
      try {
        loss = objectives::total_loss(tape, codes, ckpt.graph, batches, cfg.sim);
      } catch (const NumericError& e) {
        throw NumericError("pretrain diverged at step " + std::to_string(step) + ": " +
                           e.what());
      }
      const struct {
        const char* name;
        double value;
      } components[] = {{"temporal", loss.temporal.value},
                        {"spatial", loss.spatial.value},
                        {"spatiotemporal", loss.spatiotemporal.value}};
      for (const auto& c : components) {
        if (!std::isfinite(c.value))
          throw NumericError("pretrain diverged at step " + std::to_string(step) + ": " +
                             c.name + " loss is not finite");
      }
      mean_temporal += loss.temporal.value;
      mean_spatial += loss.spatial.value;
      mean_st += loss.spatiotemporal.value;
      mean_total += loss.total;
      total_node = total_node < 0 ? loss.total_node : tape.add(total_node, loss.total_node);
    }
    mean_temporal /= clips;
    mean_spatial /= clips;
    mean_st /= clips;
    mean_total /= clips;

    tape.backward(clips > 1 ? tape.scale(total_node, T(1) / static_cast<T>(clips))
                            : total_node);
    ckpt.params.zero_grad();
    fwd.binding().collect_grads();
    opt.step(ckpt.params);

    ckpt.history.push_back({step, mean_temporal, mean_spatial, mean_st, mean_total});
    ckpt.steps_completed = step + 1;
  }
  return ckpt;
}

template <typename T>
TaskModel<T> finetune(const Checkpoint<T>& ckpt, const world::Dataset& ds,
                      const std::vector<int>& train_pool, const FinetuneConfig& fcfg) {
  fcfg.validate();
  const TaskSpec& spec = task_spec(fcfg.task);
  const model::ModelConfig& mcfg = ckpt.config.model;
  if (fcfg.task == Task::Velocity && mcfg.window < 2)
    throw std::invalid_argument(
        "finetune: the velocity task labels the last transition inside the window, which "
        "needs window >= 2, got " +
        std::to_string(mcfg.window));

  bool have_modality = false;
  for (const auto& m : ckpt.graph.modalities) have_modality |= m.name == spec.modality;
  if (!have_modality)
    throw std::invalid_argument("finetune: task '" + std::string(spec.name) +
                                "' consumes modality '" + spec.modality +
                                "' but the checkpoint has no encoder for it");

  if (train_pool.empty())
    throw std::invalid_argument("finetune: training pool must not be empty");
  for (int idx : train_pool) {
    if (idx < 0 || idx >= static_cast<int>(ds.sequences.size()))
      throw std::invalid_argument("finetune: training pool index " + std::to_string(idx) +
                                  " outside the dataset of " +
                                  std::to_string(ds.sequences.size()) + " sequences");
    const int len = ds.sequences[static_cast<std::size_t>(idx)].length;
    if (task_t_max(fcfg.task, len, mcfg.window) < 0)
      throw std::invalid_argument("finetune: sequence " + std::to_string(idx) + " of length " +
                                  std::to_string(len) + " is too short for task '" +
                                  spec.name + "'");
  }

  model::check_params_match(ckpt.params, mcfg, ckpt.graph);

  TaskModel<T> out;
  out.pretrain = ckpt.config;
  out.graph = ckpt.graph;
  out.config = fcfg;
  out.params = ckpt.params;
  for (auto& e : out.params.entries) {
    e.grad.setZero();
    e.adam_m.setZero();
    e.adam_v.setZero();
  }
  if (spec.aggregated && !out.params.has("agg/out/W"))
    model::add_aggregator_params(out.params, mcfg, fcfg.seed);
  const std::string head = "head/" + std::string(spec.name);
  model::add_initialized(out.params, fcfg.seed, head + "/fc0/W", fcfg.head_hidden,
                         mcfg.latent_dim, mcfg.latent_dim);
  model::add_initialized(out.params, fcfg.seed, head + "/fc0/b", fcfg.head_hidden, 1,
                         mcfg.latent_dim, {fcfg.head_hidden});
  model::add_initialized(out.params, fcfg.seed, head + "/fc1/W", spec.out_dim,
                         fcfg.head_hidden, fcfg.head_hidden);
  model::add_initialized(out.params, fcfg.seed, head + "/fc1/b", spec.out_dim, 1,
                         fcfg.head_hidden, {spec.out_dim});

  out.train_sequences = select_fraction(train_pool, fcfg.fraction, fcfg.seed);

  nn::Adam<T> opt(fcfg.lr);
  const auto frozen = [&](const std::string& name) {
    return fcfg.freeze_encoder && name.rfind("head/", 0) != 0;
  };

  Rng rng(mix_seed(fcfg.seed, 0x66696e65ull));
  out.history.reserve(static_cast<std::size_t>(fcfg.steps));
  for (long step = 0; step < fcfg.steps; ++step) {
    nn::Tape<T> tape;
    model::Forward<T> fwd(tape, out.params, mcfg, out.graph);
    std::vector<int> terms;
    terms.reserve(static_cast<std::size_t>(fcfg.batch));
    for (int b = 0; b < fcfg.batch; ++b) {
      const int seq =
          out.train_sequences[static_cast<std::size_t>(rng.uniform_int(
              static_cast<int>(out.train_sequences.size())))];
      const auto& rec = ds.sequences[static_cast<std::size_t>(seq)];
      const int t = rng.uniform_int(task_t_max(fcfg.task, rec.length, mcfg.window) + 1);
      const int y = task_forward(fwd, spec, head, rec, t);

      const auto label = task_label(fcfg.task, rec, t, mcfg.window);
      nn::Mat<T> l(spec.out_dim, 1);
      for (int i = 0; i < spec.out_dim; ++i)
        l(i, 0) = static_cast<T>(label[static_cast<std::size_t>(i)]);
      const int diff = tape.sub(y, tape.constant(std::move(l)));
      terms.push_back(spec.l1 ? tape.mean_all(tape.abs_(diff))
                              : tape.mean_all(tape.hadamard(diff, diff)));
    }
    const int loss = tape.mean_all(tape.stack_scalars(terms));
    const double value = static_cast<double>(tape.value(loss)(0, 0));
    if (!std::isfinite(value))
      throw NumericError("finetune diverged at step " + std::to_string(step) +
                         ": loss is not finite");

    tape.backward(loss);
    out.params.zero_grad();
    fwd.binding().collect_grads();
    opt.step(out.params, frozen);
    out.history.push_back({step, value});
  }
  return out;
}

}  // namespace mmcp::train
