#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mmcp/core/rng.hpp"
#include "mmcp/graph/graph.hpp"
#include "mmcp/nn/params.hpp"
#include "mmcp/nn/tape.hpp"
#include "mmcp/objectives/objectives.hpp"
#include "mmcp/world/world.hpp"

namespace mmcp::model {

struct ModelConfig {
  int latent_dim = 32;   // d: width of every code
  int crop_size = 32;    // input side length, must match the dataset
  int window = 4;        // frames per temporal window
  std::vector<int> spatial_channels = {8, 16, 32};
  std::vector<int> temporal_channels = {16, 32};
  int gru_hidden = 32;
  int pred_hidden = 32;

  void validate() const;
};

// Output side length of one 3x3 stride-2 pad-1 convolution.
int conv_out_size(int size);

// Column-major index table mapping a channel-last [size, size, channels]
// input to the [9*channels, out*out] patch matrix; -1 marks padding.
std::vector<int> im2col_indices(int size, int channels);

std::uint64_t fnv1a64(const std::string& s);

// Creates every parameter the graph needs: one encoder per modality, one
// affine projection per distinct projection head, and the shared aggregation
// and prediction heads when any space is predictive. Initialization is
// per-entry seeded by name, so it does not depend on creation order.
template <typename T>
nn::ParamStore<T> init_params(const ModelConfig& cfg, const graph::GraphSpec& graph,
                              std::uint64_t seed);

// Adds one named tensor with the same name-seeded init that init_params uses,
// so tensors created later (task heads, late aggregators) match what a fresh
// init would have produced.
template <typename T>
void add_initialized(nn::ParamStore<T>& store, std::uint64_t seed, const std::string& name,
                     int rows, int cols, int fan_in, std::vector<int> logical = {}) {
  store.add(name, rows, cols, std::move(logical));
  Rng rng(mix_seed(seed, fnv1a64(name)));
  store.init_uniform(name, rng, fan_in);
}

// The bidirectional gated aggregator. Split out so finetuning can create it
// for checkpoints whose pretraining graph had no predictive space.
template <typename T>
void add_aggregator_params(nn::ParamStore<T>& store, const ModelConfig& cfg,
                           std::uint64_t seed) {
  const int d = cfg.latent_dim;
  const int h = cfg.gru_hidden;
  for (const std::string dir : {"fwd", "bwd"}) {
    for (const std::string gate : {"z", "r", "h"}) {
      const std::string base = "agg/" + dir + "/";
      add_initialized(store, seed, base + "W" + gate, h, d, d);
      add_initialized(store, seed, base + "U" + gate, h, h, h);
      add_initialized(store, seed, base + "b" + gate, h, 1, d, {h});
    }
  }
  add_initialized(store, seed, "agg/out/W", d, 2 * h, 2 * h);
  add_initialized(store, seed, "agg/out/b", d, 1, 2 * h, {d});
}

template <typename T>
void add_predictor_params(nn::ParamStore<T>& store, const ModelConfig& cfg,
                          std::uint64_t seed) {
  const int d = cfg.latent_dim;
  add_initialized(store, seed, "pred/fc0/W", cfg.pred_hidden, d, d);
  add_initialized(store, seed, "pred/fc0/b", cfg.pred_hidden, 1, d, {cfg.pred_hidden});
  add_initialized(store, seed, "pred/fc1/W", d, cfg.pred_hidden, cfg.pred_hidden);
  add_initialized(store, seed, "pred/fc1/b", d, 1, cfg.pred_hidden, {d});
}

// Verifies that the store holds every tensor the graph needs, with the
// expected shape. Extra tensors (task heads) are allowed. Throws
// std::invalid_argument naming the first offending component.
template <typename T>
void check_params_match(const nn::ParamStore<T>& store, const ModelConfig& cfg,
                        const graph::GraphSpec& graph) {
  const auto want = init_params<T>(cfg, graph, 0);
  for (const auto& e : want.entries) {
    if (!store.has(e.name))
      throw std::invalid_argument("params: missing tensor '" + e.name +
                                  "' required by the graph");
    const auto& got = store.at(e.name).value;
    if (got.rows() != e.value.rows() || got.cols() != e.value.cols())
      throw std::invalid_argument(
          "params: tensor '" + e.name + "' has shape " + std::to_string(got.rows()) + "x" +
          std::to_string(got.cols()) + " but the graph needs " +
          std::to_string(e.value.rows()) + "x" + std::to_string(e.value.cols()));
  }
}

// Binds a parameter store to a tape for one forward pass and exposes the
// model's computations as tape nodes.
template <typename T>
class Forward {
 public:
  Forward(nn::Tape<T>& tape, nn::ParamStore<T>& store, const ModelConfig& cfg,
          const graph::GraphSpec& graph)
      : tape_(tape), bind_(tape, store), cfg_(cfg), graph_(&graph) {
    cfg_.validate();
  }

  nn::Tape<T>& tape() { return tape_; }
  nn::ParamBinding<T>& binding() { return bind_; }
  const ModelConfig& config() const { return cfg_; }
  const graph::GraphSpec& graph() const { return *graph_; }

  // Spatial modalities take a channel-last frame [S,S,c]; temporal modalities
  // take a window [S,S,window*c]. Returns a d-vector code node.
  int encode(const std::string& modality, const std::vector<float>& input);

  // Space-tagged projection of a code.
  int project(const std::string& space, const std::string& member, int code);

  // Order-sensitive bidirectional gated aggregation of code nodes into one
  // d-vector context.
  int aggregate(const std::vector<int>& codes);

  int predict_step(int context);

  // Strictly recursive: out[0] = P(context), out[j] = P(out[j-1]).
  std::vector<int> predict_future(int context, int horizon);

 private:
  int affine(const std::string& weight, const std::string& bias, int x);
  int conv_stack(const std::string& prefix, const std::vector<int>& widths, int channels,
                 int node);
  int gru_direction(const std::string& prefix, const std::vector<int>& codes, bool reverse);
  const std::vector<int>& im2col(int size, int channels);

  nn::Tape<T>& tape_;
  nn::ParamBinding<T> bind_;
  ModelConfig cfg_;
  const graph::GraphSpec* graph_;
  std::map<std::pair<int, int>, std::vector<int>> im2col_cache_;
};

// Builds every code, context, and recursive prediction the batches reference,
// reusing shared encoder outputs across spaces and times.
template <typename T>
objectives::CodeSet<T> build_codes(Forward<T>& fwd, const world::SequenceRecord& rec,
                                   const std::vector<graph::ConnectionBatch>& batches);

// ---- implementation --------------------------------------------------------

template <typename T>
nn::ParamStore<T> init_params(const ModelConfig& cfg, const graph::GraphSpec& graph,
                              std::uint64_t seed) {
  cfg.validate();
  nn::ParamStore<T> store;
  const int d = cfg.latent_dim;

  auto add = [&](const std::string& name, int rows, int cols, int fan_in,
                 std::vector<int> logical = {}) {
    store.add(name, rows, cols, std::move(logical));
    Rng rng(mix_seed(seed, fnv1a64(name)));
    store.init_uniform(name, rng, fan_in);
  };

  auto add_encoder = [&](const graph::ModalitySpec& m) {
    const std::string prefix = "enc/" + m.name;
    const std::vector<int>& widths = m.temporal ? cfg.temporal_channels : cfg.spatial_channels;
    int channels = m.temporal ? m.channels * cfg.window : m.channels;
    int size = cfg.crop_size;
    for (std::size_t i = 0; i < widths.size(); ++i) {
      const std::string layer = prefix + "/conv" + std::to_string(i);
      // Patch rows are ordered (ky, kx, channel), so that is the logical
      // kernel layout too.
      add(layer + "/W", widths[i], 9 * channels, 9 * channels,
          {widths[i], 3, 3, channels});
      add(layer + "/b", widths[i], 1, 9 * channels, {widths[i]});
      channels = widths[i];
      size = conv_out_size(size);
    }
    const int flat = channels * size * size;
    add(prefix + "/fc/W", d, flat, flat);
    add(prefix + "/fc/b", d, 1, flat, {d});
  };

  for (const auto& m : graph.modalities) add_encoder(m);

  // Distinct projection heads, in first-use order across spaces.
  std::vector<std::string> prefixes;
  for (const auto& space : graph.spaces) {
    for (const auto& [member, prefix] : space.projection) {
      (void)member;
      if (std::find(prefixes.begin(), prefixes.end(), prefix) == prefixes.end())
        prefixes.push_back(prefix);
    }
  }
  for (const auto& prefix : prefixes) {
    add(prefix + "/W", d, d, d);
    add(prefix + "/b", d, 1, d, {d});
  }

  bool any_predictive = false;
  for (const auto& space : graph.spaces) any_predictive = any_predictive || space.predictive;
  if (any_predictive) {
    add_aggregator_params(store, cfg, seed);
    add_predictor_params(store, cfg, seed);
  }
  return store;
}

template <typename T>
int Forward<T>::affine(const std::string& weight, const std::string& bias, int x) {
  return tape_.add(tape_.matmul(bind_.use(weight), x), bind_.use(bias));
}

template <typename T>
const std::vector<int>& Forward<T>::im2col(int size, int channels) {
  const auto key = std::make_pair(size, channels);
  auto it = im2col_cache_.find(key);
  if (it == im2col_cache_.end())
    it = im2col_cache_.emplace(key, im2col_indices(size, channels)).first;
  return it->second;
}

template <typename T>
int Forward<T>::conv_stack(const std::string& prefix, const std::vector<int>& widths,
                           int channels, int node) {
  int size = cfg_.crop_size;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    const std::vector<int>& idx = im2col(size, channels);
    const int out = conv_out_size(size);
    const int col = tape_.gather(node, idx, 9 * channels, out * out);
    const std::string layer = prefix + "/conv" + std::to_string(i);
    const int z = tape_.add_col_broadcast(tape_.matmul(bind_.use(layer + "/W"), col),
                                          bind_.use(layer + "/b"));
    node = tape_.tanh_(z);
    channels = widths[i];
    size = out;
  }
  // The column-major flattening of [channels, pixels] is channel-last pixel
  // order, matching the encoder input layout.
  const int flat = tape_.reshape(node, channels * size * size, 1);
  return affine(prefix + "/fc/W", prefix + "/fc/b", flat);
}

template <typename T>
int Forward<T>::encode(const std::string& modality, const std::vector<float>& input) {
  const graph::ModalitySpec& spec = graph_->modality(modality);
  const int S = cfg_.crop_size;
  const int channels = spec.temporal ? spec.channels * cfg_.window : spec.channels;
  const std::size_t want = static_cast<std::size_t>(S) * S * channels;
  if (input.size() != want)
    throw std::invalid_argument("encode: modality '" + modality + "' expects " +
                                std::to_string(want) + " values, got " +
                                std::to_string(input.size()));

  typename nn::Tape<T>::Mat m(want, 1);
  for (std::size_t i = 0; i < want; ++i) m(static_cast<Eigen::Index>(i), 0) = static_cast<T>(input[i]);
  const int node = tape_.constant(std::move(m));
  return conv_stack("enc/" + modality,
                    spec.temporal ? cfg_.temporal_channels : cfg_.spatial_channels, channels,
                    node);
}

template <typename T>
int Forward<T>::project(const std::string& space, const std::string& member, int code) {
  const graph::LatentSpace* sp = graph_->find_space(space);
  if (!sp) throw std::invalid_argument("project: unknown space '" + space + "'");
  const auto it = sp->projection.find(member);
  if (it == sp->projection.end())
    throw std::invalid_argument("project: modality '" + member + "' is not a member of space '" +
                                space + "'");
  return affine(it->second + "/W", it->second + "/b", code);
}

template <typename T>
int Forward<T>::gru_direction(const std::string& prefix, const std::vector<int>& codes,
                              bool reverse) {
  const int h_dim = cfg_.gru_hidden;
  int h = tape_.constant(nn::Tape<T>::Mat::Zero(h_dim, 1));
  const int ones = tape_.constant(nn::Tape<T>::Mat::Ones(h_dim, 1));
  for (std::size_t step = 0; step < codes.size(); ++step) {
    const int x = codes[reverse ? codes.size() - 1 - step : step];
    auto gate = [&](const std::string& g, int state) {
      return tape_.add(tape_.add(tape_.matmul(bind_.use(prefix + "/W" + g), x),
                                 tape_.matmul(bind_.use(prefix + "/U" + g), state)),
                       bind_.use(prefix + "/b" + g));
    };
    const int z = tape_.sigmoid_(gate("z", h));
    const int r = tape_.sigmoid_(gate("r", h));
    const int rh = tape_.hadamard(r, h);
    const int cand = tape_.tanh_(gate("h", rh));
    h = tape_.add(tape_.hadamard(tape_.sub(ones, z), h), tape_.hadamard(z, cand));
  }
  return h;
}

template <typename T>
int Forward<T>::aggregate(const std::vector<int>& codes) {
  if (codes.empty()) throw std::invalid_argument("aggregate: need at least one code");
  const int fwd = gru_direction("agg/fwd", codes, false);
  const int bwd = gru_direction("agg/bwd", codes, true);
  return affine("agg/out/W", "agg/out/b", tape_.concat_rows(fwd, bwd));
}

template <typename T>
int Forward<T>::predict_step(int context) {
  return affine("pred/fc1/W", "pred/fc1/b",
                tape_.tanh_(affine("pred/fc0/W", "pred/fc0/b", context)));
}

template <typename T>
std::vector<int> Forward<T>::predict_future(int context, int horizon) {
  if (horizon < 1) throw std::invalid_argument("predict_future: horizon must be >= 1");
  std::vector<int> out;
  out.reserve(horizon);
  int cur = context;
  for (int j = 0; j < horizon; ++j) {
    cur = predict_step(cur);
    out.push_back(cur);
  }
  return out;
}

template <typename T>
objectives::CodeSet<T> build_codes(Forward<T>& fwd, const world::SequenceRecord& rec,
                                   const std::vector<graph::ConnectionBatch>& batches) {
  objectives::CodeSet<T> set;
  // Raw encoder outputs are shared across spaces and terms; keys are
  // (modality, time).
  std::map<std::pair<std::string, int>, int> frame_cache;
  std::map<std::pair<std::string, int>, int> window_cache;
  std::map<std::pair<std::string, int>, int> agg_cache;

  auto frame_code = [&](const std::string& mod, int t) {
    auto it = frame_cache.find({mod, t});
    if (it == frame_cache.end())
      it = frame_cache.emplace(std::make_pair(mod, t),
                               fwd.encode(mod, world::frame_view(rec, mod, t)))
               .first;
    return it->second;
  };

  // The raw (pre-projection) code of a space member at a time: temporal
  // modalities encode a window, spatial modalities encode one frame for
  // instance spaces and an aggregated window of frame codes for predictive
  // spaces.
  auto member_code = [&](const std::string& mod, int t, int window, bool predictive) {
    if (fwd.graph().modality(mod).temporal) {
      auto it = window_cache.find({mod, t});
      if (it == window_cache.end())
        it = window_cache.emplace(std::make_pair(mod, t),
                                  fwd.encode(mod, world::window_view(rec, mod, t, window)))
                 .first;
      return it->second;
    }
    if (!predictive) return frame_code(mod, t);
    auto it = agg_cache.find({mod, t});
    if (it == agg_cache.end()) {
      std::vector<int> codes;
      codes.reserve(window);
      for (int u = t; u < t + window; ++u) codes.push_back(frame_code(mod, u));
      it = agg_cache.emplace(std::make_pair(mod, t), fwd.aggregate(codes)).first;
    }
    return it->second;
  };

  for (const auto& batch : batches) {
    objectives::SpaceCodes<T>& sc = set[batch.space];
    const bool predictive = batch.type != graph::ConnectionType::Spatial;

    auto space_code = [&](const std::string& mod, int t) {
      auto it = sc.codes.find({mod, t});
      if (it != sc.codes.end()) return it->second;
      const int node =
          fwd.project(batch.space, mod, member_code(mod, t, batch.window, predictive));
      sc.codes.emplace(std::make_pair(mod, t), node);
      return node;
    };

    for (const auto& term : batch.terms) {
      if (term.pred_step > 0) {
        if (!sc.contexts.count(term.anchor_modality)) {
          const int ctx = fwd.project(
              batch.space, term.anchor_modality,
              member_code(term.anchor_modality, batch.t0, batch.window, predictive));
          sc.contexts[term.anchor_modality] = ctx;
          const std::vector<int> preds = fwd.predict_future(ctx, batch.horizon);
          for (int j = 1; j <= batch.horizon; ++j)
            sc.predictions[{term.anchor_modality, j}] = preds[j - 1];
        }
      } else {
        space_code(term.anchor_modality, term.anchor_time);
      }
      space_code(term.target_modality, term.target_time);
      for (int t : term.negative_times) space_code(term.target_modality, t);
    }
  }
  return set;
}

}  // namespace mmcp::model
