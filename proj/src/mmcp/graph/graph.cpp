#include "mmcp/graph/graph.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

#include "mmcp/core/rng.hpp"

namespace mmcp::graph {

Mode mode_from_string(const std::string& s) {
  if (s == "compass") return Mode::COMPASS;
  if (s == "joint") return Mode::JOINT;
  if (s == "disjoint") return Mode::DISJOINT;
  if (s == "cpc") return Mode::CPC;
  if (s == "cmc") return Mode::CMC;
  throw std::invalid_argument("unknown graph mode '" + s + "'");
}

std::string mode_to_string(Mode m) {
  switch (m) {
    case Mode::COMPASS: return "compass";
    case Mode::JOINT: return "joint";
    case Mode::DISJOINT: return "disjoint";
    case Mode::CPC: return "cpc";
    case Mode::CMC: return "cmc";
  }
  throw std::invalid_argument("unknown graph mode");
}

std::string connection_type_to_string(ConnectionType t) {
  switch (t) {
    case ConnectionType::Spatial: return "spatial";
    case ConnectionType::Temporal: return "temporal";
    case ConnectionType::SpatioTemporal: return "spatio-temporal";
  }
  throw std::invalid_argument("unknown connection type");
}

int GraphSpec::n_spatial() const {
  int n = 0;
  for (const auto& m : modalities) n += m.temporal ? 0 : 1;
  return n;
}

int GraphSpec::n_temporal() const {
  int n = 0;
  for (const auto& m : modalities) n += m.temporal ? 1 : 0;
  return n;
}

const ModalitySpec& GraphSpec::modality(const std::string& name) const {
  for (const auto& m : modalities)
    if (m.name == name) return m;
  throw std::invalid_argument("graph has no modality '" + name + "'");
}

const LatentSpace* GraphSpec::find_space(const std::string& id) const {
  for (const auto& s : spaces)
    if (s.id == id) return &s;
  return nullptr;
}

namespace {

void validate_modalities(const std::vector<ModalitySpec>& mods) {
  std::set<std::string> seen;
  for (const auto& m : mods) {
    if (m.name.empty()) throw std::invalid_argument("modality name must not be empty");
    if (m.channels < 1)
      throw std::invalid_argument("modality '" + m.name + "' must have >= 1 channel");
    if (!seen.insert(m.name).second)
      throw std::invalid_argument("duplicate modality name '" + m.name + "'");
  }
}

std::string pair_space_id(const std::string& a, const std::string& b) {
  return a < b ? "pair:" + a + "+" + b : "pair:" + b + "+" + a;
}

}  // namespace

GraphSpec build_graph(Mode mode, const std::vector<ModalitySpec>& modalities) {
  validate_modalities(modalities);
  if (modalities.empty()) throw std::invalid_argument("build_graph: need at least one modality");
  GraphSpec g;
  g.mode = mode;
  g.modalities = modalities;

  std::vector<std::string> spatial, temporal, all;
  for (const auto& m : modalities) {
    (m.temporal ? temporal : spatial).push_back(m.name);
    all.push_back(m.name);
  }
  if (mode == Mode::COMPASS && spatial.empty())
    throw std::invalid_argument(
        "build_graph: compass mode needs at least one spatial modality to anchor the state "
        "space and sequence aggregation");

  switch (mode) {
    case Mode::COMPASS: {
      // Spatial modalities project into the state space per frame and into
      // the motion space through window aggregation; temporal modalities
      // project into the motion space directly.
      if (!spatial.empty()) {
        LatentSpace state{"state", spatial, false, {}};
        for (const auto& m : spatial) state.projection[m] = "proj/state";
        g.spaces.push_back(std::move(state));
        for (const auto& m : spatial) g.edges.push_back({m, "state", ConnectionType::Spatial});
      }
      std::vector<std::string> motion_members = temporal;
      motion_members.insert(motion_members.end(), spatial.begin(), spatial.end());
      if (!motion_members.empty()) {
        LatentSpace motion{"motion", motion_members, true, {}};
        for (const auto& m : motion_members) motion.projection[m] = "proj/motion";
        g.spaces.push_back(std::move(motion));
        for (const auto& m : temporal) g.edges.push_back({m, "motion", ConnectionType::Temporal});
        for (const auto& m : spatial)
          g.edges.push_back({m, "motion", ConnectionType::SpatioTemporal});
      }
      break;
    }
    case Mode::JOINT: {
      // Every modality through one shared projection into one space.
      if (!all.empty()) {
        LatentSpace joint{"joint", all, false, {}};
        for (const auto& m : all) joint.projection[m] = "proj/joint";
        g.spaces.push_back(std::move(joint));
        for (const auto& m : all) g.edges.push_back({m, "joint", ConnectionType::Spatial});
      }
      break;
    }
    case Mode::DISJOINT: {
      // One space per modality pair, each member with its own projection.
      for (std::size_t i = 0; i < all.size(); ++i) {
        for (std::size_t j = i + 1; j < all.size(); ++j) {
          const std::string id = pair_space_id(all[i], all[j]);
          LatentSpace space{id, {all[i], all[j]}, false, {}};
          space.projection[all[i]] = "proj/" + id + "/" + all[i];
          space.projection[all[j]] = "proj/" + id + "/" + all[j];
          g.spaces.push_back(std::move(space));
          g.edges.push_back({all[i], id, ConnectionType::Spatial});
          g.edges.push_back({all[j], id, ConnectionType::Spatial});
        }
      }
      break;
    }
    case Mode::CPC: {
      // Future prediction within each modality independently: one
      // single-member predictive space per modality, sharing the motion
      // projection, aggregation, and prediction heads.
      for (const auto& m : modalities) {
        const std::string id = "cpc:" + m.name;
        LatentSpace space{id, {m.name}, true, {}};
        space.projection[m.name] = "proj/motion";
        g.spaces.push_back(std::move(space));
        g.edges.push_back({m.name, id,
                           m.temporal ? ConnectionType::Temporal
                                      : ConnectionType::SpatioTemporal});
      }
      break;
    }
    case Mode::CMC: {
      // Instance-level contrast over every modality pair through one shared
      // projection head.
      for (std::size_t i = 0; i < all.size(); ++i) {
        for (std::size_t j = i + 1; j < all.size(); ++j) {
          const std::string id = pair_space_id(all[i], all[j]);
          LatentSpace space{id, {all[i], all[j]}, false, {}};
          space.projection[all[i]] = "proj/cmc";
          space.projection[all[j]] = "proj/cmc";
          g.spaces.push_back(std::move(space));
          g.edges.push_back({all[i], id, ConnectionType::Spatial});
          g.edges.push_back({all[j], id, ConnectionType::Spatial});
        }
      }
      break;
    }
  }
  return g;
}

nlohmann::json graph_to_json(const GraphSpec& g) {
  nlohmann::json mods = nlohmann::json::array();
  for (const auto& m : g.modalities)
    mods.push_back({{"name", m.name}, {"temporal", m.temporal}, {"channels", m.channels}});
  nlohmann::json spaces = nlohmann::json::array();
  for (const auto& s : g.spaces)
    spaces.push_back({{"id", s.id}, {"members", s.members}, {"predictive", s.predictive}});
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& e : g.edges)
    edges.push_back({{"source", e.source},
                     {"space", e.space},
                     {"type", connection_type_to_string(e.type)}});
  return {{"mode", mode_to_string(g.mode)},
          {"modalities", mods},
          {"spaces", spaces},
          {"edges", edges}};
}

std::vector<ModalitySpec> default_modalities() {
  return {{"rgb", false, 3}, {"depth", false, 1}, {"flow", true, 2}};
}

std::vector<ModalitySpec> rgb_only_modalities() { return {{"rgb", false, 3}}; }

void BatchParams::validate() const {
  if (span < 2) throw std::invalid_argument("BatchParams: span must be >= 2");
  if (window < 1) throw std::invalid_argument("BatchParams: window must be >= 1");
  if (horizon < 1) throw std::invalid_argument("BatchParams: horizon must be >= 1");
  if (horizon > span)
    throw std::invalid_argument("BatchParams: horizon must be <= span so every prediction "
                                "target falls inside the batch span");
  if (negatives < 1) throw std::invalid_argument("BatchParams: negatives must be >= 1");
  if (negatives > span - 1)
    throw std::invalid_argument("BatchParams: negatives must be <= span-1, got " +
                                std::to_string(negatives) + " with span " +
                                std::to_string(span));
  if (step < 0) throw std::invalid_argument("BatchParams: step must be >= 0");
}

int BatchParams::frames_needed(bool predictive) const {
  return predictive ? 2 * window + span - 1 : window + span - 1;
}

std::vector<int> sample_negatives(const std::vector<int>& span_times, int anchor_time, int K,
                                  std::uint64_t seed) {
  std::vector<int> candidates;
  candidates.reserve(span_times.size());
  for (int t : span_times)
    if (t != anchor_time) candidates.push_back(t);
  if (K < 1) throw std::invalid_argument("sample_negatives: K must be >= 1");
  if (static_cast<std::size_t>(K) > candidates.size())
    throw std::invalid_argument("sample_negatives: need " + std::to_string(K) +
                                " negatives but only " + std::to_string(candidates.size()) +
                                " eligible times exist");
  if (static_cast<std::size_t>(K) < candidates.size()) {
    Rng rng(seed);
    for (int i = 0; i < K; ++i) {
      const int j = i + static_cast<int>(rng.uniform_int(candidates.size() - i));
      std::swap(candidates[i], candidates[j]);
    }
    candidates.resize(K);
  }
  std::sort(candidates.begin(), candidates.end());
  return candidates;
}

namespace {

struct AnchorSlot {
  const LatentSpace* space;
  std::string anchor;
  ConnectionType type;
};

// Eligible (space, anchor) pairs grouped by connection type, in the
// deterministic order spaces and members were declared.
std::vector<AnchorSlot> eligible_slots(const GraphSpec& graph, ConnectionType type) {
  std::vector<AnchorSlot> slots;
  for (const auto& space : graph.spaces) {
    for (const auto& member : space.members) {
      const bool temporal = graph.modality(member).temporal;
      if (space.predictive) {
        const ConnectionType t =
            temporal ? ConnectionType::Temporal : ConnectionType::SpatioTemporal;
        if (t == type) slots.push_back({&space, member, t});
      } else if (type == ConnectionType::Spatial && space.members.size() >= 2) {
        slots.push_back({&space, member, ConnectionType::Spatial});
      }
    }
  }
  return slots;
}

}  // namespace

std::vector<ConnectionBatch> assemble_batches(const world::Dataset& ds, const GraphSpec& graph,
                                              const BatchParams& params, std::uint64_t seed) {
  params.validate();
  if (ds.sequences.empty())
    throw std::invalid_argument("assemble_batches: dataset has no sequences");
  for (const auto& m : graph.modalities)
    (void)world::modality_channels(m.name);  // dataset must provide every graph modality

  const bool any_predictive =
      std::any_of(graph.spaces.begin(), graph.spaces.end(),
                  [](const LatentSpace& s) { return s.predictive; });
  const bool any_temporal = graph.n_temporal() > 0;

  // Temporal modalities have one fewer usable frame than the sequence length
  // (their stream pairs consecutive frames), so size the span off that.
  const int T = ds.config.seq_len;
  const int usable = any_temporal ? T - 1 : T;
  const int need = params.frames_needed(any_predictive || any_temporal);
  const int t0_max = usable - need;
  if (t0_max < 0)
    throw std::invalid_argument(
        "assemble_batches: sequences of length " + std::to_string(T) + " are too short; need " +
        std::to_string(need + (any_temporal ? 1 : 0)) + " frames for span " +
        std::to_string(params.span) + " and window " + std::to_string(params.window));

  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(params.step)));
  const int seq_index = static_cast<int>(rng.uniform_int(ds.sequences.size()));
  const int t0 = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(t0_max) + 1));

  std::vector<int> instance_span(params.span);
  for (int i = 0; i < params.span; ++i) instance_span[i] = t0 + i;
  std::vector<int> future_span(params.span);
  for (int i = 0; i < params.span; ++i) future_span[i] = t0 + params.window + i;

  std::vector<ConnectionBatch> batches;
  std::uint64_t term_counter = 0;
  for (ConnectionType type : {ConnectionType::Spatial, ConnectionType::Temporal,
                              ConnectionType::SpatioTemporal}) {
    const std::vector<AnchorSlot> slots = eligible_slots(graph, type);
    if (slots.empty()) continue;
    const AnchorSlot& slot = slots[params.step % slots.size()];

    ConnectionBatch batch;
    batch.type = type;
    batch.space = slot.space->id;
    batch.anchor_modality = slot.anchor;
    batch.seq_index = seq_index;
    batch.t0 = t0;
    batch.span = params.span;
    batch.horizon = params.horizon;
    batch.window = params.window;

    if (type == ConnectionType::Spatial) {
      // Instance terms: the anchor at time t against each other member at
      // the same time, with that member's codes at all other times as
      // negatives (no subsampling).
      for (int t : instance_span) {
        for (const auto& member : slot.space->members) {
          if (member == slot.anchor) continue;
          ContrastTerm term;
          term.anchor_modality = slot.anchor;
          term.anchor_time = t;
          term.pred_step = 0;
          term.target_modality = member;
          term.target_time = t;
          for (int j : instance_span)
            if (j != t) term.negative_times.push_back(j);
          batch.terms.push_back(std::move(term));
        }
      }
    } else {
      // Predictive terms: recursive predictions from the anchor context at
      // t0 against every space member's true future codes.
      for (int j = 1; j <= params.horizon; ++j) {
        const int target_time = t0 + params.window - 1 + j;
        for (const auto& member : slot.space->members) {
          ContrastTerm term;
          term.anchor_modality = slot.anchor;
          term.anchor_time = t0;
          term.pred_step = j;
          term.target_modality = member;
          term.target_time = target_time;
          term.negative_times = sample_negatives(future_span, target_time, params.negatives,
                                                 mix_seed(seed, 0x6e656761 + term_counter));
          ++term_counter;
          batch.terms.push_back(std::move(term));
        }
      }
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

}  // namespace mmcp::graph
