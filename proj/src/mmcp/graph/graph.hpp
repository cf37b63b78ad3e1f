#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "mmcp/world/world.hpp"

namespace mmcp::graph {

// Pretraining graph layouts. COMPASS factorizes the latents into a state
// space (per-frame, instance contrastive) and a motion space (windowed,
// predictive contrastive) with spatial modalities entering the motion space
// through sequence aggregation. The baselines rearrange the same modalities:
// JOINT throws every modality into one instance-level space, DISJOINT builds
// one space per modality pair, CPC keeps only the predictive edges, CMC only
// the instance edges.
enum class Mode { COMPASS, JOINT, DISJOINT, CPC, CMC };

Mode mode_from_string(const std::string& s);
std::string mode_to_string(Mode m);

struct ModalitySpec {
  std::string name;
  bool temporal = false;  // temporal modalities are encoded as windows
  int channels = 1;
};

enum class ConnectionType { Spatial, Temporal, SpatioTemporal };

std::string connection_type_to_string(ConnectionType t);

// One directed edge: a source modality feeding a latent space. Spatial edges
// carry per-frame codes, temporal edges carry window codes, spatio-temporal
// edges carry aggregated window-of-frame codes.
struct Edge {
  std::string source;
  std::string space;
  ConnectionType type;

  bool operator==(const Edge&) const = default;
};

// A latent space and the modalities whose codes live in it. Predictive
// spaces host recursive future prediction; instance spaces host co-occurrence
// discrimination. `projection` names the projection-head parameter prefix
// each member uses; shared prefixes mean shared weights.
struct LatentSpace {
  std::string id;
  std::vector<std::string> members;
  bool predictive = false;
  std::map<std::string, std::string> projection;
};

struct GraphSpec {
  Mode mode = Mode::COMPASS;
  std::vector<ModalitySpec> modalities;
  std::vector<LatentSpace> spaces;
  std::vector<Edge> edges;

  int n_spatial() const;
  int n_temporal() const;
  const ModalitySpec& modality(const std::string& name) const;
  const LatentSpace* find_space(const std::string& id) const;
};

// Modality names must be unique and non-empty. Space ids are deterministic:
// "state", "motion", "joint", and "pair:a+b" with members sorted.
GraphSpec build_graph(Mode mode, const std::vector<ModalitySpec>& modalities);

nlohmann::json graph_to_json(const GraphSpec& g);

// The modalities the dataset provides, in the roles the pipeline uses them:
// rgb and depth as spatial streams, flow as a temporal stream.
std::vector<ModalitySpec> default_modalities();
std::vector<ModalitySpec> rgb_only_modalities();

// Contrastive batch assembly. A batch covers one connection type in one
// space, with a single anchor modality chosen round-robin by step.
struct BatchParams {
  int span = 8;       // candidate time offsets per batch (B)
  int horizon = 3;    // recursive prediction steps (k)
  int negatives = 7;  // negatives per predictive term (K)
  int window = 4;     // temporal window length (w)
  long step = 0;      // round-robin position for the anchor policy

  void validate() const;
  // Frames one batch touches: instance terms need [t0, t0+span), predictive
  // terms need windows starting up to t0+window+span-1.
  int frames_needed(bool predictive) const;
};

struct ContrastTerm {
  std::string anchor_modality;
  int anchor_time = 0;  // frame index of the anchor (t0 for predictive terms)
  int pred_step = 0;    // j in 1..k for predictive terms, 0 for instance terms
  std::string target_modality;
  int target_time = 0;
  std::vector<int> negative_times;  // same modality as the target, distinct times
};

struct ConnectionBatch {
  ConnectionType type = ConnectionType::Spatial;
  std::string space;
  std::string anchor_modality;
  int seq_index = 0;
  int t0 = 0;
  int span = 0;
  int horizon = 0;
  int window = 0;
  std::vector<ContrastTerm> terms;
};

// Draws K distinct times from span_times excluding anchor_time. Deterministic
// in seed; throws std::invalid_argument when fewer than K candidates exist.
std::vector<int> sample_negatives(const std::vector<int>& span_times, int anchor_time, int K,
                                  std::uint64_t seed);

// One ConnectionBatch per connection type present in the graph, sharing one
// (sequence, t0) draw. Sequences must be long enough for the predictive
// window span; throws std::invalid_argument otherwise.
std::vector<ConnectionBatch> assemble_batches(const world::Dataset& ds, const GraphSpec& graph,
                                              const BatchParams& params, std::uint64_t seed);

}  // namespace mmcp::graph
