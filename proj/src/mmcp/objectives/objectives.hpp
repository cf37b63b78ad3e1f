#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mmcp/core/errors.hpp"
#include "mmcp/graph/graph.hpp"
#include "mmcp/nn/tape.hpp"

namespace mmcp::objectives {

struct SimilarityConfig {
  bool normalize = true;      // cosine similarity when true, raw dot otherwise
  double temperature = 0.1;

  void validate() const {
    if (!(temperature > 0.0) || !std::isfinite(temperature))
      throw std::invalid_argument("SimilarityConfig: temperature must be positive and finite");
  }
};

// Every tape node a batch's terms reference, for one latent space. Built by
// the model for training; tests may fill these with arbitrary leaves.
template <typename T>
struct SpaceCodes {
  std::map<std::pair<std::string, int>, int> codes;        // (member, time) -> node
  std::map<std::pair<std::string, int>, int> predictions;  // (anchor, step) -> node
  std::map<std::string, int> contexts;                     // anchor -> context at t0
};

template <typename T>
using CodeSet = std::map<std::string, SpaceCodes<T>>;  // keyed by space id

struct TermRow {
  std::string anchor_modality;
  std::string target_modality;
  int anchor_time = 0;
  int pred_step = 0;
  int target_time = 0;
  double positive_score = 0.0;  // similarity before temperature scaling
  double log_partition = 0.0;
  double loss = 0.0;
};

template <typename T>
struct ComponentResult {
  int node = -1;  // scalar tape node; a zero constant when inactive
  double value = 0.0;
  int term_count = 0;
  bool active = false;
  std::vector<TermRow> table;
};

template <typename T>
struct LossBreakdown {
  ComponentResult<T> temporal;        // L_m
  ComponentResult<T> spatial;         // L_s
  ComponentResult<T> spatiotemporal;  // L_sm
  int total_node = -1;
  double total = 0.0;
};

namespace detail {

template <typename T>
void check_finite(nn::Tape<T>& tape, int node, const char* what) {
  const auto& v = tape.value(node);
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!std::isfinite(static_cast<double>(v.data()[i])))
      throw NumericError(std::string("info_nce_term: non-finite ") + what + " input");
  }
}

}  // namespace detail

// One softmax cross-entropy term: -log exp(s+/tau) / (exp(s+/tau) + sum_i
// exp(s-_i/tau)), computed through a max-shifted log-sum-exp so extreme
// scores cannot overflow. Returns a scalar node, always >= 0.
template <typename T>
int info_nce_term(nn::Tape<T>& tape, int anchor, int positive,
                  const std::vector<int>& negatives, const SimilarityConfig& simcfg,
                  TermRow* row = nullptr) {
  simcfg.validate();
  if (negatives.empty())
    throw std::invalid_argument("info_nce_term: at least one negative is required");
  detail::check_finite(tape, anchor, "anchor");
  detail::check_finite(tape, positive, "positive");
  for (int n : negatives) detail::check_finite(tape, n, "negative");

  const int a = simcfg.normalize ? tape.l2_normalize(anchor) : anchor;
  auto score = [&](int other) {
    const int o = simcfg.normalize ? tape.l2_normalize(other) : other;
    return tape.dot(a, o);
  };

  const int pos = score(positive);
  std::vector<int> scores{pos};
  scores.reserve(negatives.size() + 1);
  for (int n : negatives) scores.push_back(score(n));

  const T inv_tau = static_cast<T>(1.0 / simcfg.temperature);
  const int stacked = tape.scale(tape.stack_scalars(scores), inv_tau);
  const int lse = tape.logsumexp(stacked);
  const int loss = tape.sub(lse, tape.scale(pos, inv_tau));

  if (row) {
    row->positive_score = static_cast<double>(tape.value(pos)(0, 0));
    row->log_partition = static_cast<double>(tape.value(lse)(0, 0));
    row->loss = static_cast<double>(tape.value(loss)(0, 0));
  }
  return loss;
}

namespace detail {

template <typename T>
int lookup_code(const SpaceCodes<T>& sc, const std::string& member, int time,
                const std::string& space) {
  const auto it = sc.codes.find({member, time});
  if (it == sc.codes.end())
    throw std::invalid_argument("loss: missing code for modality '" + member + "' at time " +
                                std::to_string(time) + " in space '" + space + "'");
  return it->second;
}

}  // namespace detail

// Mean InfoNCE over the terms of every batch matching `type`. Instance terms
// anchor on true codes; predictive terms anchor on the recursive predictions.
template <typename T>
ComponentResult<T> component_loss(nn::Tape<T>& tape, const CodeSet<T>& codes,
                                  const std::vector<graph::ConnectionBatch>& batches,
                                  graph::ConnectionType type, const SimilarityConfig& simcfg) {
  ComponentResult<T> result;
  int sum = -1;
  for (const auto& batch : batches) {
    if (batch.type != type) continue;
    const auto space_it = codes.find(batch.space);
    if (space_it == codes.end())
      throw std::invalid_argument("loss: no codes for space '" + batch.space + "'");
    const SpaceCodes<T>& sc = space_it->second;

    for (const auto& term : batch.terms) {
      int anchor = -1;
      if (term.pred_step > 0) {
        const auto it = sc.predictions.find({term.anchor_modality, term.pred_step});
        if (it == sc.predictions.end())
          throw std::invalid_argument("loss: missing prediction step " +
                                      std::to_string(term.pred_step) + " for anchor '" +
                                      term.anchor_modality + "'");
        anchor = it->second;
      } else {
        anchor = detail::lookup_code(sc, term.anchor_modality, term.anchor_time, batch.space);
      }
      const int positive =
          detail::lookup_code(sc, term.target_modality, term.target_time, batch.space);
      std::vector<int> negatives;
      negatives.reserve(term.negative_times.size());
      for (int t : term.negative_times)
        negatives.push_back(detail::lookup_code(sc, term.target_modality, t, batch.space));

      TermRow row;
      row.anchor_modality = term.anchor_modality;
      row.target_modality = term.target_modality;
      row.anchor_time = term.anchor_time;
      row.pred_step = term.pred_step;
      row.target_time = term.target_time;
      const int loss = info_nce_term(tape, anchor, positive, negatives, simcfg, &row);
      result.table.push_back(std::move(row));
      sum = sum < 0 ? loss : tape.add(sum, loss);
      ++result.term_count;
    }
  }

  if (result.term_count == 0) {
    result.node = tape.scalar(T(0));
    result.active = false;
  } else {
    result.node = tape.scale(sum, T(1) / static_cast<T>(result.term_count));
    result.active = true;
  }
  result.value = static_cast<double>(tape.value(result.node)(0, 0));
  return result;
}

template <typename T>
ComponentResult<T> loss_temporal(nn::Tape<T>& tape, const CodeSet<T>& codes,
                                 const std::vector<graph::ConnectionBatch>& batches,
                                 const SimilarityConfig& simcfg) {
  return component_loss(tape, codes, batches, graph::ConnectionType::Temporal, simcfg);
}

template <typename T>
ComponentResult<T> loss_spatial(nn::Tape<T>& tape, const CodeSet<T>& codes,
                                const std::vector<graph::ConnectionBatch>& batches,
                                const SimilarityConfig& simcfg) {
  return component_loss(tape, codes, batches, graph::ConnectionType::Spatial, simcfg);
}

template <typename T>
ComponentResult<T> loss_spatiotemporal(nn::Tape<T>& tape, const CodeSet<T>& codes,
                                       const std::vector<graph::ConnectionBatch>& batches,
                                       const SimilarityConfig& simcfg) {
  return component_loss(tape, codes, batches, graph::ConnectionType::SpatioTemporal, simcfg);
}

// Every connection class the graph declares must be covered by a batch;
// classes the graph does not have are simply inactive.
inline void check_batch_coverage(const graph::GraphSpec& g,
                                 const std::vector<graph::ConnectionBatch>& batches) {
  for (graph::ConnectionType type :
       {graph::ConnectionType::Spatial, graph::ConnectionType::Temporal,
        graph::ConnectionType::SpatioTemporal}) {
    bool in_graph = false;
    for (const auto& e : g.edges) in_graph = in_graph || e.type == type;
    // A single-member instance space has no cross-modal pair, so its spatial
    // edges cannot form a batch; only multi-member spaces demand coverage.
    if (type == graph::ConnectionType::Spatial) {
      bool pairable = false;
      for (const auto& s : g.spaces)
        pairable = pairable || (!s.predictive && s.members.size() >= 2);
      in_graph = in_graph && pairable;
    }
    if (!in_graph) continue;
    bool covered = false;
    for (const auto& b : batches) covered = covered || b.type == type;
    if (!covered)
      throw std::invalid_argument("total_loss: graph has " +
                                  graph::connection_type_to_string(type) +
                                  " connections but no batch of that class was supplied");
  }
}

// total = L_m + L_s + L_sm in that accumulation order.
template <typename T>
LossBreakdown<T> total_loss(nn::Tape<T>& tape, const CodeSet<T>& codes,
                            const graph::GraphSpec& g,
                            const std::vector<graph::ConnectionBatch>& batches,
                            const SimilarityConfig& simcfg) {
  check_batch_coverage(g, batches);
  LossBreakdown<T> out;
  out.temporal = loss_temporal(tape, codes, batches, simcfg);
  out.spatial = loss_spatial(tape, codes, batches, simcfg);
  out.spatiotemporal = loss_spatiotemporal(tape, codes, batches, simcfg);
  out.total_node =
      tape.add(tape.add(out.temporal.node, out.spatial.node), out.spatiotemporal.node);
  out.total = static_cast<double>(tape.value(out.total_node)(0, 0));
  return out;
}

}  // namespace mmcp::objectives
