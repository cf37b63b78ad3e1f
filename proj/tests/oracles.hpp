#pragma once

// Independent reference implementations the tests check the library against.
// Everything here is written as direct loops over plain scalars, not through
// the library's numeric paths, so agreement is meaningful.

#include <cmath>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mmcp/graph/graph.hpp"
#include "mmcp/nn/tape.hpp"

namespace oracle {

inline double wrap_angle(double a) {
  const double pi = 3.14159265358979323846;
  a = std::fmod(a + pi, 2.0 * pi);
  if (a <= 0.0) a += 2.0 * pi;
  return a - pi;
}

// ---- similarity / InfoNCE ---------------------------------------------------

inline double ref_dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline std::vector<double> ref_normalize(const std::vector<double>& v) {
  double q = 1e-24;  // the library's softened norm, kept identical here
  for (double x : v) q += x * x;
  const double inv = 1.0 / std::sqrt(q);
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] * inv;
  return out;
}

inline double ref_sim(const std::vector<double>& a, const std::vector<double>& b,
                      bool normalize) {
  return normalize ? ref_dot(ref_normalize(a), ref_normalize(b)) : ref_dot(a, b);
}

inline double ref_lse(const std::vector<double>& xs) {
  double m = xs[0];
  for (double x : xs) m = std::max(m, x);
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

inline double ref_info_nce(const std::vector<double>& anchor,
                           const std::vector<double>& positive,
                           const std::vector<std::vector<double>>& negatives, bool normalize,
                           double tau) {
  std::vector<double> scores{ref_sim(anchor, positive, normalize) / tau};
  for (const auto& n : negatives) scores.push_back(ref_sim(anchor, n, normalize) / tau);
  return ref_lse(scores) - scores[0];
}

// Plain-value code tables mirroring objectives::SpaceCodes.
struct CodeValues {
  std::map<std::pair<std::string, int>, std::vector<double>> codes;
  std::map<std::pair<std::string, int>, std::vector<double>> predictions;
};

inline double ref_component_loss(const std::map<std::string, CodeValues>& values,
                                 const std::vector<mmcp::graph::ConnectionBatch>& batches,
                                 mmcp::graph::ConnectionType type, bool normalize, double tau) {
  double sum = 0.0;
  int count = 0;
  for (const auto& batch : batches) {
    if (batch.type != type) continue;
    const CodeValues& cv = values.at(batch.space);
    for (const auto& term : batch.terms) {
      const std::vector<double>& anchor =
          term.pred_step > 0
              ? cv.predictions.at({term.anchor_modality, term.pred_step})
              : cv.codes.at({term.anchor_modality, term.anchor_time});
      const std::vector<double>& pos = cv.codes.at({term.target_modality, term.target_time});
      std::vector<std::vector<double>> negs;
      for (int t : term.negative_times) negs.push_back(cv.codes.at({term.target_modality, t}));
      sum += ref_info_nce(anchor, pos, negs, normalize, tau);
      ++count;
    }
  }
  return count == 0 ? 0.0 : sum / count;
}

// ---- 2D rigid geometry ------------------------------------------------------

using Matd = Eigen::Matrix3d;

inline Matd se2(double x, double y, double theta) {
  Matd m = Matd::Identity();
  m(0, 0) = std::cos(theta);
  m(0, 1) = -std::sin(theta);
  m(1, 0) = std::sin(theta);
  m(1, 1) = std::cos(theta);
  m(0, 2) = x;
  m(1, 2) = y;
  return m;
}

inline void se2_decompose(const Matd& m, double& x, double& y, double& theta) {
  x = m(0, 2);
  y = m(1, 2);
  theta = std::atan2(m(1, 0), m(0, 0));
}

// ---- gradient checking ------------------------------------------------------

// Rebuilds a scalar function on a fresh tape per evaluation. The builder gets
// the current leaf values and must return the root node id, pushing the leaf
// ids in the order of `leaves`.
using TapeBuilder = std::function<int(mmcp::nn::Tape<double>&,
                                      const std::vector<mmcp::nn::Mat<double>>&,
                                      std::vector<int>&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  int checked = 0;
  std::string worst;  // leaf/element of the worst deviation
};

inline GradCheckResult gradcheck(const TapeBuilder& build,
                                 std::vector<mmcp::nn::Mat<double>> leaves, double h = 1e-5,
                                 int max_per_leaf = 0) {
  using mmcp::nn::Tape;
  GradCheckResult result;

  Tape<double> tape;
  std::vector<int> ids;
  const int root = build(tape, leaves, ids);
  if (ids.size() != leaves.size())
    throw std::invalid_argument("gradcheck: builder registered a different leaf count");
  tape.backward(root);
  std::vector<mmcp::nn::Mat<double>> analytic;
  for (int id : ids)
    analytic.push_back(tape.has_grad(id)
                           ? tape.grad(id)
                           : mmcp::nn::Mat<double>::Zero(tape.value(id).rows(),
                                                         tape.value(id).cols()));

  auto eval = [&](const std::vector<mmcp::nn::Mat<double>>& vals) {
    Tape<double> t;
    std::vector<int> unused;
    const int r = build(t, vals, unused);
    return t.value(r)(0, 0);
  };

  for (std::size_t k = 0; k < leaves.size(); ++k) {
    const Eigen::Index n = leaves[k].size();
    // Probe every element unless capped; with a cap, stride evenly so every
    // region of the parameter is still represented.
    const Eigen::Index step =
        (max_per_leaf > 0 && n > max_per_leaf) ? (n + max_per_leaf - 1) / max_per_leaf : 1;
    for (Eigen::Index i = 0; i < n; i += step) {
      const double orig = leaves[k].data()[i];
      leaves[k].data()[i] = orig + h;
      const double up = eval(leaves);
      leaves[k].data()[i] = orig - h;
      const double down = eval(leaves);
      leaves[k].data()[i] = orig;
      const double fd = (up - down) / (2.0 * h);
      const double an = analytic[k].data()[i];
      const double rel = std::abs(fd - an) / std::max({1e-6, std::abs(fd), std::abs(an)});
      ++result.checked;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst = "leaf " + std::to_string(k) + " elem " + std::to_string(i) +
                       " analytic " + std::to_string(an) + " fd " + std::to_string(fd);
      }
    }
  }
  return result;
}

}  // namespace oracle
