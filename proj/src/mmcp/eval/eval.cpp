#include "mmcp/eval/eval.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "mmcp/core/errors.hpp"
#include "mmcp/world/world.hpp"

namespace mmcp::eval {

namespace {

constexpr double kPi = 3.14159265358979323846;

bool pose_finite(const Pose2& p) {
  return std::isfinite(p.x) && std::isfinite(p.y) && std::isfinite(p.theta);
}

// Relative transform between trajectory poses i and j, in the body frame of i.
std::array<double, 3> relative(const Trajectory& traj, std::size_t i, std::size_t j) {
  const Pose2& a = traj[i];
  const Pose2& b = traj[j];
  const double c = std::cos(-a.theta);
  const double s = std::sin(-a.theta);
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  return {c * dx - s * dy, s * dx + c * dy, world::wrap_angle(b.theta - a.theta)};
}

}  // namespace

std::vector<double> default_segment_lengths() {
  return {10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0};
}

Trajectory compose_trajectory(const std::vector<std::array<double, 3>>& relposes,
                              const Pose2& origin) {
  if (relposes.empty())
    throw std::invalid_argument("compose_trajectory: no relative poses to compose");
  if (!pose_finite(origin))
    throw NumericError("compose_trajectory: non-finite origin pose");
  Trajectory traj;
  traj.reserve(relposes.size() + 1);
  traj.push_back({origin.x, origin.y, world::wrap_angle(origin.theta)});
  for (std::size_t k = 0; k < relposes.size(); ++k) {
    const auto& r = relposes[k];
    if (!std::isfinite(r[0]) || !std::isfinite(r[1]) || !std::isfinite(r[2]))
      throw NumericError("compose_trajectory: non-finite relative pose at step " +
                         std::to_string(k));
    const Pose2& p = traj.back();
    const double c = std::cos(p.theta);
    const double s = std::sin(p.theta);
    traj.push_back({p.x + c * r[0] - s * r[1], p.y + s * r[0] + c * r[1],
                    world::wrap_angle(p.theta + r[2])});
  }
  return traj;
}

std::vector<std::array<double, 3>> extract_relposes(const Trajectory& traj) {
  if (traj.size() < 2)
    throw std::invalid_argument("extract_relposes: need at least two poses");
  std::vector<std::array<double, 3>> rels;
  rels.reserve(traj.size() - 1);
  for (std::size_t i = 0; i + 1 < traj.size(); ++i) {
    if (!pose_finite(traj[i]) || !pose_finite(traj[i + 1]))
      throw NumericError("extract_relposes: non-finite pose at index " + std::to_string(i));
    rels.push_back(relative(traj, i, i + 1));
  }
  return rels;
}

DriftResult rpe_drift(const Trajectory& estimated, const Trajectory& truth,
                      const std::vector<double>& segment_lengths) {
  if (estimated.size() != truth.size())
    throw std::invalid_argument("rpe_drift: trajectories differ in length (" +
                                std::to_string(estimated.size()) + " vs " +
                                std::to_string(truth.size()) + ")");
  if (truth.size() < 2)
    throw std::invalid_argument("rpe_drift: need at least two poses");
  if (segment_lengths.empty())
    throw std::invalid_argument("rpe_drift: no segment lengths");
  for (double L : segment_lengths)
    if (!(L > 0.0)) throw std::invalid_argument("rpe_drift: segment lengths must be positive");
  for (std::size_t i = 0; i < truth.size(); ++i)
    if (!pose_finite(estimated[i]) || !pose_finite(truth[i]))
      throw NumericError("rpe_drift: non-finite pose at index " + std::to_string(i));

  const std::size_t n = truth.size();
  std::vector<double> arc(n, 0.0);
  for (std::size_t i = 0; i + 1 < n; ++i)
    arc[i + 1] = arc[i] + std::hypot(truth[i + 1].x - truth[i].x, truth[i + 1].y - truth[i].y);

  std::vector<double> lengths = segment_lengths;
  std::sort(lengths.begin(), lengths.end());
  if (arc.back() < lengths.front())
    throw std::invalid_argument("rpe_drift: truth path length " + std::to_string(arc.back()) +
                                " is shorter than the smallest segment length " +
                                std::to_string(lengths.front()));

  double t_sum = 0.0;
  double r_sum = 0.0;
  int lengths_used = 0;
  int total_segments = 0;
  for (double L : lengths) {
    double t_sq = 0.0;
    double r_sq = 0.0;
    int count = 0;
    std::size_t j = 0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      if (j < i + 1) j = i + 1;
      while (j < n && arc[j] - arc[i] < L) ++j;
      if (j == n) break;
      const double span = arc[j] - arc[i];  // actual truth path length, >= L
      const auto ge = relative(estimated, i, j);
      const auto gt = relative(truth, i, j);
      const double t_err = std::hypot(ge[0] - gt[0], ge[1] - gt[1]) / span;
      const double r_err = std::abs(world::wrap_angle(ge[2] - gt[2])) / span;
      t_sq += t_err * t_err;
      r_sq += r_err * r_err;
      ++count;
    }
    if (count == 0) continue;
    t_sum += std::sqrt(t_sq / count);
    r_sum += std::sqrt(r_sq / count);
    ++lengths_used;
    total_segments += count;
  }

  DriftResult out;
  out.segments = total_segments;
  out.t_rel_pct = 100.0 * t_sum / lengths_used;
  out.r_rel_deg_per_100 = 100.0 * (180.0 / kPi) * r_sum / lengths_used;
  return out;
}

double steering_l1(const ScalarPredictor& predict, const world::Dataset& ds,
                   const std::vector<int>& split) {
  if (split.empty()) throw std::invalid_argument("steering_l1: empty evaluation split");
  double sum = 0.0;
  long count = 0;
  for (int idx : split) {
    const auto& rec = ds.sequences.at(static_cast<std::size_t>(idx));
    const int t_max = train::task_t_max(train::Task::Steering, rec.length, 1);
    for (int t = 0; t <= t_max; ++t) {
      const double y = predict(rec, t);
      if (!std::isfinite(y))
        throw NumericError("steering_l1: non-finite prediction at t " + std::to_string(t));
      sum += std::abs(y - static_cast<double>(rec.labels.at({t, 0})));
      ++count;
    }
  }
  if (count == 0) throw std::invalid_argument("steering_l1: split has no labeled frames");
  return sum / static_cast<double>(count);
}

VelocityErrors velocity_errors(const VectorPredictor& predict, const world::Dataset& ds,
                               const std::vector<int>& split, int window) {
  if (split.empty()) throw std::invalid_argument("velocity_errors: empty evaluation split");
  if (window < 2) throw std::invalid_argument("velocity_errors: window must be >= 2");
  std::array<double, 4> sum{};
  long count = 0;
  for (int idx : split) {
    const auto& rec = ds.sequences.at(static_cast<std::size_t>(idx));
    const int t_max = train::task_t_max(train::Task::Velocity, rec.length, window);
    for (int t = 0; t <= t_max; ++t) {
      const auto y = predict(rec, t);
      if (y.size() != 4)
        throw std::invalid_argument("velocity_errors: predictor returned " +
                                    std::to_string(y.size()) + " values, expected 4");
      const auto label = train::task_label(train::Task::Velocity, rec, t, window);
      for (int i = 0; i < 4; ++i) {
        if (!std::isfinite(y[static_cast<std::size_t>(i)]))
          throw NumericError("velocity_errors: non-finite prediction at t " + std::to_string(t));
        sum[static_cast<std::size_t>(i)] +=
            std::abs(y[static_cast<std::size_t>(i)] - label[static_cast<std::size_t>(i)]);
      }
      ++count;
    }
  }
  if (count == 0) throw std::invalid_argument("velocity_errors: split has no labeled samples");
  VelocityErrors out;
  for (int i = 0; i < 4; ++i)
    out.component[static_cast<std::size_t>(i)] =
        sum[static_cast<std::size_t>(i)] / static_cast<double>(count);
  out.mean = std::accumulate(out.component.begin(), out.component.end(), 0.0) / 4.0;
  return out;
}

std::vector<int> split_indices(const world::Dataset& ds, bool seen) {
  std::vector<int> out;
  for (std::size_t i = 0; i < ds.sequences.size(); ++i) {
    const bool even = ds.sequences[i].config.environment_id % 2 == 0;
    if (even == seen) out.push_back(static_cast<int>(i));
  }
  return out;
}

MetricsReport make_report(const std::string& task, const std::string& split,
                          const std::vector<double>& per_seed) {
  if (per_seed.empty()) throw std::invalid_argument("make_report: no per-seed values");
  MetricsReport r;
  r.task = task;
  r.split = split;
  r.per_seed = per_seed;
  r.mean = std::accumulate(per_seed.begin(), per_seed.end(), 0.0) /
           static_cast<double>(per_seed.size());
  if (per_seed.size() > 1) {
    double ss = 0.0;
    for (double v : per_seed) ss += (v - r.mean) * (v - r.mean);
    r.stddev = std::sqrt(ss / static_cast<double>(per_seed.size() - 1));
  }
  return r;
}

ProbeResult linear_probe(const std::vector<std::vector<double>>& codes,
                         const std::vector<std::vector<double>>& labels) {
  if (codes.size() != labels.size())
    throw std::invalid_argument("linear_probe: " + std::to_string(codes.size()) +
                                " codes vs " + std::to_string(labels.size()) + " labels");
  if (codes.size() < 4)
    throw std::invalid_argument("linear_probe: need at least four samples");
  const auto d = static_cast<Eigen::Index>(codes.front().size());
  const auto m = static_cast<Eigen::Index>(labels.front().size());
  if (d == 0 || m == 0)
    throw std::invalid_argument("linear_probe: empty code or label vectors");

  ProbeResult out;
  // Interleaved split keeps both halves on the same sequences and times.
  std::vector<std::size_t> train_rows, test_rows;
  for (std::size_t i = 0; i < codes.size(); ++i)
    (i % 2 == 0 ? train_rows : test_rows).push_back(i);
  out.n_train = static_cast<int>(train_rows.size());
  out.n_test = static_cast<int>(test_rows.size());

  const auto fill = [&](const std::vector<std::size_t>& rows, Eigen::MatrixXd& X,
                        Eigen::MatrixXd& Y) {
    X.resize(static_cast<Eigen::Index>(rows.size()), d + 1);
    Y.resize(static_cast<Eigen::Index>(rows.size()), m);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto& c = codes[rows[r]];
      const auto& l = labels[rows[r]];
      if (static_cast<Eigen::Index>(c.size()) != d ||
          static_cast<Eigen::Index>(l.size()) != m)
        throw std::invalid_argument("linear_probe: ragged code or label row " +
                                    std::to_string(rows[r]));
      for (Eigen::Index k = 0; k < d; ++k)
        X(static_cast<Eigen::Index>(r), k) = c[static_cast<std::size_t>(k)];
      X(static_cast<Eigen::Index>(r), d) = 1.0;
      for (Eigen::Index k = 0; k < m; ++k)
        Y(static_cast<Eigen::Index>(r), k) = l[static_cast<std::size_t>(k)];
    }
  };
  Eigen::MatrixXd Xtr, Ytr, Xte, Yte;
  fill(train_rows, Xtr, Ytr);
  fill(test_rows, Xte, Yte);

  // Constant codes carry no information; report that instead of inverting a
  // rank-deficient system.
  const Eigen::RowVectorXd feat_mean = Xtr.leftCols(d).colwise().mean();
  const double feat_spread =
      (Xtr.leftCols(d).rowwise() - feat_mean).cwiseAbs().maxCoeff();
  if (!(feat_spread > 1e-12)) {
    out.degenerate = true;
    return out;
  }

  const Eigen::MatrixXd W = (Xtr.transpose() * Xtr)
                                .ldlt()
                                .solve(Xtr.transpose() * Ytr);
  const Eigen::MatrixXd pred = Xte * W;

  double r2_sum = 0.0;
  for (Eigen::Index k = 0; k < m; ++k) {
    const double mean = Yte.col(k).mean();
    const double ss_tot = (Yte.col(k).array() - mean).square().sum();
    const double ss_res = (Yte.col(k) - pred.col(k)).squaredNorm();
    // A constant label column explains nothing either way.
    r2_sum += ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 0.0;
  }
  out.r2 = r2_sum / static_cast<double>(m);
  return out;
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median: empty input");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace mmcp::eval
