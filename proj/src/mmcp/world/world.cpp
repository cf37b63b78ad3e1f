#include "mmcp/world/world.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

#include "mmcp/core/errors.hpp"
#include "mmcp/core/parallel.hpp"
#include "mmcp/core/rng.hpp"

namespace mmcp::world {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Seed streams so the texture, obstacles and trajectory draws stay
// independent of each other.
constexpr std::uint64_t kStreamTrajectory = 0x74726163;
constexpr std::uint64_t kStreamObstacles = 0x6f627374;
constexpr std::uint64_t kStreamPalette = 0x70616c65;
constexpr std::uint64_t kStreamTexture = 0x74657874;

// Sum of three sinusoids with unit peak amplitude. Smooth in t, cheap to
// evaluate at arbitrary offsets, and fully determined by the rng draws.
struct SmoothSignal {
  std::array<double, 3> amp{};
  std::array<double, 3> freq{};
  std::array<double, 3> phase{};

  static SmoothSignal draw(Rng& rng) {
    SmoothSignal s;
    double total = 0.0;
    for (int h = 0; h < 3; ++h) {
      s.amp[h] = rng.uniform(0.3, 1.0);
      s.freq[h] = rng.uniform(0.05, 0.55);
      s.phase[h] = rng.uniform(0.0, 2.0 * kPi);
      total += s.amp[h];
    }
    for (int h = 0; h < 3; ++h) s.amp[h] /= total;
    return s;
  }

  double value(double t) const {
    double v = 0.0;
    for (int h = 0; h < 3; ++h) v += amp[h] * std::sin(freq[h] * t + phase[h]);
    return v;
  }
};

// Heading correction that pushes back toward the map center when within
// 1.5 units of the allowed margin, and is exactly zero elsewhere so a
// zero-curvature track stays a perfect straight line until it nears a wall.
double wall_steer(const WorldConfig& config, double x, double y, double heading) {
  const double lo = config.margin_units();
  const double hi = config.map_units() - lo;
  const double buffer = 1.5;
  double w = 0.0;
  w = std::max(w, (lo + buffer - x) / buffer);
  w = std::max(w, (lo + buffer - y) / buffer);
  w = std::max(w, (x - (hi - buffer)) / buffer);
  w = std::max(w, (y - (hi - buffer)) / buffer);
  w = std::clamp(w, 0.0, 1.0);
  if (w == 0.0) return 0.0;
  const double center = config.map_units() / 2.0;
  const double to_center = std::atan2(center - y, center - x);
  return wrap_angle(to_center - heading) * w * 0.4;
}

float sample_bilinear_lattice(const std::vector<float>& lattice, int n, double u, double v) {
  // u, v in lattice cells; lattice wraps so the texture has no seam.
  const int iu = static_cast<int>(std::floor(u));
  const int iv = static_cast<int>(std::floor(v));
  const double fu = u - iu;
  const double fv = v - iv;
  auto at = [&](int a, int b) {
    a = ((a % n) + n) % n;
    b = ((b % n) + n) % n;
    return static_cast<double>(lattice[static_cast<std::size_t>(b) * n + a]);
  };
  const double top = at(iu, iv) * (1.0 - fu) + at(iu + 1, iv) * fu;
  const double bot = at(iu, iv + 1) * (1.0 - fu) + at(iu + 1, iv + 1) * fu;
  return static_cast<float>(top * (1.0 - fv) + bot * fv);
}

void paint_disc(NdArray& texture, double cx_px, double cy_px, double radius_px,
                const std::array<float, 3>& color) {
  const int m = texture.shape[0];
  const int x0 = std::max(0, static_cast<int>(std::floor(cx_px - radius_px)));
  const int x1 = std::min(m - 1, static_cast<int>(std::ceil(cx_px + radius_px)));
  const int y0 = std::max(0, static_cast<int>(std::floor(cy_px - radius_px)));
  const int y1 = std::min(m - 1, static_cast<int>(std::ceil(cy_px + radius_px)));
  const double r2 = radius_px * radius_px;
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double dx = x + 0.5 - cx_px;
      const double dy = y + 0.5 - cy_px;
      if (dx * dx + dy * dy > r2) continue;
      float* px = &texture.data[(static_cast<std::size_t>(y) * m + x) * 3];
      px[0] = color[0];
      px[1] = color[1];
      px[2] = color[2];
    }
  }
}

std::array<float, 3> draw_color(Rng& rng, float lo, float hi) {
  return {static_cast<float>(rng.uniform(lo, hi)), static_cast<float>(rng.uniform(lo, hi)),
          static_cast<float>(rng.uniform(lo, hi))};
}

void copy_frame_into(NdArray& dst, int t, const NdArray& src) {
  const std::size_t stride = src.data.size();
  std::memcpy(dst.data.data() + static_cast<std::size_t>(t) * stride, src.data.data(),
              stride * sizeof(float));
}

}  // namespace

void WorldConfig::validate() const {
  if (map_size <= 0 || crop_size <= 0)
    throw std::invalid_argument("WorldConfig: map_size and crop_size must be positive");
  if (crop_size >= map_size)
    throw std::invalid_argument("WorldConfig: crop_size must be smaller than map_size");
  if (n_obstacles < 0) throw std::invalid_argument("WorldConfig: n_obstacles must be >= 0");
  if (track_curvature_scale < 0.0)
    throw std::invalid_argument("WorldConfig: track_curvature_scale must be >= 0");
  if (environment_id < 0) throw std::invalid_argument("WorldConfig: environment_id must be >= 0");
  if (2.0 * margin_units() >= map_units())
    throw std::invalid_argument(
        "WorldConfig: crop_size leaves no interior region at this map_size");
}

double wrap_angle(double a) {
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a <= 0.0) a += 2.0 * kPi;
  return a - kPi;
}

AgentTrajectory generate_trajectory(const WorldConfig& config, std::uint64_t seed, int T) {
  config.validate();
  if (T < 2) throw std::invalid_argument("generate_trajectory: T must be >= 2");

  Rng rng(mix_seed(seed, kStreamTrajectory));
  const double cs = config.track_curvature_scale;
  const double center = config.map_units() / 2.0;

  const SmoothSignal curv_sig = SmoothSignal::draw(rng);
  const SmoothSignal speed_sig = SmoothSignal::draw(rng);
  const SmoothSignal wander_sig = SmoothSignal::draw(rng);
  const SmoothSignal alt_sig = SmoothSignal::draw(rng);

  const double jitter = std::min(1.0, cs);
  const double start_x = center + rng.uniform(-2.0, 2.0) * jitter;
  const double start_y = center + rng.uniform(-2.0, 2.0) * jitter;
  const double start_theta = rng.uniform(-kPi, kPi);
  auto speed = [&](int t) { return 0.22 * (1.0 + cs * 0.45 * speed_sig.value(t)); };

  // The wall controller is soft, so a long unlucky run could still cross the
  // margin; positions are hard-clamped into the renderable region.
  const double lo = config.margin_units();
  const double hi = config.map_units() - lo;
  auto contain = [&](double v) { return std::clamp(v, lo, hi); };

  // Pass 1: the noiseless centerline, extended past the poses so steering
  // labels can look ahead at the last step.
  const int track_len = T + kLookaheadSteps;
  std::vector<Pose> centerline(track_len);
  {
    double x = contain(start_x), y = contain(start_y), heading = start_theta;
    for (int t = 0; t < track_len; ++t) {
      centerline[t] = {x, y, wrap_angle(heading)};
      double kappa = cs * 0.10 * curv_sig.value(t) + wall_steer(config, x, y, heading);
      kappa = std::clamp(kappa, -0.3, 0.3);
      heading = wrap_angle(heading + kappa);
      x = contain(x + speed(t) * std::cos(heading));
      y = contain(y + speed(t) * std::sin(heading));
    }
  }

  // Pass 2: the agent tracks a lookahead point on the centerline with a
  // proportional controller plus bounded heading noise.
  AgentTrajectory traj;
  traj.centerline = centerline;
  traj.poses.resize(T);
  traj.altitudes.resize(T);
  traj.commands.resize(T - 1);

  const double lateral = rng.uniform(-0.5, 0.5) * cs;
  double x = contain(start_x - lateral * std::sin(start_theta));
  double y = contain(start_y + lateral * std::cos(start_theta));
  double theta = wrap_angle(start_theta + rng.uniform(-0.2, 0.2) * cs);
  traj.poses[0] = {x, y, theta};
  traj.altitudes[0] = std::clamp(0.5 + cs * 0.3 * alt_sig.value(0), 0.1, 0.9);

  for (int t = 0; t + 1 < T; ++t) {
    const Pose& target = centerline[t + kLookaheadSteps];
    const double desired = std::atan2(target.y - y, target.x - x);
    double dtheta = 0.5 * wrap_angle(desired - theta) + cs * 0.08 * wander_sig.value(t) +
                    wall_steer(config, x, y, theta);
    dtheta = std::clamp(dtheta, -0.3, 0.3);
    theta = wrap_angle(theta + dtheta);
    x = contain(x + speed(t) * std::cos(theta));
    y = contain(y + speed(t) * std::sin(theta));
    traj.poses[t + 1] = {x, y, theta};
    traj.altitudes[t + 1] = std::clamp(0.5 + cs * 0.3 * alt_sig.value(t + 1), 0.1, 0.9);

    traj.commands[t] = {traj.poses[t + 1].x - traj.poses[t].x,
                        traj.poses[t + 1].y - traj.poses[t].y,
                        traj.altitudes[t + 1] - traj.altitudes[t],
                        wrap_angle(traj.poses[t + 1].theta - traj.poses[t].theta)};
  }
  return traj;
}

WorldMap build_world(const WorldConfig& config, std::uint64_t seed,
                     const AgentTrajectory& traj) {
  config.validate();
  const int m = config.map_size;

  Rng palette_rng(mix_seed(config.texture_seed,
                           mix_seed(kStreamPalette, static_cast<std::uint64_t>(
                                                        config.environment_id))));
  const std::array<float, 3> color_lo = draw_color(palette_rng, 0.15f, 0.55f);
  const std::array<float, 3> color_hi = draw_color(palette_rng, 0.55f, 0.95f);
  const std::array<float, 3> road_color = draw_color(palette_rng, 0.35f, 0.75f);
  const std::array<float, 3> obstacle_color = draw_color(palette_rng, 0.0f, 0.12f);

  // Two-octave value noise over wrapping lattices keyed by the same stream as
  // the palette, so textures differ across environments but not across
  // sequences within one environment.
  Rng texture_rng(mix_seed(config.texture_seed,
                           mix_seed(kStreamTexture, static_cast<std::uint64_t>(
                                                        config.environment_id))));
  const int n0 = 12, n1 = 37;
  std::vector<float> lattice0(static_cast<std::size_t>(n0) * n0);
  std::vector<float> lattice1(static_cast<std::size_t>(n1) * n1);
  for (auto& v : lattice0) v = static_cast<float>(texture_rng.uniform());
  for (auto& v : lattice1) v = static_cast<float>(texture_rng.uniform());

  WorldMap map;
  map.texture = NdArray({m, m, 3});
  const double cell0 = static_cast<double>(m) / n0;
  const double cell1 = static_cast<double>(m) / n1;
  for (int yv = 0; yv < m; ++yv) {
    for (int xv = 0; xv < m; ++xv) {
      const double u0 = xv / cell0, v0 = yv / cell0;
      const double u1 = xv / cell1, v1 = yv / cell1;
      const double noise = 0.65 * sample_bilinear_lattice(lattice0, n0, u0, v0) +
                           0.35 * sample_bilinear_lattice(lattice1, n1, u1, v1);
      float* px = &map.texture.data[(static_cast<std::size_t>(yv) * m + xv) * 3];
      for (int c = 0; c < 3; ++c)
        px[c] = static_cast<float>(color_lo[c] + (color_hi[c] - color_lo[c]) * noise);
    }
  }

  // Track ribbon: discs stamped along interpolated centerline segments.
  for (std::size_t i = 0; i + 1 < traj.centerline.size(); ++i) {
    const Pose& a = traj.centerline[i];
    const Pose& b = traj.centerline[i + 1];
    for (int s = 0; s < 4; ++s) {
      const double f = s / 4.0;
      const double px = (a.x + (b.x - a.x) * f) * kPxPerUnit;
      const double py = (a.y + (b.y - a.y) * f) * kPxPerUnit;
      paint_disc(map.texture, px, py, 5.0, road_color);
    }
  }

  // Obstacles: discs in both the texture (visual) and the depth field
  // (geometric), sampled per sequence inside the reachable interior.
  Rng obstacle_rng(mix_seed(seed, kStreamObstacles));
  const double lo = config.margin_units();
  const double hi = config.map_units() - lo;
  map.obstacles.reserve(config.n_obstacles);
  for (int i = 0; i < config.n_obstacles; ++i) {
    const double ox = obstacle_rng.uniform(lo, hi);
    const double oy = obstacle_rng.uniform(lo, hi);
    const double radius_px = obstacle_rng.uniform(2.5, 5.5);
    map.obstacles.push_back({ox, oy});
    paint_disc(map.texture, ox * kPxPerUnit, oy * kPxPerUnit, radius_px, obstacle_color);
  }
  return map;
}

void render_frame(const WorldConfig& config, const WorldMap& map, const Pose& pose,
                  double altitude, NdArray* rgb, NdArray* depth) {
  const int S = config.crop_size;
  const int m = config.map_size;
  const double lo = config.margin_units();
  const double hi = config.map_units() - lo;
  if (pose.x < lo || pose.x > hi || pose.y < lo || pose.y > hi)
    throw OutOfBoundsError("render_frame: pose (" + std::to_string(pose.x) + ", " +
                           std::to_string(pose.y) + ") outside the valid region [" +
                           std::to_string(lo) + ", " + std::to_string(hi) + "]");
  if (map.texture.shape != std::vector<int>{m, m, 3})
    throw std::invalid_argument("render_frame: texture shape does not match map_size");

  *rgb = NdArray({S, S, 3});
  *depth = NdArray({S, S, 1});
  const double c = std::cos(pose.theta), s = std::sin(pose.theta);
  const double cx_px = pose.x * kPxPerUnit, cy_px = pose.y * kPxPerUnit;
  const float brightness = static_cast<float>(0.7 + 0.3 * std::clamp(altitude, 0.0, 1.0));
  const int half = S / 2;

  for (int y = 0; y < S; ++y) {
    for (int x = 0; x < S; ++x) {
      const double qx = x - half, qy = y - half;
      const double wx_px = cx_px + c * qx - s * qy;
      const double wy_px = cy_px + s * qx + c * qy;
      const int tx = std::clamp(static_cast<int>(std::floor(wx_px)), 0, m - 1);
      const int ty = std::clamp(static_cast<int>(std::floor(wy_px)), 0, m - 1);
      const float* src = &map.texture.data[(static_cast<std::size_t>(ty) * m + tx) * 3];
      float* dst = &rgb->data[(static_cast<std::size_t>(y) * S + x) * 3];
      dst[0] = src[0] * brightness;
      dst[1] = src[1] * brightness;
      dst[2] = src[2] * brightness;

      const double wx = wx_px / kPxPerUnit, wy = wy_px / kPxPerUnit;
      double best = kDepthMax;
      for (const auto& ob : map.obstacles) {
        const double dx = wx - ob[0], dy = wy - ob[1];
        best = std::min(best, std::sqrt(dx * dx + dy * dy));
      }
      depth->data[static_cast<std::size_t>(y) * S + x] =
          static_cast<float>(std::clamp(best, kDepthMin, kDepthMax));
    }
  }
}

FlowField compute_flow(const WorldConfig& config, const Pose& pose_t, const Pose& pose_t1) {
  const int S = config.crop_size;
  FlowField field;
  field.size = S;
  field.data.resize(static_cast<std::size_t>(S) * S * 2);

  const double dtheta = wrap_angle(pose_t1.theta - pose_t.theta);
  const double cr = std::cos(-dtheta), sr = std::sin(-dtheta);
  const double dxw = (pose_t1.x - pose_t.x) * kPxPerUnit;
  const double dyw = (pose_t1.y - pose_t.y) * kPxPerUnit;
  const double c1 = std::cos(-pose_t1.theta), s1 = std::sin(-pose_t1.theta);
  const double tx = c1 * dxw - s1 * dyw;
  const double ty = s1 * dxw + c1 * dyw;
  const int half = S / 2;

  for (int y = 0; y < S; ++y) {
    for (int x = 0; x < S; ++x) {
      const double qx = x - half, qy = y - half;
      const std::size_t at = (static_cast<std::size_t>(y) * S + x) * 2;
      field.data[at + 0] = cr * qx - sr * qy - qx - tx;
      field.data[at + 1] = sr * qx + cr * qy - qy - ty;
    }
  }
  return field;
}

Labels task_labels(const WorldConfig& config, const AgentTrajectory& traj, int t) {
  (void)config;
  const int T = traj.length();
  if (t < 0 || t + 1 >= T)
    throw std::invalid_argument("task_labels: t=" + std::to_string(t) +
                                " out of range for length " + std::to_string(T));
  if (traj.commands.size() + 1 != traj.poses.size() ||
      traj.altitudes.size() != traj.poses.size())
    throw std::invalid_argument("task_labels: trajectory arrays have inconsistent lengths");
  if (traj.centerline.empty())
    throw std::invalid_argument("task_labels: trajectory has no centerline");

  Labels out;
  const Pose& p = traj.poses[t];
  const int look = std::min<int>(t + kLookaheadSteps, static_cast<int>(traj.centerline.size()) - 1);
  const Pose& target = traj.centerline[look];
  const double desired = std::atan2(target.y - p.y, target.x - p.x);
  const double correction = wrap_angle(desired - p.theta);
  out.steering = 0.5 + std::clamp(kSteeringGain * correction, -0.5, 0.5);
  out.velocity = traj.commands[t];

  const double c = std::cos(p.theta), s = std::sin(p.theta);
  const double dxw = traj.poses[t + 1].x - p.x;
  const double dyw = traj.poses[t + 1].y - p.y;
  out.relpose = {c * dxw + s * dyw, -s * dxw + c * dyw,
                 wrap_angle(traj.poses[t + 1].theta - p.theta)};
  return out;
}

bool SequenceRecord::operator==(const SequenceRecord& other) const {
  auto same = [](const NdArray& a, const NdArray& b) {
    return a.shape == b.shape &&
           std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(float)) == 0;
  };
  return seed == other.seed && length == other.length && same(rgb, other.rgb) &&
         same(depth, other.depth) && same(flow, other.flow) && same(labels, other.labels) &&
         same(poses, other.poses);
}

SequenceRecord generate_sequence(const WorldConfig& config, std::uint64_t seed, int T) {
  config.validate();
  if (T < 2) throw std::invalid_argument("generate_sequence: T must be >= 2");
  const int S = config.crop_size;

  SequenceRecord rec;
  rec.config = config;
  rec.seed = seed;
  rec.length = T;
  rec.rgb = NdArray({T, S, S, 3});
  rec.depth = NdArray({T, S, S, 1});
  rec.flow = NdArray({T - 1, S, S, 2});
  rec.labels = NdArray({T - 1, 8});
  rec.poses = NdArray({T, 4});

  const AgentTrajectory traj = generate_trajectory(config, seed, T);
  const WorldMap map = build_world(config, seed, traj);

  NdArray rgb_frame, depth_frame;
  for (int t = 0; t < T; ++t) {
    render_frame(config, map, traj.poses[t], traj.altitudes[t], &rgb_frame, &depth_frame);
    copy_frame_into(rec.rgb, t, rgb_frame);
    copy_frame_into(rec.depth, t, depth_frame);
    float* pose_row = &rec.poses.data[static_cast<std::size_t>(t) * 4];
    pose_row[0] = static_cast<float>(traj.poses[t].x);
    pose_row[1] = static_cast<float>(traj.poses[t].y);
    pose_row[2] = static_cast<float>(traj.poses[t].theta);
    pose_row[3] = static_cast<float>(traj.altitudes[t]);
  }
  for (int t = 0; t + 1 < T; ++t) {
    const FlowField field = compute_flow(config, traj.poses[t], traj.poses[t + 1]);
    float* dst = &rec.flow.data[static_cast<std::size_t>(t) * S * S * 2];
    for (std::size_t i = 0; i < field.data.size(); ++i)
      dst[i] = static_cast<float>(field.data[i]);
    const Labels lab = task_labels(config, traj, t);
    float* row = &rec.labels.data[static_cast<std::size_t>(t) * 8];
    row[0] = static_cast<float>(lab.steering);
    for (int i = 0; i < 4; ++i) row[1 + i] = static_cast<float>(lab.velocity[i]);
    for (int i = 0; i < 3; ++i) row[5 + i] = static_cast<float>(lab.relpose[i]);
  }
  return rec;
}

Dataset generate_dataset(const DatasetConfig& config, int threads) {
  if (config.n_sequences <= 0)
    throw std::invalid_argument("generate_dataset: n_sequences must be positive");
  if (config.environment_ids.empty())
    throw std::invalid_argument("generate_dataset: environment_ids must not be empty");

  Dataset ds;
  ds.config = config;
  ds.sequences.resize(config.n_sequences);
  parallel_for(config.n_sequences, threads, [&](int i) {
    WorldConfig wc = config.world;
    wc.environment_id = config.environment_ids[i % config.environment_ids.size()];
    ds.sequences[i] = generate_sequence(wc, mix_seed(config.base_seed, i), config.seq_len);
  });
  return ds;
}

int modality_channels(const std::string& modality) {
  if (modality == "rgb") return 3;
  if (modality == "depth") return 1;
  if (modality == "flow") return 2;
  throw std::invalid_argument("unknown modality '" + modality + "'");
}

namespace {

const NdArray& modality_array(const SequenceRecord& rec, const std::string& modality) {
  if (modality == "rgb") return rec.rgb;
  if (modality == "depth") return rec.depth;
  if (modality == "flow") return rec.flow;
  throw std::invalid_argument("unknown modality '" + modality + "'");
}

}  // namespace

std::vector<float> frame_view(const SequenceRecord& rec, const std::string& modality, int t) {
  const NdArray& arr = modality_array(rec, modality);
  if (t < 0 || t >= arr.shape[0])
    throw OutOfBoundsError("frame_view: t=" + std::to_string(t) + " out of range for '" +
                           modality + "' with " + std::to_string(arr.shape[0]) + " frames");
  const std::size_t stride =
      static_cast<std::size_t>(arr.shape[1]) * arr.shape[2] * arr.shape[3];
  const float* base = arr.data.data() + static_cast<std::size_t>(t) * stride;
  return std::vector<float>(base, base + stride);
}

std::vector<float> window_view(const SequenceRecord& rec, const std::string& modality,
                               int t, int window) {
  const NdArray& arr = modality_array(rec, modality);
  if (window <= 0) throw std::invalid_argument("window_view: window must be positive");
  if (t < 0 || t + window > arr.shape[0])
    throw OutOfBoundsError("window_view: frames [" + std::to_string(t) + ", " +
                           std::to_string(t + window) + ") out of range for '" + modality +
                           "' with " + std::to_string(arr.shape[0]) + " frames");
  const int S = arr.shape[1];
  const int ch = arr.shape[3];
  std::vector<float> out(static_cast<std::size_t>(S) * S * window * ch);
  const std::size_t frame_stride = static_cast<std::size_t>(S) * S * ch;
  for (int f = 0; f < window; ++f) {
    const float* src = arr.data.data() + static_cast<std::size_t>(t + f) * frame_stride;
    for (int p = 0; p < S * S; ++p) {
      for (int c = 0; c < ch; ++c)
        out[static_cast<std::size_t>(p) * window * ch + f * ch + c] =
            src[static_cast<std::size_t>(p) * ch + c];
    }
  }
  return out;
}

}  // namespace mmcp::world
