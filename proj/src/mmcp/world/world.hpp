#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "mmcp/core/ndarray.hpp"

namespace mmcp::world {

// World scale: 8 texture pixels per world unit. Depth clamps and speeds below
// are expressed in world units.
inline constexpr double kPxPerUnit = 8.0;
inline constexpr double kDepthMin = 0.05;
inline constexpr double kDepthMax = 10.0;
inline constexpr double kSteeringGain = 1.0;
inline constexpr int kLookaheadSteps = 5;

struct WorldConfig {
  int map_size = 192;  // texture side, pixels
  int crop_size = 32;  // camera window side, pixels
  int n_obstacles = 10;
  double track_curvature_scale = 1.0;
  // Half-width of uniform per-pixel noise added to the observed flow, in
  // pixels. Labels stay exact; only the flow observation degrades, the way a
  // real flow estimate would.
  double flow_noise = 0.0;
  std::uint64_t texture_seed = 0;
  int environment_id = 0;  // selects the texture/obstacle palette

  void validate() const;
  double map_units() const { return map_size / kPxPerUnit; }
  // Poses must keep this distance from the map edge so a rotated crop never
  // samples outside the texture.
  double margin_units() const { return (crop_size * 0.7072 + 2.0) / kPxPerUnit; }
};

struct Pose {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;  // radians, wrapped to (-pi, pi]
};

double wrap_angle(double a);

// Trajectory of the agent plus the noiseless track centerline it follows.
// Commands are world-frame per-step finite differences of (x, y, altitude,
// theta); the centerline extends kLookaheadSteps past the poses so steering
// labels are defined for every step.
struct AgentTrajectory {
  std::vector<Pose> poses;
  std::vector<double> altitudes;                 // same length as poses
  std::vector<std::array<double, 4>> commands;   // length T-1: vx, vy, vz, vyaw
  std::vector<Pose> centerline;                  // length T + kLookaheadSteps

  int length() const { return static_cast<int>(poses.size()); }
};

// Rendering assets for one sequence: the painted texture and the obstacle
// centers (world units) that define the depth field.
struct WorldMap {
  NdArray texture;  // [map_size, map_size, 3], values in [0,1]
  std::vector<std::array<double, 2>> obstacles;
};

struct Labels {
  double steering = 0.5;                    // in [0,1]
  std::array<double, 4> velocity{};         // vx, vy, vz, vyaw
  std::array<double, 3> relpose{};          // dx, dy, dtheta in the body frame of t
};

// Flow field between two consecutive frames in double precision. The float32
// record array is a cast of this.
struct FlowField {
  int size = 0;
  std::vector<double> data;  // [size, size, 2], C order

  double at(int y, int x, int c) const {
    return data[(static_cast<std::size_t>(y) * size + x) * 2 + c];
  }
};

AgentTrajectory generate_trajectory(const WorldConfig& config, std::uint64_t seed, int T);

WorldMap build_world(const WorldConfig& config, std::uint64_t seed,
                     const AgentTrajectory& traj);

// rgb is the rotated texture crop centered at the pose, scaled by an
// altitude-driven brightness factor; depth is the clamped distance field to
// the nearest obstacle center evaluated at each crop pixel's world position.
void render_frame(const WorldConfig& config, const WorldMap& map, const Pose& pose,
                  double altitude, NdArray* rgb, NdArray* depth);

// Closed-form rigid flow in crop pixel coordinates. Convention: flow points
// from a frame-t pixel to its location in frame t+1, so
//   flow(q) = R(-dtheta) * q - q - t_px
// with q relative to the integer crop center (index crop_size/2) and t_px the
// camera translation expressed in frame-t+1 pixels.
FlowField compute_flow(const WorldConfig& config, const Pose& pose_t, const Pose& pose_t1);

// Ground-truth labels for step t -> t+1. Requires 0 <= t < T-1.
Labels task_labels(const WorldConfig& config, const AgentTrajectory& traj, int t);

// The persisted form of one generated sequence. Round-trips bit-exactly
// through dataset_io.
struct SequenceRecord {
  WorldConfig config;
  std::uint64_t seed = 0;
  int length = 0;
  NdArray rgb;     // [T, S, S, 3]
  NdArray depth;   // [T, S, S, 1]
  NdArray flow;    // [T-1, S, S, 2]
  NdArray labels;  // [T-1, 8]: steering, vx, vy, vz, vyaw, dx, dy, dtheta
  NdArray poses;   // [T, 4]: x, y, theta, altitude

  bool operator==(const SequenceRecord& other) const;
};

inline constexpr const char* kLabelNames[8] = {"steering", "vx", "vy", "vz",
                                               "vyaw", "dx", "dy", "dtheta"};

SequenceRecord generate_sequence(const WorldConfig& config, std::uint64_t seed, int T);

struct DatasetConfig {
  WorldConfig world;  // template; environment_id is overridden per sequence
  int n_sequences = 8;
  int seq_len = 32;
  std::uint64_t base_seed = 1;
  std::vector<int> environment_ids = {0, 1, 2, 3, 4, 5, 6, 7};
};

struct Dataset {
  DatasetConfig config;
  std::vector<SequenceRecord> sequences;
};

// Sequence i uses environment_ids[i mod pool] and a seed derived from
// (base_seed, i), so generation is deterministic for any worker count.
Dataset generate_dataset(const DatasetConfig& config, int threads = 1);

// Frame/window extraction for the training pipeline: channel-last flat views.
std::vector<float> frame_view(const SequenceRecord& rec, const std::string& modality, int t);
// Stacks `window` consecutive frames channel-last: channel index = f*c + ch.
std::vector<float> window_view(const SequenceRecord& rec, const std::string& modality,
                               int t, int window);

int modality_channels(const std::string& modality);

}  // namespace mmcp::world
