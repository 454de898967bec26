#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "navrep/rng.hpp"
#include "navrep/tensor.hpp"

namespace navrep {

// The 27 object classes every world draws from.
extern const std::array<const char*, 27> kObjectClasses;
constexpr int kNumObjectClasses = 27;

// Panoramas are discretized into 36 views: 12 headings x 3 elevation bands.
constexpr int kNumHeadings = 12;
constexpr int kNumElevations = 3;
constexpr int kViewsPerPanorama = kNumHeadings * kNumElevations;

// Shared per-class feature directions: fixed random unit vectors, identical
// across all environments. This is the semantic signal that survives an
// environment change.
const Tensor& object_basis(int feature_dim);

// Environments carry one tag each: "train-seen" (training worlds, which also
// host the held-out val-seen paths) or "val-unseen" (worlds never trained
// on). Paths carry the episode-level split.
enum class Split { train_seen, val_seen, val_unseen };
const char* split_name(Split s);
Split parse_split(const std::string& s);

struct EnvSpec {
    int num_nodes = 12;
    int degree = 3;
    double object_density = 5.0;  // expected object classes per viewpoint
    int feature_dim = 64;
    double alpha = 1.0;      // appearance signature strength
    double noise_std = 0.1;  // per-view feature noise
};

struct EnvGraph {
    std::string env_id;
    Split split = Split::train_seen;
    std::uint64_t seed = 0;  // generation seed; also keys per-view noise
    double alpha = 1.0;
    double noise_std = 0.1;
    std::vector<std::array<double, 3>> positions;
    std::vector<std::pair<int, int>> edges;  // undirected, first < second
    Tensor signature;                        // [feature_dim], unit norm
    // objects[node][view] -> sorted class ids; per-node union in node_objects
    std::vector<std::vector<std::vector<int>>> view_objects;
    std::vector<std::vector<int>> node_objects;

    int num_nodes() const { return static_cast<int>(positions.size()); }
    int feature_dim() const { return static_cast<int>(signature.shape[0]); }
    const std::vector<int>& neighbors(int node) const;
    double edge_length(int a, int b) const;
    // Shortest-path distance over edge lengths (meters).
    double geodesic(int a, int b) const;
    // Heading/elevation (radians) of the direction from node a toward node b.
    std::pair<double, double> direction(int a, int b) const;
    // View bin whose heading/elevation covers the given direction.
    static int view_index(double heading, double elevation);
    static std::pair<double, double> view_direction(int view);

    // Called after construction/deserialization.
    void finalize();

private:
    std::vector<std::vector<int>> adjacency_;
    std::vector<std::vector<double>> dist_;  // all-pairs geodesic
};

struct Panorama {
    int viewpoint = -1;
    Tensor features;  // [36, feature_dim]
    const std::vector<std::vector<int>>* objects = nullptr;  // per view, borrowed from the env
};

enum class ActionKind { forward, turn_left, turn_right, stop };
const char* action_name(ActionKind a);
ActionKind parse_action(const std::string& s);

struct FrameStep {
    ActionKind action = ActionKind::forward;
    std::optional<int> landmark;  // object class id
};
using Frame = std::vector<FrameStep>;

std::uint64_t frame_hash(const Frame& frame);

struct Path {
    std::int64_t path_id = -1;
    std::string env_id;
    Split split = Split::train_seen;
    std::vector<int> nodes;
    Frame frame;  // one step per edge plus a final stop step
};

// Deterministic in (env_id, seed, spec). Object classes that would appear in
// strictly less than 1% of the world's panoramas are pruned from it.
EnvGraph generate_environment(const std::string& env_id, std::uint64_t seed, const EnvSpec& spec);

// feature(view) = sum of object basis vectors + alpha * signature + noise,
// with noise fixed per (env seed, viewpoint, view).
Panorama render_panorama(const EnvGraph& env, int viewpoint);

// Random walk of `len` nodes without immediate backtracking; attaches the
// semantic frame. Throws DataError when the graph cannot support the length
// after bounded retries.
Path sample_path(const EnvGraph& env, int len, std::uint64_t seed);

}  // namespace navrep
