#include "navrep/worldgen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <queue>
#include <set>
#include <stdexcept>

#include "navrep/error.hpp"

namespace navrep {

const std::array<const char*, 27> kObjectClasses = {
    "drawer",     "faucet",   "cabinet",           "hinge",     "cushion",
    "sofa",       "chair",    "pillow",            "armchair",  "lamp",
    "vase",       "knob",     "curtain",           "statue(sculpture)", "doorknob",
    "vent",       "lightbulb", "flowerpot",        "book",      "pipe",
    "painting",   "wall socket", "bed",            "mirror",    "television set",
    "flower arrangement", "chandelier"};

const Tensor& object_basis(int feature_dim) {
    static std::map<int, Tensor> cache;
    auto it = cache.find(feature_dim);
    if (it != cache.end()) return it->second;
    Rng rng(hash_string("object-basis"));
    Tensor basis = Tensor::zeros({kNumObjectClasses, feature_dim});
    for (int c = 0; c < kNumObjectClasses; ++c) {
        Rng crng = rng.substream(static_cast<std::uint64_t>(c));
        double sq = 0.0;
        for (int j = 0; j < feature_dim; ++j) {
            const double v = crng.normal();
            basis.at(c, j) = v;
            sq += v * v;
        }
        const double inv = 1.0 / std::sqrt(sq);
        for (int j = 0; j < feature_dim; ++j) basis.at(c, j) *= inv;
    }
    auto [pos, _] = cache.emplace(feature_dim, std::move(basis));
    return pos->second;
}

const char* split_name(Split s) {
    switch (s) {
        case Split::train_seen: return "train-seen";
        case Split::val_seen: return "val-seen";
        case Split::val_unseen: return "val-unseen";
    }
    return "train-seen";
}

Split parse_split(const std::string& s) {
    if (s == "train-seen" || s == "train") return Split::train_seen;
    if (s == "val-seen") return Split::val_seen;
    if (s == "val-unseen") return Split::val_unseen;
    throw DataError("unknown split: " + s);
}

const char* action_name(ActionKind a) {
    switch (a) {
        case ActionKind::forward: return "forward";
        case ActionKind::turn_left: return "turn-left";
        case ActionKind::turn_right: return "turn-right";
        case ActionKind::stop: return "stop";
    }
    return "forward";
}

ActionKind parse_action(const std::string& s) {
    if (s == "forward") return ActionKind::forward;
    if (s == "turn-left") return ActionKind::turn_left;
    if (s == "turn-right") return ActionKind::turn_right;
    if (s == "stop") return ActionKind::stop;
    throw DataError("unknown action: " + s);
}

std::uint64_t frame_hash(const Frame& frame) {
    std::uint64_t h = hash_string("frame");
    for (const auto& step : frame) {
        h = mix_seed(h, static_cast<std::uint64_t>(step.action) + 1);
        h = mix_seed(h, step.landmark ? static_cast<std::uint64_t>(*step.landmark) + 17 : 5);
    }
    return h;
}

const std::vector<int>& EnvGraph::neighbors(int node) const { return adjacency_[static_cast<std::size_t>(node)]; }

double EnvGraph::edge_length(int a, int b) const {
    const auto& pa = positions[static_cast<std::size_t>(a)];
    const auto& pb = positions[static_cast<std::size_t>(b)];
    const double dx = pa[0] - pb[0], dy = pa[1] - pb[1], dz = pa[2] - pb[2];
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

double EnvGraph::geodesic(int a, int b) const {
    if (a < 0 || b < 0 || a >= num_nodes() || b >= num_nodes())
        throw std::invalid_argument("geodesic: node not in environment");
    return dist_[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
}

std::pair<double, double> EnvGraph::direction(int a, int b) const {
    const auto& pa = positions[static_cast<std::size_t>(a)];
    const auto& pb = positions[static_cast<std::size_t>(b)];
    const double dx = pb[0] - pa[0], dy = pb[1] - pa[1], dz = pb[2] - pa[2];
    double heading = std::atan2(dy, dx);
    if (heading < 0) heading += 2.0 * M_PI;
    const double ground = std::sqrt(dx * dx + dy * dy);
    const double elevation = std::atan2(dz, ground);
    return {heading, elevation};
}

int EnvGraph::view_index(double heading, double elevation) {
    heading = std::fmod(heading, 2.0 * M_PI);
    if (heading < 0) heading += 2.0 * M_PI;
    int h = static_cast<int>(std::floor(heading / (2.0 * M_PI / kNumHeadings) + 0.5)) % kNumHeadings;
    int band = 1;
    if (elevation < -M_PI / 12.0) band = 0;
    else if (elevation > M_PI / 12.0) band = 2;
    return band * kNumHeadings + h;
}

std::pair<double, double> EnvGraph::view_direction(int view) {
    const int band = view / kNumHeadings;
    const int h = view % kNumHeadings;
    const double heading = h * (2.0 * M_PI / kNumHeadings);
    const double elevation = (band - 1) * (M_PI / 6.0);
    return {heading, elevation};
}

void EnvGraph::finalize() {
    const int n = num_nodes();
    adjacency_.assign(static_cast<std::size_t>(n), {});
    for (auto [a, b] : edges) {
        if (a == b || a < 0 || b < 0 || a >= n || b >= n) throw DataError("invalid edge in environment " + env_id);
        adjacency_[static_cast<std::size_t>(a)].push_back(b);
        adjacency_[static_cast<std::size_t>(b)].push_back(a);
    }
    for (auto& adj : adjacency_) {
        std::sort(adj.begin(), adj.end());
        adj.erase(std::unique(adj.begin(), adj.end()), adj.end());
    }
    // All-pairs geodesic via Dijkstra from each node; worlds are small.
    dist_.assign(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(n),
                                                                  std::numeric_limits<double>::infinity()));
    for (int src = 0; src < n; ++src) {
        auto& d = dist_[static_cast<std::size_t>(src)];
        d[static_cast<std::size_t>(src)] = 0.0;
        using Item = std::pair<double, int>;
        std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
        pq.emplace(0.0, src);
        while (!pq.empty()) {
            auto [dv, v] = pq.top();
            pq.pop();
            if (dv > d[static_cast<std::size_t>(v)]) continue;
            for (int u : adjacency_[static_cast<std::size_t>(v)]) {
                const double cand = dv + edge_length(v, u);
                if (cand < d[static_cast<std::size_t>(u)]) {
                    d[static_cast<std::size_t>(u)] = cand;
                    pq.emplace(cand, u);
                }
            }
        }
        for (double x : d) {
            if (!std::isfinite(x)) throw DataError("environment " + env_id + " is not connected");
        }
    }
}

namespace {

struct UnionFind {
    std::vector<int> parent;
    explicit UnionFind(int n) : parent(static_cast<std::size_t>(n)) {
        std::iota(parent.begin(), parent.end(), 0);
    }
    int find(int x) {
        while (parent[static_cast<std::size_t>(x)] != x) {
            parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
            x = parent[static_cast<std::size_t>(x)];
        }
        return x;
    }
    bool unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a == b) return false;
        parent[static_cast<std::size_t>(a)] = b;
        return true;
    }
};

double sq_dist(const std::array<double, 3>& a, const std::array<double, 3>& b) {
    const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
    return dx * dx + dy * dy + dz * dz;
}

}  // namespace

EnvGraph generate_environment(const std::string& env_id, std::uint64_t seed, const EnvSpec& spec) {
    if (spec.num_nodes < 4) throw std::invalid_argument("generate_environment: num_nodes must be >= 4");
    if (spec.degree < 1) throw std::invalid_argument("generate_environment: degree must be >= 1");
    EnvGraph env;
    env.env_id = env_id;
    env.seed = seed;
    env.alpha = spec.alpha;
    env.noise_std = spec.noise_std;

    Rng root(mix_seed(seed, hash_string(env_id)));

    // Layout: 20m x 20m footprint, up to 3m of height, 1m minimum separation.
    Rng layout = root.substream("layout");
    constexpr double kMinSep = 1.0;
    for (int i = 0; i < spec.num_nodes; ++i) {
        bool placed = false;
        for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
            std::array<double, 3> p = {layout.uniform(0.0, 20.0), layout.uniform(0.0, 20.0),
                                       layout.uniform(0.0, 3.0)};
            placed = true;
            for (const auto& q : env.positions) {
                if (sq_dist(p, q) < kMinSep * kMinSep) {
                    placed = false;
                    break;
                }
            }
            if (placed) env.positions.push_back(p);
        }
        if (!placed) throw DataError("generate_environment: cannot place nodes with minimum separation");
    }

    // k-nearest-neighbor edges, then bridge components with the shortest
    // cross-component links so the graph is always connected.
    const int n = spec.num_nodes;
    std::set<std::pair<int, int>> edge_set;
    for (int i = 0; i < n; ++i) {
        std::vector<std::pair<double, int>> by_dist;
        for (int j = 0; j < n; ++j)
            if (j != i) by_dist.emplace_back(sq_dist(env.positions[static_cast<std::size_t>(i)],
                                                     env.positions[static_cast<std::size_t>(j)]), j);
        std::sort(by_dist.begin(), by_dist.end());
        const int k = std::min<int>(spec.degree, static_cast<int>(by_dist.size()));
        for (int t = 0; t < k; ++t) {
            const int j = by_dist[static_cast<std::size_t>(t)].second;
            edge_set.emplace(std::min(i, j), std::max(i, j));
        }
    }
    UnionFind uf(n);
    for (auto [a, b] : edge_set) uf.unite(a, b);
    while (true) {
        // find the closest pair across components
        double best = std::numeric_limits<double>::infinity();
        std::pair<int, int> best_edge{-1, -1};
        bool split_found = false;
        for (int i = 0; i < n; ++i) {
            for (int j = i + 1; j < n; ++j) {
                if (uf.find(i) == uf.find(j)) continue;
                split_found = true;
                const double d = sq_dist(env.positions[static_cast<std::size_t>(i)],
                                         env.positions[static_cast<std::size_t>(j)]);
                if (d < best) {
                    best = d;
                    best_edge = {i, j};
                }
            }
        }
        if (!split_found) break;
        edge_set.insert(best_edge);
        uf.unite(best_edge.first, best_edge.second);
    }
    env.edges.assign(edge_set.begin(), edge_set.end());

    // Object inventories: each viewpoint gets a handful of classes, each
    // visible in a contiguous arc of 1-3 headings at one elevation band.
    Rng objects = root.substream("objects");
    env.view_objects.assign(static_cast<std::size_t>(n),
                            std::vector<std::vector<int>>(kViewsPerPanorama));
    const int lo = std::max(1, static_cast<int>(std::lround(spec.object_density)) - 2);
    const int hi = std::max(lo, static_cast<int>(std::lround(spec.object_density)) + 2);
    for (int node = 0; node < n; ++node) {
        Rng nrng = objects.substream(static_cast<std::uint64_t>(node));
        const int count = lo + static_cast<int>(nrng.uniform_int(static_cast<std::uint64_t>(hi - lo + 1)));
        auto classes = nrng.sample_without_replacement(kNumObjectClasses,
                                                       static_cast<std::size_t>(std::min(count, kNumObjectClasses)));
        for (std::size_t c : classes) {
            const int h0 = static_cast<int>(nrng.uniform_int(kNumHeadings));
            const int width = 1 + static_cast<int>(nrng.uniform_int(3));
            const int band = static_cast<int>(nrng.uniform_int(kNumElevations));
            for (int w = 0; w < width; ++w) {
                const int view = band * kNumHeadings + (h0 + w) % kNumHeadings;
                env.view_objects[static_cast<std::size_t>(node)][static_cast<std::size_t>(view)].push_back(
                    static_cast<int>(c));
            }
        }
    }

    // Prune classes present in strictly less than 1% of this world's panoramas.
    std::array<int, kNumObjectClasses> pano_count{};
    for (int node = 0; node < n; ++node) {
        std::set<int> present;
        for (const auto& v : env.view_objects[static_cast<std::size_t>(node)])
            present.insert(v.begin(), v.end());
        for (int c : present) pano_count[static_cast<std::size_t>(c)] += 1;
    }
    std::array<bool, kNumObjectClasses> keep{};
    for (int c = 0; c < kNumObjectClasses; ++c)
        keep[static_cast<std::size_t>(c)] =
            static_cast<double>(pano_count[static_cast<std::size_t>(c)]) >= 0.01 * static_cast<double>(n);
    for (auto& node_views : env.view_objects) {
        for (auto& view : node_views) {
            view.erase(std::remove_if(view.begin(), view.end(),
                                      [&](int c) { return !keep[static_cast<std::size_t>(c)]; }),
                       view.end());
            std::sort(view.begin(), view.end());
            view.erase(std::unique(view.begin(), view.end()), view.end());
        }
    }
    env.node_objects.assign(static_cast<std::size_t>(n), {});
    for (int node = 0; node < n; ++node) {
        std::set<int> present;
        for (const auto& v : env.view_objects[static_cast<std::size_t>(node)])
            present.insert(v.begin(), v.end());
        env.node_objects[static_cast<std::size_t>(node)].assign(present.begin(), present.end());
    }

    // Appearance signature: unit vector unique to (seed, env_id).
    Rng sig = root.substream("signature");
    env.signature = Tensor::zeros({spec.feature_dim});
    double sq = 0.0;
    for (int j = 0; j < spec.feature_dim; ++j) {
        const double v = sig.normal();
        env.signature.at(j) = v;
        sq += v * v;
    }
    const double inv = 1.0 / std::sqrt(sq);
    for (auto& v : env.signature.data) v *= inv;

    env.finalize();
    return env;
}

Panorama render_panorama(const EnvGraph& env, int viewpoint) {
    if (viewpoint < 0 || viewpoint >= env.num_nodes())
        throw std::invalid_argument("render_panorama: unknown viewpoint");
    const int d = env.feature_dim();
    const Tensor& basis = object_basis(d);
    Panorama pano;
    pano.viewpoint = viewpoint;
    pano.objects = &env.view_objects[static_cast<std::size_t>(viewpoint)];
    pano.features = Tensor::zeros({kViewsPerPanorama, d});
    Rng noise_root = Rng(env.seed).substream("view-noise").substream(static_cast<std::uint64_t>(viewpoint));
    for (int m = 0; m < kViewsPerPanorama; ++m) {
        double* f = pano.features.row_ptr(m);
        for (int c : (*pano.objects)[static_cast<std::size_t>(m)]) {
            const double* b = basis.row_ptr(c);
            for (int j = 0; j < d; ++j) f[j] += b[j];
        }
        for (int j = 0; j < d; ++j) f[j] += env.alpha * env.signature.at(j);
        if (env.noise_std > 0.0) {
            Rng vrng = noise_root.substream(static_cast<std::uint64_t>(m));
            for (int j = 0; j < d; ++j) f[j] += vrng.normal(0.0, env.noise_std);
        }
    }
    return pano;
}

namespace {

// Wrap to (-pi, pi].
double wrap_angle(double a) {
    while (a > M_PI) a -= 2.0 * M_PI;
    while (a <= -M_PI) a += 2.0 * M_PI;
    return a;
}

}  // namespace

Path sample_path(const EnvGraph& env, int len, std::uint64_t seed) {
    if (len < 2) throw std::invalid_argument("sample_path: len must be >= 2");
    Rng root(seed);
    constexpr int kMaxRetries = 64;
    for (int attempt = 0; attempt < kMaxRetries; ++attempt) {
        Rng rng = root.substream(static_cast<std::uint64_t>(attempt));
        std::vector<int> nodes;
        nodes.push_back(static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(env.num_nodes()))));
        bool stuck = false;
        while (static_cast<int>(nodes.size()) < len) {
            const int cur = nodes.back();
            const int prev = nodes.size() >= 2 ? nodes[nodes.size() - 2] : -1;
            std::vector<int> options;
            for (int nb : env.neighbors(cur))
                if (nb != prev) options.push_back(nb);
            if (options.empty()) {
                stuck = true;
                break;
            }
            nodes.push_back(options[rng.uniform_int(options.size())]);
        }
        if (stuck) continue;

        Path path;
        path.env_id = env.env_id;
        path.nodes = std::move(nodes);
        double prev_heading = 0.0;
        for (std::size_t i = 0; i + 1 < path.nodes.size(); ++i) {
            auto [heading, elevation] = env.direction(path.nodes[i], path.nodes[i + 1]);
            (void)elevation;
            FrameStep step;
            if (i == 0) {
                step.action = ActionKind::forward;
            } else {
                const double delta = wrap_angle(heading - prev_heading);
                if (std::abs(delta) <= M_PI / 6.0) step.action = ActionKind::forward;
                else if (delta > 0) step.action = ActionKind::turn_left;
                else step.action = ActionKind::turn_right;
            }
            prev_heading = heading;
            const auto& inventory = env.node_objects[static_cast<std::size_t>(path.nodes[i + 1])];
            if (!inventory.empty()) step.landmark = inventory[rng.uniform_int(inventory.size())];
            path.frame.push_back(step);
        }
        FrameStep stop;
        stop.action = ActionKind::stop;
        const auto& last_inventory = env.node_objects[static_cast<std::size_t>(path.nodes.back())];
        if (!last_inventory.empty()) stop.landmark = last_inventory[rng.uniform_int(last_inventory.size())];
        path.frame.push_back(stop);
        return path;
    }
    throw DataError("sample_path: cannot reach requested length " + std::to_string(len) + " in " + env.env_id);
}

}  // namespace navrep
