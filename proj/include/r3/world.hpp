// Synthetic topological environments: viewpoints with panoramic direction
// slots, seeded generation, episodes (instruction + ground-truth path),
// geodesic utilities and JSON persistence.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <queue>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "r3/action.hpp"
#include "r3/rng.hpp"

namespace r3 {

using Json = nlohmann::json;

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

constexpr int kHeadingBins = 12;
constexpr int kFeatureDim = 16;
constexpr double kBinWidth = 2.0 * std::numbers::pi / kHeadingBins;

/// One directional view within a viewpoint's panorama.
struct DirectionSlot {
    double heading = 0.0;    // world frame, [-pi, pi)
    double elevation = 0.0;  // fixed 0 in the planar world
    std::vector<double> feature;
    std::vector<std::string> tags;
    std::optional<std::string> navigable_to;
};

struct Viewpoint {
    std::string id;
    std::array<double, 3> position{};  // meters
    std::vector<DirectionSlot> slots;  // sorted by heading

    const DirectionSlot* slot_toward(const std::string& neighbor) const {
        for (const auto& s : slots)
            if (s.navigable_to && *s.navigable_to == neighbor) return &s;
        return nullptr;
    }
};

/// Immutable topological environment. Undirected, connected, Euclidean
/// edge weights.
struct WorldGraph {
    std::map<std::string, Viewpoint> viewpoints;
    std::uint64_t seed = 0;
    int feature_dim = kFeatureDim;

    const Viewpoint& at(const std::string& id) const {
        auto it = viewpoints.find(id);
        if (it == viewpoints.end()) throw Error("unknown viewpoint id '" + id + "'");
        return it->second;
    }

    bool contains(const std::string& id) const { return viewpoints.count(id) > 0; }

    std::vector<std::string> neighbors(const std::string& id) const {
        std::vector<std::string> out;
        for (const auto& s : at(id).slots)
            if (s.navigable_to) out.push_back(*s.navigable_to);
        std::sort(out.begin(), out.end());
        return out;
    }

    double edge_length(const std::string& a, const std::string& b) const {
        const auto& pa = at(a).position;
        const auto& pb = at(b).position;
        double dx = pa[0] - pb[0], dy = pa[1] - pb[1], dz = pa[2] - pb[2];
        return std::sqrt(dx * dx + dy * dy + dz * dz);
    }

    /// Sorted union of every slot tag in the world.
    std::vector<std::string> tag_vocabulary() const {
        std::set<std::string> tags;
        for (const auto& [id, vp] : viewpoints)
            for (const auto& s : vp.slots) tags.insert(s.tags.begin(), s.tags.end());
        return {tags.begin(), tags.end()};
    }
};

enum class InstructionStyle { FineGrained, CoarseGrained };

inline const char* to_string(InstructionStyle s) {
    return s == InstructionStyle::FineGrained ? "fine_grained" : "coarse_grained";
}

inline InstructionStyle instruction_style_from(const std::string& s) {
    if (s == "fine_grained") return InstructionStyle::FineGrained;
    if (s == "coarse_grained") return InstructionStyle::CoarseGrained;
    throw Error("unknown instruction style '" + s + "'");
}

struct Instruction {
    std::string text;
    InstructionStyle style = InstructionStyle::FineGrained;
};

struct Episode {
    std::string id;
    Instruction instruction;
    std::string start;
    std::string goal;
    std::vector<std::string> gt_path;
};

/// A slot as seen by an agent with a given orientation.
struct ObservedSlot {
    DirectionSlot slot;
    double relative_heading = 0.0;  // [-pi, pi)
};

struct Observation {
    std::string viewpoint;
    double agent_heading = 0.0;
    std::vector<ObservedSlot> slots;       // all panorama slots
    std::vector<ObservedSlot> candidates;  // navigable subset
};

// ---------------------------------------------------------------------------
// Geometry helpers

inline double bearing(const std::array<double, 3>& from, const std::array<double, 3>& to) {
    return std::atan2(to[1] - from[1], to[0] - from[0]);
}

inline double bin_center(int k) { return wrap_angle(k * kBinWidth); }

inline int nearest_bin(double heading) {
    int k = static_cast<int>(std::llround(wrap_angle(heading) / kBinWidth));
    return ((k % kHeadingBins) + kHeadingBins) % kHeadingBins;
}

// ---------------------------------------------------------------------------
// Observation

inline Observation observe(const WorldGraph& world, const std::string& vp, double agent_heading) {
    const Viewpoint& v = world.at(vp);
    Observation obs;
    obs.viewpoint = vp;
    obs.agent_heading = agent_heading;
    obs.slots.reserve(v.slots.size());
    for (const auto& s : v.slots) {
        ObservedSlot os{s, wrap_angle(s.heading - agent_heading)};
        if (s.navigable_to) obs.candidates.push_back(os);
        obs.slots.push_back(std::move(os));
    }
    return obs;
}

// ---------------------------------------------------------------------------
// Shortest paths. Dijkstra over Euclidean edge weights; ties broken by id so
// returned paths are deterministic.

struct Geodesic {
    double distance = 0.0;
    std::vector<std::string> path;
};

inline Geodesic geodesic(const WorldGraph& world, const std::string& a, const std::string& b) {
    world.at(a);
    world.at(b);
    if (a == b) return {0.0, {a}};

    std::map<std::string, double> dist;
    std::map<std::string, std::string> prev;
    std::set<std::pair<double, std::string>> frontier;
    dist[a] = 0.0;
    frontier.insert({0.0, a});

    while (!frontier.empty()) {
        auto [d, u] = *frontier.begin();
        frontier.erase(frontier.begin());
        if (u == b) break;
        for (const auto& w : world.neighbors(u)) {
            double nd = d + world.edge_length(u, w);
            auto it = dist.find(w);
            if (it == dist.end() || nd < it->second) {
                if (it != dist.end()) frontier.erase({it->second, w});
                dist[w] = nd;
                prev[w] = u;
                frontier.insert({nd, w});
            }
        }
    }

    auto it = dist.find(b);
    if (it == dist.end()) throw Error("no path from '" + a + "' to '" + b + "'");
    Geodesic g;
    g.distance = it->second;
    for (std::string cur = b;; cur = prev.at(cur)) {
        g.path.push_back(cur);
        if (cur == a) break;
    }
    std::reverse(g.path.begin(), g.path.end());
    return g;
}

/// Unweighted hop distances from a source to every reachable viewpoint.
inline std::map<std::string, int> hop_distances(const WorldGraph& world, const std::string& from) {
    std::map<std::string, int> hops;
    std::queue<std::string> q;
    hops[from] = 0;
    q.push(from);
    while (!q.empty()) {
        std::string u = q.front();
        q.pop();
        for (const auto& w : world.neighbors(u)) {
            if (!hops.count(w)) {
                hops[w] = hops[u] + 1;
                q.push(w);
            }
        }
    }
    return hops;
}

// ---------------------------------------------------------------------------
// Validation

inline void validate_world(const WorldGraph& world) {
    if (world.viewpoints.empty()) throw Error("world has no viewpoints");
    for (const auto& [id, vp] : world.viewpoints) {
        if (vp.id != id) throw Error("viewpoint key '" + id + "' does not match id '" + vp.id + "'");
        for (double c : vp.position)
            if (!std::isfinite(c)) throw Error("viewpoint '" + id + "' has a non-finite position");
        if (vp.slots.empty() || vp.slots.size() > kHeadingBins)
            throw Error("viewpoint '" + id + "' must have between 1 and 12 slots");
        std::set<int> bins;
        std::set<std::string> seen_neighbors;
        for (const auto& s : vp.slots) {
            if (std::abs(wrap_angle(s.heading - bin_center(nearest_bin(s.heading)))) > 1e-6)
                throw Error("viewpoint '" + id + "' slot heading off the 12-bin grid");
            if (!bins.insert(nearest_bin(s.heading)).second)
                throw Error("viewpoint '" + id + "' has two slots in one heading bin");
            if (static_cast<int>(s.feature.size()) != world.feature_dim)
                throw Error("viewpoint '" + id + "' slot feature dim != " +
                            std::to_string(world.feature_dim));
            for (double x : s.feature)
                if (!std::isfinite(x)) throw Error("viewpoint '" + id + "' has a non-finite feature");
            if (s.navigable_to) {
                if (!world.contains(*s.navigable_to))
                    throw Error("viewpoint '" + id + "' references missing neighbor '" +
                                *s.navigable_to + "'");
                if (!seen_neighbors.insert(*s.navigable_to).second)
                    throw Error("viewpoint '" + id + "' has two slots toward '" + *s.navigable_to + "'");
                if (*s.navigable_to == id) throw Error("viewpoint '" + id + "' links to itself");
            }
        }
    }
    // reciprocity
    for (const auto& [id, vp] : world.viewpoints)
        for (const auto& s : vp.slots)
            if (s.navigable_to && !world.at(*s.navigable_to).slot_toward(id))
                throw Error("edge '" + id + "' -> '" + *s.navigable_to + "' is not reciprocated");
    // connectivity
    auto hops = hop_distances(world, world.viewpoints.begin()->first);
    if (hops.size() != world.viewpoints.size()) {
        for (const auto& [id, vp] : world.viewpoints)
            if (!hops.count(id)) throw Error("world is disconnected: '" + id + "' unreachable");
    }
}

inline void validate_episode(const Episode& ep, const WorldGraph& world) {
    if (ep.gt_path.empty()) throw Error("episode '" + ep.id + "' has an empty gt_path");
    if (ep.gt_path.front() != ep.start)
        throw Error("episode '" + ep.id + "' gt_path does not start at '" + ep.start + "'");
    if (ep.gt_path.back() != ep.goal)
        throw Error("episode '" + ep.id + "' gt_path does not end at '" + ep.goal + "'");
    for (std::size_t i = 0; i + 1 < ep.gt_path.size(); ++i) {
        const auto& a = ep.gt_path[i];
        const auto& b = ep.gt_path[i + 1];
        if (!world.contains(a) || !world.contains(b) || !world.at(a).slot_toward(b))
            throw Error("episode '" + ep.id + "' gt_path hop '" + a + "' -> '" + b +
                        "' is not an edge");
    }
}

// ---------------------------------------------------------------------------
// Generation

namespace detail {

inline std::string vp_name(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "vp_%03zu", i);
    return buf;
}

/// Global tag embedding: the same tag maps to the same direction in every
/// world, the way visual features of similar scenes correlate across
/// environments.
inline std::vector<double> tag_vector(const std::string& tag) {
    Rng rng(derive_seed(0x7A6B00C5u, tag));
    std::vector<double> v(kFeatureDim);
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    return v;
}

struct GenScratch {
    std::vector<std::array<double, 3>> pos;
    std::vector<std::set<std::size_t>> adj;
};

inline double sqdist(const std::array<double, 3>& a, const std::array<double, 3>& b) {
    double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
    return dx * dx + dy * dy + dz * dz;
}

/// Place n points in a 30 m x 30 m plane, link k nearest neighbors, then
/// join components through their closest cross pair. Returns false when a
/// node would exceed the 12 available heading bins.
inline bool try_generate_topology(Rng& rng, std::size_t n, double mean_degree, GenScratch& out) {
    out.pos.assign(n, {});
    out.adj.assign(n, {});
    for (std::size_t i = 0; i < n; ++i) {
        std::array<double, 3> p{};
        for (int attempt = 0; attempt < 64; ++attempt) {
            p = {rng.uniform(0.0, 30.0), rng.uniform(0.0, 30.0), 0.0};
            bool clear = true;
            for (std::size_t j = 0; j < i && clear; ++j)
                if (sqdist(p, out.pos[j]) < 1.0) clear = false;
            if (clear) break;
        }
        out.pos[i] = p;
    }

    const std::size_t k = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(mean_degree)));
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::pair<double, std::size_t>> order;
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) order.push_back({sqdist(out.pos[i], out.pos[j]), j});
        std::sort(order.begin(), order.end());
        for (std::size_t m = 0; m < std::min(k, order.size()); ++m) {
            out.adj[i].insert(order[m].second);
            out.adj[order[m].second].insert(i);
        }
    }

    // connectivity repair
    while (true) {
        std::vector<int> comp(n, -1);
        int ncomp = 0;
        for (std::size_t s = 0; s < n; ++s) {
            if (comp[s] >= 0) continue;
            comp[s] = ncomp;
            std::queue<std::size_t> q;
            q.push(s);
            while (!q.empty()) {
                std::size_t u = q.front();
                q.pop();
                for (std::size_t w : out.adj[u])
                    if (comp[w] < 0) {
                        comp[w] = ncomp;
                        q.push(w);
                    }
            }
            ++ncomp;
        }
        if (ncomp == 1) break;
        double best = std::numeric_limits<double>::max();
        std::pair<std::size_t, std::size_t> join{0, 0};
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                if (comp[i] != comp[j] && sqdist(out.pos[i], out.pos[j]) < best) {
                    best = sqdist(out.pos[i], out.pos[j]);
                    join = {i, j};
                }
        out.adj[join.first].insert(join.second);
        out.adj[join.second].insert(join.first);
    }

    for (std::size_t i = 0; i < n; ++i)
        if (out.adj[i].size() > kHeadingBins) return false;
    return true;
}

}  // namespace detail

/// Deterministic synthetic world. Positions in a 30 m x 30 m plane, kNN
/// edges with connectivity repair, every edge in the heading bin nearest its
/// true bearing, every bin carrying a 16-dim feature and 1-3 scene tags.
inline WorldGraph generate_world(std::uint64_t seed, std::size_t n_viewpoints, double mean_degree,
                                 const std::vector<std::string>& tag_vocab) {
    if (n_viewpoints < 2) throw Error("generate_world: n_viewpoints must be >= 2");
    if (mean_degree < 1.0) throw Error("generate_world: mean_degree must be >= 1");
    if (tag_vocab.empty()) throw Error("generate_world: tag_vocab must be non-empty");

    constexpr int kMaxAttempts = 8;
    detail::GenScratch g;
    bool ok = false;
    for (int attempt = 0; attempt < kMaxAttempts && !ok; ++attempt) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(attempt)));
        ok = detail::try_generate_topology(rng, n_viewpoints, mean_degree, g);
    }
    if (!ok)
        throw Error("generate_world: could not build a valid topology for seed " +
                    std::to_string(seed));

    const std::size_t n = n_viewpoints;
    WorldGraph world;
    world.seed = seed;
    world.feature_dim = kFeatureDim;

    Rng rng(derive_seed(seed, "slots"));
    for (std::size_t i = 0; i < n; ++i) {
        Viewpoint vp;
        vp.id = detail::vp_name(i);
        vp.position = g.pos[i];

        // neighbors claim the bin nearest their bearing; collisions probe
        // outward, preferring the closer side
        std::array<std::optional<std::size_t>, kHeadingBins> bin_owner{};
        std::vector<std::size_t> nbrs(g.adj[i].begin(), g.adj[i].end());
        for (std::size_t j : nbrs) {
            int ideal = nearest_bin(bearing(g.pos[i], g.pos[j]));
            int chosen = -1;
            for (int off = 0; off < kHeadingBins && chosen < 0; ++off) {
                for (int sgn : {+1, -1}) {
                    int b = ((ideal + sgn * off) % kHeadingBins + kHeadingBins) % kHeadingBins;
                    if (!bin_owner[b]) {
                        chosen = b;
                        break;
                    }
                    if (off == 0) break;  // same bin either sign
                }
            }
            bin_owner[chosen] = j;
        }

        for (int b = 0; b < kHeadingBins; ++b) {
            DirectionSlot s;
            s.heading = bin_center(b);
            std::size_t ntags = std::min(tag_vocab.size(), 1 + rng.uniform_index(3));
            std::set<std::string> chosen;
            while (chosen.size() < ntags) chosen.insert(tag_vocab[rng.uniform_index(tag_vocab.size())]);
            s.tags.assign(chosen.begin(), chosen.end());
            // feature = mean tag embedding plus viewpoint-local variation
            s.feature.assign(kFeatureDim, 0.0);
            for (const auto& tag : s.tags) {
                auto tv = detail::tag_vector(tag);
                for (int i = 0; i < kFeatureDim; ++i) s.feature[i] += tv[i];
            }
            for (auto& x : s.feature) x /= static_cast<double>(s.tags.size());
            for (auto& x : s.feature) x += rng.uniform(-0.25, 0.25);
            if (bin_owner[b]) s.navigable_to = detail::vp_name(*bin_owner[b]);
            vp.slots.push_back(std::move(s));
        }
        std::sort(vp.slots.begin(), vp.slots.end(),
                  [](const DirectionSlot& a, const DirectionSlot& b) { return a.heading < b.heading; });
        world.viewpoints.emplace(vp.id, std::move(vp));
    }

    validate_world(world);
    return world;
}

// ---------------------------------------------------------------------------
// Episode generation. Instruction templates are versioned so golden tests
// stay stable across edits.

constexpr const char* kInstructionTemplateVersion = "v1";

namespace detail {

/// Tags on the slot v -> w that no other navigable slot of v carries.
inline std::vector<std::string> distinguishing_tags(const WorldGraph& world, const std::string& v,
                                                    const std::string& w) {
    const Viewpoint& vp = world.at(v);
    const DirectionSlot* target = vp.slot_toward(w);
    if (!target) return {};
    std::set<std::string> others;
    for (const auto& s : vp.slots)
        if (s.navigable_to && *s.navigable_to != w) others.insert(s.tags.begin(), s.tags.end());
    std::vector<std::string> out;
    for (const auto& t : target->tags)
        if (!others.count(t)) out.push_back(t);
    return out;
}

inline std::string fine_grained_text(const std::vector<std::string>& tags) {
    std::ostringstream os;
    os << "Walk to the " << tags.front();
    for (std::size_t i = 1; i < tags.size(); ++i) os << ", then head to the " << tags[i];
    os << ". Stop there.";
    return os.str();
}

}  // namespace detail

/// Deterministic episode on a world: shortest gt_path between a start/goal
/// pair at hop distance >= min_hops, instruction text templated from scene
/// tags. FineGrained clauses each name a tag that uniquely identifies the
/// next hop among the candidates at that viewpoint.
inline Episode generate_episode(const WorldGraph& world, std::uint64_t seed, InstructionStyle style,
                                int min_hops) {
    Rng rng(derive_seed(seed, "episode"));
    std::vector<std::string> ids;
    for (const auto& [id, vp] : world.viewpoints) ids.push_back(id);

    std::vector<std::string> starts = ids;
    rng.shuffle(starts);
    for (const auto& start : starts) {
        auto hops = hop_distances(world, start);
        std::vector<std::string> goals;
        for (const auto& [id, h] : hops)
            if (h >= min_hops) goals.push_back(id);
        rng.shuffle(goals);
        for (const auto& goal : goals) {
            Geodesic geo = geodesic(world, start, goal);
            Episode ep;
            ep.id = "ep_" + std::to_string(seed);
            ep.start = start;
            ep.goal = goal;
            ep.gt_path = geo.path;
            ep.instruction.style = style;

            if (style == InstructionStyle::CoarseGrained) {
                // the target object lives in a non-navigable view at the goal
                std::set<std::string> goal_tags;
                for (const auto& s : world.at(goal).slots)
                    if (!s.navigable_to) goal_tags.insert(s.tags.begin(), s.tags.end());
                if (goal_tags.empty())
                    for (const auto& s : world.at(goal).slots)
                        goal_tags.insert(s.tags.begin(), s.tags.end());
                std::vector<std::string> pool(goal_tags.begin(), goal_tags.end());
                ep.instruction.text = "Bring me the " + pool[rng.uniform_index(pool.size())] + ".";
                return ep;
            }

            std::vector<std::string> clause_tags;
            bool feasible = true;
            for (std::size_t i = 0; i + 1 < geo.path.size() && feasible; ++i) {
                auto options = detail::distinguishing_tags(world, geo.path[i], geo.path[i + 1]);
                if (options.empty())
                    feasible = false;
                else
                    clause_tags.push_back(options[rng.uniform_index(options.size())]);
            }
            if (!feasible) continue;  // another goal may admit unambiguous clauses
            ep.instruction.text = detail::fine_grained_text(clause_tags);
            return ep;
        }
    }
    throw Error("generate_episode: no start/goal pair at hop distance >= " +
                std::to_string(min_hops) + " admits an instruction (seed " + std::to_string(seed) +
                ")");
}

// ---------------------------------------------------------------------------
// JSON persistence. Field names are part of the format contract.

inline Json to_json(const WorldGraph& world) {
    Json j;
    j["seed"] = world.seed;
    j["feature_dim"] = world.feature_dim;
    Json vps = Json::array();
    for (const auto& [id, vp] : world.viewpoints) {
        Json v;
        v["id"] = vp.id;
        v["position"] = vp.position;
        Json slots = Json::array();
        for (const auto& s : vp.slots) {
            Json sj;
            sj["heading"] = s.heading;
            sj["elevation"] = s.elevation;
            sj["feature"] = s.feature;
            sj["tags"] = s.tags;
            if (s.navigable_to) sj["navigable_to"] = *s.navigable_to;
            slots.push_back(std::move(sj));
        }
        v["slots"] = std::move(slots);
        vps.push_back(std::move(v));
    }
    j["viewpoints"] = std::move(vps);
    return j;
}

inline WorldGraph world_from_json(const Json& j) {
    WorldGraph world;
    try {
        world.seed = j.at("seed").get<std::uint64_t>();
        world.feature_dim = j.at("feature_dim").get<int>();
        for (const auto& v : j.at("viewpoints")) {
            Viewpoint vp;
            vp.id = v.at("id").get<std::string>();
            auto pos = v.at("position");
            for (int i = 0; i < 3; ++i) vp.position[i] = pos.at(i).get<double>();
            for (const auto& sj : v.at("slots")) {
                DirectionSlot s;
                s.heading = sj.at("heading").get<double>();
                s.elevation = sj.at("elevation").get<double>();
                s.feature = sj.at("feature").get<std::vector<double>>();
                s.tags = sj.at("tags").get<std::vector<std::string>>();
                if (sj.contains("navigable_to")) s.navigable_to = sj.at("navigable_to").get<std::string>();
                vp.slots.push_back(std::move(s));
            }
            if (world.viewpoints.count(vp.id)) throw Error("duplicate viewpoint id '" + vp.id + "'");
            world.viewpoints.emplace(vp.id, std::move(vp));
        }
    } catch (const Json::exception& e) {
        throw Error(std::string("malformed world JSON: ") + e.what());
    }
    validate_world(world);
    return world;
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open '" + path + "' for writing");
    f << text;
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open '" + path + "'");
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

inline void save_world(const WorldGraph& world, const std::string& path) {
    write_text_file(path, to_json(world).dump(2) + "\n");
}

inline WorldGraph load_world(const std::string& path) {
    Json j;
    try {
        j = Json::parse(read_text_file(path));
    } catch (const Json::exception& e) {
        throw Error(path + ": " + e.what());
    }
    try {
        return world_from_json(j);
    } catch (const Error& e) {
        throw Error(path + ": " + e.what());
    }
}

inline Json to_json(const Episode& ep) {
    Json j;
    j["id"] = ep.id;
    j["instruction"] = {{"style", to_string(ep.instruction.style)}, {"text", ep.instruction.text}};
    j["start"] = ep.start;
    j["goal"] = ep.goal;
    j["gt_path"] = ep.gt_path;
    return j;
}

inline Episode episode_from_json(const Json& j) {
    Episode ep;
    try {
        ep.id = j.at("id").get<std::string>();
        ep.instruction.text = j.at("instruction").at("text").get<std::string>();
        ep.instruction.style = instruction_style_from(j.at("instruction").at("style").get<std::string>());
        ep.start = j.at("start").get<std::string>();
        ep.goal = j.at("goal").get<std::string>();
        ep.gt_path = j.at("gt_path").get<std::vector<std::string>>();
    } catch (const Json::exception& e) {
        throw Error(std::string("malformed episode JSON: ") + e.what());
    }
    return ep;
}

inline void save_episodes(const std::vector<Episode>& eps, const std::string& path) {
    Json j = Json::array();
    for (const auto& ep : eps) j.push_back(to_json(ep));
    write_text_file(path, j.dump(2) + "\n");
}

inline std::vector<Episode> load_episodes(const std::string& path, const WorldGraph* world = nullptr) {
    Json j;
    try {
        j = Json::parse(read_text_file(path));
    } catch (const Json::exception& e) {
        throw Error(path + ": " + e.what());
    }
    if (!j.is_array()) throw Error(path + ": expected a JSON array of episodes");
    std::vector<Episode> eps;
    for (const auto& e : j) {
        Episode ep = episode_from_json(e);
        if (world) {
            try {
                validate_episode(ep, *world);
            } catch (const Error& err) {
                throw Error(path + ": " + err.what());
            }
        }
        eps.push_back(std::move(ep));
    }
    return eps;
}

}  // namespace r3
