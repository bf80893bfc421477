// Shared test helpers: programmatic worlds with exact edges and tags, a
// finite-difference oracle, and temp-file plumbing.
#pragma once

#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "r3/world.hpp"

namespace r3test {

using namespace r3;

/// Build a world with exact positions, edges and per-slot tags. Every
/// viewpoint gets all 12 heading bins; non-edge slots carry the filler tag.
/// Slot features are small deterministic values derived from (id, bin).
struct WorldBuilder {
    std::vector<std::pair<std::string, std::array<double, 3>>> nodes;
    std::vector<std::pair<std::string, std::string>> edges;
    // tags for the directional slot a->b
    std::map<std::pair<std::string, std::string>, std::vector<std::string>> edge_tags;
    // tags spread over the non-navigable slots of a viewpoint
    std::map<std::string, std::vector<std::string>> ambient_tags;
    std::string filler_tag = "wall";

    WorldBuilder& node(std::string id, double x, double y) {
        nodes.push_back({std::move(id), {x, y, 0.0}});
        return *this;
    }
    WorldBuilder& edge(std::string a, std::string b) {
        edges.push_back({std::move(a), std::move(b)});
        return *this;
    }
    WorldBuilder& tag_edge(std::string a, std::string b, std::vector<std::string> tags) {
        edge_tags[{std::move(a), std::move(b)}] = std::move(tags);
        return *this;
    }
    WorldBuilder& tag_at(std::string id, std::vector<std::string> tags) {
        ambient_tags[std::move(id)] = std::move(tags);
        return *this;
    }

    WorldGraph build() const {
        WorldGraph world;
        world.seed = 0;
        world.feature_dim = kFeatureDim;
        std::map<std::string, std::array<double, 3>> pos;
        for (const auto& [id, p] : nodes) pos[id] = p;
        std::map<std::string, std::vector<std::string>> adj;
        for (const auto& [a, b] : edges) {
            adj[a].push_back(b);
            adj[b].push_back(a);
        }
        for (const auto& [id, p] : nodes) {
            Viewpoint vp;
            vp.id = id;
            vp.position = p;
            std::array<std::string, kHeadingBins> owner{};
            for (const auto& nbr : adj[id]) {
                int ideal = nearest_bin(bearing(p, pos.at(nbr)));
                for (int off = 0; off < kHeadingBins; ++off) {
                    int b1 = (ideal + off) % kHeadingBins;
                    int b2 = ((ideal - off) % kHeadingBins + kHeadingBins) % kHeadingBins;
                    if (owner[b1].empty()) {
                        owner[b1] = nbr;
                        break;
                    }
                    if (owner[b2].empty()) {
                        owner[b2] = nbr;
                        break;
                    }
                }
            }
            std::size_t ambient_i = 0;
            for (int b = 0; b < kHeadingBins; ++b) {
                DirectionSlot s;
                s.heading = bin_center(b);
                Rng rng(fnv1a(id) ^ static_cast<std::uint64_t>(b * 977));
                s.feature.resize(kFeatureDim);
                for (auto& x : s.feature) x = rng.uniform(-1.0, 1.0);
                if (!owner[b].empty()) {
                    s.navigable_to = owner[b];
                    auto it = edge_tags.find({id, owner[b]});
                    s.tags = it != edge_tags.end() ? it->second : std::vector<std::string>{filler_tag};
                } else {
                    auto it = ambient_tags.find(id);
                    if (it != ambient_tags.end() && ambient_i < it->second.size())
                        s.tags = {it->second[ambient_i++]};
                    else
                        s.tags = {filler_tag};
                }
                vp.slots.push_back(std::move(s));
            }
            std::sort(vp.slots.begin(), vp.slots.end(),
                      [](const DirectionSlot& a, const DirectionSlot& b) { return a.heading < b.heading; });
            world.viewpoints.emplace(id, std::move(vp));
        }
        validate_world(world);
        return world;
    }
};

/// Max relative error between an analytic gradient and central finite
/// differences of the loss, over every parameter.
inline double fd_max_rel_err(std::vector<double> flat,
                             const std::function<double(const std::vector<double>&)>& loss,
                             const std::vector<double>& analytic, double h = 1e-6) {
    double worst = 0.0;
    for (std::size_t i = 0; i < flat.size(); ++i) {
        const double keep = flat[i];
        flat[i] = keep + h;
        const double up = loss(flat);
        flat[i] = keep - h;
        const double down = loss(flat);
        flat[i] = keep;
        const double fd = (up - down) / (2.0 * h);
        const double denom = std::max({std::abs(fd), std::abs(analytic[i]), 1e-3});
        worst = std::max(worst, std::abs(fd - analytic[i]) / denom);
    }
    return worst;
}

/// Fresh temp directory, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        base_ = std::filesystem::temp_directory_path() /
                ("r3_" + tag + "_" + std::to_string(::getpid()));
        std::filesystem::remove_all(base_);
        std::filesystem::create_directories(base_);
    }
    ~TempDir() { std::filesystem::remove_all(base_); }
    std::string path(const std::string& name) const { return (base_ / name).string(); }

private:
    std::filesystem::path base_;
};

inline std::string tests_dir() { return R3_TESTS_DIR; }

}  // namespace r3test
