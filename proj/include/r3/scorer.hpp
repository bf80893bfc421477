// The learned scoring criterion: featurizes the memory bank into a
// trajectory graph, runs two graph attention convolution layers with edge
// encodings, and trains self-supervised on pseudo-labeled snapshots.
//
// Layer math, per directed edge j -> i with edge feature f:
//   logit  = LeakyReLU(a . [W h_i || W h_j || W_e f])
//   alpha  = softmax over in-edges of i plus a self-loop (zero edge feature)
//   h_i'   = ELU(sum_j alpha_ij (W h_j + W_e f_ij))
// followed by mean pooling, a linear readout and a sigmoid.
#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "r3/memory.hpp"
#include "r3/nn.hpp"
#include "r3/runner.hpp"
#include "r3/world.hpp"

namespace r3 {

constexpr int kNodeFeatureDim = 3 + 1 + kFeatureDim;  // position, recency, embedding
constexpr int kEdgeFeatureDim = 3 + 1 + 1;            // displacement, order, frontier flag
constexpr double kArenaScale = 30.0;                  // plane side; normalizes geometry features

struct TrajectoryGraph {
    struct Node {
        std::string id;
        std::vector<double> feature;  // kNodeFeatureDim
    };
    struct Edge {
        int src = 0;
        int dst = 0;
        std::vector<double> feature;  // kEdgeFeatureDim
    };
    std::vector<Node> nodes;
    std::vector<Edge> edges;
};

// ---------------------------------------------------------------------------
// Featurization

/// Snapshot of the bank as a scorer input. Visited nodes carry their
/// panorama-mean embedding and a recency value (last_visit+1)/(t+1);
/// frontier nodes carry the mean of the directional features with which
/// visited neighbors observe them, recency 0. Positions are centered on the
/// episode's start viewpoint. Directed edges: every traversed pair in
/// order (frontier flag 0) plus one visited->frontier edge per observed
/// adjacency (frontier flag 1).
inline TrajectoryGraph build_features(const MemoryBank& bank, const WorldGraph& world) {
    if (bank.empty()) throw Error("build_features: bank is empty");
    const auto& records = bank.records();
    const auto& map = bank.observed_map();
    const int now = records.back().t;
    const auto& origin = world.at(records.front().viewpoint).position;

    TrajectoryGraph g;
    std::map<std::string, int> index;

    auto add_node = [&](const std::string& id, double recency, std::vector<double> emb) {
        const auto& pos = world.at(id).position;
        TrajectoryGraph::Node node;
        node.id = id;
        node.feature = {(pos[0] - origin[0]) / kArenaScale, (pos[1] - origin[1]) / kArenaScale,
                        (pos[2] - origin[2]) / kArenaScale, recency};
        node.feature.insert(node.feature.end(), emb.begin(), emb.end());
        index[id] = static_cast<int>(g.nodes.size());
        g.nodes.push_back(std::move(node));
    };

    for (const auto& id : bank.visit_order()) {
        const Viewpoint& vp = world.at(id);
        std::vector<double> emb(world.feature_dim, 0.0);
        for (const auto& s : vp.slots)
            for (int i = 0; i < world.feature_dim; ++i) emb[i] += s.feature[i];
        for (auto& x : emb) x /= static_cast<double>(vp.slots.size());
        double recency = static_cast<double>(map.last_visit.at(id) + 1) / static_cast<double>(now + 1);
        add_node(id, recency, std::move(emb));
    }

    std::vector<std::string> frontier;
    for (const auto& id : map.nodes)
        if (!map.visit_count.count(id)) frontier.push_back(id);
    for (const auto& id : frontier) {
        std::vector<double> emb(world.feature_dim, 0.0);
        int seen_from = 0;
        for (const auto& v : map.neighbors_of(id)) {
            if (!map.visit_count.count(v)) continue;
            const DirectionSlot* s = world.at(v).slot_toward(id);
            if (!s) continue;
            for (int i = 0; i < world.feature_dim; ++i) emb[i] += s->feature[i];
            ++seen_from;
        }
        if (seen_from > 0)
            for (auto& x : emb) x /= static_cast<double>(seen_from);
        add_node(id, 0.0, std::move(emb));
    }

    auto displacement = [&](const std::string& a, const std::string& b) {
        const auto& pa = world.at(a).position;
        const auto& pb = world.at(b).position;
        return std::vector<double>{(pb[0] - pa[0]) / kArenaScale, (pb[1] - pa[1]) / kArenaScale,
                                   (pb[2] - pa[2]) / kArenaScale};
    };

    for (std::size_t k = 1; k < records.size(); ++k) {
        const auto& a = records[k - 1].viewpoint;
        const auto& b = records[k].viewpoint;
        auto f = displacement(a, b);
        f.push_back(static_cast<double>(records[k].t) / static_cast<double>(std::max(1, now)));
        f.push_back(0.0);
        g.edges.push_back({index.at(a), index.at(b), std::move(f)});
    }
    for (const auto& id : frontier) {
        for (const auto& v : map.neighbors_of(id)) {
            if (!map.visit_count.count(v)) continue;
            auto f = displacement(v, id);
            f.push_back(0.0);
            f.push_back(1.0);
            g.edges.push_back({index.at(v), index.at(id), std::move(f)});
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// Parameters

struct GatLayerParams {
    int in_dim = 0;
    int out_dim = 0;
    std::vector<double> W;   // out x in, row-major
    std::vector<double> We;  // out x kEdgeFeatureDim
    std::vector<double> a;   // 3 * out: [a_query, a_key, a_edge]
};

struct ScorerParams {
    GatLayerParams layers[2];
    std::vector<double> readout_w;
    double readout_b = 0.0;

    static ScorerParams zeros(int hidden = 32) {
        ScorerParams p;
        p.layers[0].in_dim = kNodeFeatureDim;
        p.layers[0].out_dim = hidden;
        p.layers[1].in_dim = hidden;
        p.layers[1].out_dim = hidden;
        for (auto& l : p.layers) {
            l.W.assign(static_cast<std::size_t>(l.out_dim) * l.in_dim, 0.0);
            l.We.assign(static_cast<std::size_t>(l.out_dim) * kEdgeFeatureDim, 0.0);
            l.a.assign(3 * static_cast<std::size_t>(l.out_dim), 0.0);
        }
        p.readout_w.assign(hidden, 0.0);
        return p;
    }

    static ScorerParams init(std::uint64_t seed, int hidden = 32) {
        ScorerParams p = zeros(hidden);
        Rng rng(derive_seed(seed, "scorer-init"));
        for (auto& l : p.layers) {
            const double sw = 1.0 / std::sqrt(static_cast<double>(l.in_dim));
            for (auto& x : l.W) x = rng.uniform(-sw, sw);
            const double se = 1.0 / std::sqrt(static_cast<double>(kEdgeFeatureDim));
            for (auto& x : l.We) x = rng.uniform(-se, se);
            for (auto& x : l.a) x = rng.uniform(-0.3, 0.3);
        }
        const double sr = 1.0 / std::sqrt(static_cast<double>(hidden));
        for (auto& x : p.readout_w) x = rng.uniform(-sr, sr);
        return p;
    }

    std::size_t size() const {
        std::size_t n = readout_w.size() + 1;
        for (const auto& l : layers) n += l.W.size() + l.We.size() + l.a.size();
        return n;
    }

    std::vector<double> flatten() const {
        std::vector<double> flat;
        flat.reserve(size());
        for (const auto& l : layers) {
            flat.insert(flat.end(), l.W.begin(), l.W.end());
            flat.insert(flat.end(), l.We.begin(), l.We.end());
            flat.insert(flat.end(), l.a.begin(), l.a.end());
        }
        flat.insert(flat.end(), readout_w.begin(), readout_w.end());
        flat.push_back(readout_b);
        return flat;
    }

    void unflatten(const std::vector<double>& flat) {
        if (flat.size() != size()) throw Error("scorer params: flat size mismatch");
        std::size_t o = 0;
        for (auto& l : layers) {
            std::copy_n(flat.begin() + o, l.W.size(), l.W.begin()), o += l.W.size();
            std::copy_n(flat.begin() + o, l.We.size(), l.We.begin()), o += l.We.size();
            std::copy_n(flat.begin() + o, l.a.size(), l.a.begin()), o += l.a.size();
        }
        std::copy_n(flat.begin() + o, readout_w.size(), readout_w.begin()), o += readout_w.size();
        readout_b = flat[o];
    }
};

// ---------------------------------------------------------------------------
// Forward / backward

namespace detail {

constexpr double kLeakySlope = 0.2;

struct LayerCache {
    std::vector<std::vector<double>> X;                   // inputs
    std::vector<std::vector<double>> P;                   // W x_i per node
    std::vector<std::vector<double>> R;                   // We f_e per edge
    std::vector<std::vector<int>> in_edges;               // edge ids into each node
    std::vector<std::vector<double>> logits_pre;          // per node: in-edge pre-activations + self
    std::vector<std::vector<double>> alphas;              // per node: softmax weights (last = self)
    std::vector<std::vector<double>> S;                   // pre-ELU aggregate
    std::vector<std::vector<double>> H;                   // outputs
};

inline double dot_range(const double* a, const double* b, int n) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

inline void layer_forward(const GatLayerParams& l, const TrajectoryGraph& g,
                          std::vector<std::vector<double>> X, LayerCache& c) {
    const int n = static_cast<int>(X.size());
    const int m = l.out_dim;
    c.X = std::move(X);
    c.P.assign(n, std::vector<double>(m, 0.0));
    for (int i = 0; i < n; ++i) {
        if (static_cast<int>(c.X[i].size()) != l.in_dim) throw Error("scorer: node feature dim mismatch");
        for (int o = 0; o < m; ++o)
            c.P[i][o] = dot_range(&l.W[static_cast<std::size_t>(o) * l.in_dim], c.X[i].data(), l.in_dim);
    }
    c.R.assign(g.edges.size(), std::vector<double>(m, 0.0));
    for (std::size_t e = 0; e < g.edges.size(); ++e) {
        if (static_cast<int>(g.edges[e].feature.size()) != kEdgeFeatureDim)
            throw Error("scorer: edge feature dim mismatch");
        for (int o = 0; o < m; ++o)
            c.R[e][o] = dot_range(&l.We[static_cast<std::size_t>(o) * kEdgeFeatureDim],
                                  g.edges[e].feature.data(), kEdgeFeatureDim);
    }
    c.in_edges.assign(n, {});
    for (std::size_t e = 0; e < g.edges.size(); ++e) c.in_edges[g.edges[e].dst].push_back(static_cast<int>(e));

    const double* aq = l.a.data();
    const double* ak = aq + m;
    const double* ae = ak + m;
    c.logits_pre.assign(n, {});
    c.alphas.assign(n, {});
    c.S.assign(n, std::vector<double>(m, 0.0));
    c.H.assign(n, std::vector<double>(m, 0.0));
    for (int i = 0; i < n; ++i) {
        const double qi = dot_range(aq, c.P[i].data(), m);
        auto& pre = c.logits_pre[i];
        for (int e : c.in_edges[i]) {
            int j = g.edges[static_cast<std::size_t>(e)].src;
            pre.push_back(qi + dot_range(ak, c.P[j].data(), m) +
                          dot_range(ae, c.R[static_cast<std::size_t>(e)].data(), m));
        }
        pre.push_back(qi + dot_range(ak, c.P[i].data(), m));  // self-loop, zero edge feature

        std::vector<double> logits(pre.size());
        for (std::size_t k = 0; k < pre.size(); ++k) logits[k] = leaky_relu(pre[k], kLeakySlope);
        double mx = *std::max_element(logits.begin(), logits.end());
        double sum = 0.0;
        auto& alpha = c.alphas[i];
        alpha.resize(logits.size());
        for (std::size_t k = 0; k < logits.size(); ++k) sum += (alpha[k] = std::exp(logits[k] - mx));
        for (auto& x : alpha) x /= sum;

        for (std::size_t k = 0; k < c.in_edges[i].size(); ++k) {
            int e = c.in_edges[i][k];
            int j = g.edges[static_cast<std::size_t>(e)].src;
            for (int o = 0; o < m; ++o)
                c.S[i][o] += alpha[k] * (c.P[j][o] + c.R[static_cast<std::size_t>(e)][o]);
        }
        for (int o = 0; o < m; ++o) c.S[i][o] += alpha.back() * c.P[i][o];
        for (int o = 0; o < m; ++o) c.H[i][o] = elu(c.S[i][o]);
    }
}

/// Backprop through one layer. dH is the loss gradient of the outputs;
/// returns the gradient of the inputs and accumulates parameter gradients.
inline std::vector<std::vector<double>> layer_backward(const GatLayerParams& l,
                                                       const TrajectoryGraph& g, const LayerCache& c,
                                                       const std::vector<std::vector<double>>& dH,
                                                       std::vector<double>& gW, std::vector<double>& gWe,
                                                       std::vector<double>& ga) {
    const int n = static_cast<int>(c.X.size());
    const int m = l.out_dim;
    const double* aq = l.a.data();
    const double* ak = aq + m;
    const double* ae = ak + m;
    double* gaq = ga.data();
    double* gak = gaq + m;
    double* gae = gak + m;

    std::vector<std::vector<double>> dP(n, std::vector<double>(m, 0.0));
    std::vector<std::vector<double>> dR(g.edges.size(), std::vector<double>(m, 0.0));

    for (int i = 0; i < n; ++i) {
        std::vector<double> ds(m);
        for (int o = 0; o < m; ++o) ds[o] = dH[i][o] * elu_grad(c.S[i][o]);

        const auto& alpha = c.alphas[i];
        const auto& pre = c.logits_pre[i];
        const std::size_t deg = alpha.size();  // in-edges + self

        // d(alpha_k) via the messages; then softmax + leaky backward
        std::vector<double> dalpha(deg, 0.0);
        for (std::size_t k = 0; k + 1 < deg; ++k) {
            int e = c.in_edges[i][k];
            int j = g.edges[static_cast<std::size_t>(e)].src;
            for (int o = 0; o < m; ++o)
                dalpha[k] += ds[o] * (c.P[j][o] + c.R[static_cast<std::size_t>(e)][o]);
        }
        for (int o = 0; o < m; ++o) dalpha[deg - 1] += ds[o] * c.P[i][o];

        double mix = 0.0;
        for (std::size_t k = 0; k < deg; ++k) mix += alpha[k] * dalpha[k];
        for (std::size_t k = 0; k < deg; ++k) {
            const double dlogit = alpha[k] * (dalpha[k] - mix);
            const double dpre = dlogit * leaky_relu_grad(pre[k], kLeakySlope);
            if (k + 1 < deg) {
                int e = c.in_edges[i][k];
                int j = g.edges[static_cast<std::size_t>(e)].src;
                for (int o = 0; o < m; ++o) {
                    gaq[o] += dpre * c.P[i][o];
                    gak[o] += dpre * c.P[j][o];
                    gae[o] += dpre * c.R[static_cast<std::size_t>(e)][o];
                    dP[i][o] += dpre * aq[o];
                    dP[j][o] += dpre * ak[o];
                    dR[static_cast<std::size_t>(e)][o] += dpre * ae[o];
                }
            } else {
                for (int o = 0; o < m; ++o) {
                    gaq[o] += dpre * c.P[i][o];
                    gak[o] += dpre * c.P[i][o];
                    dP[i][o] += dpre * (aq[o] + ak[o]);
                }
            }
        }

        // message terms
        for (std::size_t k = 0; k + 1 < deg; ++k) {
            int e = c.in_edges[i][k];
            int j = g.edges[static_cast<std::size_t>(e)].src;
            for (int o = 0; o < m; ++o) {
                dP[j][o] += alpha[k] * ds[o];
                dR[static_cast<std::size_t>(e)][o] += alpha[k] * ds[o];
            }
        }
        for (int o = 0; o < m; ++o) dP[i][o] += alpha[deg - 1] * ds[o];
    }

    // fold back through the projections
    std::vector<std::vector<double>> dX(n, std::vector<double>(l.in_dim, 0.0));
    for (int i = 0; i < n; ++i)
        for (int o = 0; o < m; ++o) {
            const double d = dP[i][o];
            if (d == 0.0) continue;
            double* wrow = &gW[static_cast<std::size_t>(o) * l.in_dim];
            const double* lrow = &l.W[static_cast<std::size_t>(o) * l.in_dim];
            for (int x = 0; x < l.in_dim; ++x) {
                wrow[x] += d * c.X[i][x];
                dX[i][x] += d * lrow[x];
            }
        }
    for (std::size_t e = 0; e < g.edges.size(); ++e)
        for (int o = 0; o < m; ++o) {
            const double d = dR[e][o];
            if (d == 0.0) continue;
            double* wrow = &gWe[static_cast<std::size_t>(o) * kEdgeFeatureDim];
            for (int x = 0; x < kEdgeFeatureDim; ++x) wrow[x] += d * g.edges[e].feature[x];
        }
    return dX;
}

struct ForwardCache {
    LayerCache layer[2];
    std::vector<double> pooled;
    double logit = 0.0;
    double prob = 0.5;
};

inline void scorer_forward(const ScorerParams& p, const TrajectoryGraph& g, ForwardCache& c) {
    if (g.nodes.empty()) throw Error("scorer: graph has no nodes");
    std::vector<std::vector<double>> X;
    for (const auto& node : g.nodes) X.push_back(node.feature);
    layer_forward(p.layers[0], g, std::move(X), c.layer[0]);
    layer_forward(p.layers[1], g, c.layer[0].H, c.layer[1]);
    const int m = p.layers[1].out_dim;
    c.pooled.assign(m, 0.0);
    for (const auto& h : c.layer[1].H)
        for (int o = 0; o < m; ++o) c.pooled[o] += h[o];
    for (auto& x : c.pooled) x /= static_cast<double>(g.nodes.size());
    c.logit = p.readout_b + dot_range(p.readout_w.data(), c.pooled.data(), m);
    c.prob = sigmoid(c.logit);
}

}  // namespace detail

/// Probability in (0,1) that the trajectory is anomalous.
inline double forward(const ScorerParams& params, const TrajectoryGraph& graph) {
    detail::ForwardCache c;
    detail::scorer_forward(params, graph, c);
    return c.prob;
}

/// Mean BCE over labeled graphs plus its gradient in flatten() order.
/// Optional per-class weights rebalance skewed label distributions.
inline std::pair<double, std::vector<double>> scorer_loss_and_grad(
    const ScorerParams& p, const std::vector<const TrajectoryGraph*>& graphs,
    const std::vector<int>& labels, double weight0 = 1.0, double weight1 = 1.0) {
    std::vector<double> grad(p.size(), 0.0);
    std::size_t o0 = 0;
    const std::size_t l0W = p.layers[0].W.size(), l0We = p.layers[0].We.size(), l0a = p.layers[0].a.size();
    const std::size_t l1W = p.layers[1].W.size(), l1We = p.layers[1].We.size(), l1a = p.layers[1].a.size();

    double loss = 0.0;
    for (std::size_t s = 0; s < graphs.size(); ++s) {
        const TrajectoryGraph& g = *graphs[s];
        detail::ForwardCache c;
        detail::scorer_forward(p, g, c);
        const double w = labels[s] ? weight1 : weight0;
        loss += w * bce_loss(c.prob, labels[s]);

        const double dlogit = w * (c.prob - static_cast<double>(labels[s]));
        const int m = p.layers[1].out_dim;
        std::vector<double> dpool(m);
        for (int o = 0; o < m; ++o) dpool[o] = dlogit * p.readout_w[o];
        std::size_t off = l0W + l0We + l0a + l1W + l1We + l1a;
        for (int o = 0; o < m; ++o) grad[off + o] += dlogit * c.pooled[o];
        grad[off + m] += dlogit;

        const double invn = 1.0 / static_cast<double>(g.nodes.size());
        std::vector<std::vector<double>> dH2(g.nodes.size(), std::vector<double>(m));
        for (std::size_t i = 0; i < g.nodes.size(); ++i)
            for (int o = 0; o < m; ++o) dH2[i][o] = dpool[o] * invn;

        std::vector<double> gW1(l1W, 0.0), gWe1(l1We, 0.0), ga1(l1a, 0.0);
        auto dH1 = detail::layer_backward(p.layers[1], g, c.layer[1], dH2, gW1, gWe1, ga1);
        std::vector<double> gW0(l0W, 0.0), gWe0(l0We, 0.0), ga0(l0a, 0.0);
        detail::layer_backward(p.layers[0], g, c.layer[0], dH1, gW0, gWe0, ga0);

        o0 = 0;
        for (std::size_t i = 0; i < l0W; ++i) grad[o0 + i] += gW0[i];
        o0 += l0W;
        for (std::size_t i = 0; i < l0We; ++i) grad[o0 + i] += gWe0[i];
        o0 += l0We;
        for (std::size_t i = 0; i < l0a; ++i) grad[o0 + i] += ga0[i];
        o0 += l0a;
        for (std::size_t i = 0; i < l1W; ++i) grad[o0 + i] += gW1[i];
        o0 += l1W;
        for (std::size_t i = 0; i < l1We; ++i) grad[o0 + i] += gWe1[i];
        o0 += l1We;
        for (std::size_t i = 0; i < l1a; ++i) grad[o0 + i] += ga1[i];
    }
    const double inv = 1.0 / static_cast<double>(graphs.size());
    loss *= inv;
    for (auto& g : grad) g *= inv;
    return {loss, grad};
}

// ---------------------------------------------------------------------------
// Pseudo-labeling and snapshot collection

/// 0 (nominal) iff the episode succeeded or every visited viewpoint lies on
/// the ground-truth path; 1 (anomalous) otherwise.
inline int pseudo_label(const std::vector<std::string>& visited,
                        const std::vector<std::string>& gt_path, bool success) {
    if (success) return 0;
    std::set<std::string> on_path(gt_path.begin(), gt_path.end());
    for (const auto& v : visited)
        if (!on_path.count(v)) return 1;
    return 0;
}

struct LabeledSnapshot {
    TrajectoryGraph graph;
    int label = 0;
    std::string episode_id;
    std::string world_id;  // holdout splits leave whole worlds out
    int t = 0;
    std::vector<std::string> visited;  // trajectory prefix, for audit
    bool success = false;
    std::vector<std::string> gt_path;
};

/// One snapshot per timestep of a Runner-alone rollout of each episode.
/// Labels are assigned once the episode ends.
inline std::vector<LabeledSnapshot> collect_snapshots(
    const std::vector<std::pair<const WorldGraph*, std::vector<Episode>>>& training_sets,
    const Policy& policy, int step_cap = 40) {
    std::vector<LabeledSnapshot> out;
    for (const auto& [world_ptr, episodes] : training_sets) {
        const WorldGraph& world = *world_ptr;
        for (const auto& ep : episodes) {
            MemoryBank bank;
            double heading = 0.0;
            std::string cur = ep.start;
            std::vector<TrajectoryGraph> graphs;
            std::vector<std::string> visited{cur};

            Observation obs = observe(world, cur, heading);
            StepRecord first;
            first.t = 0;
            first.viewpoint = cur;
            first.mode = Mode::Runner;
            first.entry = oriented_entry(world, cur, heading);
            for (const auto& c : obs.candidates) first.neighbors.push_back(*c.slot.navigable_to);
            bank.append(std::move(first));
            graphs.push_back(build_features(bank, world));

            while (bank.trajectory_len() < step_cap) {
                obs = observe(world, cur, heading);
                Action action = policy.decide(ep.instruction, obs, bank);
                if (action.is_stop()) break;
                double rel = 0.0;
                std::vector<std::string> slot_tags;
                for (const auto& c : obs.candidates)
                    if (*c.slot.navigable_to == action.target) {
                        rel = c.relative_heading;
                        slot_tags = c.slot.tags;
                    }
                heading = wrap_angle(heading + rel);
                cur = action.target;

                Observation next_obs = observe(world, cur, heading);
                StepRecord rec;
                rec.t = bank.records().back().t + 1;
                rec.viewpoint = cur;
                rec.action = action;
                rec.action_rel_heading = rel;
                rec.action_slot_tags = std::move(slot_tags);
                rec.mode = Mode::Runner;
                rec.entry = oriented_entry(world, cur, heading);
                for (const auto& c : next_obs.candidates) rec.neighbors.push_back(*c.slot.navigable_to);
                bank.append(std::move(rec));
                visited.push_back(cur);
                graphs.push_back(build_features(bank, world));
            }

            const bool success = geodesic(world, cur, ep.goal).distance < 3.0;
            for (std::size_t t = 0; t < graphs.size(); ++t) {
                LabeledSnapshot snap;
                snap.graph = std::move(graphs[t]);
                snap.visited.assign(visited.begin(), visited.begin() + static_cast<long>(t) + 1);
                snap.label = pseudo_label(snap.visited, ep.gt_path, success);
                snap.episode_id = ep.id;
                snap.world_id = "world_" + std::to_string(world.seed);
                snap.t = static_cast<int>(t);
                snap.success = success;
                snap.gt_path = ep.gt_path;
                out.push_back(std::move(snap));
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Training

struct ScorerHyper {
    int epochs = 200;
    double lr = 1e-2;
    std::uint64_t seed = 1;
    int hidden = 32;
    double holdout_frac = 0.2;
    int patience = 30;
    bool balance_classes = true;   // reweight BCE so both labels carry equal mass
    double weight_decay = 3e-3;    // decoupled; damps world-specific feature memorization
};

struct ScorerTrainResult {
    ScorerParams params;
    std::vector<double> train_losses;
    std::vector<double> holdout_losses;
    double holdout_auc = 0.0;
};

inline ScorerTrainResult train_scorer(const std::vector<LabeledSnapshot>& snapshots,
                                      const ScorerHyper& hyper = {}) {
    bool has0 = false, has1 = false;
    for (const auto& s : snapshots) (s.label ? has1 : has0) = true;
    if (!has0 || !has1) throw Error("train_scorer: both labels must be present");

    // Hold out whole worlds when the collection spans several, so early
    // stopping tracks cross-world generalization instead of rewarding
    // memorized per-world features. Single-world sets split by snapshot.
    std::set<std::string> world_ids;
    for (const auto& s : snapshots) world_ids.insert(s.world_id);
    std::set<std::string> held_worlds;
    Rng rng(derive_seed(hyper.seed, "scorer-split"));
    if (world_ids.size() >= 3) {
        std::vector<std::string> worlds(world_ids.begin(), world_ids.end());
        rng.shuffle(worlds);
        std::size_t want = std::max<std::size_t>(
            1, static_cast<std::size_t>(hyper.holdout_frac * static_cast<double>(snapshots.size())));
        std::size_t held = 0;
        for (const auto& w : worlds) {
            if (held >= want || held_worlds.size() + 1 >= worlds.size()) break;
            held_worlds.insert(w);
            for (const auto& s : snapshots) held += s.world_id == w ? 1 : 0;
        }
    }

    std::vector<const TrajectoryGraph*> train_g, hold_g;
    std::vector<int> train_y, hold_y;
    if (!held_worlds.empty()) {
        for (const auto& s : snapshots) {
            if (held_worlds.count(s.world_id)) {
                hold_g.push_back(&s.graph);
                hold_y.push_back(s.label);
            } else {
                train_g.push_back(&s.graph);
                train_y.push_back(s.label);
            }
        }
    } else {
        std::vector<std::size_t> order(snapshots.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng.shuffle(order);
        std::size_t n_hold = std::max<std::size_t>(
            1, static_cast<std::size_t>(hyper.holdout_frac * static_cast<double>(order.size())));
        if (n_hold >= order.size()) n_hold = order.size() / 2;
        for (std::size_t i = 0; i < order.size(); ++i) {
            const auto& s = snapshots[order[i]];
            if (i < n_hold) {
                hold_g.push_back(&s.graph);
                hold_y.push_back(s.label);
            } else {
                train_g.push_back(&s.graph);
                train_y.push_back(s.label);
            }
        }
    }
    // degenerate holdout folds back into training checks
    bool h0 = false, h1 = false, t0 = false, t1 = false;
    for (int y : hold_y) (y ? h1 : h0) = true;
    for (int y : train_y) (y ? t1 : t0) = true;
    if (!t0 || !t1) throw Error("train_scorer: training fold lost a label; use more snapshots");

    double weight0 = 1.0, weight1 = 1.0;
    if (hyper.balance_classes) {
        double n0 = 0, n1 = 0;
        for (int y : train_y) (y ? n1 : n0) += 1.0;
        const double n = n0 + n1;
        weight0 = n / (2.0 * n0);
        weight1 = n / (2.0 * n1);
    }

    ScorerParams params = ScorerParams::init(hyper.seed, hyper.hidden);
    std::vector<double> flat = params.flatten();
    Adam opt(flat.size(), hyper.lr, 0.9, 0.999, 1e-8, hyper.weight_decay);

    ScorerTrainResult result;
    std::vector<double> best_flat = flat;
    double best_hold = std::numeric_limits<double>::max();
    int since_best = 0;
    for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
        params.unflatten(flat);
        auto [loss, grad] = scorer_loss_and_grad(params, train_g, train_y, weight0, weight1);
        if (!std::isfinite(loss)) throw Error("train_scorer: loss diverged at epoch " + std::to_string(epoch));
        result.train_losses.push_back(loss);

        double hold_loss = 0.0;
        for (std::size_t i = 0; i < hold_g.size(); ++i)
            hold_loss += (hold_y[i] ? weight1 : weight0) * bce_loss(forward(params, *hold_g[i]), hold_y[i]);
        hold_loss /= static_cast<double>(std::max<std::size_t>(1, hold_g.size()));
        result.holdout_losses.push_back(hold_loss);
        if (hold_loss < best_hold - 1e-6) {
            best_hold = hold_loss;
            best_flat = flat;
            since_best = 0;
        } else if (++since_best > hyper.patience) {
            break;
        }
        opt.step(flat, grad);
    }
    params.unflatten(best_flat);
    result.params = params;

    if (h0 && h1) {
        std::vector<double> scores;
        for (const auto* g : hold_g) scores.push_back(forward(result.params, *g));
        result.holdout_auc = auc_score(hold_y, scores);
    } else {
        result.holdout_auc = 0.5;
    }
    return result;
}

/// Composition of build_features and forward. Pure.
inline double score(const ScorerParams& params, const MemoryBank& bank, const WorldGraph& world) {
    return forward(params, build_features(bank, world));
}

// ---------------------------------------------------------------------------
// Persistence

constexpr const char* kScorerCkptSchema = "r3.scorer.v1";

inline void save_scorer(const ScorerParams& p, const std::string& path) {
    NamedArrays arrays;
    arrays.schema = kScorerCkptSchema;
    for (int l = 0; l < 2; ++l) {
        const auto& layer = p.layers[l];
        const std::string prefix = "layer" + std::to_string(l) + ".";
        arrays.put(prefix + "W",
                   {static_cast<std::size_t>(layer.out_dim), static_cast<std::size_t>(layer.in_dim)},
                   layer.W);
        arrays.put(prefix + "We", {static_cast<std::size_t>(layer.out_dim), kEdgeFeatureDim}, layer.We);
        arrays.put(prefix + "a", {3, static_cast<std::size_t>(layer.out_dim)}, layer.a);
    }
    arrays.put("readout.w", {p.readout_w.size()}, p.readout_w);
    arrays.put("readout.b", {1}, {p.readout_b});
    arrays.save(path);
}

inline ScorerParams load_scorer(const std::string& path) {
    NamedArrays arrays = NamedArrays::load(path, kScorerCkptSchema);
    ScorerParams p;
    for (int l = 0; l < 2; ++l) {
        const std::string prefix = "layer" + std::to_string(l) + ".";
        auto& layer = p.layers[l];
        layer.out_dim = static_cast<int>(arrays.shape(prefix + "W")[0]);
        layer.in_dim = static_cast<int>(arrays.shape(prefix + "W")[1]);
        layer.W = arrays.data(prefix + "W");
        layer.We = arrays.data(prefix + "We");
        layer.a = arrays.data(prefix + "a");
    }
    p.readout_w = arrays.data("readout.w");
    p.readout_b = arrays.data("readout.b")[0];
    if (p.layers[0].in_dim != kNodeFeatureDim || p.layers[1].in_dim != p.layers[0].out_dim ||
        static_cast<int>(p.readout_w.size()) != p.layers[1].out_dim)
        throw Error(path + ": inconsistent scorer checkpoint shapes");
    return p;
}

// ---------------------------------------------------------------------------
// Snapshot persistence (JSONL)

inline Json snapshot_to_json(const LabeledSnapshot& s) {
    Json nodes = Json::array();
    for (const auto& n : s.graph.nodes) nodes.push_back({{"id", n.id}, {"feature", n.feature}});
    Json edges = Json::array();
    for (const auto& e : s.graph.edges) edges.push_back({{"src", e.src}, {"dst", e.dst}, {"feature", e.feature}});
    return Json{{"episode", s.episode_id}, {"world", s.world_id},  {"t", s.t},
                {"label", s.label},        {"visited", s.visited}, {"success", s.success},
                {"gt_path", s.gt_path},    {"nodes", nodes},       {"edges", edges}};
}

inline LabeledSnapshot snapshot_from_json(const Json& j) {
    LabeledSnapshot s;
    try {
        s.episode_id = j.at("episode").get<std::string>();
        s.world_id = j.at("world").get<std::string>();
        s.t = j.at("t").get<int>();
        s.label = j.at("label").get<int>();
        s.visited = j.at("visited").get<std::vector<std::string>>();
        s.success = j.at("success").get<bool>();
        s.gt_path = j.at("gt_path").get<std::vector<std::string>>();
        for (const auto& n : j.at("nodes"))
            s.graph.nodes.push_back({n.at("id").get<std::string>(), n.at("feature").get<std::vector<double>>()});
        for (const auto& e : j.at("edges"))
            s.graph.edges.push_back({e.at("src").get<int>(), e.at("dst").get<int>(),
                                     e.at("feature").get<std::vector<double>>()});
    } catch (const Json::exception& e) {
        throw Error(std::string("malformed snapshot JSON: ") + e.what());
    }
    return s;
}

inline void save_snapshots(const std::vector<LabeledSnapshot>& snaps, const std::string& path) {
    std::string out;
    for (const auto& s : snaps) out += snapshot_to_json(s).dump() + "\n";
    write_text_file(path, out);
}

inline std::vector<LabeledSnapshot> load_snapshots(const std::string& path) {
    std::istringstream in(read_text_file(path));
    std::vector<LabeledSnapshot> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            out.push_back(snapshot_from_json(Json::parse(line)));
        } catch (const Json::exception& e) {
            throw Error(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace r3
