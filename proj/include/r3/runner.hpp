// The fast-thinking policy. A pluggable decision interface with two
// reference implementations: a configurable imperfect heuristic whose
// anomaly rates are controlled, and a small behavior-cloned scorer trained
// with teacher forcing on ground-truth paths.
#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "r3/memory.hpp"
#include "r3/nn.hpp"
#include "r3/world.hpp"

namespace r3 {

class Policy {
public:
    virtual ~Policy() = default;
    /// Stop, or a Move to one of obs.candidates. Deterministic given the
    /// policy, its seed, and the inputs.
    virtual Action decide(const Instruction& instruction, const Observation& obs,
                          const MemoryBank& bank) const = 0;
};

// ---------------------------------------------------------------------------
// Instruction parsing against the versioned templates.

/// Ordered movement-clause tags of a FineGrained instruction, or the single
/// target of a CoarseGrained one.
inline std::vector<std::string> instruction_tags(const Instruction& instr) {
    const std::string& s = instr.text;
    std::vector<std::string> out;
    auto read_until_break = [&](std::size_t pos) {
        std::size_t end = s.find_first_of(",.", pos);
        if (end == std::string::npos) end = s.size();
        return s.substr(pos, end - pos);
    };
    if (instr.style == InstructionStyle::CoarseGrained) {
        const std::string lead = "Bring me the ";
        std::size_t p = s.find(lead);
        if (p != std::string::npos) out.push_back(read_until_break(p + lead.size()));
        return out;
    }
    const std::string first = "Walk to the ";
    const std::string next = "then head to the ";
    std::size_t p = s.find(first);
    if (p != std::string::npos) out.push_back(read_until_break(p + first.size()));
    while ((p = s.find(next, p == std::string::npos ? 0 : p + 1)) != std::string::npos)
        out.push_back(read_until_break(p + next.size()));
    return out;
}

/// Bag-of-tags indicator vector over a sorted tag vocabulary.
inline std::vector<double> instruction_embedding(const std::vector<std::string>& vocab,
                                                 const Instruction& instr) {
    std::vector<double> emb(vocab.size(), 0.0);
    for (const auto& tag : instruction_tags(instr)) {
        auto it = std::lower_bound(vocab.begin(), vocab.end(), tag);
        if (it != vocab.end() && *it == tag) emb[static_cast<std::size_t>(it - vocab.begin())] = 1.0;
    }
    return emb;
}

// ---------------------------------------------------------------------------
// Heuristic policy

/// Greedy tag-following policy with seeded failure knobs. With all knobs at
/// zero it follows FineGrained instructions along the ground-truth path and
/// stops once every movement clause is matched. Progress is tag-matched:
/// a clause is consumed only when the traversed slot carried its tag, so
/// wandering does not silently exhaust the instruction. After a bounce the
/// policy can retake the last matched clause (breadcrumb recovery); when
/// truly lost it wanders aimlessly over random candidates, which is the
/// anomaly signature the switching criteria are built to catch. Noise picks
/// a random candidate, trap_prob bounces back along the previous edge, and
/// premature_stop_prob emits an early Stop. All randomness is hashed from
/// (seed, viewpoint, timestep), so decide is reentrant and runs replay
/// identically.
class HeuristicPolicy : public Policy {
public:
    HeuristicPolicy(double noise, double trap_prob, double premature_stop_prob, std::uint64_t seed)
        : noise_(noise), trap_prob_(trap_prob), premature_stop_(premature_stop_prob), seed_(seed) {
        for (double p : {noise, trap_prob, premature_stop_prob})
            if (p < 0.0 || p > 1.0) throw Error("heuristic_policy: probabilities must be in [0,1]");
    }

    /// Count of instruction clauses consumed by the recorded actions.
    static std::size_t clause_progress(const std::vector<std::string>& tags,
                                       const MemoryBank& bank) {
        std::size_t progress = 0;
        for (const auto& r : bank.records()) {
            if (!r.action || progress >= tags.size()) continue;
            if (std::find(r.action_slot_tags.begin(), r.action_slot_tags.end(), tags[progress]) !=
                r.action_slot_tags.end())
                ++progress;
        }
        return progress;
    }

    Action decide(const Instruction& instruction, const Observation& obs,
                  const MemoryBank& bank) const override {
        const int t = bank.empty() ? 0 : bank.records().back().t;
        Rng rng(derive_seed(seed_, fnv1a(obs.viewpoint) ^ (static_cast<std::uint64_t>(t) *
                                                           0x9E3779B97F4A7C15ULL)));
        const double u_stop = rng.uniform();
        const double u_trap = rng.uniform();
        const double u_noise = rng.uniform();
        const double u_pick = rng.uniform();

        if (u_stop < premature_stop_) return Action::stop();
        if (obs.candidates.empty()) return Action::stop();

        const auto tags = instruction_tags(instruction);
        std::size_t progress = 0;
        if (instruction.style == InstructionStyle::FineGrained) {
            progress = clause_progress(tags, bank);
            if (progress >= tags.size()) return Action::stop();
        } else if (!tags.empty() && sees_tag_beside(obs, tags.front())) {
            // the target sits in a non-navigable view: it is here, not ahead
            return Action::stop();
        }

        // bounce back along the last traversed edge
        if (bank.records().size() >= 2 && u_trap < trap_prob_) {
            const auto& prev = bank.records()[bank.records().size() - 2].viewpoint;
            for (const auto& c : obs.candidates)
                if (*c.slot.navigable_to == prev) return Action::move(prev);
        }

        if (u_noise < noise_) {
            std::size_t i = static_cast<std::size_t>(u_pick * static_cast<double>(obs.candidates.size())) %
                            obs.candidates.size();
            return Action::move(*obs.candidates[i].slot.navigable_to);
        }

        auto match = [&](const std::string& tag) -> const ObservedSlot* {
            const ObservedSlot* best = nullptr;
            for (const auto& c : obs.candidates) {
                if (std::find(c.slot.tags.begin(), c.slot.tags.end(), tag) == c.slot.tags.end())
                    continue;
                if (!best || better_heading(c, *best)) best = &c;
            }
            return best;
        };

        const ObservedSlot* best = nullptr;
        if (instruction.style == InstructionStyle::FineGrained) {
            best = match(tags[progress]);
            if (!best && progress > 0) best = match(tags[progress - 1]);  // breadcrumb recovery
        } else if (!tags.empty()) {
            best = match(tags.front());
        }
        if (!best) {
            // lost: aimless wandering
            std::size_t i = static_cast<std::size_t>(u_pick * static_cast<double>(obs.candidates.size())) %
                            obs.candidates.size();
            best = &obs.candidates[i];
        }
        return Action::move(*best->slot.navigable_to);
    }

private:
    static bool sees_tag_beside(const Observation& obs, const std::string& tag) {
        for (const auto& s : obs.slots)
            if (!s.slot.navigable_to &&
                std::find(s.slot.tags.begin(), s.slot.tags.end(), tag) != s.slot.tags.end())
                return true;
        return false;
    }

    static bool better_heading(const ObservedSlot& a, const ObservedSlot& b) {
        double da = std::abs(a.relative_heading), db = std::abs(b.relative_heading);
        if (da != db) return da < db;
        return *a.slot.navigable_to < *b.slot.navigable_to;
    }

    double noise_, trap_prob_, premature_stop_;
    std::uint64_t seed_;
};

inline std::shared_ptr<Policy> heuristic_policy(double noise, double trap_prob,
                                                double premature_stop_prob, std::uint64_t seed) {
    return std::make_shared<HeuristicPolicy>(noise, trap_prob, premature_stop_prob, seed);
}

// ---------------------------------------------------------------------------
// Behavior-cloned policy: a 2-layer feedforward scorer over
// instruction embedding + candidate slot feature + relative-heading encoding,
// with a trained stop bias. Stop is scored as a pseudo-candidate whose
// feature is the panorama mean.

struct PolicyParams {
    std::vector<std::string> vocab;  // sorted tag vocabulary the embedding indexes
    int hidden = 32;
    int feature_dim = kFeatureDim;
    std::vector<double> w1;  // hidden x in, row-major
    std::vector<double> b1;  // hidden
    std::vector<double> w2;  // hidden
    double b2 = 0.0;
    double stop_bias = 0.0;

    int input_dim() const { return static_cast<int>(vocab.size()) + feature_dim + 2; }

    std::size_t size() const { return w1.size() + b1.size() + w2.size() + 2; }

    std::vector<double> flatten() const {
        std::vector<double> flat;
        flat.reserve(size());
        flat.insert(flat.end(), w1.begin(), w1.end());
        flat.insert(flat.end(), b1.begin(), b1.end());
        flat.insert(flat.end(), w2.begin(), w2.end());
        flat.push_back(b2);
        flat.push_back(stop_bias);
        return flat;
    }

    void unflatten(const std::vector<double>& flat) {
        if (flat.size() != size()) throw Error("policy params: flat size mismatch");
        std::size_t o = 0;
        std::copy_n(flat.begin() + o, w1.size(), w1.begin()), o += w1.size();
        std::copy_n(flat.begin() + o, b1.size(), b1.begin()), o += b1.size();
        std::copy_n(flat.begin() + o, w2.size(), w2.begin()), o += w2.size();
        b2 = flat[o++];
        stop_bias = flat[o];
    }

    static PolicyParams zeros(std::vector<std::string> vocab, int hidden = 32,
                              int feature_dim = kFeatureDim) {
        PolicyParams p;
        p.vocab = std::move(vocab);
        p.hidden = hidden;
        p.feature_dim = feature_dim;
        p.w1.assign(static_cast<std::size_t>(hidden) * p.input_dim(), 0.0);
        p.b1.assign(hidden, 0.0);
        p.w2.assign(hidden, 0.0);
        return p;
    }

    static PolicyParams init(std::vector<std::string> vocab, std::uint64_t seed, int hidden = 32,
                             int feature_dim = kFeatureDim) {
        PolicyParams p = zeros(std::move(vocab), hidden, feature_dim);
        Rng rng(derive_seed(seed, "bc-init"));
        const double scale = 1.0 / std::sqrt(static_cast<double>(p.input_dim()));
        for (auto& x : p.w1) x = rng.uniform(-scale, scale);
        for (auto& x : p.w2) x = rng.uniform(-0.1, 0.1);
        return p;
    }

    /// Scalar score of one input vector: w2 . tanh(W1 x + b1) + b2.
    double mlp(const std::vector<double>& x) const {
        double out = b2;
        const int in = input_dim();
        for (int h = 0; h < hidden; ++h) {
            double z = b1[h];
            const double* row = &w1[static_cast<std::size_t>(h) * in];
            for (int i = 0; i < in; ++i) z += row[i] * x[i];
            out += w2[h] * std::tanh(z);
        }
        return out;
    }
};

/// One teacher-forcing decision point: candidate inputs + the expert label.
struct BcSample {
    std::vector<std::vector<double>> candidate_inputs;
    std::vector<double> stop_input;
    int label = 0;  // index into candidates, or candidates.size() for Stop
};

namespace detail {

inline std::vector<double> bc_input(const std::vector<double>& emb, const std::vector<double>& feature,
                                    double rel_heading) {
    std::vector<double> x;
    x.reserve(emb.size() + feature.size() + 2);
    x.insert(x.end(), emb.begin(), emb.end());
    x.insert(x.end(), feature.begin(), feature.end());
    x.push_back(std::cos(rel_heading));
    x.push_back(std::sin(rel_heading));
    return x;
}

inline std::vector<double> panorama_mean(const Observation& obs, int feature_dim) {
    std::vector<double> mean(feature_dim, 0.0);
    if (obs.slots.empty()) return mean;
    for (const auto& s : obs.slots)
        for (int i = 0; i < feature_dim; ++i) mean[i] += s.slot.feature[i];
    for (auto& x : mean) x /= static_cast<double>(obs.slots.size());
    return mean;
}

inline BcSample bc_sample(const PolicyParams& p, const Instruction& instr, const Observation& obs) {
    auto emb = instruction_embedding(p.vocab, instr);
    BcSample s;
    for (const auto& c : obs.candidates)
        s.candidate_inputs.push_back(bc_input(emb, c.slot.feature, c.relative_heading));
    s.stop_input = bc_input(emb, panorama_mean(obs, p.feature_dim), 0.0);
    return s;
}

}  // namespace detail

/// Mean cross-entropy of the expert labels under softmax over candidate
/// scores (stop scored with the trained bias added), plus its gradient in
/// flatten() order.
inline std::pair<double, std::vector<double>> bc_loss_and_grad(const PolicyParams& p,
                                                               const std::vector<BcSample>& batch) {
    const int in = p.input_dim();
    const int hidden = p.hidden;
    std::vector<double> grad(p.size(), 0.0);
    double* gW1 = grad.data();
    double* gb1 = gW1 + p.w1.size();
    double* gw2 = gb1 + p.b1.size();
    double* gb2 = gw2 + p.w2.size();
    double* gstop = gb2 + 1;

    double loss = 0.0;
    for (const auto& sample : batch) {
        const std::size_t n_opts = sample.candidate_inputs.size() + 1;
        std::vector<const std::vector<double>*> inputs;
        for (const auto& c : sample.candidate_inputs) inputs.push_back(&c);
        inputs.push_back(&sample.stop_input);

        // forward, caching hidden pre-activations
        std::vector<std::vector<double>> zs(n_opts, std::vector<double>(hidden));
        std::vector<double> logits(n_opts);
        for (std::size_t o = 0; o < n_opts; ++o) {
            const auto& x = *inputs[o];
            double out = p.b2;
            for (int h = 0; h < hidden; ++h) {
                double z = p.b1[h];
                const double* row = &p.w1[static_cast<std::size_t>(h) * in];
                for (int i = 0; i < in; ++i) z += row[i] * x[i];
                zs[o][h] = z;
                out += p.w2[h] * std::tanh(z);
            }
            logits[o] = out + (o + 1 == n_opts ? p.stop_bias : 0.0);
        }
        double mx = *std::max_element(logits.begin(), logits.end());
        double sum = 0.0;
        std::vector<double> probs(n_opts);
        for (std::size_t o = 0; o < n_opts; ++o) sum += (probs[o] = std::exp(logits[o] - mx));
        for (auto& q : probs) q /= sum;
        loss += -std::log(std::max(probs[static_cast<std::size_t>(sample.label)], 1e-300));

        // backward: dL/dlogit_o = p_o - [o == label]
        for (std::size_t o = 0; o < n_opts; ++o) {
            double dlogit = probs[o] - (static_cast<int>(o) == sample.label ? 1.0 : 0.0);
            const auto& x = *inputs[o];
            if (o + 1 == n_opts) *gstop += dlogit;
            *gb2 += dlogit;
            for (int h = 0; h < hidden; ++h) {
                double th = std::tanh(zs[o][h]);
                gw2[h] += dlogit * th;
                double dz = dlogit * p.w2[h] * (1.0 - th * th);
                gb1[h] += dz;
                double* grow = &gW1[static_cast<std::size_t>(h) * in];
                for (int i = 0; i < in; ++i) grow[i] += dz * x[i];
            }
        }
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    loss *= inv;
    for (auto& g : grad) g *= inv;
    return {loss, grad};
}

/// Expert decision points along every gt_path, teacher-forced.
inline std::vector<BcSample> bc_dataset(const PolicyParams& p, const std::vector<Episode>& episodes,
                                        const WorldGraph& world) {
    std::vector<BcSample> out;
    for (const auto& ep : episodes) {
        double heading = 0.0;
        for (std::size_t i = 0; i < ep.gt_path.size(); ++i) {
            Observation obs = observe(world, ep.gt_path[i], heading);
            BcSample s = detail::bc_sample(p, ep.instruction, obs);
            if (i + 1 < ep.gt_path.size()) {
                int label = -1;
                for (std::size_t c = 0; c < obs.candidates.size(); ++c)
                    if (*obs.candidates[c].slot.navigable_to == ep.gt_path[i + 1])
                        label = static_cast<int>(c);
                if (label < 0) throw Error("bc_dataset: gt hop is not a candidate in '" + ep.id + "'");
                s.label = label;
                heading = wrap_angle(obs.candidates[static_cast<std::size_t>(label)].slot.heading);
            } else {
                s.label = static_cast<int>(obs.candidates.size());  // stop
            }
            out.push_back(std::move(s));
        }
    }
    return out;
}

struct BcHyper {
    int epochs = 200;
    double lr = 5e-2;
    std::uint64_t seed = 1;
    int hidden = 32;
};

struct BcTrainResult {
    PolicyParams params;
    std::vector<double> loss_history;
};

inline BcTrainResult train_bc(const std::vector<Episode>& episodes, const WorldGraph& world,
                              const BcHyper& hyper = {}) {
    if (episodes.empty()) throw Error("train_bc: need at least one episode");
    for (const auto& ep : episodes) validate_episode(ep, world);
    PolicyParams params = PolicyParams::init(world.tag_vocabulary(), hyper.seed, hyper.hidden,
                                             world.feature_dim);
    auto batch = bc_dataset(params, episodes, world);
    std::vector<double> flat = params.flatten();
    Adam opt(flat.size(), hyper.lr);
    BcTrainResult result;
    for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
        params.unflatten(flat);
        auto [loss, grad] = bc_loss_and_grad(params, batch);
        if (!std::isfinite(loss))
            throw Error("train_bc: loss diverged at epoch " + std::to_string(epoch));
        result.loss_history.push_back(loss);
        opt.step(flat, grad);
    }
    params.unflatten(flat);
    result.params = std::move(params);
    return result;
}

class BcPolicy : public Policy {
public:
    explicit BcPolicy(PolicyParams params) : params_(std::move(params)) {}

    Action decide(const Instruction& instruction, const Observation& obs,
                  const MemoryBank& bank) const override {
        (void)bank;
        if (obs.candidates.empty()) return Action::stop();
        BcSample s = detail::bc_sample(params_, instruction, obs);
        double best = params_.mlp(s.stop_input) + params_.stop_bias;
        int best_idx = static_cast<int>(obs.candidates.size());
        for (std::size_t c = 0; c < s.candidate_inputs.size(); ++c) {
            double v = params_.mlp(s.candidate_inputs[c]);
            if (v > best) {
                best = v;
                best_idx = static_cast<int>(c);
            }
        }
        if (best_idx == static_cast<int>(obs.candidates.size())) return Action::stop();
        return Action::move(*obs.candidates[static_cast<std::size_t>(best_idx)].slot.navigable_to);
    }

    const PolicyParams& params() const { return params_; }

private:
    PolicyParams params_;
};

// ---------------------------------------------------------------------------
// Checkpointing

constexpr const char* kRunnerCkptSchema = "r3.runner.v1";

inline void save_policy(const PolicyParams& p, const std::string& path) {
    NamedArrays arrays;
    arrays.schema = kRunnerCkptSchema;
    arrays.put("w1", {static_cast<std::size_t>(p.hidden), static_cast<std::size_t>(p.input_dim())},
               p.w1);
    arrays.put("b1", {static_cast<std::size_t>(p.hidden)}, p.b1);
    arrays.put("w2", {static_cast<std::size_t>(p.hidden)}, p.w2);
    arrays.put("b2", {1}, {p.b2});
    arrays.put("stop_bias", {1}, {p.stop_bias});
    Json j = arrays.to_json();
    j["vocab"] = p.vocab;
    j["feature_dim"] = p.feature_dim;
    write_text_file(path, j.dump(2) + "\n");
}

inline PolicyParams load_policy(const std::string& path) {
    Json j;
    try {
        j = Json::parse(read_text_file(path));
    } catch (const Json::exception& e) {
        throw Error(path + ": " + e.what());
    }
    NamedArrays arrays = NamedArrays::from_json(j, kRunnerCkptSchema);
    PolicyParams p;
    try {
        p.vocab = j.at("vocab").get<std::vector<std::string>>();
        p.feature_dim = j.at("feature_dim").get<int>();
    } catch (const Json::exception& e) {
        throw Error(path + ": " + e.what());
    }
    p.hidden = static_cast<int>(arrays.shape("w1")[0]);
    p.w1 = arrays.data("w1");
    p.b1 = arrays.data("b1");
    p.w2 = arrays.data("w2");
    p.b2 = arrays.data("b2")[0];
    p.stop_bias = arrays.data("stop_bias")[0];
    if (static_cast<int>(arrays.shape("w1")[1]) != p.input_dim())
        throw Error(path + ": w1 shape inconsistent with vocab and feature_dim");
    return p;
}

}  // namespace r3
