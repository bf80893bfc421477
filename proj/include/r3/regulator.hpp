// The two-stage switching controller. Stage 1 checks the looping, scoring
// and ending criteria on every Runner step, in that fixed order; the first
// criterion that fires wins. Stage 2 (critical formulation) decides between
// continuing with a corrective plan and restarting from the start viewpoint
// with a memory reset.
#pragma once

#include <functional>
#include <optional>
#include <sstream>
#include <string>

#include "r3/llm.hpp"
#include "r3/memory.hpp"
#include "r3/ruminator.hpp"
#include "r3/world.hpp"

namespace r3 {

struct RegulatorConfig {
    int tau_r = 4;        // max revisit count before a looping switch
    int tau_l = 20;       // max trajectory length before a looping switch
    double tau_g = 0.35;  // scoring threshold, strict inequality
    int step_cap = 40;
    bool enable_looping = true;
    bool enable_scoring = true;
    bool enable_ending = true;
    bool enable_formulation = true;
    bool restart_teleport = false;     // literal reading: restart without retracing
    bool ending_fallback_accept = true;  // transport failure accepts the Stop

    void validate() const {
        if (tau_r < 1) throw Error("regulator: tau_r must be >= 1");
        if (tau_l < 1) throw Error("regulator: tau_l must be >= 1");
        if (!(tau_g > 0.0 && tau_g < 1.0)) throw Error("regulator: tau_g must be in (0,1)");
        if (step_cap < tau_l) throw Error("regulator: step_cap must be >= tau_l");
    }
};

enum class SwitchReason { Looping, Scoring, Ending };

inline const char* to_string(SwitchReason r) {
    switch (r) {
        case SwitchReason::Looping: return "looping";
        case SwitchReason::Scoring: return "scoring";
        case SwitchReason::Ending: return "ending";
    }
    return "?";
}

struct Decision {
    enum class Kind { Proceed, Switch, EndEpisode };
    Kind kind = Kind::Proceed;
    SwitchReason reason = SwitchReason::Looping;  // Switch only
    std::optional<double> score;                  // recorded when the scorer ran
    bool ending_degraded = false;                 // ending check fell back on transport failure

    static Decision proceed() { return {}; }
    static Decision switch_to(SwitchReason r) { return {Kind::Switch, r, std::nullopt, false}; }
    static Decision end_episode() { return {Kind::EndEpisode, SwitchReason::Looping, std::nullopt, false}; }
};

struct FormulationOutcome {
    enum class Kind { ContinueWithPlan, Restart };
    Kind kind = Kind::ContinueWithPlan;
    Plan plan;
    bool degraded = false;  // parse failure fell back to continue
};

/// Scoring hook: the harness binds scorer::score over trained params. Tests
/// may bind anything, which keeps the threshold comparison exactly testable.
using ScoreFn = std::function<double(const MemoryBank&, const WorldGraph&)>;

struct EndingCheck {
    bool accept = false;
    bool degraded = false;
};

/// Destination verification for a proposed Stop: one yes/no chat call with
/// bounded retries. Unparseable replies after retries and transport failures
/// fall back per config.
inline EndingCheck check_ending(LlmClient& llm, const Instruction& instruction,
                                const Observation& obs, bool fallback_accept = true) {
    PromptBundle b = build_prompts(instruction, obs, MemoryBank{}, {});
    const std::string prompt =
        b.instruction_block + "\n" + b.observation_block +
        "\nThe agent proposes to stop here. Is the current location the final destination of the "
        "instruction? Answer Yes or No.";
    PromptContext ctx;
    ctx.viewpoint = obs.viewpoint;
    for (int attempt = 0; attempt <= llm.retry_limit(); ++attempt) {
        std::string reply;
        try {
            reply = llm.complete(LlmStage::Ending, prompt, ctx, attempt);
        } catch (const Error&) {
            return {fallback_accept, true};
        }
        for (std::size_t i = 0; i < reply.size(); ++i) {
            const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(reply[i])));
            const bool left_ok = i == 0 || !std::isalnum(static_cast<unsigned char>(reply[i - 1]));
            if (!left_ok) continue;
            auto word_is = [&](const char* w, std::size_t len) {
                if (i + len > reply.size()) return false;
                for (std::size_t k = 0; k < len; ++k)
                    if (std::tolower(static_cast<unsigned char>(reply[i + k])) != w[k]) return false;
                return i + len == reply.size() ||
                       !std::isalnum(static_cast<unsigned char>(reply[i + len]));
            };
            (void)c;
            if (word_is("yes", 3)) return {true, false};
            if (word_is("no", 2)) return {false, false};
        }
    }
    return {fallback_accept, true};
}

/// Stage 1. Pre: the agent is in Runner mode. Criteria run in the fixed
/// order looping -> scoring -> ending; the first firing criterion wins. A
/// proposed Stop that passes ending verification ends the episode.
inline Decision evaluate(const RegulatorConfig& config, const MemoryBank& bank,
                         const ScoreFn& score_fn, const WorldGraph& world,
                         const Action& runner_action, LlmClient* llm,
                         const Instruction& instruction, const Observation& obs) {
    if (config.enable_looping &&
        (bank.max_revisit() > config.tau_r || bank.trajectory_len() > config.tau_l))
        return Decision::switch_to(SwitchReason::Looping);

    std::optional<double> s;
    if (config.enable_scoring && score_fn && !bank.empty()) {
        s = score_fn(bank, world);
        if (*s > config.tau_g) {
            Decision d = Decision::switch_to(SwitchReason::Scoring);
            d.score = s;
            return d;
        }
    }

    if (runner_action.is_stop()) {
        if (!config.enable_ending || !llm) {
            Decision d = Decision::end_episode();
            d.score = s;
            return d;
        }
        EndingCheck check = check_ending(*llm, instruction, obs, config.ending_fallback_accept);
        Decision d = check.accept ? Decision::end_episode() : Decision::switch_to(SwitchReason::Ending);
        d.score = s;
        d.ending_degraded = check.degraded;
        return d;
    }

    Decision d = Decision::proceed();
    d.score = s;
    return d;
}

/// Stage 2. Prompts with the instruction, history and current observation;
/// parses DECISION/PLAN lines. Parse failure after retries degrades to
/// ContinueWithPlan with a stub plan.
inline FormulationOutcome critical_formulation(LlmClient& llm, const Instruction& instruction,
                                               const MemoryBank& bank, const Observation& obs,
                                               const WorldGraph& world) {
    (void)world;
    BankVerbalization v = bank.verbalize();
    std::ostringstream prompt;
    prompt << "Instruction: " << instruction.text << "\n"
           << render_observation_block(obs) << "\n"
           << "Trajectory: " << v.trajectory_text << "\n"
           << "Map: " << v.map_text << "\n"
           << "Navigation has been interrupted by an anomaly. Decide whether the agent should "
              "continue from its current position or restart from the start viewpoint, and give a "
              "corrective plan. Answer exactly as:\nDECISION: CONTINUE or RESTART\nPLAN: <one line>";
    PromptContext ctx;
    ctx.viewpoint = obs.viewpoint;
    ctx.max_revisit = bank.max_revisit();
    const int now = bank.records().back().t;

    for (int attempt = 0; attempt <= llm.retry_limit(); ++attempt) {
        std::string reply;
        try {
            reply = llm.complete(LlmStage::Formulation, prompt.str(), ctx, attempt);
        } catch (const Error&) {
            break;
        }
        auto dpos = reply.find("DECISION:");
        auto ppos = reply.find("PLAN:");
        if (dpos == std::string::npos || ppos == std::string::npos) continue;
        std::string decision = reply.substr(dpos, ppos > dpos ? ppos - dpos : std::string::npos);
        const bool restart = decision.find("RESTART") != std::string::npos;
        const bool cont = decision.find("CONTINUE") != std::string::npos;
        if (!restart && !cont) continue;
        std::string plan_text = detail::trimmed(reply.substr(ppos + 5));
        if (plan_text.empty()) continue;
        FormulationOutcome out;
        out.kind = restart ? FormulationOutcome::Kind::Restart : FormulationOutcome::Kind::ContinueWithPlan;
        out.plan = Plan{now, plan_text, Plan::Origin::Formulation};
        return out;
    }
    FormulationOutcome out;
    out.kind = FormulationOutcome::Kind::ContinueWithPlan;
    out.plan = Plan{now, "Continue toward the target along unexplored directions.",
                    Plan::Origin::Formulation};
    out.degraded = true;
    return out;
}

/// Shortest path back to the episode start through viewpoints the agent has
/// actually visited. Every such edge exists in the world, so the retrace is
/// physically walkable.
inline std::vector<std::string> retrace_path(const MemoryBank& bank, const WorldGraph& world,
                                             const std::string& from) {
    if (bank.empty()) throw Error("retrace: empty bank");
    const std::string start = bank.records().front().viewpoint;
    if (from == start) return {from};
    const auto& map = bank.observed_map();

    std::map<std::string, double> dist;
    std::map<std::string, std::string> prev;
    std::set<std::pair<double, std::string>> frontier;
    dist[from] = 0.0;
    frontier.insert({0.0, from});
    auto visited = [&](const std::string& id) { return map.visit_count.count(id) > 0; };

    while (!frontier.empty()) {
        auto [d, u] = *frontier.begin();
        frontier.erase(frontier.begin());
        if (u == start) break;
        for (const auto& w : map.neighbors_of(u)) {
            if (!visited(w)) continue;
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
    if (!dist.count(start)) throw Error("retrace: start is unreachable through visited viewpoints");
    std::vector<std::string> path;
    for (std::string cur = start;; cur = prev.at(cur)) {
        path.push_back(cur);
        if (cur == from) break;
    }
    std::reverse(path.begin(), path.end());
    return path;
}

}  // namespace r3
