// The slow-thinking navigator: renders the textual input template, runs the
// perception -> planning -> prediction chain against a chat client, parses
// the chosen option and maintains the current plan.
#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "r3/llm.hpp"
#include "r3/memory.hpp"
#include "r3/world.hpp"

namespace r3 {

/// The five prompt blocks, always rendered in this order.
struct PromptBundle {
    std::string instruction_block;
    std::string observation_block;
    std::string trajectory_block;
    std::string map_block;
    std::string option_block;

    std::string full() const {
        return instruction_block + "\n" + observation_block + "\n" + trajectory_block + "\n" +
               map_block + "\n" + option_block;
    }
};

struct OptionEntry {
    char letter = 'A';
    bool stop = false;
    std::string target;
    double relative_heading = 0.0;
};

struct SceneDescription {
    std::string text;
    std::vector<std::string> referenced_tags;
};

/// Candidates sorted by relative heading (ties by id), lettered from A,
/// with a final stop option.
inline std::vector<OptionEntry> enumerate_options(const std::vector<ObservedSlot>& candidates) {
    std::vector<const ObservedSlot*> order;
    for (const auto& c : candidates) order.push_back(&c);
    std::sort(order.begin(), order.end(), [](const ObservedSlot* a, const ObservedSlot* b) {
        if (a->relative_heading != b->relative_heading)
            return a->relative_heading < b->relative_heading;
        return *a->slot.navigable_to < *b->slot.navigable_to;
    });
    std::vector<OptionEntry> out;
    char letter = 'A';
    for (const auto* c : order)
        out.push_back({letter++, false, *c->slot.navigable_to, c->relative_heading});
    out.push_back({letter, true, {}, 0.0});
    return out;
}

inline PromptContext option_context(const std::string& viewpoint,
                                    const std::vector<OptionEntry>& options) {
    PromptContext ctx;
    ctx.viewpoint = viewpoint;
    for (const auto& o : options)
        if (!o.stop) ctx.option_targets.push_back(o.target);
    ctx.has_stop_option = true;
    return ctx;
}

/// Sorted unique slot tags of a viewpoint, comma-joined.
inline std::string viewpoint_tag_join(const WorldGraph& world, const std::string& vp) {
    std::set<std::string> tags;
    for (const auto& s : world.at(vp).slots) tags.insert(s.tags.begin(), s.tags.end());
    std::string out;
    for (const auto& t : tags) {
        if (!out.empty()) out += ", ";
        out += t;
    }
    return out;
}

/// Placeholder entry for a Ruminator arrival, replaced by the next
/// perception pass (newest wins).
inline MemoryEntry provisional_scene_entry(const WorldGraph& world, const std::string& vp) {
    return MemoryEntry::scene(viewpoint_tag_join(world, vp));
}

// ---------------------------------------------------------------------------
// Prompt rendering. Byte-stable per inputs; golden files pin each block.

inline std::string render_observation_block(const Observation& obs) {
    std::ostringstream os;
    os << "Observation:";
    for (std::size_t i = 0; i < obs.slots.size(); ++i) {
        const auto& s = obs.slots[i];
        os << (i ? "; " : " ") << "(" << std::lround(s.relative_heading * 180.0 / std::numbers::pi)
           << " deg";
        if (s.slot.navigable_to) os << ", to " << *s.slot.navigable_to;
        os << ")";
        for (std::size_t t = 0; t < s.slot.tags.size(); ++t) os << (t ? ", " : " ") << s.slot.tags[t];
    }
    return os.str();
}

inline PromptBundle build_prompts(const Instruction& instruction, const Observation& obs,
                                  const MemoryBank& bank,
                                  const std::vector<ObservedSlot>& candidates) {
    PromptBundle b;
    b.instruction_block = "Instruction: " + instruction.text;
    b.observation_block = render_observation_block(obs);
    if (bank.empty()) {
        b.trajectory_block = "Trajectory:";
        b.map_block = "Map:";
    } else {
        BankVerbalization v = bank.verbalize();
        b.trajectory_block = "Trajectory: " + v.trajectory_text;
        b.map_block = "Map: " + v.map_text;
    }
    std::ostringstream opt;
    opt << "Option:";
    for (const auto& o : enumerate_options(candidates)) {
        opt << (o.letter == 'A' ? " " : "; ") << o.letter << ". ";
        if (o.stop)
            opt << "stop";
        else
            opt << verbalize_action(o.relative_heading, o.target);
    }
    b.option_block = opt.str();
    return b;
}

/// First standalone capital letter naming a valid option wins.
inline std::optional<std::size_t> parse_option_letter(const std::string& reply,
                                                      std::size_t n_options) {
    for (std::size_t i = 0; i < reply.size(); ++i) {
        const char c = reply[i];
        if (c < 'A' || c >= static_cast<char>('A' + n_options)) continue;
        const bool left_ok = i == 0 || !std::isalnum(static_cast<unsigned char>(reply[i - 1]));
        const bool right_ok = i + 1 == reply.size() || !std::isalnum(static_cast<unsigned char>(reply[i + 1]));
        if (left_ok && right_ok) return static_cast<std::size_t>(c - 'A');
    }
    return std::nullopt;
}

namespace detail {

inline std::string trimmed(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return {};
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

/// Word-boundary containment of a tag in free text.
inline bool mentions_tag(const std::string& text, const std::string& tag) {
    std::size_t p = 0;
    while ((p = text.find(tag, p)) != std::string::npos) {
        const bool left_ok = p == 0 || !std::isalnum(static_cast<unsigned char>(text[p - 1]));
        const std::size_t end = p + tag.size();
        const bool right_ok = end == text.size() || !std::isalnum(static_cast<unsigned char>(text[end]));
        if (left_ok && right_ok) return true;
        ++p;
    }
    return false;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// The three chain-of-thought stages

inline SceneDescription perceive(LlmClient& llm, const Instruction& instruction,
                                 const Observation& obs) {
    PromptBundle b = build_prompts(instruction, obs, MemoryBank{}, {});
    std::string prompt =
        b.instruction_block + "\n" + b.observation_block +
        "\nDescribe the current surroundings in one short paragraph, naming every object that the "
        "instruction could refer to.";
    PromptContext ctx;
    ctx.viewpoint = obs.viewpoint;
    for (int attempt = 0; attempt <= llm.retry_limit(); ++attempt) {
        std::string reply = detail::trimmed(llm.complete(LlmStage::Perception, prompt, ctx, attempt));
        if (reply.empty()) continue;
        SceneDescription out;
        out.text = reply;
        std::set<std::string> seen;
        for (const auto& s : obs.slots)
            for (const auto& tag : s.slot.tags)
                if (detail::mentions_tag(reply, tag) && seen.insert(tag).second)
                    out.referenced_tags.push_back(tag);
        return out;
    }
    throw Error("perception: empty reply after " + std::to_string(llm.retry_limit()) + " retries at " +
                obs.viewpoint);
}

/// New plan from instruction, previous plan, latest description and history.
/// An empty reply after retries keeps the previous plan.
inline Plan plan(LlmClient& llm, const Instruction& instruction, const std::optional<Plan>& prev_plan,
                 const SceneDescription& description, const MemoryBank& bank) {
    BankVerbalization v = bank.verbalize();
    std::ostringstream prompt;
    prompt << "Instruction: " << instruction.text << "\n"
           << "Previous plan: " << (prev_plan ? prev_plan->text : "(none)") << "\n"
           << "Scene: " << description.text << "\n"
           << "Trajectory: " << v.trajectory_text << "\n"
           << "Map: " << v.map_text << "\n"
           << "Formulate a short corrective plan for reaching the target.";
    PromptContext ctx;
    ctx.viewpoint = bank.records().back().viewpoint;
    const int now = bank.records().back().t;
    for (int attempt = 0; attempt <= llm.retry_limit(); ++attempt) {
        std::string reply = llm.complete(LlmStage::Planning, prompt.str(), ctx, attempt);
        if (detail::trimmed(reply).empty()) continue;
        return Plan{now, reply, Plan::Origin::Ruminator};
    }
    if (prev_plan) return *prev_plan;
    return Plan{now, "(no plan)", Plan::Origin::Ruminator};
}

/// Final decision over the navigable candidates plus stop. Unparseable
/// replies retry; exhausted retries fall back to the candidate nearest the
/// plan's referenced tags, else the first option.
inline Action predict(LlmClient& llm, const Instruction& instruction, const Plan& current_plan,
                      const std::vector<ObservedSlot>& candidates, const Observation& obs,
                      bool* degraded = nullptr) {
    auto options = enumerate_options(candidates);
    std::ostringstream prompt;
    prompt << "Instruction: " << instruction.text << "\n"
           << "Plan: " << current_plan.text << "\n";
    PromptBundle b = build_prompts(instruction, obs, MemoryBank{}, candidates);
    prompt << b.option_block << "\n"
           << "Choose exactly one option and answer with its letter.";
    PromptContext ctx = option_context(obs.viewpoint, options);

    auto to_action = [&](const OptionEntry& o) {
        return o.stop ? Action::stop() : Action::move(o.target);
    };
    for (int attempt = 0; attempt <= llm.retry_limit(); ++attempt) {
        std::string reply = llm.complete(LlmStage::Prediction, prompt.str(), ctx, attempt);
        if (auto idx = parse_option_letter(reply, options.size())) return to_action(options[*idx]);
    }
    if (degraded) *degraded = true;
    for (const auto& o : options) {
        if (o.stop) continue;
        const ObservedSlot* slot = nullptr;
        for (const auto& c : candidates)
            if (*c.slot.navigable_to == o.target) slot = &c;
        for (const auto& tag : slot->slot.tags)
            if (detail::mentions_tag(current_plan.text, tag)) return to_action(o);
    }
    return to_action(options.front());
}

struct Pose {
    std::string viewpoint;
    double heading = 0.0;
};

/// One Ruminator step: perceive the current viewpoint (overwriting its
/// memory entry), refresh the plan, and pick the next action. Exactly three
/// chat calls absent retries. The caller applies the returned action.
inline Action step_ruminator(LlmClient& llm, const Instruction& instruction, MemoryBank& bank,
                             const WorldGraph& world, const Pose& pose, bool* degraded = nullptr) {
    if (bank.empty() || bank.records().back().viewpoint != pose.viewpoint)
        throw Error("step_ruminator: bank is not positioned at " + pose.viewpoint);
    Observation obs = observe(world, pose.viewpoint, pose.heading);

    SceneDescription desc;
    try {
        desc = perceive(llm, instruction, obs);
    } catch (const Error& e) {
        throw Error(std::string("ruminator perception stage: ") + e.what());
    }
    bank.overwrite_latest_entry(MemoryEntry::scene(desc.text), Mode::Ruminator);

    Plan p = plan(llm, instruction, bank.plan(), desc, bank);
    bank.set_plan(p);

    try {
        return predict(llm, instruction, p, obs.candidates, obs, degraded);
    } catch (const Error& e) {
        throw Error(std::string("ruminator prediction stage: ") + e.what());
    }
}

}  // namespace r3
