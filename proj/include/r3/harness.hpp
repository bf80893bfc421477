// Episode orchestration: the observe -> decide -> regulate -> move loop,
// metric aggregation, seeded benchmark suites, ablation arms and JSONL
// logging. Logs are deterministic given seeds and a scripted or oracle
// transport; wall-clock timings stay out of them by design.
#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "r3/llm.hpp"
#include "r3/memory.hpp"
#include "r3/regulator.hpp"
#include "r3/ruminator.hpp"
#include "r3/runner.hpp"
#include "r3/scorer.hpp"
#include "r3/world.hpp"

namespace r3 {

constexpr const char* kLogSchema = "r3.log.v1";
constexpr const char* kReportSchema = "r3.report.v1";
constexpr double kSuccessRadius = 3.0;

struct SwitchEvent {
    SwitchReason reason = SwitchReason::Looping;
    int t = 0;
};

struct EpisodeResult {
    std::string episode_id;
    std::vector<std::string> trajectory;  // physical path, retraces included
    std::vector<std::string> actions;     // rendered, one per step
    std::vector<Mode> step_modes;         // one per action
    std::optional<SwitchEvent> switch_event;
    int restarts = 0;
    int llm_calls = 0;
    std::map<std::string, double> wall_time;  // module -> seconds
    double ne = 0.0;
    double tl = 0.0;
    double shortest_len = 0.0;
    bool success = false;
    bool stopped = false;  // false when the step cap ran out
    bool aborted = false;
    std::string abort_reason;
    int runner_steps = 0;
    int ruminator_steps = 0;
};

// ---------------------------------------------------------------------------
// Logging

class JsonlLogger {
public:
    void line(Json j) {
        if (!enabled_) return;
        lines_ += j.dump();
        lines_ += "\n";
    }
    void enable() { enabled_ = true; }
    bool enabled() const { return enabled_; }
    const std::string& text() const { return lines_; }

private:
    bool enabled_ = false;
    std::string lines_;
};

namespace detail {

inline Json action_json(const Action& a) {
    if (a.is_stop()) return Json{{"kind", "stop"}};
    return Json{{"kind", "move"}, {"target", a.target}};
}

inline std::string action_text(const Action& a) {
    return a.is_stop() ? "stop" : "move " + a.target;
}

class Stopwatch {
public:
    explicit Stopwatch(double& sink) : sink_(sink), begin_(std::chrono::steady_clock::now()) {}
    ~Stopwatch() {
        sink_ += std::chrono::duration<double>(std::chrono::steady_clock::now() - begin_).count();
    }

private:
    double& sink_;
    std::chrono::steady_clock::time_point begin_;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Episode loop

enum class TransportKind { Oracle, Scripted, Http };

inline const char* to_string(TransportKind t) {
    switch (t) {
        case TransportKind::Oracle: return "oracle";
        case TransportKind::Scripted: return "scripted";
        case TransportKind::Http: return "http";
    }
    return "?";
}

struct EpisodeSetup {
    const WorldGraph* world = nullptr;
    const Episode* episode = nullptr;
    const Policy* policy = nullptr;
    RegulatorConfig config;
    ScoreFn score_fn;                          // empty disables the scoring criterion
    std::shared_ptr<ChatTransport> transport;  // required unless runner_only
    bool runner_only = false;                  // regulator fully out of the loop
    bool shared_memory = true;                 // ruminator inherits the runner's bank
    JsonlLogger* logger = nullptr;
};

inline EpisodeResult run_episode(const EpisodeSetup& setup) {
    const WorldGraph& world = *setup.world;
    const Episode& ep = *setup.episode;
    setup.config.validate();

    JsonlLogger null_logger;
    JsonlLogger& log = setup.logger ? *setup.logger : null_logger;

    EpisodeResult result;
    result.episode_id = ep.id;
    result.shortest_len = geodesic(world, ep.start, ep.goal).distance;
    result.wall_time = {{"runner", 0.0}, {"ruminator", 0.0}, {"regulator", 0.0}};

    LlmClient llm(setup.transport ? setup.transport
                                  : std::make_shared<OracleTransport>(world, ep.goal));
    std::size_t flushed_calls = 0;
    auto flush_llm = [&]() {
        for (; flushed_calls < llm.calls().size(); ++flushed_calls) {
            const LlmCall& c = llm.calls()[flushed_calls];
            Json j{{"type", "llm"},       {"stage", c.stage},   {"attempt", c.attempt},
                   {"oracle", c.oracle},  {"prompt", c.prompt}, {"reply", c.reply}};
            if (c.prompt_tokens >= 0) j["prompt_tokens"] = c.prompt_tokens;
            if (c.completion_tokens >= 0) j["completion_tokens"] = c.completion_tokens;
            log.line(std::move(j));
        }
    };

    log.line(Json{{"schema", kLogSchema},
                  {"type", "begin"},
                  {"episode", ep.id},
                  {"start", ep.start},
                  {"goal", ep.goal},
                  {"instruction", ep.instruction.text},
                  {"style", to_string(ep.instruction.style)},
                  {"transport", setup.transport ? setup.transport->name() : "oracle"},
                  {"runner_only", setup.runner_only},
                  {"shared_memory", setup.shared_memory},
                  {"config", Json{{"tau_r", setup.config.tau_r},
                                  {"tau_l", setup.config.tau_l},
                                  {"tau_g", setup.config.tau_g},
                                  {"step_cap", setup.config.step_cap},
                                  {"looping", setup.config.enable_looping},
                                  {"scoring", setup.config.enable_scoring},
                                  {"ending", setup.config.enable_ending},
                                  {"formulation", setup.config.enable_formulation}}}});

    MemoryBank bank;
    std::string cur = ep.start;
    double heading = 0.0;
    Mode mode = Mode::Runner;
    int steps = 0;

    auto append_arrival = [&](const Action& action, double rel,
                              std::vector<std::string> slot_tags = {}) {
        Observation at = observe(world, cur, heading);
        StepRecord rec;
        rec.t = bank.empty() ? 0 : bank.records().back().t + 1;
        rec.viewpoint = cur;
        if (!bank.empty()) {
            rec.action = action;
            rec.action_rel_heading = rel;
            rec.action_slot_tags = std::move(slot_tags);
        }
        rec.mode = mode;
        rec.entry = mode == Mode::Runner ? oriented_entry(world, cur, heading)
                                         : provisional_scene_entry(world, cur);
        for (const auto& c : at.candidates) rec.neighbors.push_back(*c.slot.navigable_to);
        bank.append(std::move(rec));
    };

    result.trajectory.push_back(cur);
    append_arrival(Action::stop(), 0.0);

    // moves the agent along one edge and appends the arrival record
    auto apply_move = [&](const Action& action, const Observation& obs) {
        double rel = 0.0;
        bool candidate = false;
        std::vector<std::string> slot_tags;
        for (const auto& c : obs.candidates)
            if (*c.slot.navigable_to == action.target) {
                rel = c.relative_heading;
                slot_tags = c.slot.tags;
                candidate = true;
            }
        if (!candidate)
            throw Error("policy chose non-candidate '" + action.target + "' at '" + cur + "'");
        const std::string from = cur;
        heading = wrap_angle(heading + rel);
        cur = action.target;
        result.tl += world.edge_length(from, cur);
        result.trajectory.push_back(cur);
        result.actions.push_back(detail::action_text(action));
        result.step_modes.push_back(mode);
        (mode == Mode::Runner ? result.runner_steps : result.ruminator_steps) += 1;
        ++steps;
        append_arrival(action, rel, std::move(slot_tags));
        log.line(Json{{"type", "move"}, {"from", from}, {"to", cur}, {"mode", to_string(mode)}});
    };

    try {
        while (steps < setup.config.step_cap) {
            Observation obs = observe(world, cur, heading);
            if (mode == Mode::Runner) {
                Action proposed;
                {
                    detail::Stopwatch timer(result.wall_time["runner"]);
                    proposed = setup.policy->decide(ep.instruction, obs, bank);
                }
                Decision decision;
                if (setup.runner_only) {
                    decision = proposed.is_stop() ? Decision::end_episode() : Decision::proceed();
                } else {
                    detail::Stopwatch timer(result.wall_time["regulator"]);
                    decision = evaluate(setup.config, bank, setup.score_fn, world, proposed,
                                        &llm, ep.instruction, obs);
                }
                Json step_line{{"type", "step"},
                               {"t", bank.records().back().t},
                               {"viewpoint", cur},
                               {"mode", "runner"},
                               {"proposed", detail::action_json(proposed)}};
                step_line["decision"] = decision.kind == Decision::Kind::Proceed  ? "proceed"
                                        : decision.kind == Decision::Kind::Switch ? "switch"
                                                                                  : "end";
                if (decision.kind == Decision::Kind::Switch)
                    step_line["reason"] = to_string(decision.reason);
                if (decision.score) step_line["score"] = *decision.score;
                if (decision.ending_degraded) step_line["ending_degraded"] = true;
                log.line(std::move(step_line));
                flush_llm();

                if (decision.kind == Decision::Kind::EndEpisode) {
                    result.actions.push_back("stop");
                    result.step_modes.push_back(Mode::Runner);
                    result.stopped = true;
                    break;
                }
                if (decision.kind == Decision::Kind::Proceed) {
                    apply_move(proposed, obs);
                    continue;
                }

                // switch: the proposed action is discarded
                result.switch_event = SwitchEvent{decision.reason, bank.records().back().t};
                log.line(Json{{"type", "switch"},
                              {"reason", to_string(decision.reason)},
                              {"t", bank.records().back().t}});
                mode = Mode::Ruminator;

                FormulationOutcome outcome;
                outcome.kind = FormulationOutcome::Kind::ContinueWithPlan;
                bool restart = false;
                if (setup.config.enable_formulation) {
                    detail::Stopwatch timer(result.wall_time["regulator"]);
                    outcome = critical_formulation(llm, ep.instruction, bank, obs, world);
                    restart = outcome.kind == FormulationOutcome::Kind::Restart;
                    log.line(Json{{"type", "formulation"},
                                  {"decision", restart ? "restart" : "continue"},
                                  {"plan", outcome.plan.text},
                                  {"degraded", outcome.degraded}});
                    flush_llm();
                }

                if (!setup.shared_memory && !restart) {
                    // the ruminator starts from scratch at the switch point
                    bank.reset();
                    append_arrival(Action::stop(), 0.0);
                    if (setup.config.enable_formulation) bank.set_plan(outcome.plan);
                    continue;
                }

                if (restart) {
                    ++result.restarts;
                    if (!setup.config.restart_teleport) {
                        auto path = retrace_path(bank, world, cur);
                        Json retrace_line{{"type", "restart"}, {"retrace", path}};
                        log.line(std::move(retrace_line));
                        for (std::size_t i = 1; i < path.size() && steps < setup.config.step_cap;
                             ++i) {
                            const std::string from = cur;
                            heading = bearing(world.at(from).position, world.at(path[i]).position);
                            cur = path[i];
                            result.tl += world.edge_length(from, cur);
                            result.trajectory.push_back(cur);
                            result.actions.push_back("move " + cur);
                            result.step_modes.push_back(Mode::Ruminator);
                            ++result.ruminator_steps;
                            ++steps;
                            log.line(Json{{"type", "move"},
                                          {"from", from},
                                          {"to", cur},
                                          {"mode", "ruminator"},
                                          {"retrace", true}});
                        }
                    } else {
                        cur = ep.start;
                        log.line(Json{{"type", "restart"}, {"retrace", Json::array()}});
                    }
                    if (cur == ep.start) {
                        bank.reset();
                        append_arrival(Action::stop(), 0.0);
                        bank.set_plan(Plan{0, outcome.plan.text, Plan::Origin::Formulation});
                    }
                    // a cap hit mid-retrace leaves the stale bank; the loop
                    // condition ends the episode on the next iteration
                } else if (setup.config.enable_formulation) {
                    bank.set_plan(outcome.plan);
                }
                continue;
            }

            // Ruminator mode
            Action action;
            {
                detail::Stopwatch timer(result.wall_time["ruminator"]);
                action = step_ruminator(llm, ep.instruction, bank, world, Pose{cur, heading});
            }
            log.line(Json{{"type", "step"},
                          {"t", bank.records().back().t},
                          {"viewpoint", cur},
                          {"mode", "ruminator"},
                          {"proposed", detail::action_json(action)},
                          {"decision", action.is_stop() ? "end" : "proceed"}});
            flush_llm();
            if (action.is_stop()) {
                result.actions.push_back("stop");
                result.step_modes.push_back(Mode::Ruminator);
                result.stopped = true;
                break;
            }
            apply_move(action, obs);
        }
    } catch (const std::exception& e) {
        result.aborted = true;
        result.abort_reason = e.what();
        log.line(Json{{"type", "abort"}, {"error", e.what()}});
    }

    flush_llm();
    result.llm_calls = static_cast<int>(llm.call_count());
    result.ne = geodesic(world, cur, ep.goal).distance;
    result.success = !result.aborted && result.ne < kSuccessRadius;
    log.line(Json{{"type", "end"},
                  {"stopped", result.stopped},
                  {"ne", result.ne},
                  {"tl", result.tl},
                  {"success", result.success},
                  {"steps", steps},
                  {"runner_steps", result.runner_steps},
                  {"ruminator_steps", result.ruminator_steps},
                  {"llm_calls", result.llm_calls},
                  {"restarts", result.restarts},
                  {"aborted", result.aborted}});
    return result;
}

/// Spec-shaped convenience overload.
inline EpisodeResult run_episode(const WorldGraph& world, const Episode& episode,
                                 const Policy& runner_policy, const RegulatorConfig& config,
                                 const ScorerParams* scorer_params,
                                 std::shared_ptr<ChatTransport> llm,
                                 JsonlLogger* logger = nullptr) {
    EpisodeSetup setup;
    setup.world = &world;
    setup.episode = &episode;
    setup.policy = &runner_policy;
    setup.config = config;
    if (scorer_params) {
        const ScorerParams& p = *scorer_params;
        setup.score_fn = [p](const MemoryBank& b, const WorldGraph& w) { return score(p, b, w); };
    }
    setup.transport = std::move(llm);
    setup.logger = logger;
    return run_episode(setup);
}

// ---------------------------------------------------------------------------
// Metrics

struct Aggregates {
    int episodes = 0;
    double tl = 0.0;
    double ne = 0.0;
    double sr = 0.0;   // fraction in [0,1]
    double spl = 0.0;  // fraction in [0,1]
    double runner_step_fraction = 0.0;
    double ruminator_step_fraction = 0.0;
    double mean_llm_calls = 0.0;
    std::map<std::string, double> wall_time;
};

struct SuiteReport {
    std::string label;
    std::vector<EpisodeResult> episodes;
    Aggregates agg;
};

inline double spl_contribution(bool success, double shortest, double traveled) {
    if (!success) return 0.0;
    const double denom = std::max(shortest, traveled);
    if (denom <= 0.0) return 1.0;  // zero-length task reached optimally
    return shortest / denom;
}

inline Aggregates metrics(const std::vector<EpisodeResult>& results) {
    if (results.empty()) throw Error("metrics: no episode results");
    Aggregates a;
    a.episodes = static_cast<int>(results.size());
    long total_steps = 0, runner_steps = 0;
    for (const auto& r : results) {
        a.tl += r.tl;
        a.ne += r.ne;
        a.sr += r.success ? 1.0 : 0.0;
        a.spl += spl_contribution(r.success, r.shortest_len, r.tl);
        a.mean_llm_calls += r.llm_calls;
        total_steps += static_cast<long>(r.step_modes.size());
        runner_steps += r.runner_steps + (r.stopped && r.step_modes.back() == Mode::Runner ? 1 : 0);
        for (const auto& [k, v] : r.wall_time) a.wall_time[k] += v;
    }
    const double n = static_cast<double>(results.size());
    a.tl /= n;
    a.ne /= n;
    a.sr /= n;
    a.spl /= n;
    a.mean_llm_calls /= n;
    if (total_steps > 0) {
        a.runner_step_fraction = static_cast<double>(runner_steps) / static_cast<double>(total_steps);
        a.ruminator_step_fraction = 1.0 - a.runner_step_fraction;
    }
    return a;
}

// ---------------------------------------------------------------------------
// Suites

struct SuiteConfig {
    std::uint64_t master_seed = 7;
    int n_worlds = 10;
    int episodes_per_world = 10;
    int n_viewpoints = 60;
    double mean_degree = 3.0;
    int min_hops = 6;
    InstructionStyle style = InstructionStyle::FineGrained;
    std::vector<std::string> tag_vocab = {
        "door",  "sofa",  "lamp",   "towel", "plant", "mirror", "sink",   "table",
        "chair", "rug",   "vase",   "clock", "shelf", "stove",  "piano",  "window",
        "couch", "stool", "carpet", "desk",  "bench", "basket", "candle", "easel"};

    double noise = 0.2;
    double trap_prob = 0.3;
    double premature_stop_prob = 0.1;
    std::uint64_t policy_seed = 1;

    RegulatorConfig regulator;
    bool use_scorer = true;
    int train_worlds = 4;
    int train_episodes_per_world = 10;
    ScorerHyper scorer_hyper;

    TransportKind transport = TransportKind::Oracle;
    std::string scripted_path;  // transcript JSONL, re-read per episode
    HttpLlmConfig http;

    bool runner_only = false;
    bool shared_memory = true;
    std::string label = "full";
    std::string out_dir;  // when set, runs/<label>/<episode>.jsonl and report JSON
    int jobs = 1;
};

struct SuiteInputs {
    std::vector<WorldGraph> worlds;
    std::vector<std::vector<Episode>> episodes;  // parallel to worlds
    std::optional<ScorerParams> scorer;
};

/// Worlds, episodes and the trained scorer for a suite config. Training
/// worlds are derived from disjoint seed streams, collected with the same
/// imperfect policy, and never appear in the evaluation set.
inline SuiteInputs prepare_suite(const SuiteConfig& cfg) {
    SuiteInputs in;
    for (int w = 0; w < cfg.n_worlds; ++w) {
        std::uint64_t ws = derive_seed(cfg.master_seed, "eval-world-" + std::to_string(w));
        in.worlds.push_back(generate_world(ws, static_cast<std::size_t>(cfg.n_viewpoints),
                                           cfg.mean_degree, cfg.tag_vocab));
        std::vector<Episode> eps;
        for (int e = 0; e < cfg.episodes_per_world; ++e) {
            std::uint64_t es =
                derive_seed(cfg.master_seed, "episode-" + std::to_string(w) + "-" + std::to_string(e));
            Episode ep = generate_episode(in.worlds.back(), es, cfg.style, cfg.min_hops);
            ep.id = "w" + std::to_string(w) + "_e" + std::to_string(e);
            eps.push_back(std::move(ep));
        }
        in.episodes.push_back(std::move(eps));
    }

    if (cfg.use_scorer) {
        HeuristicPolicy policy(cfg.noise, cfg.trap_prob, cfg.premature_stop_prob, cfg.policy_seed);
        std::vector<WorldGraph> train_worlds;
        std::vector<std::pair<const WorldGraph*, std::vector<Episode>>> sets;
        for (int w = 0; w < cfg.train_worlds; ++w) {
            std::uint64_t ws = derive_seed(cfg.master_seed, "train-world-" + std::to_string(w));
            train_worlds.push_back(generate_world(ws, static_cast<std::size_t>(cfg.n_viewpoints),
                                                  cfg.mean_degree, cfg.tag_vocab));
        }
        for (int w = 0; w < cfg.train_worlds; ++w) {
            std::vector<Episode> eps;
            for (int e = 0; e < cfg.train_episodes_per_world; ++e) {
                std::uint64_t es = derive_seed(
                    cfg.master_seed, "train-episode-" + std::to_string(w) + "-" + std::to_string(e));
                eps.push_back(generate_episode(train_worlds[w], es, cfg.style, cfg.min_hops));
            }
            sets.push_back({&train_worlds[w], std::move(eps)});
        }
        auto snapshots = collect_snapshots(sets, policy, cfg.regulator.step_cap);
        in.scorer = train_scorer(snapshots, cfg.scorer_hyper).params;
    }
    return in;
}

inline std::shared_ptr<ChatTransport> make_transport(const SuiteConfig& cfg, const WorldGraph& world,
                                                     const Episode& ep) {
    switch (cfg.transport) {
        case TransportKind::Oracle: return std::make_shared<OracleTransport>(world, ep.goal);
        case TransportKind::Scripted:
            return std::make_shared<ScriptedTransport>(ScriptedTransport::from_jsonl(cfg.scripted_path));
        case TransportKind::Http: return std::make_shared<HttpTransport>(cfg.http);
    }
    throw Error("unknown transport");
}

inline SuiteReport run_suite(const SuiteConfig& cfg, const SuiteInputs& inputs) {
    HeuristicPolicy policy(cfg.noise, cfg.trap_prob, cfg.premature_stop_prob, cfg.policy_seed);
    struct Job {
        const WorldGraph* world;
        const Episode* episode;
    };
    std::vector<Job> jobs;
    for (std::size_t w = 0; w < inputs.worlds.size(); ++w)
        for (const auto& ep : inputs.episodes[w]) jobs.push_back({&inputs.worlds[w], &ep});

    std::filesystem::path run_dir;
    if (!cfg.out_dir.empty()) {
        run_dir = std::filesystem::path(cfg.out_dir) / cfg.label;
        std::filesystem::create_directories(run_dir);
    }

    auto run_one = [&](const Job& job) {
        JsonlLogger logger;
        if (!cfg.out_dir.empty()) logger.enable();
        EpisodeSetup setup;
        setup.world = job.world;
        setup.episode = job.episode;
        setup.policy = &policy;
        setup.config = cfg.regulator;
        if (inputs.scorer && cfg.regulator.enable_scoring && !cfg.runner_only) {
            const ScorerParams& p = *inputs.scorer;
            setup.score_fn = [&p](const MemoryBank& b, const WorldGraph& w) { return score(p, b, w); };
        }
        setup.runner_only = cfg.runner_only;
        setup.shared_memory = cfg.shared_memory;
        if (!cfg.runner_only) setup.transport = make_transport(cfg, *job.world, *job.episode);
        setup.logger = &logger;
        EpisodeResult r = run_episode(setup);
        if (!cfg.out_dir.empty())
            write_text_file((run_dir / (job.episode->id + ".jsonl")).string(), logger.text());
        return r;
    };

    SuiteReport report;
    report.label = cfg.label;
    report.episodes.resize(jobs.size());
    if (cfg.jobs <= 1) {
        for (std::size_t i = 0; i < jobs.size(); ++i) report.episodes[i] = run_one(jobs[i]);
    } else {
        std::vector<std::future<EpisodeResult>> futures(jobs.size());
        std::size_t next = 0;
        while (next < jobs.size()) {
            std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(cfg.jobs),
                                                      jobs.size() - next);
            for (std::size_t k = 0; k < batch; ++k)
                futures[next + k] =
                    std::async(std::launch::async, run_one, std::cref(jobs[next + k]));
            for (std::size_t k = 0; k < batch; ++k) report.episodes[next + k] = futures[next + k].get();
            next += batch;
        }
    }
    report.agg = metrics(report.episodes);
    return report;
}

inline SuiteReport run_suite(const SuiteConfig& cfg) {
    SuiteInputs inputs = prepare_suite(cfg);
    return run_suite(cfg, inputs);
}

// ---------------------------------------------------------------------------
// Ablations. Arms share worlds, episodes, seeds and the trained scorer so
// differences isolate the ablated component.

inline SuiteConfig apply_switch(SuiteConfig cfg, const std::string& name) {
    cfg.label = name;
    if (name == "full") return cfg;
    if (name == "no-looping")
        cfg.regulator.enable_looping = false;
    else if (name == "no-scoring")
        cfg.regulator.enable_scoring = false;
    else if (name == "no-ending")
        cfg.regulator.enable_ending = false;
    else if (name == "no-formulation")
        cfg.regulator.enable_formulation = false;
    else if (name == "no-llm")
        cfg.runner_only = true;
    else if (name == "no-memory")
        cfg.shared_memory = false;
    else
        throw Error("unknown ablation switch '" + name + "'");
    return cfg;
}

inline std::vector<SuiteReport> ablate(const SuiteConfig& base,
                                       const std::vector<std::string>& switches) {
    SuiteInputs inputs = prepare_suite(base);
    std::vector<SuiteReport> reports;
    reports.push_back(run_suite(apply_switch(base, "full"), inputs));
    for (const auto& s : switches) reports.push_back(run_suite(apply_switch(base, s), inputs));
    return reports;
}

// ---------------------------------------------------------------------------
// Report persistence and rendering

inline Json to_json(const EpisodeResult& r) {
    Json j;
    j["episode"] = r.episode_id;
    j["trajectory"] = r.trajectory;
    j["actions"] = r.actions;
    Json modes = Json::array();
    for (Mode m : r.step_modes) modes.push_back(to_string(m));
    j["step_modes"] = std::move(modes);
    if (r.switch_event)
        j["switch"] = Json{{"reason", to_string(r.switch_event->reason)}, {"t", r.switch_event->t}};
    j["restarts"] = r.restarts;
    j["llm_calls"] = r.llm_calls;
    j["wall_time"] = r.wall_time;
    j["ne"] = r.ne;
    j["tl"] = r.tl;
    j["shortest_len"] = r.shortest_len;
    j["success"] = r.success;
    j["stopped"] = r.stopped;
    j["aborted"] = r.aborted;
    if (r.aborted) j["abort_reason"] = r.abort_reason;
    j["runner_steps"] = r.runner_steps;
    j["ruminator_steps"] = r.ruminator_steps;
    return j;
}

inline EpisodeResult episode_result_from_json(const Json& j) {
    EpisodeResult r;
    r.episode_id = j.at("episode").get<std::string>();
    r.trajectory = j.at("trajectory").get<std::vector<std::string>>();
    r.actions = j.at("actions").get<std::vector<std::string>>();
    for (const auto& m : j.at("step_modes"))
        r.step_modes.push_back(m.get<std::string>() == "runner" ? Mode::Runner : Mode::Ruminator);
    if (j.contains("switch")) {
        SwitchEvent ev;
        const std::string reason = j.at("switch").at("reason").get<std::string>();
        ev.reason = reason == "looping"   ? SwitchReason::Looping
                    : reason == "scoring" ? SwitchReason::Scoring
                                          : SwitchReason::Ending;
        ev.t = j.at("switch").at("t").get<int>();
        r.switch_event = ev;
    }
    r.restarts = j.at("restarts").get<int>();
    r.llm_calls = j.at("llm_calls").get<int>();
    r.wall_time = j.at("wall_time").get<std::map<std::string, double>>();
    r.ne = j.at("ne").get<double>();
    r.tl = j.at("tl").get<double>();
    r.shortest_len = j.at("shortest_len").get<double>();
    r.success = j.at("success").get<bool>();
    r.stopped = j.at("stopped").get<bool>();
    r.aborted = j.at("aborted").get<bool>();
    if (j.contains("abort_reason")) r.abort_reason = j.at("abort_reason").get<std::string>();
    r.runner_steps = j.at("runner_steps").get<int>();
    r.ruminator_steps = j.at("ruminator_steps").get<int>();
    return r;
}

inline Json to_json(const SuiteReport& report) {
    Json j;
    j["schema"] = kReportSchema;
    j["label"] = report.label;
    j["aggregates"] = Json{{"episodes", report.agg.episodes},
                           {"TL", report.agg.tl},
                           {"NE", report.agg.ne},
                           {"SR", report.agg.sr},
                           {"SPL", report.agg.spl},
                           {"runner_step_fraction", report.agg.runner_step_fraction},
                           {"ruminator_step_fraction", report.agg.ruminator_step_fraction},
                           {"mean_llm_calls", report.agg.mean_llm_calls},
                           {"wall_time", report.agg.wall_time}};
    Json eps = Json::array();
    for (const auto& r : report.episodes) eps.push_back(to_json(r));
    j["episodes"] = std::move(eps);
    return j;
}

inline SuiteReport suite_report_from_json(const Json& j) {
    SuiteReport report;
    try {
        if (j.at("schema").get<std::string>() != kReportSchema)
            throw Error("unexpected report schema");
        report.label = j.at("label").get<std::string>();
        for (const auto& e : j.at("episodes")) report.episodes.push_back(episode_result_from_json(e));
    } catch (const Json::exception& e) {
        throw Error(std::string("malformed report JSON: ") + e.what());
    }
    if (report.episodes.empty()) throw Error("report has no episode results");
    report.agg = metrics(report.episodes);
    return report;
}

inline void save_report(const SuiteReport& report, const std::string& path) {
    write_text_file(path, to_json(report).dump(2) + "\n");
}

inline SuiteReport load_report(const std::string& path) {
    Json j;
    try {
        j = Json::parse(read_text_file(path));
    } catch (const Json::exception& e) {
        throw Error(path + ": " + e.what());
    }
    try {
        return suite_report_from_json(j);
    } catch (const Error& e) {
        throw Error(path + ": " + e.what());
    }
}

/// Aligned text table, one row per suite, aggregate columns only.
inline std::string render_table(const std::vector<SuiteReport>& reports) {
    std::ostringstream os;
    os << std::left << std::setw(16) << "suite" << std::right << std::setw(6) << "eps"
       << std::setw(9) << "TL" << std::setw(9) << "NE" << std::setw(9) << "SR%" << std::setw(9)
       << "SPL%" << std::setw(10) << "runner%" << std::setw(10) << "llm/ep" << "\n";
    os << std::string(78, '-') << "\n";
    os << std::fixed;
    for (const auto& r : reports) {
        os << std::left << std::setw(16) << r.label << std::right << std::setw(6) << r.agg.episodes
           << std::setprecision(2) << std::setw(9) << r.agg.tl << std::setw(9) << r.agg.ne
           << std::setw(9) << 100.0 * r.agg.sr << std::setw(9) << 100.0 * r.agg.spl << std::setw(10)
           << 100.0 * r.agg.runner_step_fraction << std::setw(10) << r.agg.mean_llm_calls << "\n";
    }
    return os.str();
}

}  // namespace r3
