#include <catch2/catch_amalgamated.hpp>

#include <sstream>
#include <string>
#include <vector>

#include "r3/harness.hpp"
#include "support.hpp"

using namespace r3;
using r3test::WorldBuilder;

namespace {

const std::vector<std::string> kVocab = {
    "door", "sofa", "lamp", "towel", "plant", "mirror", "sink",  "table",
    "chair", "rug",  "vase", "clock", "shelf", "stove", "piano", "window"};

SuiteConfig small_suite() {
    SuiteConfig cfg;
    cfg.n_worlds = 2;
    cfg.episodes_per_world = 3;
    cfg.n_viewpoints = 25;
    cfg.min_hops = 3;
    cfg.train_worlds = 2;
    cfg.train_episodes_per_world = 4;
    cfg.scorer_hyper.epochs = 30;
    cfg.scorer_hyper.hidden = 8;
    return cfg;
}

std::vector<Json> parse_jsonl(const std::string& text) {
    std::vector<Json> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) out.push_back(Json::parse(line));
    return out;
}

}  // namespace

TEST_CASE("a perfect runner finishes with a single verification call") {
    WorldGraph w = generate_world(42, 40, 3.0, kVocab);
    Episode ep = generate_episode(w, 5, InstructionStyle::FineGrained, 4);
    HeuristicPolicy policy(0, 0, 0, 7);
    RegulatorConfig cfg;
    JsonlLogger log;
    log.enable();

    EpisodeSetup setup;
    setup.world = &w;
    setup.episode = &ep;
    setup.policy = &policy;
    setup.config = cfg;
    setup.transport = std::make_shared<OracleTransport>(w, ep.goal);
    setup.logger = &log;
    EpisodeResult r = run_episode(setup);

    REQUIRE(r.success);
    REQUIRE_FALSE(r.switch_event.has_value());
    REQUIRE(r.llm_calls == 1);  // the ending verification only
    REQUIRE(r.trajectory == ep.gt_path);
    REQUIRE(r.ne == 0.0);
    REQUIRE_THAT(r.tl, Catch::Matchers::WithinAbs(r.shortest_len, 1e-9));
    for (Mode m : r.step_modes) REQUIRE(m == Mode::Runner);

    // every logged llm call is in the transcript exactly once
    auto lines = parse_jsonl(log.text());
    int llm_lines = 0;
    for (const auto& j : lines) llm_lines += j.value("type", "") == "llm" ? 1 : 0;
    REQUIRE(llm_lines == r.llm_calls);
}

TEST_CASE("a trapped runner is rescued by the looping criterion") {
    // coarse instruction with an out-of-sight target: the trap oscillation
    // runs until the revisit threshold trips
    WorldGraph w = WorldBuilder{}
                       .node("a", 0, 0)
                       .node("b", 4, 0)
                       .node("c", 8, 0)
                       .node("d", 12, 0)
                       .node("e", 16, 0)
                       .edge("a", "b")
                       .edge("b", "c")
                       .edge("c", "d")
                       .edge("d", "e")
                       .tag_at("e", {"towel"})
                       .build();
    Episode ep;
    ep.id = "trap_rescue";
    ep.start = "a";
    ep.goal = "e";
    ep.gt_path = {"a", "b", "c", "d", "e"};
    ep.instruction = {"Bring me the towel.", InstructionStyle::CoarseGrained};
    HeuristicPolicy policy(0, 1.0, 0, 5);  // bounces forever
    RegulatorConfig cfg;

    EpisodeResult r = run_episode(w, ep, policy, cfg, nullptr,
                                  std::make_shared<OracleTransport>(w, ep.goal));
    REQUIRE(r.switch_event.has_value());
    REQUIRE(r.switch_event->reason == SwitchReason::Looping);
    REQUIRE(r.switch_event->t < 12);
    REQUIRE(r.success);
    // one-way switching: no runner step after a ruminator step
    bool seen_ruminator = false;
    for (Mode m : r.step_modes) {
        if (m == Mode::Ruminator) seen_ruminator = true;
        if (seen_ruminator) REQUIRE(m == Mode::Ruminator);
    }
}

TEST_CASE("a premature stop is redirected by the ending criterion") {
    WorldGraph w = generate_world(33, 40, 3.0, kVocab);
    Episode ep = generate_episode(w, 2, InstructionStyle::FineGrained, 4);
    HeuristicPolicy policy(0, 0, 1.0, 5);  // stops immediately
    RegulatorConfig cfg;

    EpisodeResult r = run_episode(w, ep, policy, cfg, nullptr,
                                  std::make_shared<OracleTransport>(w, ep.goal));
    REQUIRE(r.switch_event.has_value());
    REQUIRE(r.switch_event->reason == SwitchReason::Ending);
    REQUIRE(r.switch_event->t == 0);
    REQUIRE(r.success);  // the oracle ruminator recovers
}

TEST_CASE("metrics match six hand-computed fixtures") {
    auto fixture = [](bool success, double shortest, double tl, double ne, int llm) {
        EpisodeResult r;
        r.success = success;
        r.shortest_len = shortest;
        r.tl = tl;
        r.ne = ne;
        r.llm_calls = llm;
        r.stopped = true;
        r.step_modes = {Mode::Runner};
        r.runner_steps = 0;
        return r;
    };
    std::vector<EpisodeResult> rows = {
        fixture(true, 10.0, 10.0, 0.0, 1),   // SPL 1: optimal path
        fixture(true, 10.0, 20.0, 1.0, 1),   // SPL 0.5
        fixture(false, 8.0, 3.0, 9.0, 1),    // failure: SPL 0 even with short p
        fixture(true, 6.0, 6.0, 2.5, 4),     // SPL 1 at the success boundary
        fixture(true, 12.0, 48.0, 0.5, 7),   // SPL 0.25
        fixture(false, 15.0, 40.0, 20.0, 1), // SPL 0
    };
    Aggregates agg = metrics(rows);
    REQUIRE(agg.episodes == 6);
    const double expect_spl = (1.0 + 0.5 + 0.0 + 1.0 + 0.25 + 0.0) / 6.0;
    REQUIRE_THAT(agg.spl, Catch::Matchers::WithinAbs(expect_spl, 1e-9));
    REQUIRE_THAT(agg.sr, Catch::Matchers::WithinAbs(4.0 / 6.0, 1e-9));
    REQUIRE_THAT(agg.tl, Catch::Matchers::WithinAbs((10 + 20 + 3 + 6 + 48 + 40) / 6.0, 1e-9));
    REQUIRE_THAT(agg.ne, Catch::Matchers::WithinAbs((0 + 1 + 9 + 2.5 + 0.5 + 20) / 6.0, 1e-9));
    REQUIRE_THAT(agg.mean_llm_calls, Catch::Matchers::WithinAbs(15.0 / 6.0, 1e-9));
    REQUIRE_THAT(agg.runner_step_fraction + agg.ruminator_step_fraction,
                 Catch::Matchers::WithinAbs(1.0, 1e-12));

    REQUIRE(spl_contribution(true, 10.0, 10.0) == 1.0);
    REQUIRE(spl_contribution(false, 10.0, 1.0) == 0.0);
    REQUIRE(spl_contribution(true, 0.0, 0.0) == 1.0);
    REQUIRE_THROWS_AS(metrics({}), Error);
}

TEST_CASE("scripted restarts reset the bank and retrace physically") {
    // force looping, then a scripted RESTART, then scripted navigation
    WorldGraph w = WorldBuilder{}
                       .node("a", 0, 0)
                       .node("b", 4, 0)
                       .node("c", 8, 0)
                       .node("d", 12, 0)
                       .edge("a", "b")
                       .edge("b", "c")
                       .edge("c", "d")
                       .tag_at("d", {"towel"})
                       .build();
    Episode ep;
    ep.id = "restart_fixture";
    ep.start = "a";
    ep.goal = "d";
    ep.gt_path = {"a", "b", "c", "d"};
    ep.instruction = {"Bring me the towel.", InstructionStyle::CoarseGrained};

    HeuristicPolicy policy(0, 1.0, 0, 3);  // traps between a and b
    RegulatorConfig cfg;
    cfg.tau_r = 2;  // fire early

    // the trap fires looping at the start viewpoint, formulation restarts
    // (trivial retrace), then four ruminator steps walk a -> b -> c -> d
    // and stop: options are [A b, B stop] at a, [A back, B east, C stop]
    // mid-corridor, and [A back, B stop] at d
    auto transport = std::make_shared<ScriptedTransport>(std::vector<ScriptedTransport::Entry>{
        {"", "DECISION: RESTART\nPLAN: walk straight east to the towel"},
        {"", "A corridor heading east."},
        {"", "go east"},
        {"Option:", "A"},
        {"", "A corridor."},
        {"", "east"},
        {"Option:", "B"},
        {"", "A corridor."},
        {"", "east"},
        {"Option:", "B"},
        {"", "The towel room."},
        {"", "stop"},
        {"Option:", "B"},
    });

    JsonlLogger log;
    log.enable();
    EpisodeSetup setup;
    setup.world = &w;
    setup.episode = &ep;
    setup.policy = &policy;
    setup.config = cfg;
    setup.transport = transport;
    setup.logger = &log;
    EpisodeResult r = run_episode(setup);
    (void)r;

    auto lines = parse_jsonl(log.text());
    bool saw_restart = false;
    bool next_step_checked = false;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].value("type", "") == "restart") {
            saw_restart = true;
            for (std::size_t j = i + 1; j < lines.size(); ++j) {
                if (lines[j].value("type", "") == "step") {
                    REQUIRE(lines[j].at("t").get<int>() == 0);  // bank was reset
                    next_step_checked = true;
                    break;
                }
            }
        }
    }
    REQUIRE(saw_restart);
    REQUIRE(next_step_checked);
}

TEST_CASE("the step cap bounds every trace") {
    WorldGraph w = WorldBuilder{}
                       .node("a", 0, 0)
                       .node("b", 4, 0)
                       .node("c", 8, 0)
                       .node("d", 12, 0)
                       .edge("a", "b")
                       .edge("b", "c")
                       .edge("c", "d")
                       .tag_at("d", {"towel"})
                       .build();
    Episode ep;
    ep.id = "cap";
    ep.start = "a";
    ep.goal = "d";
    ep.gt_path = {"a", "b", "c", "d"};
    ep.instruction = {"Bring me the towel.", InstructionStyle::CoarseGrained};
    HeuristicPolicy policy(0, 1.0, 0, 2);
    RegulatorConfig cfg;
    cfg.enable_looping = false;
    cfg.enable_scoring = false;
    cfg.enable_ending = false;
    cfg.enable_formulation = false;
    cfg.step_cap = 24;

    EpisodeResult r = run_episode(w, ep, policy, cfg, nullptr, nullptr);
    REQUIRE_FALSE(r.stopped);
    REQUIRE(static_cast<int>(r.actions.size()) == 24);
    REQUIRE_FALSE(r.success);
}

TEST_CASE("disabling every criterion reproduces the runner-alone trace") {
    WorldGraph w = generate_world(9, 30, 3.0, kVocab);
    HeuristicPolicy policy(0.3, 0.4, 0.1, 13);
    for (std::uint64_t s = 0; s < 4; ++s) {
        Episode ep = generate_episode(w, s, InstructionStyle::FineGrained, 3);

        RegulatorConfig off;
        off.enable_looping = off.enable_scoring = off.enable_ending = off.enable_formulation = false;
        EpisodeResult with_regulator =
            run_episode(w, ep, policy, off, nullptr, std::make_shared<OracleTransport>(w, ep.goal));

        EpisodeSetup alone;
        alone.world = &w;
        alone.episode = &ep;
        alone.policy = &policy;
        alone.config = RegulatorConfig{};
        alone.runner_only = true;
        EpisodeResult baseline = run_episode(alone);

        REQUIRE(with_regulator.trajectory == baseline.trajectory);
        REQUIRE(with_regulator.actions == baseline.actions);
        REQUIRE(with_regulator.llm_calls == 0);
        REQUIRE(baseline.llm_calls == 0);
    }
}

TEST_CASE("suites are deterministic and reports round-trip") {
    r3test::TempDir tmp("suite");
    SuiteConfig cfg = small_suite();
    cfg.out_dir = tmp.path("runs_a");
    SuiteReport a = run_suite(cfg);
    cfg.out_dir = tmp.path("runs_b");
    SuiteReport b = run_suite(cfg);

    REQUIRE(a.agg.sr == b.agg.sr);
    REQUIRE(a.agg.spl == b.agg.spl);
    for (std::size_t i = 0; i < a.episodes.size(); ++i) {
        const std::string name = a.episodes[i].episode_id + ".jsonl";
        REQUIRE(read_text_file(tmp.path("runs_a") + "/full/" + name) ==
                read_text_file(tmp.path("runs_b") + "/full/" + name));
    }

    save_report(a, tmp.path("report.json"));
    SuiteReport back = load_report(tmp.path("report.json"));
    REQUIRE(back.episodes.size() == a.episodes.size());
    REQUIRE_THAT(back.agg.spl, Catch::Matchers::WithinAbs(a.agg.spl, 1e-12));

    // aggregates recompute from the rows
    Aggregates again = metrics(back.episodes);
    REQUIRE(again.sr == back.agg.sr);
    REQUIRE_THAT(again.runner_step_fraction + again.ruminator_step_fraction,
                 Catch::Matchers::WithinAbs(1.0, 1e-12));

    write_text_file(tmp.path("empty.json"),
                    "{\"schema\":\"r3.report.v1\",\"label\":\"x\",\"episodes\":[]}\n");
    REQUIRE_THROWS_AS(load_report(tmp.path("empty.json")), Error);
}

TEST_CASE("ablation arms share inputs and isolate one component each") {
    SuiteConfig cfg = small_suite();
    auto reports = ablate(cfg, {"no-looping", "no-scoring", "no-ending", "no-formulation"});
    REQUIRE(reports.size() == 5);
    REQUIRE(reports[0].label == "full");
    REQUIRE(reports[1].label == "no-looping");
    for (const auto& r : reports) REQUIRE(r.episodes.size() == 6);

    // the no-llm arm equals a runner-only run on the same inputs
    SuiteInputs inputs = prepare_suite(cfg);
    SuiteReport no_llm = run_suite(apply_switch(cfg, "no-llm"), inputs);
    for (const auto& r : no_llm.episodes) {
        REQUIRE(r.llm_calls == 0);
        for (Mode m : r.step_modes) REQUIRE(m == Mode::Runner);
    }
    REQUIRE_THROWS_AS(apply_switch(cfg, "no-such-switch"), Error);
}

TEST_CASE("one-way switching holds across a full suite") {
    SuiteConfig cfg = small_suite();
    cfg.trap_prob = 0.5;  // provoke plenty of switches
    SuiteReport report = run_suite(cfg);
    int switches = 0;
    for (const auto& r : report.episodes) {
        bool seen_ruminator = false;
        for (Mode m : r.step_modes) {
            if (m == Mode::Ruminator) seen_ruminator = true;
            if (seen_ruminator) REQUIRE(m == Mode::Ruminator);
        }
        switches += r.switch_event ? 1 : 0;
    }
    REQUIRE(switches > 0);
}

TEST_CASE("render_table lines up suite aggregates") {
    SuiteConfig cfg = small_suite();
    SuiteReport r = run_suite(cfg);
    std::string table = render_table({r});
    REQUIRE_THAT(table, Catch::Matchers::ContainsSubstring("SR%"));
    REQUIRE_THAT(table, Catch::Matchers::ContainsSubstring("full"));
}
