#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <thread>

#include "r3/llm.hpp"
#include "r3/ruminator.hpp"
#include "support.hpp"

using namespace r3;
using r3test::WorldBuilder;

namespace {

constexpr double kPi = std::numbers::pi;

WorldGraph cross_world() {
    // b (north), c (east), d (south) around a; e beyond c
    return WorldBuilder{}
        .node("a", 0, 0)
        .node("b", 0, 5)
        .node("c", 5, 0)
        .node("d", 0, -5)
        .node("e", 10, 0)
        .edge("a", "b")
        .edge("a", "c")
        .edge("a", "d")
        .edge("c", "e")
        .tag_edge("a", "c", {"door"})
        .tag_at("e", {"towel"})
        .build();
}

MemoryBank start_bank(const WorldGraph& w, const std::string& vp, Mode mode = Mode::Runner) {
    MemoryBank bank;
    StepRecord r;
    r.t = 0;
    r.viewpoint = vp;
    r.mode = mode;
    r.entry = mode == Mode::Runner ? oriented_entry(w, vp, 0.0) : provisional_scene_entry(w, vp);
    for (const auto& n : w.neighbors(vp)) r.neighbors.push_back(n);
    bank.append(std::move(r));
    return bank;
}

std::shared_ptr<ScriptedTransport> scripted(std::vector<ScriptedTransport::Entry> entries) {
    return std::make_shared<ScriptedTransport>(std::move(entries));
}

}  // namespace

TEST_CASE("action verbs follow the angle bins") {
    REQUIRE(verbalize_action(0.0, "id_3") == "go forward to id_3");
    REQUIRE(verbalize_action(kPi, "id_3") == "turn back to id_3");
    REQUIRE(verbalize_action(kPi / 2, "id_3") == "turn left to id_3");
    REQUIRE(verbalize_action(-kPi / 2, "id_3") == "turn right to id_3");
    // boundaries resolve toward forward/back
    REQUIRE(verbalize_action(kPi / 4, "x") == "go forward to x");
    REQUIRE(verbalize_action(-kPi / 4, "x") == "go forward to x");
    REQUIRE(verbalize_action(3 * kPi / 4, "x") == "turn back to x");
    REQUIRE(verbalize_action(-3 * kPi / 4, "x") == "turn right to x");
}

TEST_CASE("options are lettered over heading-sorted candidates plus stop") {
    WorldGraph w = cross_world();
    Observation obs = observe(w, "a", 0.0);  // facing east: c forward, b left, d right
    auto options = enumerate_options(obs.candidates);
    REQUIRE(options.size() == 4);
    REQUIRE(options[0].letter == 'A');
    REQUIRE(options[0].target == "d");  // -90 degrees first in ascending order
    REQUIRE(options[1].target == "c");
    REQUIRE(options[2].target == "b");
    REQUIRE(options[3].stop);
    REQUIRE(options[3].letter == 'D');

    PromptBundle b = build_prompts(Instruction{"Bring me the towel.", InstructionStyle::CoarseGrained},
                                   obs, start_bank(w, "a"), obs.candidates);
    REQUIRE_THAT(b.option_block, Catch::Matchers::ContainsSubstring(
                                     "A. turn right to d; B. go forward to c; C. turn left to b; D. stop"));
}

TEST_CASE("option enumeration is stable under candidate input order") {
    WorldGraph w = cross_world();
    Observation obs = observe(w, "a", 0.3);
    auto candidates = obs.candidates;
    std::reverse(candidates.begin(), candidates.end());
    PromptBundle a =
        build_prompts(Instruction{"x", InstructionStyle::CoarseGrained}, obs, start_bank(w, "a"),
                      obs.candidates);
    PromptBundle b = build_prompts(Instruction{"x", InstructionStyle::CoarseGrained}, obs,
                                   start_bank(w, "a"), candidates);
    REQUIRE(a.option_block == b.option_block);
}

TEST_CASE("prompt bundles are byte-stable and ordered") {
    WorldGraph w = cross_world();
    Observation obs = observe(w, "a", 0.0);
    MemoryBank bank = start_bank(w, "a");
    Instruction instr{"Bring me the towel.", InstructionStyle::CoarseGrained};
    PromptBundle p1 = build_prompts(instr, obs, bank, obs.candidates);
    PromptBundle p2 = build_prompts(instr, obs, bank, obs.candidates);
    REQUIRE(p1.full() == p2.full());
    REQUIRE(p1.instruction_block.rfind("Instruction: ", 0) == 0);
    REQUIRE(p1.observation_block.rfind("Observation:", 0) == 0);
    REQUIRE(p1.trajectory_block.rfind("Trajectory: You begin the navigation at a", 0) == 0);
    REQUIRE(p1.map_block.rfind("Map: a is connected with b, c, d", 0) == 0);
    REQUIRE(p1.option_block.rfind("Option: A. ", 0) == 0);

    // block order in the full rendering
    auto full = p1.full();
    REQUIRE(full.find("Instruction:") < full.find("Observation:"));
    REQUIRE(full.find("Observation:") < full.find("Trajectory:"));
    REQUIRE(full.find("Trajectory:") < full.find("Map:"));
    REQUIRE(full.find("Map:") < full.find("Option:"));
}

TEST_CASE("prompt rendering matches the stored goldens byte-exactly") {
    WorldGraph w3 = load_world(r3test::tests_dir() + "/fixtures/world3.json");
    WorldGraph wx = cross_world();
    std::vector<PromptBundle> bundles;

    // 1: fresh bank, fine-grained, single candidate
    bundles.push_back(build_prompts(Instruction{"Walk to the stairs. Stop there.",
                                                InstructionStyle::FineGrained},
                                    observe(w3, "id_0", 0.0), start_bank(w3, "id_0"),
                                    observe(w3, "id_0", 0.0).candidates));
    // 2: two-step trajectory with an oriented entry
    {
        MemoryBank bank = start_bank(w3, "id_0");
        StepRecord r;
        r.t = 1;
        r.viewpoint = "id_1";
        r.action = Action::move("id_1");
        r.action_rel_heading = 0.0;
        r.mode = Mode::Runner;
        r.entry = oriented_entry(w3, "id_1", 0.0);
        r.neighbors = w3.neighbors("id_1");
        bank.append(std::move(r));
        bundles.push_back(build_prompts(Instruction{"Walk to the stairs. Stop there.",
                                                    InstructionStyle::FineGrained},
                                        observe(w3, "id_1", 0.0), bank,
                                        observe(w3, "id_1", 0.0).candidates));
    }
    // 3: scene-description memory under the ruminator
    {
        MemoryBank bank = start_bank(w3, "id_0");
        bank.overwrite_latest_entry(MemoryEntry::scene("You see a towel on a rack."),
                                    Mode::Ruminator);
        bundles.push_back(build_prompts(Instruction{"Bring me the towel.",
                                                    InstructionStyle::CoarseGrained},
                                        observe(w3, "id_0", 1.5707963267948966), bank,
                                        observe(w3, "id_0", 1.5707963267948966).candidates));
    }
    // 4: multi-candidate junction, rotated frame
    bundles.push_back(build_prompts(Instruction{"Bring me the towel.", InstructionStyle::CoarseGrained},
                                    observe(wx, "a", kPi / 2), start_bank(wx, "a"),
                                    observe(wx, "a", kPi / 2).candidates));
    // 5: stop-only options at a dead end
    {
        WorldGraph line = WorldBuilder{}.node("p", 0, 0).node("q", 3, 0).edge("p", "q").build();
        Observation obs = observe(line, "q", 0.0);
        bundles.push_back(build_prompts(Instruction{"Walk to the wall. Stop there.",
                                                    InstructionStyle::FineGrained},
                                        obs, start_bank(line, "q"), obs.candidates));
    }

    for (std::size_t i = 0; i < bundles.size(); ++i) {
        const std::string path =
            r3test::tests_dir() + "/goldens/prompt_" + std::to_string(i + 1) + ".txt";
        REQUIRE(bundles[i].full() + "\n" == read_text_file(path));
    }
}

TEST_CASE("the option parser takes the first standalone valid letter") {
    REQUIRE(parse_option_letter("B", 3) == 1);
    REQUIRE(parse_option_letter("I choose option C. stop", 3) == 2);
    REQUIRE(parse_option_letter("go with A!", 3) == 0);
    REQUIRE(parse_option_letter("BACKWARD", 3) == std::nullopt);  // no standalone letter
    REQUIRE(parse_option_letter("option Z", 3) == std::nullopt);  // out of range
    REQUIRE(parse_option_letter("", 3) == std::nullopt);
}

TEST_CASE("perception stores scripted replies and extracts referenced tags") {
    WorldGraph w = cross_world();
    Observation obs = observe(w, "e", 0.0);
    LlmClient llm(scripted({{"", "You see a towel on a rack."}}));
    SceneDescription d = perceive(llm, Instruction{"Bring me the towel.",
                                                   InstructionStyle::CoarseGrained}, obs);
    REQUIRE(d.text == "You see a towel on a rack.");
    REQUIRE(d.referenced_tags == std::vector<std::string>{"towel"});
}

TEST_CASE("perception retries empty replies and logs attempts") {
    WorldGraph w = cross_world();
    Observation obs = observe(w, "a", 0.0);
    LlmClient llm(scripted({{"", "  "}, {"", "A fine hallway."}}));
    SceneDescription d =
        perceive(llm, Instruction{"x", InstructionStyle::CoarseGrained}, obs);
    REQUIRE(d.text == "A fine hallway.");
    REQUIRE(llm.call_count() == 2);
    REQUIRE(llm.calls()[1].attempt == 1);

    LlmClient exhausted(scripted({{"", ""}, {"", ""}, {"", ""}}));
    REQUIRE_THROWS_AS(perceive(exhausted, Instruction{"x", InstructionStyle::CoarseGrained}, obs),
                      Error);
}

TEST_CASE("oracle perception joins the viewpoint tags deterministically") {
    WorldGraph w = cross_world();
    LlmClient llm(std::make_shared<OracleTransport>(w, "e"));
    Observation obs = observe(w, "e", 0.0);
    SceneDescription d =
        perceive(llm, Instruction{"Bring me the towel.", InstructionStyle::CoarseGrained}, obs);
    REQUIRE(d.text == "You see: towel, wall.");
}

TEST_CASE("planning consumes history and keeps the previous plan on failure") {
    WorldGraph w = cross_world();
    MemoryBank bank = start_bank(w, "a");
    SceneDescription desc{"A junction with a door east.", {"door"}};
    Instruction instr{"Bring me the towel.", InstructionStyle::CoarseGrained};

    SECTION("first deliberation marks the missing previous plan") {
        LlmClient llm(scripted({{"Previous plan: (none)", "Go east through the door."}}));
        Plan p = plan(llm, instr, std::nullopt, desc, bank);
        REQUIRE(p.text == "Go east through the door.");
        REQUIRE(p.origin == Plan::Origin::Ruminator);
        const auto& call = llm.calls().front();
        REQUIRE_THAT(call.prompt, Catch::Matchers::ContainsSubstring("Trajectory: You begin"));
        REQUIRE_THAT(call.prompt, Catch::Matchers::ContainsSubstring("Map: a is connected with"));
    }
    SECTION("replies are stored verbatim") {
        LlmClient llm(scripted({{"", "  head east, then north  "}}));
        Plan p = plan(llm, instr, std::nullopt, desc, bank);
        REQUIRE(p.text == "  head east, then north  ");
    }
    SECTION("empty replies keep the previous plan") {
        Plan prev{0, "stick to the east corridor", Plan::Origin::Ruminator};
        LlmClient llm(scripted({{"", ""}, {"", ""}, {"", ""}}));
        Plan p = plan(llm, instr, prev, desc, bank);
        REQUIRE(p.text == prev.text);
    }
}

TEST_CASE("prediction maps letters to candidates with fallbacks") {
    WorldGraph w = cross_world();
    Observation obs = observe(w, "a", 0.0);
    Instruction instr{"Bring me the towel.", InstructionStyle::CoarseGrained};
    Plan p{0, "go through the door", Plan::Origin::Ruminator};

    SECTION("a bare letter selects its option") {
        LlmClient llm(scripted({{"", "B"}}));
        REQUIRE(predict(llm, instr, p, obs.candidates, obs) == Action::move("c"));
    }
    SECTION("prose replies still parse") {
        LlmClient llm(scripted({{"", "I choose option D. stop"}}));
        REQUIRE(predict(llm, instr, p, obs.candidates, obs).is_stop());
    }
    SECTION("invalid letters retry, then fall back to the plan tag") {
        LlmClient llm(scripted({{"", "hmm"}, {"", "nope"}, {"", "?"}}));
        bool degraded = false;
        Action a = predict(llm, instr, p, obs.candidates, obs, &degraded);
        REQUIRE(degraded);
        REQUIRE(a == Action::move("c"));  // the a->c slot carries "door"
        REQUIRE(llm.call_count() == 3);
    }
    SECTION("without a plan tag the first option wins") {
        Plan vague{0, "just explore", Plan::Origin::Ruminator};
        LlmClient llm(scripted({{"", "?"}, {"", "?"}, {"", "?"}}));
        bool degraded = false;
        Action a = predict(llm, instr, vague, obs.candidates, obs, &degraded);
        REQUIRE(degraded);
        REQUIRE(a == Action::move("d"));  // option A
    }
}

TEST_CASE("a ruminator step makes exactly three calls and updates the bank") {
    WorldGraph w = cross_world();
    MemoryBank bank = start_bank(w, "a");
    Instruction instr{"Bring me the towel.", InstructionStyle::CoarseGrained};
    LlmClient llm(scripted({{"", "A junction."}, {"", "go east"}, {"", "B"}}));
    Action a = step_ruminator(llm, instr, bank, w, Pose{"a", 0.0});
    REQUIRE(llm.call_count() == 3);
    REQUIRE(a == Action::move("c"));
    REQUIRE(bank.records().back().entry.kind == MemoryEntry::Kind::SceneDescription);
    REQUIRE(bank.records().back().entry.text == "A junction.");
    REQUIRE(bank.plan()->text == "go east");
}

TEST_CASE("oracle-backed ruminator walks the geodesic from any start") {
    WorldGraph w = generate_world(3, 30, 3.0, {"door", "sofa", "lamp", "towel"});
    std::vector<std::string> ids;
    for (const auto& [id, vp] : w.viewpoints) ids.push_back(id);
    Instruction instr{"Bring me the towel.", InstructionStyle::CoarseGrained};

    for (std::uint64_t k = 0; k < 5; ++k) {
        const std::string start = ids[(3 + 7 * k) % ids.size()];
        const std::string goal = ids[(11 + 13 * k) % ids.size()];
        if (start == goal) continue;
        LlmClient llm(std::make_shared<OracleTransport>(w, goal));
        MemoryBank bank = start_bank(w, start, Mode::Ruminator);
        std::string cur = start;
        double heading = 0.0;
        int hops = 0;
        while (hops < 40) {
            Action a = step_ruminator(llm, instr, bank, w, Pose{cur, heading});
            if (a.is_stop()) break;
            Observation obs = observe(w, cur, heading);
            double rel = 0.0;
            for (const auto& c : obs.candidates)
                if (*c.slot.navigable_to == a.target) rel = c.relative_heading;
            heading = wrap_angle(heading + rel);
            cur = a.target;
            StepRecord rec;
            rec.t = bank.records().back().t + 1;
            rec.viewpoint = cur;
            rec.action = a;
            rec.action_rel_heading = rel;
            rec.mode = Mode::Ruminator;
            rec.entry = provisional_scene_entry(w, cur);
            rec.neighbors = w.neighbors(cur);
            bank.append(std::move(rec));
            ++hops;
        }
        REQUIRE(cur == goal);
        REQUIRE(hops == static_cast<int>(geodesic(w, start, goal).path.size()) - 1);
    }
}

TEST_CASE("a scripted transcript reproduces a hand-authored trajectory") {
    WorldGraph w = cross_world();
    Instruction instr{"Bring me the towel.", InstructionStyle::CoarseGrained};
    // a -> c -> e -> stop, three full perceive/plan/predict rounds
    LlmClient llm(scripted({
        {"Instruction: Bring me the towel.", "A junction of corridors."},
        {"Previous plan: (none)", "Head east toward the door."},
        {"Option:", "B"},  // a: [A d, B c, C b, D stop]
        {"", "A hallway continuing east."},
        {"Head east", "Keep going east."},
        {"Option:", "B"},  // c: [A a(back), B e, C stop] by heading order
        {"", "A bathroom with a towel."},
        {"", "Stop here."},
        {"Option:", "B. stop"},  // e: [A c(back), B stop]
    }));

    MemoryBank bank = start_bank(w, "a", Mode::Ruminator);
    std::string cur = "a";
    double heading = 0.0;
    std::vector<std::string> traj{cur};
    while (true) {
        Action a = step_ruminator(llm, instr, bank, w, Pose{cur, heading});
        if (a.is_stop()) break;
        Observation obs = observe(w, cur, heading);
        double rel = 0.0;
        for (const auto& c : obs.candidates)
            if (*c.slot.navigable_to == a.target) rel = c.relative_heading;
        heading = wrap_angle(heading + rel);
        cur = a.target;
        traj.push_back(cur);
        StepRecord rec;
        rec.t = bank.records().back().t + 1;
        rec.viewpoint = cur;
        rec.action = a;
        rec.action_rel_heading = rel;
        rec.mode = Mode::Ruminator;
        rec.entry = provisional_scene_entry(w, cur);
        rec.neighbors = w.neighbors(cur);
        bank.append(std::move(rec));
    }
    REQUIRE(traj == std::vector<std::string>{"a", "c", "e"});
    REQUIRE(llm.call_count() == 9);
}

TEST_CASE("scripted transports fail loudly on exhaustion and mismatches") {
    auto t = scripted({{"needle", "ok"}});
    ChatRequest req;
    req.stage = LlmStage::Perception;
    req.prompt = "no such substring";
    REQUIRE_THROWS_WITH(t->complete(req), Catch::Matchers::ContainsSubstring("needle"));

    auto t2 = scripted({});
    REQUIRE_THROWS_WITH(t2->complete(req), Catch::Matchers::ContainsSubstring("exhausted"));
}

TEST_CASE("scripted transcripts load from JSONL") {
    r3test::TempDir tmp("transcript");
    write_text_file(tmp.path("t.jsonl"),
                    "{\"expect_substring\":\"Option\",\"reply\":\"A\"}\n"
                    "{\"reply\":\"Yes\"}\n");
    ScriptedTransport t = ScriptedTransport::from_jsonl(tmp.path("t.jsonl"));
    ChatRequest req;
    req.prompt = "Option: A. stop";
    REQUIRE(t.complete(req) == "A");
    REQUIRE(t.complete(req) == "Yes");
    REQUIRE(t.remaining() == 0);
}

TEST_CASE("the http transport speaks the chat-completions wire format") {
    httplib::Server server;
    std::string seen_auth, seen_body;
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        seen_auth = req.get_header_value("Authorization");
        seen_body = req.body;
        res.set_content(
            R"({"choices":[{"message":{"role":"assistant","content":"B"}}],)"
            R"("usage":{"prompt_tokens":42,"completion_tokens":7}})",
            "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread worker([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    setenv("R3_LLM_API_KEY", "sk-test-123", 1);
    HttpLlmConfig cfg;
    cfg.endpoint = "http://127.0.0.1:" + std::to_string(port);
    cfg.model = "test-model";
    LlmClient llm(std::make_shared<HttpTransport>(cfg));
    std::string reply = llm.complete(LlmStage::Prediction, "Option: A. x; B. y", {});
    REQUIRE(reply == "B");
    REQUIRE(seen_auth == "Bearer sk-test-123");
    Json body = Json::parse(seen_body);
    REQUIRE(body["model"] == "test-model");
    REQUIRE(body["temperature"] == 0.0);
    REQUIRE(body["messages"][0]["role"] == "user");
    REQUIRE(body["messages"][0]["content"] == "Option: A. x; B. y");
    REQUIRE(llm.calls().back().prompt_tokens == 42);
    REQUIRE(llm.calls().back().completion_tokens == 7);

    server.stop();
    worker.join();
}

TEST_CASE("http transport surfaces failures with context") {
    httplib::Server server;
    server.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        res.status = 500;
        res.set_content("upstream exploded", "text/plain");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread worker([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    HttpLlmConfig cfg;
    cfg.endpoint = "http://127.0.0.1:" + std::to_string(port);
    HttpTransport transport(cfg);
    ChatRequest req;
    req.prompt = "x";
    REQUIRE_THROWS_WITH(transport.complete(req), Catch::Matchers::ContainsSubstring("500"));

    server.stop();
    worker.join();
}
