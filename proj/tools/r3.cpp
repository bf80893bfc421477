// r3 — dual-process navigation benchmark driver.
//
// Subcommands: gen-world, gen-episodes, collect, train-scorer, train-runner,
// run, ablate, report. See README.md for a walkthrough.
#include <cstdio>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "r3/r3.hpp"

namespace {

using namespace r3;

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::size_t begin = 0;
    while (begin <= s.size()) {
        std::size_t comma = s.find(',', begin);
        if (comma == std::string::npos) comma = s.size();
        if (comma > begin) out.push_back(s.substr(begin, comma - begin));
        begin = comma + 1;
    }
    return out;
}

InstructionStyle parse_style(const std::string& s) {
    if (s == "fine") return InstructionStyle::FineGrained;
    if (s == "coarse") return InstructionStyle::CoarseGrained;
    throw Error("unknown instruction style '" + s + "' (expected fine|coarse)");
}

TransportKind parse_transport(const std::string& s) {
    if (s == "oracle") return TransportKind::Oracle;
    if (s == "scripted") return TransportKind::Scripted;
    if (s == "http") return TransportKind::Http;
    throw Error("unknown transport '" + s + "' (expected http|scripted|oracle)");
}

struct SuiteFlags {
    SuiteConfig cfg;
    std::string style = "coarse";
    std::string llm = "oracle";

    void attach(CLI::App* cmd) {
        cmd->add_option("--seed", cfg.master_seed, "master seed for worlds, episodes and splits");
        cmd->add_option("--worlds", cfg.n_worlds, "evaluation worlds");
        cmd->add_option("--episodes", cfg.episodes_per_world, "episodes per world");
        cmd->add_option("--viewpoints", cfg.n_viewpoints, "viewpoints per world");
        cmd->add_option("--degree", cfg.mean_degree, "mean viewpoint degree");
        cmd->add_option("--min-hops", cfg.min_hops, "minimum start-goal hop distance");
        cmd->add_option("--style", style, "instruction style: fine|coarse");
        cmd->add_option("--noise", cfg.noise, "runner noise probability");
        cmd->add_option("--trap", cfg.trap_prob, "runner trap (bounce-back) probability");
        cmd->add_option("--premature-stop", cfg.premature_stop_prob,
                        "runner premature stop probability");
        cmd->add_option("--policy-seed", cfg.policy_seed, "runner policy seed");
        cmd->add_option("--tau-r", cfg.regulator.tau_r, "revisit threshold");
        cmd->add_option("--tau-l", cfg.regulator.tau_l, "trajectory length threshold");
        cmd->add_option("--tau-g", cfg.regulator.tau_g, "scoring threshold");
        cmd->add_option("--step-cap", cfg.regulator.step_cap, "hard step limit per episode");
        cmd->add_option("--llm", llm, "transport: http|scripted|oracle");
        cmd->add_option("--scripted", cfg.scripted_path, "scripted transcript JSONL");
        cmd->add_option("--model", cfg.http.model, "model name for the http transport");
        cmd->add_option("--endpoint", cfg.http.endpoint,
                        "http endpoint (default: $R3_LLM_ENDPOINT)");
        cmd->add_option("--train-worlds", cfg.train_worlds, "scorer training worlds");
        cmd->add_option("--scorer-epochs", cfg.scorer_hyper.epochs, "scorer training epochs");
        cmd->add_option("--jobs", cfg.jobs, "parallel episode workers");
        cmd->add_option("--out-dir", cfg.out_dir, "directory for run logs and reports");
        cmd->add_flag(
            "--no-scorer", [this](std::int64_t) { cfg.use_scorer = false; },
            "disable the scoring criterion entirely");
    }

    SuiteConfig finalize() {
        cfg.style = parse_style(style);
        cfg.transport = parse_transport(llm);
        if (cfg.transport == TransportKind::Scripted && cfg.scripted_path.empty())
            throw Error("--llm scripted requires --scripted <transcript.jsonl>");
        return cfg;
    }
};

int cmd_gen_world(std::uint64_t seed, std::size_t n, double degree, const std::string& vocab_csv,
                  const std::string& out) {
    std::vector<std::string> vocab =
        vocab_csv.empty() ? SuiteConfig{}.tag_vocab : split_csv(vocab_csv);
    WorldGraph w = generate_world(seed, n, degree, vocab);
    save_world(w, out);
    std::printf("wrote %s: %zu viewpoints, seed %llu\n", out.c_str(), w.viewpoints.size(),
                static_cast<unsigned long long>(seed));
    return 0;
}

int cmd_gen_episodes(const std::string& world_path, std::uint64_t seed, int count,
                     const std::string& style, int min_hops, const std::string& out) {
    WorldGraph w = load_world(world_path);
    std::vector<Episode> eps;
    for (int i = 0; i < count; ++i) {
        Episode ep = generate_episode(w, derive_seed(seed, static_cast<std::uint64_t>(i)),
                                      parse_style(style), min_hops);
        ep.id = "ep_" + std::to_string(i);
        eps.push_back(std::move(ep));
    }
    save_episodes(eps, out);
    std::printf("wrote %s: %d episodes\n", out.c_str(), count);
    return 0;
}

int cmd_collect(const std::vector<std::string>& worlds, const std::vector<std::string>& episodes,
                double noise, double trap, double stop, std::uint64_t policy_seed, int step_cap,
                const std::string& out) {
    if (worlds.size() != episodes.size() || worlds.empty())
        throw Error("collect: provide matching --world/--episodes pairs");
    std::vector<WorldGraph> loaded;
    for (const auto& p : worlds) loaded.push_back(load_world(p));
    std::vector<std::pair<const WorldGraph*, std::vector<Episode>>> sets;
    for (std::size_t i = 0; i < loaded.size(); ++i)
        sets.push_back({&loaded[i], load_episodes(episodes[i], &loaded[i])});
    HeuristicPolicy policy(noise, trap, stop, policy_seed);
    auto snaps = collect_snapshots(sets, policy, step_cap);
    save_snapshots(snaps, out);
    int pos = 0;
    for (const auto& s : snaps) pos += s.label;
    std::printf("wrote %s: %zu snapshots (%d anomalous)\n", out.c_str(), snaps.size(), pos);
    return 0;
}

int cmd_train_scorer(const std::string& snapshots_path, const ScorerHyper& hyper,
                     const std::string& out) {
    auto snaps = load_snapshots(snapshots_path);
    ScorerTrainResult r = train_scorer(snaps, hyper);
    save_scorer(r.params, out);
    std::printf("wrote %s: %zu epochs, holdout AUC %.4f\n", out.c_str(), r.train_losses.size(),
                r.holdout_auc);
    return 0;
}

int cmd_train_runner(const std::string& world_path, const std::string& episodes_path,
                     const BcHyper& hyper, const std::string& out) {
    WorldGraph w = load_world(world_path);
    auto eps = load_episodes(episodes_path, &w);
    BcTrainResult r = train_bc(eps, w, hyper);
    save_policy(r.params, out);
    std::printf("wrote %s: loss %.6f -> %.6f over %zu epochs\n", out.c_str(),
                r.loss_history.front(), r.loss_history.back(), r.loss_history.size());
    return 0;
}

int cmd_run(SuiteFlags& flags, const std::string& label) {
    SuiteConfig cfg = flags.finalize();
    cfg.label = label;
    SuiteReport report = run_suite(cfg);
    std::cout << render_table({report});
    if (!cfg.out_dir.empty()) {
        const std::string path = cfg.out_dir + "/report_" + cfg.label + ".json";
        save_report(report, path);
        std::printf("report written to %s\n", path.c_str());
    }
    return 0;
}

int cmd_ablate(SuiteFlags& flags, const std::string& switches_csv) {
    SuiteConfig cfg = flags.finalize();
    auto arms = ablate(cfg, split_csv(switches_csv));
    std::cout << render_table(arms);
    if (!cfg.out_dir.empty()) {
        for (const auto& arm : arms)
            save_report(arm, cfg.out_dir + "/report_" + arm.label + ".json");
        std::printf("reports written to %s\n", cfg.out_dir.c_str());
    }
    return 0;
}

int cmd_report(const std::string& in, const std::string& out_json) {
    SuiteReport report = load_report(in);
    std::cout << render_table({report});
    if (!out_json.empty()) {
        save_report(report, out_json);
        std::printf("json written to %s\n", out_json.c_str());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"r3: dual-process navigation benchmark"};
    app.require_subcommand(1);

    std::uint64_t gw_seed = 7;
    std::size_t gw_n = 60;
    double gw_degree = 3.0;
    std::string gw_vocab, gw_out = "world.json";
    auto* gen_world_cmd = app.add_subcommand("gen-world", "generate a synthetic world");
    gen_world_cmd->add_option("--seed", gw_seed);
    gen_world_cmd->add_option("--viewpoints", gw_n);
    gen_world_cmd->add_option("--degree", gw_degree);
    gen_world_cmd->add_option("--vocab", gw_vocab, "comma-separated tag vocabulary");
    gen_world_cmd->add_option("--out", gw_out);

    std::string ge_world = "world.json", ge_style = "coarse", ge_out = "episodes.json";
    std::uint64_t ge_seed = 7;
    int ge_count = 10, ge_min_hops = 4;
    auto* gen_eps_cmd = app.add_subcommand("gen-episodes", "generate episodes on a world");
    gen_eps_cmd->add_option("--world", ge_world)->required();
    gen_eps_cmd->add_option("--seed", ge_seed);
    gen_eps_cmd->add_option("--count", ge_count);
    gen_eps_cmd->add_option("--style", ge_style, "fine|coarse");
    gen_eps_cmd->add_option("--min-hops", ge_min_hops);
    gen_eps_cmd->add_option("--out", ge_out);

    std::vector<std::string> co_worlds, co_eps;
    double co_noise = 0.2, co_trap = 0.3, co_stop = 0.1;
    std::uint64_t co_policy_seed = 1;
    int co_cap = 40;
    std::string co_out = "snapshots.jsonl";
    auto* collect_cmd = app.add_subcommand("collect", "collect pseudo-labeled scorer snapshots");
    collect_cmd->add_option("--world", co_worlds, "world JSON (repeatable)")->required();
    collect_cmd->add_option("--episodes", co_eps, "episodes JSON (repeatable)")->required();
    collect_cmd->add_option("--noise", co_noise);
    collect_cmd->add_option("--trap", co_trap);
    collect_cmd->add_option("--premature-stop", co_stop);
    collect_cmd->add_option("--policy-seed", co_policy_seed);
    collect_cmd->add_option("--step-cap", co_cap);
    collect_cmd->add_option("--out", co_out);

    std::string ts_in = "snapshots.jsonl", ts_out = "scorer.ckpt.json";
    ScorerHyper ts_hyper;
    auto* train_scorer_cmd = app.add_subcommand("train-scorer", "train the GAT scoring model");
    train_scorer_cmd->add_option("--snapshots", ts_in);
    train_scorer_cmd->add_option("--epochs", ts_hyper.epochs);
    train_scorer_cmd->add_option("--lr", ts_hyper.lr);
    train_scorer_cmd->add_option("--seed", ts_hyper.seed);
    train_scorer_cmd->add_option("--hidden", ts_hyper.hidden);
    train_scorer_cmd->add_option("--out", ts_out);

    std::string tr_world, tr_eps, tr_out = "runner.ckpt.json";
    BcHyper tr_hyper;
    auto* train_runner_cmd = app.add_subcommand("train-runner", "behavior-clone the runner head");
    train_runner_cmd->add_option("--world", tr_world)->required();
    train_runner_cmd->add_option("--episodes", tr_eps)->required();
    train_runner_cmd->add_option("--epochs", tr_hyper.epochs);
    train_runner_cmd->add_option("--lr", tr_hyper.lr);
    train_runner_cmd->add_option("--seed", tr_hyper.seed);
    train_runner_cmd->add_option("--out", tr_out);

    SuiteFlags run_flags;
    auto* run_cmd = app.add_subcommand("run", "run the seeded benchmark suite");
    run_flags.attach(run_cmd);
    std::string run_label = "full";
    run_cmd->add_option("--label", run_label);

    SuiteFlags ablate_flags;
    std::string ab_switches = "no-looping,no-scoring,no-ending,no-formulation";
    auto* ablate_cmd = app.add_subcommand("ablate", "run ablation arms over shared inputs");
    ablate_flags.attach(ablate_cmd);
    ablate_cmd->add_option("--switches", ab_switches, "comma-separated arm list");

    std::string rp_in, rp_out;
    auto* report_cmd = app.add_subcommand("report", "render a saved report");
    report_cmd->add_option("--in", rp_in)->required();
    report_cmd->add_option("--json", rp_out, "also write the normalized report JSON here");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen_world_cmd->parsed()) return cmd_gen_world(gw_seed, gw_n, gw_degree, gw_vocab, gw_out);
        if (gen_eps_cmd->parsed())
            return cmd_gen_episodes(ge_world, ge_seed, ge_count, ge_style, ge_min_hops, ge_out);
        if (collect_cmd->parsed())
            return cmd_collect(co_worlds, co_eps, co_noise, co_trap, co_stop, co_policy_seed,
                               co_cap, co_out);
        if (train_scorer_cmd->parsed()) return cmd_train_scorer(ts_in, ts_hyper, ts_out);
        if (train_runner_cmd->parsed()) return cmd_train_runner(tr_world, tr_eps, tr_hyper, tr_out);
        if (run_cmd->parsed()) return cmd_run(run_flags, run_label);
        if (ablate_cmd->parsed()) return cmd_ablate(ablate_flags, ab_switches);
        if (report_cmd->parsed()) return cmd_report(rp_in, rp_out);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
