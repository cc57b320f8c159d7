#include <cstdint>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "evomcts/harness.hpp"

namespace {

// Holders for the flag values shared by solve and bench; a value is applied
// only when its flag was actually given, so config-file settings survive.
struct Overrides {
    std::string config;
    int iterations = 0;
    double gamma = 0.0;
    double alpha = 0.0;
    double exploration_c = 0.0;
    int retrieval_k = 0;
    std::vector<std::string> ablation;
    std::string memory;
    std::string out;
    std::uint64_t seed = 0;
};

void add_common_flags(CLI::App* sub, Overrides& ov) {
    sub->add_option("--config", ov.config, "Run configuration JSON file");
    sub->add_option("--iterations", ov.iterations, "Search iterations T");
    sub->add_option("--gamma", ov.gamma, "Backpropagation decay factor in [0,1]");
    sub->add_option("--alpha", ov.alpha, "Reward-fusion weight on the pairwise probability");
    sub->add_option("--exploration-c", ov.exploration_c, "UCT exploration constant");
    sub->add_option("--retrieval-k", ov.retrieval_k, "Experiences retrieved per query");
    sub->add_option("--ablation", ov.ablation,
                    "Ablations: no-meta-prompt, no-memory, no-peemp, repeated-sampling")
        ->delimiter(',');
    sub->add_option("--memory", ov.memory, "Experience library file (JSONL)");
    sub->add_option("--out", ov.out, "Artifact output directory");
    sub->add_option("--seed", ov.seed, "Seed for deterministic id generation");
}

void apply_overrides(evomcts::RunConfig& cfg, const CLI::App* sub, const Overrides& ov) {
    if (sub->count("--iterations")) cfg.search.iterations = ov.iterations;
    if (sub->count("--gamma")) cfg.search.gamma = ov.gamma;
    if (sub->count("--alpha")) cfg.search.fusion.alpha = ov.alpha;
    if (sub->count("--exploration-c")) cfg.search.exploration_c = ov.exploration_c;
    if (sub->count("--retrieval-k")) cfg.search.retrieval_k = ov.retrieval_k;
    if (sub->count("--ablation")) cfg.search.ablation = evomcts::parse_ablations(ov.ablation);
    if (sub->count("--memory")) cfg.memory_path = ov.memory;
    if (sub->count("--out")) cfg.out_dir = ov.out;
    if (sub->count("--seed")) cfg.search.seed = ov.seed;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dual-loop tree search over language-model responses: UCT selection, "
                 "pairwise judging with prompt evolution, and a persistent experience "
                 "library"};
    app.require_subcommand(1);

    Overrides ov;

    auto* solve = app.add_subcommand("solve", "Search one problem and write trace artifacts");
    std::string problem_path, inline_text;
    solve->add_option("--problem", problem_path, "JSONL problem file (first entry is used)");
    solve->add_option("--text", inline_text, "Inline problem text");
    add_common_flags(solve, ov);

    auto* bench =
        app.add_subcommand("bench", "Run a problem set sharing one experience library");
    std::string problems_path;
    bench->add_option("--problems", problems_path, "JSONL problem set")->required();
    add_common_flags(bench, ov);

    auto* memory = app.add_subcommand("memory", "Inspect the experience library");
    std::string action, memory_path;
    memory->add_option("action", action, "list | export | stats")->required();
    memory->add_option("--memory", memory_path, "Experience library file (JSONL)")
        ->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? evomcts::kExitOk : evomcts::kExitConfigError;
    }

    return evomcts::run_guarded([&]() -> int {
        if (memory->parsed()) return evomcts::cmd_memory(action, memory_path);

        evomcts::RunConfig cfg;
        if (!ov.config.empty()) cfg = evomcts::load_run_config(ov.config);
        const CLI::App* active = solve->parsed() ? static_cast<CLI::App*>(solve)
                                                 : static_cast<CLI::App*>(bench);
        apply_overrides(cfg, active, ov);
        evomcts::validate_config(cfg.search);

        if (bench->parsed()) return evomcts::cmd_bench(cfg, problems_path);

        evomcts::Query q;
        if (!inline_text.empty()) {
            q.id = "inline";
            q.body = inline_text;
        } else if (!problem_path.empty()) {
            for (const auto& rec : evomcts::load_problems(problem_path))
                if (rec.query) {
                    q = *rec.query;
                    break;
                }
            if (q.body.empty())
                throw evomcts::ConfigError("problem: no usable entry in " + problem_path);
        } else {
            throw evomcts::ConfigError("solve: provide --problem or --text");
        }
        return evomcts::cmd_solve(cfg, q);
    });
}
