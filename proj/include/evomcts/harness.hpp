#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "evomcts/backend.hpp"
#include "evomcts/memory.hpp"
#include "evomcts/search.hpp"

namespace evomcts {

// Stable CLI exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRunFailure = 1;
inline constexpr int kExitConfigError = 2;

// File-backed run configuration. Everything the CLI flags can override plus
// the backend wiring the flags cannot.
struct RunConfig {
    SearchConfig search;

    std::string backend_mode = "scripted"; // scripted | http
    std::string script_path;               // scripted: response fixture (JSON)
    std::string base_url;                  // http: host, e.g. https://api.example.com/v1
    std::string model;
    std::string api_key_env = "EVOMCTS_API_KEY";
    PriceTable prices;

    std::string memory_path;        // empty -> volatile in-memory library
    std::string out_dir = "out";
    std::string answer_marker = "FINAL:"; // line marker for answer extraction
};

// Parses and validates a JSON config file; error messages name the offending
// key. Unknown keys are rejected so typos cannot silently change a run.
RunConfig load_run_config(const std::string& path);

// Builds the configured backend. Scripted mode loads the script fixture:
// {"queue": [...], "tag_queues": {tag: [...]}, "sticky": {tag: text},
//  "failures": n}.
std::unique_ptr<Backend> make_backend(const RunConfig& cfg);

// Loads the library (empty when the path is unset/missing) and, for scripted
// backends, rebinds it to a logical clock and a seed-derived id generator so
// repeated runs are byte-identical.
ExperienceLibrary prepare_library(const RunConfig& cfg);

// Final-answer span: the last \boxed{...} group or the trailing marker line
// ("FINAL: ..."), whichever appears last. Empty optional when neither is
// present.
std::optional<std::string> extract_answer(const std::string& response,
                                          const std::string& marker = "FINAL:");

// One problems-file line: a parsed query or a recorded per-item error.
struct ProblemRecord {
    std::optional<Query> query;
    std::string error; // non-empty when the line was unusable
    int line_no = 0;
};

// JSONL ingestion: {"id": ..., "problem": ..., "answer"?: ..., "task_type"?: ...}.
// Malformed lines become error records; a missing file raises ConfigError.
std::vector<ProblemRecord> load_problems(const std::string& path);

// Subcommand entry points; each returns an exit code and writes artifacts
// under cfg.out_dir (trace.json, events.jsonl, growth.csv, report.csv).
int cmd_solve(const RunConfig& cfg, const Query& problem);
int cmd_bench(const RunConfig& cfg, const std::string& problems_path);
int cmd_memory(const std::string& subcommand, const std::string& memory_path);

// Maps escaping errors onto the exit-code contract: configuration problems
// exit 2, everything else 1.
int run_guarded(const std::function<int()>& body);

} // namespace evomcts
