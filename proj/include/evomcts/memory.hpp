#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "evomcts/backend.hpp"
#include "evomcts/core.hpp"
#include "evomcts/idgen.hpp"

namespace evomcts {

enum class ExperienceStatus { Active, Merged, Deleted };

std::string to_string(ExperienceStatus status);
ExperienceStatus experience_status_from_string(const std::string& s);

// One distilled insight. Status only ever moves active -> merged or
// active -> deleted; merged/deleted entries stay as tombstones so merge
// provenance and growth counts remain auditable.
struct Experience {
    std::string id;
    std::string task_type;
    std::string body;
    ExperienceStatus status = ExperienceStatus::Active;
    std::int64_t created_at = 0;
    std::int64_t updated_at = 0;
    std::string source_query;
    int revision = 1;
    std::vector<std::string> merged_from; // source ids when this entry is a merge result
};

// The four atomic operations an optimizer plan may contain.
struct AddOp {
    std::string body;
    std::string task_type;
    std::string source_query; // query the insight was distilled from, when known
};
struct ModifyOp {
    std::string id;
    std::string new_body;
};
struct MergeOp {
    std::vector<std::string> ids; // >= 2 sources
    std::string merged_body;
};
struct DeleteOp {
    std::string id;
};

using PlanOp = std::variant<AddOp, ModifyOp, MergeOp, DeleteOp>;

struct UpdatePlan {
    std::vector<PlanOp> ops;
};

// Global experience store. version increments exactly once per applied
// plan; checksum is refreshed after every mutation. clock/idgen are
// injectable so scripted runs are bit-reproducible.
struct ExperienceLibrary {
    std::map<std::string, Experience> entries;
    std::int64_t version = 0;
    std::string checksum;

    Clock clock = wall_clock();
    UlidGenerator idgen;

    int active_count() const;
    int count_with_status(ExperienceStatus status) const;
};

// FNV-1a 64 digest over the canonical entry serialization; hex string.
std::string library_checksum(const ExperienceLibrary& lib);

// Zero-shot task classification. A preset q.task_type is returned without
// any backend call; an unrecognized or failed reply falls back to "general".
std::string classify_task(const Query& q, const std::vector<std::string>& labels,
                          Backend& backend);

// Active entries matching task_type, most recently updated first
// (ties broken by id), truncated to k.
std::vector<Experience> retrieve(const ExperienceLibrary& lib, const std::string& task_type,
                                 int k);

// Drops insights shorter than min_length characters (the high-value gate).
std::vector<std::string> filter_insights(const std::vector<std::string>& insights,
                                         std::size_t min_length);

// Asks the backend for a structured plan over the same-taxonomy slice of the
// library plus the new insights. Parse/validation failures are retried with
// a correction message; after `retries` extra attempts the result degrades
// to one Add per insight so memory growth is never blocked.
UpdatePlan generate_update_plan(const ExperienceLibrary& lib,
                                const std::vector<std::string>& e_new, const Query& q,
                                const std::string& task_type, Backend& backend, int retries);

// Parses the fenced plan block; op references are validated against the
// library by apply_plan, not here.
UpdatePlan parse_update_plan(const std::string& raw);

// Applies all ops or none. Any op referencing a non-active id rejects the
// whole plan (ValidationError) and leaves the library untouched. On success
// version increments once and the checksum is refreshed.
void apply_plan(ExperienceLibrary& lib, const UpdatePlan& plan);

// JSONL persistence: header line with version and checksum, then one entry
// per line sorted by id. A missing file loads as an empty library; any
// integrity problem raises CorruptionError. Writer holds an exclusive
// advisory lock on <path>.lock; load takes it shared.
void persist(const ExperienceLibrary& lib, const std::string& path);
ExperienceLibrary load_library(const std::string& path);

// Markdown audit view of active experiences grouped by taxonomy.
std::string export_markdown(const ExperienceLibrary& lib);

// Optimizer prompt's structured-block fences (also used by test fixtures).
inline constexpr const char* kPlanBlockBegin = "<<<PLAN_V1>>>";
inline constexpr const char* kPlanBlockEnd = "<<<END_PLAN_V1>>>";

// Worst-case backend calls per memory update, for budget accounting.
constexpr int max_optimizer_calls(int retries) { return 1 + retries; }

} // namespace evomcts
