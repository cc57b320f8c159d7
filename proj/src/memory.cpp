#include "evomcts/memory.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <json.hpp>

#include "evomcts/fenced.hpp"
#include "evomcts/text.hpp"

namespace evomcts {

using nlohmann::json;

std::string to_string(ExperienceStatus status) {
    switch (status) {
        case ExperienceStatus::Active: return "active";
        case ExperienceStatus::Merged: return "merged";
        case ExperienceStatus::Deleted: return "deleted";
    }
    return "active";
}

ExperienceStatus experience_status_from_string(const std::string& s) {
    if (s == "active") return ExperienceStatus::Active;
    if (s == "merged") return ExperienceStatus::Merged;
    if (s == "deleted") return ExperienceStatus::Deleted;
    throw CorruptionError("unknown experience status: " + s);
}

int ExperienceLibrary::active_count() const {
    return count_with_status(ExperienceStatus::Active);
}

int ExperienceLibrary::count_with_status(ExperienceStatus status) const {
    int n = 0;
    for (const auto& [_, e] : entries)
        if (e.status == status) ++n;
    return n;
}

namespace {

json entry_to_json(const Experience& e) {
    return json{{"id", e.id},
                {"task_type", e.task_type},
                {"body", e.body},
                {"status", to_string(e.status)},
                {"created_at", e.created_at},
                {"updated_at", e.updated_at},
                {"source_query", e.source_query},
                {"revision", e.revision},
                {"merged_from", e.merged_from}};
}

Experience entry_from_json(const json& j) {
    Experience e;
    e.id = j.at("id").get<std::string>();
    e.task_type = j.at("task_type").get<std::string>();
    e.body = j.at("body").get<std::string>();
    e.status = experience_status_from_string(j.at("status").get<std::string>());
    e.created_at = j.at("created_at").get<std::int64_t>();
    e.updated_at = j.at("updated_at").get<std::int64_t>();
    e.source_query = j.at("source_query").get<std::string>();
    e.revision = j.at("revision").get<int>();
    e.merged_from = j.at("merged_from").get<std::vector<std::string>>();
    return e;
}

std::uint64_t fnv1a64(std::uint64_t hash, const std::string& data) {
    for (unsigned char c : data) {
        hash ^= c;
        hash *= 0x100000001b3ull;
    }
    return hash;
}

std::string normalize_label(const std::string& s) {
    std::string t = trim_copy(s);
    while (!t.empty() && (t.back() == '.' || t.back() == '"' || t.back() == '\''))
        t.pop_back();
    while (!t.empty() && (t.front() == '"' || t.front() == '\''))
        t.erase(t.begin());
    std::transform(t.begin(), t.end(), t.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return t;
}

// RAII advisory lock on <path>.lock.
class FileLock {
public:
    FileLock(const std::string& path, int operation) {
        fd_ = ::open((path + ".lock").c_str(), O_CREAT | O_RDWR, 0644);
        if (fd_ >= 0) ::flock(fd_, operation);
    }
    ~FileLock() {
        if (fd_ >= 0) {
            ::flock(fd_, LOCK_UN);
            ::close(fd_);
        }
    }
    FileLock(const FileLock&) = delete;
    FileLock& operator=(const FileLock&) = delete;

private:
    int fd_ = -1;
};

} // namespace

std::string library_checksum(const ExperienceLibrary& lib) {
    std::uint64_t hash = 0xcbf29ce484222325ull;
    for (const auto& [_, e] : lib.entries) {
        hash = fnv1a64(hash, entry_to_json(e).dump());
        hash = fnv1a64(hash, "\n");
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
    return buf;
}

std::string classify_task(const Query& q, const std::vector<std::string>& labels,
                          Backend& backend) {
    if (q.task_type && !q.task_type->empty()) return *q.task_type;

    std::string label_list;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (i) label_list += ", ";
        label_list += labels[i];
    }
    BackendRequest req;
    req.tag = tag::classify;
    req.temperature = 0.0;
    req.max_tokens = 64;
    req.messages = {
        {"system",
         "You classify problems by task type. Reply with exactly one label from the "
         "provided list and nothing else."},
        {"user", "Labels: " + label_list + "\n\nProblem:\n" + q.body + "\n\nLabel:"}};

    std::string reply;
    try {
        reply = backend.generate(req).content;
    } catch (const TransportError&) {
        return "general";
    } catch (const ProtocolError&) {
        return "general";
    }

    const std::string normalized = normalize_label(reply);
    std::string matched;
    int substring_hits = 0;
    for (const auto& label : labels) {
        const std::string norm_label = normalize_label(label);
        if (normalized == norm_label) return label;
        if (normalized.find(norm_label) != std::string::npos) {
            ++substring_hits;
            matched = label;
        }
    }
    return substring_hits == 1 ? matched : "general";
}

std::vector<Experience> retrieve(const ExperienceLibrary& lib, const std::string& task_type,
                                 int k) {
    if (k <= 0) throw InvalidInputError("retrieve: k must be positive");
    std::vector<Experience> matching;
    for (const auto& [_, e] : lib.entries)
        if (e.status == ExperienceStatus::Active && e.task_type == task_type)
            matching.push_back(e);
    std::sort(matching.begin(), matching.end(), [](const Experience& a, const Experience& b) {
        if (a.updated_at != b.updated_at) return a.updated_at > b.updated_at;
        return a.id < b.id;
    });
    if (static_cast<int>(matching.size()) > k) matching.resize(k);
    return matching;
}

std::vector<std::string> filter_insights(const std::vector<std::string>& insights,
                                         std::size_t min_length) {
    std::vector<std::string> kept;
    for (const auto& raw : insights) {
        std::string t = trim_copy(raw);
        if (t.size() >= min_length) kept.push_back(std::move(t));
    }
    return kept;
}

UpdatePlan parse_update_plan(const std::string& raw) {
    const std::string payload = extract_fenced_block(raw, kPlanBlockBegin, kPlanBlockEnd);
    json j = json::parse(payload, nullptr, false);
    if (j.is_discarded()) throw ParseError("plan block is not valid JSON");
    if (!j.contains("ops") || !j["ops"].is_array())
        throw ParseError("plan block missing 'ops' array");

    UpdatePlan plan;
    for (const json& op : j["ops"]) {
        if (!op.is_object() || !op.contains("op") || !op["op"].is_string())
            throw ParseError("plan op missing 'op' kind");
        const std::string kind = op["op"].get<std::string>();
        try {
            if (kind == "add") {
                AddOp add;
                add.body = op.at("body").get<std::string>();
                if (op.contains("task_type")) add.task_type = op["task_type"].get<std::string>();
                plan.ops.emplace_back(std::move(add));
            } else if (kind == "modify") {
                plan.ops.emplace_back(ModifyOp{op.at("id").get<std::string>(),
                                               op.at("new_body").get<std::string>()});
            } else if (kind == "merge") {
                plan.ops.emplace_back(MergeOp{op.at("ids").get<std::vector<std::string>>(),
                                              op.at("merged_body").get<std::string>()});
            } else if (kind == "delete") {
                plan.ops.emplace_back(DeleteOp{op.at("id").get<std::string>()});
            } else {
                throw ParseError("unknown plan op kind: " + kind);
            }
        } catch (const json::exception& e) {
            throw ParseError(std::string("malformed plan op: ") + e.what());
        }
    }
    return plan;
}

namespace {

// Reference / shape checks that do not need apply-time state.
void validate_plan_against(const ExperienceLibrary& lib, const UpdatePlan& plan) {
    if (plan.ops.empty()) throw ValidationError("plan contains no operations");
    auto require_active = [&](const std::string& id) {
        auto it = lib.entries.find(id);
        if (it == lib.entries.end())
            throw ValidationError("plan references unknown id " + id);
        if (it->second.status != ExperienceStatus::Active)
            throw ValidationError("plan references non-active id " + id);
    };
    for (const auto& op : plan.ops) {
        if (const auto* add = std::get_if<AddOp>(&op)) {
            if (trim_copy(add->body).empty()) throw ValidationError("add op has empty body");
        } else if (const auto* mod = std::get_if<ModifyOp>(&op)) {
            require_active(mod->id);
            if (trim_copy(mod->new_body).empty()) throw ValidationError("modify op has empty body");
        } else if (const auto* merge = std::get_if<MergeOp>(&op)) {
            if (merge->ids.size() < 2) throw ValidationError("merge op needs at least 2 ids");
            for (const auto& id : merge->ids) require_active(id);
            if (trim_copy(merge->merged_body).empty())
                throw ValidationError("merge op has empty body");
        } else if (const auto* del = std::get_if<DeleteOp>(&op)) {
            require_active(del->id);
        }
    }
}

std::string render_optimizer_prompt(const ExperienceLibrary& lib,
                                    const std::vector<std::string>& e_new,
                                    const std::string& task_type) {
    std::ostringstream out;
    out << "Task type: " << task_type << "\n\nExisting experiences:\n";
    const auto existing = retrieve(lib, task_type, std::numeric_limits<int>::max());
    if (existing.empty()) {
        out << "(none)\n";
    } else {
        for (const auto& e : existing)
            out << "- id=" << e.id << ": " << e.body << "\n";
    }
    out << "\nNew insights:\n";
    for (std::size_t i = 0; i < e_new.size(); ++i)
        out << (i + 1) << ". " << e_new[i] << "\n";
    out << "\nDecide how to fold the new insights into the library using only the four "
           "operations add, modify, merge, delete. Keep entries distinct, correct and "
           "non-redundant. Reply with exactly one block of the form:\n"
        << kPlanBlockBegin << "\n"
        << R"({"ops": [{"op": "add", "body": "...", "task_type": ")" << task_type
        << R"("}, {"op": "modify", "id": "...", "new_body": "..."}, )"
        << R"({"op": "merge", "ids": ["...", "..."], "merged_body": "..."}, )"
        << R"({"op": "delete", "id": "..."}]})"
        << "\n"
        << kPlanBlockEnd << "\n";
    return out.str();
}

} // namespace

UpdatePlan generate_update_plan(const ExperienceLibrary& lib,
                                const std::vector<std::string>& e_new, const Query& q,
                                const std::string& task_type, Backend& backend, int retries) {
    if (e_new.empty())
        throw InvalidInputError("generate_update_plan: insight list must be non-empty");

    BackendRequest req;
    req.tag = tag::optimize;
    req.temperature = 0.0;
    req.max_tokens = 4096;
    req.messages = {{"system",
                     "You maintain a library of problem-solving experiences. You answer "
                     "only with the requested structured block."},
                    {"user", render_optimizer_prompt(lib, e_new, task_type)}};

    for (int attempt = 0; attempt <= retries; ++attempt) {
        const std::string raw = backend.generate(req).content;
        try {
            UpdatePlan plan = parse_update_plan(raw);
            validate_plan_against(lib, plan);
            // Stamp provenance on adds the model cannot know about.
            for (auto& op : plan.ops)
                if (auto* add = std::get_if<AddOp>(&op)) {
                    if (add->task_type.empty()) add->task_type = task_type;
                    add->source_query = q.id;
                }
            return plan;
        } catch (const ParseError& e) {
            req.messages.push_back({"assistant", raw});
            req.messages.push_back(
                {"user", std::string("Your reply could not be used (") + e.what() +
                             "). Reply again with exactly one valid block."});
        } catch (const ValidationError& e) {
            req.messages.push_back({"assistant", raw});
            req.messages.push_back(
                {"user", std::string("Your plan was invalid (") + e.what() +
                             "). Reply again with exactly one valid block."});
        }
    }

    // Degraded mode: append-only adds so optimizer flakiness never stalls growth.
    UpdatePlan fallback;
    for (const auto& insight : e_new)
        fallback.ops.emplace_back(AddOp{insight, task_type, q.id});
    return fallback;
}

void apply_plan(ExperienceLibrary& lib, const UpdatePlan& plan) {
    if (plan.ops.empty()) throw ValidationError("plan contains no operations");

    // Work on a copy; commit only when every op applied.
    auto entries = lib.entries;
    std::vector<std::string> fresh_ids;

    // A reseeded generator (scripted reruns over a loaded library) can replay
    // ids that already exist; emplace would silently drop the entry.
    auto fresh_id = [&](std::int64_t now) {
        std::string id = lib.idgen.next(now);
        while (entries.count(id)) id = lib.idgen.next(now);
        return id;
    };

    auto find_active = [&](const std::string& id) -> Experience& {
        auto it = entries.find(id);
        if (it == entries.end())
            throw ValidationError("plan references unknown id " + id);
        if (it->second.status != ExperienceStatus::Active)
            throw ValidationError("plan references non-active id " + id);
        return it->second;
    };

    for (const auto& op : plan.ops) {
        const std::int64_t now = lib.clock();
        if (const auto* add = std::get_if<AddOp>(&op)) {
            if (trim_copy(add->body).empty()) throw ValidationError("add op has empty body");
            Experience e;
            e.id = fresh_id(now);
            e.task_type = add->task_type;
            e.body = add->body;
            e.created_at = e.updated_at = now;
            e.source_query = add->source_query;
            entries.emplace(e.id, e);
            fresh_ids.push_back(e.id);
        } else if (const auto* mod = std::get_if<ModifyOp>(&op)) {
            if (trim_copy(mod->new_body).empty()) throw ValidationError("modify op has empty body");
            Experience& e = find_active(mod->id);
            e.body = mod->new_body;
            e.revision += 1;
            e.updated_at = now;
        } else if (const auto* merge = std::get_if<MergeOp>(&op)) {
            if (merge->ids.size() < 2) throw ValidationError("merge op needs at least 2 ids");
            if (trim_copy(merge->merged_body).empty())
                throw ValidationError("merge op has empty body");
            Experience merged;
            merged.body = merge->merged_body;
            merged.created_at = merged.updated_at = now;
            merged.merged_from = merge->ids;
            for (const auto& id : merge->ids) {
                Experience& src = find_active(id);
                src.status = ExperienceStatus::Merged;
                src.updated_at = now;
                if (merged.task_type.empty()) merged.task_type = src.task_type;
                if (merged.source_query.empty()) merged.source_query = src.source_query;
            }
            merged.id = fresh_id(now);
            entries.emplace(merged.id, merged);
            fresh_ids.push_back(merged.id);
        } else if (const auto* del = std::get_if<DeleteOp>(&op)) {
            Experience& e = find_active(del->id);
            e.status = ExperienceStatus::Deleted;
            e.updated_at = now;
        }
    }

    lib.entries = std::move(entries);
    lib.version += 1;
    lib.checksum = library_checksum(lib);
}

void persist(const ExperienceLibrary& lib, const std::string& path) {
    FileLock lock(path, LOCK_EX);
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw Error("cannot write library file: " + path);
        json header{{"library_version", lib.version}, {"checksum", library_checksum(lib)}};
        out << header.dump() << "\n";
        for (const auto& [_, e] : lib.entries) out << entry_to_json(e).dump() << "\n";
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw Error("cannot replace library file: " + std::string(std::strerror(errno)));
}

ExperienceLibrary load_library(const std::string& path) {
    FileLock lock(path, LOCK_SH);
    ExperienceLibrary lib;
    std::ifstream in(path);
    if (!in) return lib; // bootstrap: empty library, version 0

    std::string line;
    if (!std::getline(in, line)) throw CorruptionError("library file has no header line");
    json header = json::parse(line, nullptr, false);
    if (header.is_discarded() || !header.contains("library_version") ||
        !header.contains("checksum"))
        throw CorruptionError("library header malformed");

    lib.version = header["library_version"].get<std::int64_t>();
    while (std::getline(in, line)) {
        if (trim_copy(line).empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) throw CorruptionError("library entry line is not valid JSON");
        Experience e;
        try {
            e = entry_from_json(j);
        } catch (const json::exception& ex) {
            throw CorruptionError(std::string("library entry malformed: ") + ex.what());
        }
        if (!lib.entries.emplace(e.id, std::move(e)).second)
            throw CorruptionError("duplicate experience id in library file");
    }

    const std::string expected = header["checksum"].get<std::string>();
    const std::string actual = library_checksum(lib);
    if (expected != actual)
        throw CorruptionError("library checksum mismatch: header " + expected +
                              ", content " + actual);
    lib.checksum = actual;
    return lib;
}

std::string export_markdown(const ExperienceLibrary& lib) {
    std::map<std::string, std::vector<const Experience*>> by_type;
    for (const auto& [_, e] : lib.entries)
        if (e.status == ExperienceStatus::Active) by_type[e.task_type].push_back(&e);

    std::ostringstream out;
    out << "# Experience library\n\n";
    out << "- version: " << lib.version << "\n";
    out << "- active entries: " << lib.active_count() << "\n";
    if (by_type.empty()) {
        out << "\n(no active experiences)\n";
        return out.str();
    }
    for (auto& [type, entries] : by_type) {
        out << "\n## " << type << "\n\n";
        std::sort(entries.begin(), entries.end(),
                  [](const Experience* a, const Experience* b) { return a->id < b->id; });
        for (const Experience* e : entries) {
            out << "- `" << e->id << "` (rev " << e->revision << "): " << e->body << "\n";
        }
    }
    return out.str();
}

} // namespace evomcts
