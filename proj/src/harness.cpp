#include "evomcts/harness.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "evomcts/http_backend.hpp"
#include "evomcts/scripted_backend.hpp"
#include "evomcts/text.hpp"
#include "evomcts/trace.hpp"

namespace evomcts {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void reject_unknown(const json& obj, const std::string& prefix,
                    std::initializer_list<const char*> allowed) {
    for (const auto& [key, _] : obj.items()) {
        if (std::none_of(allowed.begin(), allowed.end(),
                         [&](const char* a) { return key == a; }))
            throw ConfigError(prefix + key + ": unknown key");
    }
}

template <typename T>
void read_into(const json& obj, const std::string& prefix, const char* key, T& out) {
    auto it = obj.find(key);
    if (it == obj.end()) return;
    try {
        out = it->get<T>();
    } catch (const json::exception&) {
        throw ConfigError(prefix + key + ": wrong type");
    }
}

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += "\"";
    return out;
}

std::string mode_label(const std::set<Ablation>& ablation) {
    if (ablation.empty()) return "full";
    std::string out;
    for (Ablation a : ablation) {
        if (!out.empty()) out += "+";
        out += to_string(a);
    }
    return out;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    out << content;
}

json config_to_json(const RunConfig& cfg) {
    json ablation = json::array();
    for (Ablation a : cfg.search.ablation) ablation.push_back(to_string(a));
    return json{{"iterations", cfg.search.iterations},
                {"exploration_c", cfg.search.exploration_c},
                {"gamma", cfg.search.gamma},
                {"alpha", cfg.search.fusion.alpha},
                {"seed", cfg.search.seed},
                {"retries", cfg.search.retries},
                {"retrieval_k", cfg.search.retrieval_k},
                {"min_insight_length", cfg.search.min_insight_length},
                {"ablation", ablation},
                {"backend_mode", cfg.backend_mode}};
}

json query_to_json(const Query& q) {
    json j{{"id", q.id},
           {"body", q.body},
           {"task_type", nullptr},
           {"gold_answer", nullptr}};
    if (q.task_type) j["task_type"] = *q.task_type;
    if (q.gold_answer) j["gold_answer"] = *q.gold_answer;
    return j;
}

std::string render_trace(const RunConfig& cfg, const Query& q, const SearchResult& result,
                         const std::vector<IterationEvent>& events) {
    json ev_arr = json::array();
    for (const auto& ev : events) ev_arr.push_back(event_to_json(ev));
    json trace{{"query", query_to_json(q)},
               {"config", config_to_json(cfg)},
               {"task_type", result.task_type},
               {"tree", tree_to_json(result.tree)},
               {"events", ev_arr},
               {"best_node", result.best_node},
               {"best_response", result.best_response},
               {"experience_delta", result.experience_delta},
               {"prompt_lineage", lineage_to_json(result.prompt_lineage)},
               {"cost", cost_to_json(result.cost)},
               {"aborted", result.aborted},
               {"abort_reason", result.abort_reason}};
    return trace.dump(2) + "\n";
}

std::string render_events(const std::vector<IterationEvent>& events) {
    std::string out;
    for (const auto& ev : events) out += event_to_json(ev).dump() + "\n";
    return out;
}

std::string render_growth(const std::vector<std::pair<int, int>>& rows) {
    std::string out = "rollout,active_experiences\n";
    for (const auto& [rollout, active] : rows)
        out += std::to_string(rollout) + "," + std::to_string(active) + "\n";
    return out;
}

} // namespace

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config: not valid JSON: " + path);
    if (!j.is_object()) throw ConfigError("config: top level must be an object");

    reject_unknown(j, "", {"backend", "search", "memory", "out", "answer_marker"});

    RunConfig cfg;
    read_into(j, "", "memory", cfg.memory_path);
    read_into(j, "", "out", cfg.out_dir);
    read_into(j, "", "answer_marker", cfg.answer_marker);

    if (j.contains("backend")) {
        const json& b = j["backend"];
        if (!b.is_object()) throw ConfigError("backend: must be an object");
        reject_unknown(b, "backend.",
                       {"mode", "script", "base_url", "model", "api_key_env", "prices"});
        read_into(b, "backend.", "mode", cfg.backend_mode);
        read_into(b, "backend.", "script", cfg.script_path);
        read_into(b, "backend.", "base_url", cfg.base_url);
        read_into(b, "backend.", "model", cfg.model);
        read_into(b, "backend.", "api_key_env", cfg.api_key_env);
        if (b.contains("prices")) {
            const json& p = b["prices"];
            if (!p.is_object()) throw ConfigError("backend.prices: must be an object");
            reject_unknown(p, "backend.prices.", {"prompt_token", "completion_token"});
            read_into(p, "backend.prices.", "prompt_token", cfg.prices.prompt_token);
            read_into(p, "backend.prices.", "completion_token", cfg.prices.completion_token);
            if (cfg.prices.prompt_token < 0 || cfg.prices.completion_token < 0)
                throw ConfigError("backend.prices: must be non-negative");
        }
    }
    if (cfg.backend_mode != "scripted" && cfg.backend_mode != "http")
        throw ConfigError("backend.mode: must be 'scripted' or 'http'");
    if (cfg.backend_mode == "http") {
        if (cfg.base_url.empty()) throw ConfigError("backend.base_url: required in http mode");
        if (cfg.model.empty()) throw ConfigError("backend.model: required in http mode");
    }

    if (j.contains("search")) {
        const json& s = j["search"];
        if (!s.is_object()) throw ConfigError("search: must be an object");
        reject_unknown(s, "search.",
                       {"iterations", "exploration_c", "gamma", "alpha", "seed", "retries",
                        "retrieval_k", "min_insight_length", "ablation",
                        "expand_temperature", "judge_temperature", "max_tokens",
                        "base_prompt", "taxonomy"});
        read_into(s, "search.", "iterations", cfg.search.iterations);
        read_into(s, "search.", "exploration_c", cfg.search.exploration_c);
        read_into(s, "search.", "gamma", cfg.search.gamma);
        read_into(s, "search.", "alpha", cfg.search.fusion.alpha);
        read_into(s, "search.", "seed", cfg.search.seed);
        read_into(s, "search.", "retries", cfg.search.retries);
        read_into(s, "search.", "retrieval_k", cfg.search.retrieval_k);
        read_into(s, "search.", "min_insight_length", cfg.search.min_insight_length);
        read_into(s, "search.", "expand_temperature", cfg.search.expand_params.temperature);
        read_into(s, "search.", "judge_temperature", cfg.search.judge_params.temperature);
        int max_tokens = cfg.search.expand_params.max_tokens;
        read_into(s, "search.", "max_tokens", max_tokens);
        cfg.search.expand_params.max_tokens = max_tokens;
        cfg.search.judge_params.max_tokens = max_tokens;
        read_into(s, "search.", "base_prompt", cfg.search.base_prompt);
        read_into(s, "search.", "taxonomy", cfg.search.taxonomy);
        std::vector<std::string> ablation_names;
        read_into(s, "search.", "ablation", ablation_names);
        cfg.search.ablation = parse_ablations(ablation_names);
    }

    validate_config(cfg.search);
    return cfg;
}

std::unique_ptr<Backend> make_backend(const RunConfig& cfg) {
    if (cfg.backend_mode == "http") {
        if (cfg.base_url.empty()) throw ConfigError("backend.base_url: required in http mode");
        if (cfg.model.empty()) throw ConfigError("backend.model: required in http mode");
        const char* key = std::getenv(cfg.api_key_env.c_str());
        if (!key || !*key)
            throw ConfigError("backend.api_key_env: environment variable " +
                              cfg.api_key_env + " is not set");
        HttpBackendConfig http;
        http.base_url = cfg.base_url;
        http.model = cfg.model;
        http.api_key = key;
        http.prices = cfg.prices;
        return std::make_unique<HttpBackend>(http);
    }

    auto scripted = std::make_unique<ScriptedBackend>(
        RetryPolicy{.max_attempts = 4, .base_delay_ms = 1, .factor = 2.0}, cfg.prices);
    if (!cfg.script_path.empty()) {
        std::ifstream in(cfg.script_path);
        if (!in) throw ConfigError("backend.script: cannot open " + cfg.script_path);
        json j = json::parse(in, nullptr, false);
        if (j.is_discarded())
            throw ConfigError("backend.script: not valid JSON: " + cfg.script_path);
        reject_unknown(j, "script.", {"queue", "tag_queues", "sticky", "failures"});
        if (j.contains("queue"))
            for (const json& r : j["queue"]) scripted->push(r.get<std::string>());
        if (j.contains("tag_queues"))
            for (const auto& [tag, arr] : j["tag_queues"].items())
                for (const json& r : arr) scripted->push_tag(tag, r.get<std::string>());
        if (j.contains("sticky"))
            for (const auto& [tag, r] : j["sticky"].items())
                scripted->set_sticky(tag, r.get<std::string>());
        if (j.contains("failures")) scripted->inject_failures(j["failures"].get<int>());
    }
    return scripted;
}

ExperienceLibrary prepare_library(const RunConfig& cfg) {
    ExperienceLibrary lib;
    if (!cfg.memory_path.empty() && fs::exists(cfg.memory_path))
        lib = load_library(cfg.memory_path);
    if (cfg.backend_mode == "scripted") {
        lib.clock = logical_clock();
        lib.idgen = UlidGenerator(cfg.search.seed);
    }
    return lib;
}

std::optional<std::string> extract_answer(const std::string& response,
                                          const std::string& marker) {
    // Last balanced \boxed{...} group.
    std::optional<std::string> boxed;
    std::size_t boxed_pos = std::string::npos;
    const std::string token = "\\boxed{";
    for (std::size_t p = response.find(token); p != std::string::npos;
         p = response.find(token, p + 1)) {
        int depth = 1;
        std::string content;
        std::size_t i = p + token.size();
        for (; i < response.size() && depth > 0; ++i) {
            const char c = response[i];
            if (c == '{') ++depth;
            if (c == '}' && --depth == 0) break;
            content += c;
        }
        if (depth == 0) {
            boxed = content;
            boxed_pos = p;
        }
    }

    // Last line starting with the marker.
    std::optional<std::string> marked;
    std::size_t marked_pos = std::string::npos;
    if (!marker.empty()) {
        std::size_t start = 0;
        while (start <= response.size()) {
            const std::size_t end = response.find('\n', start);
            const std::string line = response.substr(
                start, end == std::string::npos ? std::string::npos : end - start);
            const std::string t = trim_copy(line);
            if (t.rfind(marker, 0) == 0) {
                marked = trim_copy(t.substr(marker.size()));
                marked_pos = start;
            }
            if (end == std::string::npos) break;
            start = end + 1;
        }
    }

    if (boxed && marked) return boxed_pos > marked_pos ? boxed : marked;
    if (boxed) return boxed;
    return marked;
}

std::vector<ProblemRecord> load_problems(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("problems: cannot open " + path);

    std::vector<ProblemRecord> records;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim_copy(line).empty()) continue;
        ProblemRecord rec;
        rec.line_no = line_no;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
            rec.error = "line " + std::to_string(line_no) + ": not a JSON object";
            records.push_back(std::move(rec));
            continue;
        }
        Query q;
        if (j.contains("id") && j["id"].is_string()) q.id = j["id"].get<std::string>();
        else if (j.contains("id") && j["id"].is_number())
            q.id = std::to_string(j["id"].get<long long>());
        else {
            rec.error = "line " + std::to_string(line_no) + ": missing 'id'";
            records.push_back(std::move(rec));
            continue;
        }
        if (!j.contains("problem") || !j["problem"].is_string()) {
            rec.error = "line " + std::to_string(line_no) + ": missing 'problem'";
            records.push_back(std::move(rec));
            continue;
        }
        q.body = j["problem"].get<std::string>();
        if (j.contains("answer")) {
            if (j["answer"].is_string()) q.gold_answer = j["answer"].get<std::string>();
            else if (j["answer"].is_number_integer())
                q.gold_answer = std::to_string(j["answer"].get<long long>());
            else if (j["answer"].is_number())
                q.gold_answer = json(j["answer"].get<double>()).dump();
        }
        if (j.contains("task_type") && j["task_type"].is_string())
            q.task_type = j["task_type"].get<std::string>();
        rec.query = std::move(q);
        records.push_back(std::move(rec));
    }
    return records;
}

int cmd_solve(const RunConfig& cfg, const Query& problem) {
    validate_config(cfg.search);
    auto backend = make_backend(cfg);
    ExperienceLibrary lib = prepare_library(cfg);

    std::vector<IterationEvent> events;
    std::vector<std::pair<int, int>> growth{{0, lib.active_count()}};
    const SearchResult result =
        run_search(problem, lib, *backend, cfg.search, [&](const IterationEvent& ev) {
            events.push_back(ev);
            growth.emplace_back(ev.iteration, ev.library_active);
        });

    fs::create_directories(cfg.out_dir);
    write_file(cfg.out_dir + "/trace.json", render_trace(cfg, problem, result, events));
    write_file(cfg.out_dir + "/events.jsonl", render_events(events));
    write_file(cfg.out_dir + "/growth.csv", render_growth(growth));
    if (!cfg.memory_path.empty()) persist(lib, cfg.memory_path);

    std::cout << result.best_response << "\n";
    if (result.aborted) {
        std::cerr << "run aborted: " << result.abort_reason << "\n";
        return kExitRunFailure;
    }
    return kExitOk;
}

int cmd_bench(const RunConfig& cfg, const std::string& problems_path) {
    validate_config(cfg.search);
    const std::vector<ProblemRecord> records = load_problems(problems_path);
    auto backend = make_backend(cfg);
    ExperienceLibrary lib = prepare_library(cfg);

    const std::string mode = mode_label(cfg.search.ablation);
    std::string report = "problem_id,mode,task_type,best_node,max_prompt_version,"
                         "experience_delta,aborted,extracted,gold,correct,error\n";
    std::vector<std::pair<int, int>> growth{{0, lib.active_count()}};
    int rollout = 0;
    int correct = 0, graded = 0;
    bool aborted = false;
    CostReport total_cost;

    for (const ProblemRecord& rec : records) {
        if (!rec.query) {
            report += ",,,,,,,,,," + csv_escape(rec.error) + "\n";
            continue;
        }
        const Query& q = *rec.query;
        const SearchResult result =
            run_search(q, lib, *backend, cfg.search, [&](const IterationEvent& ev) {
                growth.emplace_back(++rollout, ev.library_active);
            });
        total_cost += result.cost;

        int max_version = 0;
        for (const MetaPrompt& p : result.prompt_lineage)
            max_version = std::max(max_version, p.version);

        const std::optional<std::string> extracted =
            extract_answer(result.best_response, cfg.answer_marker);
        std::string correct_cell;
        if (q.gold_answer) {
            ++graded;
            const bool ok =
                extracted && trim_copy(*extracted) == trim_copy(*q.gold_answer);
            if (ok) ++correct;
            correct_cell = ok ? "1" : "0";
        }

        report += csv_escape(q.id) + "," + mode + "," + csv_escape(result.task_type) + "," +
                  std::to_string(result.best_node) + "," + std::to_string(max_version) +
                  "," + std::to_string(result.experience_delta) + "," +
                  (result.aborted ? "true" : "false") + "," +
                  csv_escape(extracted.value_or("")) + "," +
                  csv_escape(q.gold_answer.value_or("")) + "," + correct_cell + ",\n";

        if (result.aborted) {
            aborted = true;
            std::cerr << "run aborted on problem " << q.id << ": " << result.abort_reason
                      << "\n";
            break; // the backend is unreachable; later problems cannot fare better
        }
    }

    fs::create_directories(cfg.out_dir);
    write_file(cfg.out_dir + "/report.csv", report);
    write_file(cfg.out_dir + "/growth.csv", render_growth(growth));
    if (!cfg.memory_path.empty()) persist(lib, cfg.memory_path);

    std::cout << "mode: " << mode << "\n"
              << "accuracy: " << correct << "/" << graded << "\n"
              << "backend calls: " << total_cost.total_calls() << "\n"
              << "cost: $" << total_cost.dollars << "\n"
              << "library active: " << lib.active_count() << "\n";
    return aborted ? kExitRunFailure : kExitOk;
}

int cmd_memory(const std::string& subcommand, const std::string& memory_path) {
    const ExperienceLibrary lib = load_library(memory_path);
    if (subcommand == "list") {
        for (const auto& [_, e] : lib.entries)
            if (e.status == ExperienceStatus::Active)
                std::cout << e.id << "  [" << e.task_type << "]  " << e.body << "\n";
        return kExitOk;
    }
    if (subcommand == "export") {
        std::cout << export_markdown(lib);
        return kExitOk;
    }
    if (subcommand == "stats") {
        std::map<std::string, int> active_by_type;
        for (const auto& [_, e] : lib.entries)
            if (e.status == ExperienceStatus::Active) active_by_type[e.task_type] += 1;
        std::cout << "version: " << lib.version << "\n"
                  << "total: " << lib.entries.size() << "\n"
                  << "active: " << lib.active_count() << "\n"
                  << "merged: " << lib.count_with_status(ExperienceStatus::Merged) << "\n"
                  << "deleted: " << lib.count_with_status(ExperienceStatus::Deleted) << "\n";
        for (const auto& [type, n] : active_by_type)
            std::cout << "active[" << type << "]: " << n << "\n";
        return kExitOk;
    }
    throw ConfigError("memory subcommand: must be list, export, or stats");
}

int run_guarded(const std::function<int()>& body) {
    try {
        return body();
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRunFailure;
    }
}

} // namespace evomcts
