#include "evoalloc/store.hpp"

#include "evoalloc/mutation.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

namespace evoalloc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json usage_to_json(const UsageRecord& u) {
    return json{{"prompt", u.prompt_tokens},
                {"cached", u.cached_tokens},
                {"completion", u.completion_tokens},
                {"model", u.model_id}};
}

UsageRecord usage_from_json(const json& j) {
    UsageRecord u;
    u.prompt_tokens = j.value("prompt", std::int64_t{0});
    u.cached_tokens = j.value("cached", std::int64_t{0});
    u.completion_tokens = j.value("completion", std::int64_t{0});
    u.model_id = j.value("model", "");
    return u;
}

json candidate_to_json(const Candidate& c) {
    return json{{"id", c.id},       {"program", c.program}, {"fitness", c.fitness},
                {"valid", c.valid}, {"failure", c.failure}, {"family", c.family}};
}

Candidate candidate_from_json(const json& j) {
    Candidate c;
    c.id = j.value("id", "");
    c.program = j.value("program", "");
    c.fitness = j.value("fitness", 0.0);
    c.valid = j.value("valid", false);
    c.failure = j.value("failure", "");
    c.family = j.value("family", -1);
    return c;
}

json entry_to_json(const TrajectoryEntry& e) {
    return json{{"id", e.candidate_id}, {"fitness", e.fitness},
                {"accepted", e.accepted}, {"valid", e.valid},
                {"generation", e.generation}, {"child", e.child_index},
                {"failure", e.failure}};
}

TrajectoryEntry entry_from_json(const json& j) {
    TrajectoryEntry e;
    e.candidate_id = j.value("id", "");
    e.fitness = j.value("fitness", 0.0);
    e.accepted = j.value("accepted", false);
    e.valid = j.value("valid", false);
    e.generation = j.value("generation", 0);
    e.child_index = j.value("child", 0);
    e.failure = j.value("failure", "");
    return e;
}

} // namespace

json run_record_to_json(const RunRecord& record) {
    json trajectories = json::array();
    for (const auto& traj : record.trajectories) {
        json entries = json::array();
        for (const auto& e : traj.entries) entries.push_back(entry_to_json(e));
        trajectories.push_back(json{{"entries", entries}, {"running_best", traj.running_best}});
    }
    json usage = json::array();
    for (const auto& u : record.usage) usage.push_back(usage_to_json(u));
    return json{{"run_id", record.run_id},
                {"protocol", record.protocol},
                {"task", task_name(record.task)},
                {"budget", {{"C", record.budget.total_calls},
                            {"T", record.budget.depth},
                            {"N", record.budget.breadth}}},
                {"seed", record.seed},
                {"model_id", record.model_id},
                {"trajectories", trajectories},
                {"usage", usage},
                {"best", candidate_to_json(record.best)},
                {"best_fitness", record.best_fitness},
                {"initial_fitness", record.initial_fitness},
                {"complete", record.complete},
                {"started_ms", record.started_unix_ms},
                {"finished_ms", record.finished_unix_ms},
                {"running_best_by_call", record.running_best_by_call}};
}

RunRecord run_record_from_json(const json& j) {
    RunRecord r;
    r.run_id = j.value("run_id", "");
    r.protocol = j.value("protocol", "");
    std::string task_str = j.value("task", "cp");
    auto task = task_from_name(task_str);
    if (!task) throw config_error("run record names unknown task: " + task_str);
    r.task = *task;
    if (j.contains("budget")) {
        const json& b = j["budget"];
        r.budget = BudgetSpec{b.value("C", 0), b.value("T", 0), b.value("N", 0)};
    }
    r.seed = j.value("seed", std::uint64_t{0});
    r.model_id = j.value("model_id", "");
    for (const auto& tj : j.value("trajectories", json::array())) {
        Trajectory traj;
        for (const auto& ej : tj.value("entries", json::array()))
            traj.entries.push_back(entry_from_json(ej));
        traj.running_best = tj.value("running_best", 0.0);
        r.trajectories.push_back(std::move(traj));
    }
    for (const auto& uj : j.value("usage", json::array())) r.usage.push_back(usage_from_json(uj));
    if (j.contains("best")) r.best = candidate_from_json(j["best"]);
    r.best_fitness = j.value("best_fitness", 0.0);
    r.initial_fitness = j.value("initial_fitness", 0.0);
    r.complete = j.value("complete", false);
    r.started_unix_ms = j.value("started_ms", std::int64_t{0});
    r.finished_unix_ms = j.value("finished_ms", std::int64_t{0});
    r.running_best_by_call = j.value("running_best_by_call", std::vector<double>{});
    return r;
}

RunStore::RunStore(std::string root) : root_(std::move(root)) {
    std::error_code ec;
    fs::create_directories(fs::path(root_) / "runs", ec);
    fs::create_directories(fs::path(root_) / "programs", ec);
    fs::create_directories(fs::path(root_) / "manifests", ec);
    if (ec) throw environment_error("cannot create archive at " + root_ + ": " + ec.message());
}

std::string RunStore::run_path(const std::string& run_id) const {
    return (fs::path(root_) / "runs" / (run_id + ".jsonl")).string();
}

bool RunStore::run_exists(const std::string& run_id) const {
    return fs::exists(run_path(run_id));
}

void RunStore::open_run(const RunRecord& header) {
    if (header.run_id.empty()) throw input_error("run id must not be empty");
    open_runs_.insert(header.run_id);
    json payload{{"run_id", header.run_id},
                 {"protocol", header.protocol},
                 {"task", task_name(header.task)},
                 {"budget", {{"C", header.budget.total_calls},
                             {"T", header.budget.depth},
                             {"N", header.budget.breadth}}},
                 {"seed", header.seed},
                 {"model_id", header.model_id},
                 {"initial_fitness", header.initial_fitness},
                 {"started_ms", header.started_unix_ms}};
    std::ofstream out(run_path(header.run_id), std::ios::trunc);
    if (!out) throw environment_error("cannot open run file for " + header.run_id);
    out << json{{"type", "header"}, {"schema", kStoreSchemaVersion}, {"payload", payload}}.dump()
        << '\n';
}

void RunStore::append_event(const std::string& run_id, const std::string& type,
                            const json& payload) {
    if (open_runs_.find(run_id) == open_runs_.end())
        throw input_error("append_event on a closed or unopened run: " + run_id);
    std::ofstream out(run_path(run_id), std::ios::app);
    if (!out) throw environment_error("cannot append to run file for " + run_id);
    out << json{{"type", type}, {"payload", payload}}.dump() << '\n';
}

void RunStore::finalize_run(const RunRecord& record, const std::vector<int>& arm_by_call) {
    json payload = run_record_to_json(record);
    if (!arm_by_call.empty()) payload["arm_by_call"] = arm_by_call;
    append_event(record.run_id, "final", payload);
    open_runs_.erase(record.run_id);
}

void RunStore::save_run(const RunRecord& record, const std::vector<int>& arm_by_call) {
    open_run(record);
    int call_index = 0;
    for (std::size_t i = 0; i < record.running_best_by_call.size(); ++i) {
        json call{{"index", ++call_index}, {"running_best", record.running_best_by_call[i]}};
        if (i < record.usage.size()) call["usage"] = usage_to_json(record.usage[i]);
        if (i < arm_by_call.size()) call["arm"] = arm_by_call[i];
        append_event(record.run_id, "call", call);
    }
    if (!record.best.program.empty()) store_program(record.best.program);
    finalize_run(record, arm_by_call);
}

std::string RunStore::store_program(const std::string& text) {
    std::string hash = content_hash(text);
    fs::path p = fs::path(root_) / "programs" / (hash + ".txt");
    if (!fs::exists(p)) {
        std::ofstream out(p, std::ios::binary);
        if (!out) throw environment_error("cannot write program blob " + p.string());
        out << text;
    }
    return hash;
}

std::optional<std::string> RunStore::load_program(const std::string& hash) const {
    fs::path p = fs::path(root_) / "programs" / (hash + ".txt");
    std::ifstream in(p, std::ios::binary);
    if (!in) return std::nullopt;
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return text;
}

std::optional<LoadedRun> RunStore::load_run_file(const std::string& path) const {
    std::ifstream in(path);
    if (!in) return std::nullopt;

    LoadedRun loaded;
    bool have_header = false, have_final = false;
    std::vector<json> calls;

    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json event = json::parse(line, nullptr, false);
        if (event.is_discarded()) continue; // truncated tail from a crash: drop it
        std::string type = event.value("type", "");
        const json& payload = event.contains("payload") ? event["payload"] : json::object();
        if (type == "header") {
            int schema = event.value("schema", 0);
            if (schema > kStoreSchemaVersion)
                throw config_error("run file " + path + " has schema " + std::to_string(schema) +
                                   ", newer than this reader (" +
                                   std::to_string(kStoreSchemaVersion) + ")");
            loaded.record = run_record_from_json(payload);
            have_header = true;
        } else if (type == "call") {
            calls.push_back(payload);
        } else if (type == "final") {
            loaded.record = run_record_from_json(payload);
            loaded.arm_by_call = payload.value("arm_by_call", std::vector<int>{});
            have_final = true;
        }
    }
    if (!have_header && !have_final) return std::nullopt;

    if (!have_final) {
        // partial reconstruction from the surviving call events
        loaded.record.complete = false;
        for (const auto& call : calls) {
            loaded.record.running_best_by_call.push_back(call.value("running_best", 0.0));
            if (call.contains("usage")) loaded.record.usage.push_back(usage_from_json(call["usage"]));
            if (call.contains("arm")) loaded.arm_by_call.push_back(call.value("arm", 0));
        }
    }
    return loaded;
}

std::vector<LoadedRun> RunStore::load_runs(const RunFilter& filter) const {
    std::vector<LoadedRun> out;
    fs::path dir = fs::path(root_) / "runs";
    if (!fs::exists(dir)) return out;
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.path().extension() == ".jsonl") files.push_back(entry.path());
    std::sort(files.begin(), files.end());

    for (const auto& path : files) {
        auto loaded = load_run_file(path.string());
        if (!loaded) continue;
        const RunRecord& r = loaded->record;
        if (!r.complete && !filter.include_incomplete) continue;
        if (filter.model_id && r.model_id != *filter.model_id) continue;
        if (filter.task && r.task != *filter.task) continue;
        if (filter.protocol && r.protocol != *filter.protocol) continue;
        if (filter.total_calls && r.budget.total_calls != *filter.total_calls) continue;
        if (filter.depth && r.budget.depth != *filter.depth) continue;
        out.push_back(std::move(*loaded));
    }
    return out;
}

void RunStore::write_manifest(const std::string& name, const json& config,
                              const std::vector<std::string>& completed) {
    json manifest{{"schema", kStoreSchemaVersion},
                  {"config", config},
                  {"config_hash", content_hash(config.dump())},
                  {"completed", completed}};
    fs::path p = fs::path(root_) / "manifests" / (name + ".json");
    std::ofstream out(p, std::ios::trunc);
    if (!out) throw environment_error("cannot write manifest " + p.string());
    out << manifest.dump(2) << '\n';
}

std::optional<json> RunStore::read_manifest(const std::string& name) const {
    fs::path p = fs::path(root_) / "manifests" / (name + ".json");
    std::ifstream in(p);
    if (!in) return std::nullopt;
    json manifest = json::parse(in, nullptr, false);
    if (manifest.is_discarded()) return std::nullopt;
    if (manifest.value("schema", 0) > kStoreSchemaVersion)
        throw config_error("manifest " + name + " has a newer schema than this reader");
    return manifest;
}

} // namespace evoalloc
