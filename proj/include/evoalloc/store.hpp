#pragma once

#include "evoalloc/engine.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <set>
#include <string>
#include <vector>

namespace evoalloc {

inline constexpr int kStoreSchemaVersion = 1;

struct RunFilter {
    std::optional<std::string> model_id;
    std::optional<Task> task;
    std::optional<std::string> protocol;
    std::optional<int> total_calls;
    std::optional<int> depth;
    bool include_incomplete = false;
};

struct LoadedRun {
    RunRecord record;
    std::vector<int> arm_by_call; // present for BaSE runs
};

nlohmann::json run_record_to_json(const RunRecord& record);
RunRecord run_record_from_json(const nlohmann::json& j);

// Append-only archive rooted at a directory:
//   <root>/runs/<run_id>.jsonl   one self-describing event per line
//   <root>/programs/<hash>.txt   content-addressed candidate sources
//   <root>/manifests/<name>.json experiment manifests
class RunStore {
public:
    explicit RunStore(std::string root);

    const std::string& root() const { return root_; }

    // Event stream. open_run writes the header event; append_event on a
    // finalized (or never-opened) run raises input_error.
    void open_run(const RunRecord& header);
    void append_event(const std::string& run_id, const std::string& type,
                      const nlohmann::json& payload);
    void finalize_run(const RunRecord& record, const std::vector<int>& arm_by_call = {});

    // Convenience: persist a finished run as header + per-call events + final.
    void save_run(const RunRecord& record, const std::vector<int>& arm_by_call = {});

    // Content-addressed program text; returns the hash key.
    std::string store_program(const std::string& text);
    std::optional<std::string> load_program(const std::string& hash) const;

    // Reads one run file. A truncated final line is dropped and the run is
    // reconstructed from its complete events, flagged incomplete. A schema
    // version newer than this reader raises config_error.
    std::optional<LoadedRun> load_run_file(const std::string& path) const;

    // All archived runs matching the filter; incomplete runs are excluded
    // unless requested.
    std::vector<LoadedRun> load_runs(const RunFilter& filter = {}) const;

    bool run_exists(const std::string& run_id) const;
    std::string run_path(const std::string& run_id) const;

    // Experiment manifests: resolved config + hash + completed cell keys.
    void write_manifest(const std::string& name, const nlohmann::json& config,
                        const std::vector<std::string>& completed);
    std::optional<nlohmann::json> read_manifest(const std::string& name) const;

private:
    std::string root_;
    std::set<std::string> open_runs_;
};

} // namespace evoalloc
