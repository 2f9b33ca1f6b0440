#pragma once

#include "evoalloc/accounting.hpp"
#include "evoalloc/common.hpp"
#include "evoalloc/geomtasks.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace evoalloc {

// ---------------------------------------------------------------------------
// Candidates

struct Candidate {
    std::string id;       // content hash (real mode) or synthetic id
    std::string program;  // source text; empty in simulated mode
    double fitness = 0.0;
    bool valid = false;   // scored above the invalid floor (no failure)
    std::string failure;  // extraction/execution/violation description
    int family = -1;      // simulated-mode algorithmic family anchor
};

// ---------------------------------------------------------------------------
// Prompt building

struct HistoryEntry {
    std::string summary;
    double fitness = 0.0;
};

struct PromptContext {
    Task task = Task::CirclePacking;
    std::string framework = "openevolve"; // template family
    std::string current_program;
    double current_fitness = 0.0;
    std::vector<HistoryEntry> history; // prior accepted/attempted entries
    int top_k = 3;                     // archive entries rendered
    std::string language = "python";
};

struct Prompt {
    std::string system;
    std::string user;
};

// Loads prompt template text assets from a directory laid out as
// <root>/<framework>/{<task>_system.txt, user_template.txt}. Templates are
// plain text with {slot} placeholders.
class TemplateStore {
public:
    explicit TemplateStore(std::string root_dir);

    // Pure function of ctx: fills program, fitness and history slots. An
    // empty history drops the evolution-history block entirely. Unknown
    // (framework, task) template -> config_error.
    Prompt build_prompt(const PromptContext& ctx) const;

    const std::string& raw(const std::string& framework, const std::string& file) const;

private:
    std::string root_;
    mutable std::map<std::string, std::string> cache_;
};

// Last fenced code block in the model output, or nullopt when none exists.
std::optional<std::string> extract_program(const std::string& text);

// ---------------------------------------------------------------------------
// LLM endpoint (OpenAI-compatible chat completions)

struct SamplingParams {
    double temperature = 0.6;
    double top_p = 0.95;
    int max_tokens = 8192;
};

struct EndpointConfig {
    std::string base_url;  // e.g. http://host:port
    std::string api_key;   // optional
    std::string model_id;
    SamplingParams sampling;
    int retry_cap = 2;         // additional attempts after the first
    double timeout_seconds = 120.0;
};

struct MutationResponse {
    std::string text;
    UsageRecord usage;
    int attempt_count = 1; // every issued call, including retries
    bool ok = false;
    std::string error;
};

class LlmClient {
public:
    explicit LlmClient(EndpointConfig config);
    ~LlmClient();

    // Retries transient failures up to the configured cap, accumulating
    // attempt_count. A response with ok=false means retries were exhausted;
    // the call still consumes one unit of budget.
    MutationResponse generate(const Prompt& prompt);

    const EndpointConfig& config() const { return config_; }

private:
    EndpointConfig config_;
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// ---------------------------------------------------------------------------
// Sandboxed execution

struct SandboxLimits {
    double wall_seconds = 30.0;
    std::int64_t memory_bytes = std::int64_t{1} << 30;
};

struct ExecutionResult {
    bool ok = false;
    std::string reason; // timeout / crash / parse / arity
    std::string stdout_text;
    std::string stderr_text;
    std::optional<Configuration> config;
};

// Runs the candidate program in an isolated child process (cwd = scratch
// dir, address-space rlimit, wall-clock kill) and parses the configuration
// wire format from the last non-empty stdout line. Any crash, timeout or
// parse failure is an execution failure, not an exception; an unusable
// interpreter raises environment_error.
ExecutionResult execute_candidate(const std::string& program, Task task,
                                  const std::string& interpreter, const std::string& scratch_dir,
                                  const SandboxLimits& limits = {});

// ---------------------------------------------------------------------------
// Simulated mutation

struct Family {
    double ceiling = 1.0;          // fitness cap of the algorithmic family
    double discovery_prob = 1.0;   // proposal mass when (re)drawing a family
    double improvement_rate = 1.0; // within-family refinement speed
};

struct FamilyModel {
    std::vector<Family> families;
    double switch_prob = 0.05;   // chance a child re-draws its family
    double noise_sigma = 0.0;    // gaussian noise on within-family steps
    double fresh_fraction = 0.3; // fresh anchors start below this * ceiling
    // synthetic usage: lognormal token draws so FLOPs analysis runs offline
    double prompt_log_mean = 8.0, prompt_log_sigma = 0.3;
    double completion_log_mean = 6.5, completion_log_sigma = 0.4;
    double cache_rate = 0.95;

    void validate() const;
};

struct ParentState {
    int family = -1;      // -1: not yet anchored (initial program)
    double fitness = 0.0;
};

struct SimulatedChild {
    int family = 0;
    double fitness = 0.0;
    UsageRecord usage;
};

// Family re-draw by discovery_prob mass (normalized categorical).
int draw_family(const FamilyModel& model, Rng& rng);

// With switch_prob the child re-draws its family and restarts low;
// otherwise it steps toward the family ceiling by an exponential-decay
// increment scaled by improvement_rate, plus noise. Deterministic given rng.
SimulatedChild simulate_mutation(const ParentState& parent, const FamilyModel& model, Rng& rng);

UsageRecord simulate_usage(const FamilyModel& model, const std::string& model_id, Rng& rng);

// ---------------------------------------------------------------------------
// Backend: one interface over real and simulated child generation

struct ParentContext {
    Task task = Task::CirclePacking;
    const Candidate* parent = nullptr;
    std::vector<HistoryEntry> history;
    int arm = 0; // trajectory index, for backends that care
};

struct ChildOutcome {
    Candidate child;
    UsageRecord usage;
    int attempt_count = 1;
    bool call_failed = false; // exhausted retries; charged anyway
};

class Backend {
public:
    virtual ~Backend() = default;
    virtual Candidate initial_candidate(Task task) = 0;
    virtual ChildOutcome propose(const ParentContext& ctx, Rng& rng) = 0;
    virtual std::string model_id() const = 0;
};

class SimulatedBackend final : public Backend {
public:
    SimulatedBackend(FamilyModel model, std::string model_id = "simulated");

    Candidate initial_candidate(Task task) override;
    ChildOutcome propose(const ParentContext& ctx, Rng& rng) override;
    std::string model_id() const override { return model_id_; }

    const FamilyModel& family_model() const { return model_; }

private:
    FamilyModel model_;
    std::string model_id_;
    std::uint64_t counter_ = 0;
};

struct RealBackendConfig {
    EndpointConfig endpoint;
    std::string template_root;
    std::string framework = "openevolve";
    std::string interpreter = "python3";
    std::string scratch_root = "/tmp";
    std::string initial_program_dir; // <dir>/<task>.py assets
    SandboxLimits limits;
    double tol_cp = kCpDefaultTol;
    double tol_ht = kHtContainmentTol;
};

class RealBackend final : public Backend {
public:
    explicit RealBackend(RealBackendConfig config);
    ~RealBackend();

    Candidate initial_candidate(Task task) override;
    ChildOutcome propose(const ParentContext& ctx, Rng& rng) override;
    std::string model_id() const override;

private:
    RealBackendConfig config_;
    TemplateStore templates_;
    std::unique_ptr<LlmClient> client_;
    std::uint64_t counter_ = 0;
};

// Content hash used for candidate ids and program dedup (FNV-1a 64).
std::string content_hash(const std::string& text);

} // namespace evoalloc
