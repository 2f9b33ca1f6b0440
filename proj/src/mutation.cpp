#include "evoalloc/mutation.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace evoalloc {

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw config_error("cannot read asset: " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void replace_all(std::string& text, const std::string& slot, const std::string& value) {
    std::size_t pos = 0;
    while ((pos = text.find(slot, pos)) != std::string::npos) {
        text.replace(pos, slot.size(), value);
        pos += value.size();
    }
}

std::string format_fitness(double v) {
    std::ostringstream os;
    os << std::setprecision(6) << v;
    return os.str();
}

} // namespace

std::string content_hash(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

TemplateStore::TemplateStore(std::string root_dir) : root_(std::move(root_dir)) {}

const std::string& TemplateStore::raw(const std::string& framework, const std::string& file) const {
    std::string key = framework + "/" + file;
    auto it = cache_.find(key);
    if (it == cache_.end()) {
        std::filesystem::path p = std::filesystem::path(root_) / framework / file;
        if (!std::filesystem::exists(p))
            throw config_error("unknown prompt template: " + key + " (looked in " + root_ + ")");
        it = cache_.emplace(key, read_file(p.string())).first;
    }
    return it->second;
}

Prompt TemplateStore::build_prompt(const PromptContext& ctx) const {
    Prompt prompt;
    prompt.system = raw(ctx.framework, task_name(ctx.task) + "_system.txt");

    std::string user = raw("openevolve", "user_template.txt");

    // archive section: top-k history entries by fitness, best first
    std::vector<HistoryEntry> top = ctx.history;
    std::stable_sort(top.begin(), top.end(),
                     [](const HistoryEntry& a, const HistoryEntry& b) { return a.fitness > b.fitness; });
    if (static_cast<int>(top.size()) > ctx.top_k) top.resize(static_cast<std::size_t>(ctx.top_k));

    if (top.empty()) {
        // initial call: no evolution-history block at all
        std::size_t begin = user.find("# Program Evolution History");
        std::size_t end = begin == std::string::npos
                              ? std::string::npos
                              : user.find("# Current Program", begin + 1);
        if (begin != std::string::npos && end != std::string::npos && end > begin)
            user.erase(begin, end - begin);
    } else {
        std::ostringstream hist;
        for (std::size_t i = 0; i < top.size(); ++i) {
            hist << "- Attempt " << (i + 1) << " | fitness " << format_fitness(top[i].fitness) << " | "
                 << top[i].summary;
            if (i + 1 < top.size()) hist << '\n';
        }
        replace_all(user, "{evolution_history}", hist.str());
    }

    replace_all(user, "{fitness_score}", format_fitness(ctx.current_fitness));
    replace_all(user, "{feature_coords}", "n/a");
    replace_all(user, "{improvement_areas}", "fitness");
    replace_all(user, "{artifacts}", "");
    replace_all(user, "{current_program}", ctx.current_program);
    replace_all(user, "{feature_dimensions}", "fitness decile, program length");
    replace_all(user, "{language}", ctx.language);
    prompt.user = std::move(user);
    return prompt;
}

std::optional<std::string> extract_program(const std::string& text) {
    // last fenced block: scan ``` fences in order, pair them up
    std::vector<std::size_t> fences;
    std::size_t pos = 0;
    while ((pos = text.find("```", pos)) != std::string::npos) {
        fences.push_back(pos);
        pos += 3;
    }
    if (fences.size() < 2) return std::nullopt;
    std::size_t last_pair = (fences.size() / 2) * 2; // ignore an unclosed trailing fence
    std::size_t open = fences[last_pair - 2];
    std::size_t close = fences[last_pair - 1];
    // skip the info string on the opening fence line
    std::size_t body = text.find('\n', open);
    if (body == std::string::npos || body >= close) return std::nullopt;
    std::string block = text.substr(body + 1, close - body - 1);
    return block;
}

// ---------------------------------------------------------------------------
// Simulated mutation

void FamilyModel::validate() const {
    if (families.empty()) throw config_error("family model needs at least one family");
    for (const auto& f : families) {
        if (f.ceiling < 0.0 || f.ceiling > 1.05) throw config_error("family ceiling outside [0, 1.05]");
        if (f.discovery_prob < 0.0 || f.discovery_prob > 1.0)
            throw config_error("discovery_prob outside [0,1]");
        if (!(f.improvement_rate > 0.0)) throw config_error("improvement_rate must be positive");
    }
    if (switch_prob < 0.0 || switch_prob > 1.0) throw config_error("switch_prob outside [0,1]");
}

int draw_family(const FamilyModel& model, Rng& rng) {
    double total = 0.0;
    for (const auto& f : model.families) total += f.discovery_prob;
    if (total <= 0.0) return 0;
    double u = rng.uniform() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i < model.families.size(); ++i) {
        acc += model.families[i].discovery_prob;
        if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(model.families.size()) - 1;
}

UsageRecord simulate_usage(const FamilyModel& model, const std::string& model_id, Rng& rng) {
    UsageRecord u;
    u.model_id = model_id;
    double p = std::exp(model.prompt_log_mean + model.prompt_log_sigma * rng.gaussian());
    double c = std::exp(model.completion_log_mean + model.completion_log_sigma * rng.gaussian());
    u.prompt_tokens = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::llround(p)));
    u.completion_tokens = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::llround(c)));
    u.cached_tokens = std::min(u.prompt_tokens,
                               static_cast<std::int64_t>(std::llround(model.cache_rate *
                                                                     static_cast<double>(u.prompt_tokens))));
    return u;
}

SimulatedChild simulate_mutation(const ParentState& parent, const FamilyModel& model, Rng& rng) {
    model.validate();
    SimulatedChild child;
    bool redraw = parent.family < 0 || rng.uniform() < model.switch_prob;
    if (redraw) {
        child.family = draw_family(model, rng);
        const Family& fam = model.families[static_cast<std::size_t>(child.family)];
        // fresh anchor: starts low in the new family
        child.fitness = rng.uniform() * model.fresh_fraction * fam.ceiling;
    } else {
        child.family = parent.family;
        const Family& fam = model.families[static_cast<std::size_t>(child.family)];
        double gap = fam.ceiling - parent.fitness;
        double step = gap * (1.0 - std::exp(-fam.improvement_rate * rng.uniform()));
        double noise = model.noise_sigma > 0.0 ? model.noise_sigma * rng.gaussian() : 0.0;
        child.fitness = parent.fitness + step + noise;
        child.fitness = std::clamp(child.fitness, 0.0, fam.ceiling);
    }
    return child;
}

// ---------------------------------------------------------------------------
// SimulatedBackend

SimulatedBackend::SimulatedBackend(FamilyModel model, std::string model_id)
    : model_(std::move(model)), model_id_(std::move(model_id)) {
    model_.validate();
}

Candidate SimulatedBackend::initial_candidate(Task) {
    Candidate c;
    c.id = "sim-initial";
    c.fitness = 0.0;
    c.valid = true;
    c.family = -1; // not yet anchored on any family
    return c;
}

ChildOutcome SimulatedBackend::propose(const ParentContext& ctx, Rng& rng) {
    if (ctx.parent == nullptr) throw input_error("simulated propose requires a parent");
    ParentState state{ctx.parent->family, ctx.parent->fitness};
    SimulatedChild sim = simulate_mutation(state, model_, rng);
    ChildOutcome out;
    out.usage = simulate_usage(model_, model_id_, rng);
    out.child.id = "sim-" + std::to_string(++counter_);
    out.child.fitness = sim.fitness;
    out.child.family = sim.family;
    out.child.valid = true;
    return out;
}

// ---------------------------------------------------------------------------
// RealBackend

RealBackend::RealBackend(RealBackendConfig config)
    : config_(std::move(config)), templates_(config_.template_root),
      client_(std::make_unique<LlmClient>(config_.endpoint)) {}

RealBackend::~RealBackend() = default;

std::string RealBackend::model_id() const { return config_.endpoint.model_id; }

Candidate RealBackend::initial_candidate(Task task) {
    std::filesystem::path p = std::filesystem::path(config_.initial_program_dir) / (task_name(task) + ".py");
    Candidate c;
    c.program = read_file(p.string());
    c.id = content_hash(c.program);
    std::string scratch = (std::filesystem::path(config_.scratch_root) / ("init-" + task_name(task))).string();
    ExecutionResult exec =
        execute_candidate(c.program, task, config_.interpreter, scratch, config_.limits);
    if (exec.ok && exec.config) {
        FitnessScore score = evaluate(task, *exec.config, config_.tol_cp, config_.tol_ht);
        c.fitness = score.value;
        c.valid = true;
        if (!score.violations.empty()) c.failure = score.violations.front();
    } else {
        c.fitness = 0.0;
        c.valid = false;
        c.failure = exec.reason;
    }
    return c;
}

ChildOutcome RealBackend::propose(const ParentContext& ctx, Rng&) {
    if (ctx.parent == nullptr) throw input_error("propose requires a parent");
    PromptContext pctx;
    pctx.task = ctx.task;
    pctx.framework = config_.framework;
    pctx.current_program = ctx.parent->program;
    pctx.current_fitness = ctx.parent->fitness;
    pctx.history = ctx.history;
    Prompt prompt = templates_.build_prompt(pctx);

    MutationResponse resp = client_->generate(prompt);

    ChildOutcome out;
    out.usage = resp.usage;
    out.usage.model_id = config_.endpoint.model_id;
    out.attempt_count = resp.attempt_count;
    if (!resp.ok) {
        out.call_failed = true;
        out.child.id = "failed-" + std::to_string(++counter_);
        out.child.failure = "call failed: " + resp.error;
        return out;
    }

    auto program = extract_program(resp.text);
    if (!program) {
        out.child.id = content_hash(resp.text);
        out.child.failure = "extraction failure: no fenced code block";
        return out;
    }
    out.child.program = *program;
    out.child.id = content_hash(*program);

    std::string scratch =
        (std::filesystem::path(config_.scratch_root) / ("cand-" + out.child.id)).string();
    ExecutionResult exec =
        execute_candidate(*program, ctx.task, config_.interpreter, scratch, config_.limits);
    if (!exec.ok || !exec.config) {
        out.child.failure = "execution failure: " + exec.reason;
        return out;
    }
    FitnessScore score = evaluate(ctx.task, *exec.config, config_.tol_cp, config_.tol_ht);
    out.child.fitness = score.value;
    out.child.valid = true;
    if (!score.violations.empty()) out.child.failure = score.violations.front();
    return out;
}

} // namespace evoalloc
