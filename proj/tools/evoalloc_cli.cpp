// evoalloc: fixed-budget LLM-guided evolutionary search experiments.
//
// Subcommands: sweep, island, base, report, validate-config. Configuration
// lives in a JSON file; flags override individual fields; the resolved
// config is echoed into the experiment manifest.

#include "evoalloc/analysis.hpp"
#include "evoalloc/bandit.hpp"
#include "evoalloc/store.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

using nlohmann::json;
using namespace evoalloc;

namespace {

// ---------------------------------------------------------------------------
// Config resolution

struct CliConfig {
    json raw = json::object();
    std::string root = "experiments";
    Task task = Task::CirclePacking;
    std::string backend_mode = "simulate";
    std::string model_id = "simulated";
    double p_active = 8e9;
    std::vector<int> budgets{8};
    std::vector<int> depths; // empty: all power-of-two divisors of each C
    std::vector<std::uint64_t> seeds{1, 2};
    int num_arms = 4;
    std::vector<std::string> policies{"ucb"};
    PolicyConfig policy_defaults;
    IslandConfig island;
    FamilyModel family_model;
    RealBackendConfig real;
};

FamilyModel default_family_model() {
    FamilyModel m;
    // common family with a sub-optimal ceiling plus a rare high-ceiling one
    m.families = {{0.89, 0.95, 1.0}, {1.0, 0.05, 0.8}};
    m.switch_prob = 0.05;
    m.noise_sigma = 0.0;
    return m;
}

FamilyModel family_model_from_json(const json& j) {
    FamilyModel m = default_family_model();
    if (j.contains("families")) {
        m.families.clear();
        for (const auto& f : j["families"])
            m.families.push_back({f.value("ceiling", 1.0), f.value("discovery_prob", 1.0),
                                  f.value("improvement_rate", 1.0)});
    }
    m.switch_prob = j.value("switch_prob", m.switch_prob);
    m.noise_sigma = j.value("noise_sigma", m.noise_sigma);
    m.fresh_fraction = j.value("fresh_fraction", m.fresh_fraction);
    m.prompt_log_mean = j.value("prompt_log_mean", m.prompt_log_mean);
    m.prompt_log_sigma = j.value("prompt_log_sigma", m.prompt_log_sigma);
    m.completion_log_mean = j.value("completion_log_mean", m.completion_log_mean);
    m.completion_log_sigma = j.value("completion_log_sigma", m.completion_log_sigma);
    m.cache_rate = j.value("cache_rate", m.cache_rate);
    m.validate();
    return m;
}

CliConfig load_config(const std::string& path) {
    CliConfig cfg;
    cfg.family_model = default_family_model();
    if (const char* env = std::getenv("EVOALLOC_ROOT")) cfg.root = env;
    if (path.empty()) return cfg;

    std::ifstream in(path);
    if (!in) throw config_error("cannot read config file: " + path);
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw config_error("config file is not valid JSON: " + path);
    cfg.raw = j;

    if (j.contains("root")) cfg.root = j["root"].get<std::string>();
    if (j.contains("task")) {
        auto t = task_from_name(j["task"].get<std::string>());
        if (!t) throw config_error("unknown task in config: " + j["task"].get<std::string>());
        cfg.task = *t;
    }
    if (j.contains("backend")) {
        const json& b = j["backend"];
        cfg.backend_mode = b.value("mode", cfg.backend_mode);
        if (b.contains("family_model")) cfg.family_model = family_model_from_json(b["family_model"]);
        if (b.contains("endpoint")) {
            const json& e = b["endpoint"];
            cfg.real.endpoint.base_url = e.value("base_url", "");
            cfg.real.endpoint.api_key = e.value("api_key", "");
            cfg.real.endpoint.model_id = e.value("model_id", "");
            cfg.real.endpoint.sampling.temperature = e.value("temperature", 0.6);
            cfg.real.endpoint.sampling.top_p = e.value("top_p", 0.95);
            cfg.real.endpoint.sampling.max_tokens = e.value("max_tokens", 8192);
            cfg.real.endpoint.retry_cap = e.value("retry_cap", 2);
        }
    }
    if (j.contains("model")) {
        cfg.model_id = j["model"].value("id", cfg.model_id);
        cfg.p_active = j["model"].value("p_active", cfg.p_active);
    }
    if (j.contains("budgets")) cfg.budgets = j["budgets"].get<std::vector<int>>();
    if (j.contains("depths")) cfg.depths = j["depths"].get<std::vector<int>>();
    if (j.contains("seeds")) cfg.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    if (j.contains("arms")) cfg.num_arms = j["arms"].get<int>();
    if (j.contains("policies")) cfg.policies = j["policies"].get<std::vector<std::string>>();
    if (j.contains("policy")) {
        const json& p = j["policy"];
        cfg.policy_defaults.ucb_c = p.value("ucb_c", cfg.policy_defaults.ucb_c);
        if (p.value("ucb_stat", "mean") == std::string("latest"))
            cfg.policy_defaults.ucb_stat = UcbStat::Latest;
        cfg.policy_defaults.exp3p_gamma = p.value("exp3p_gamma", 0.0);
        cfg.policy_defaults.exp3p_eta = p.value("exp3p_eta", 0.0);
        cfg.policy_defaults.exp3p_beta = p.value("exp3p_beta", 0.0);
        cfg.policy_defaults.thompson_prior_mean = p.value("thompson_prior_mean", 0.0);
        cfg.policy_defaults.thompson_prior_variance = p.value("thompson_prior_variance", 1.0);
        cfg.policy_defaults.thompson_pseudo_counts = p.value("thompson_pseudo_counts", 0.0);
    }
    if (j.contains("island")) {
        const json& is = j["island"];
        cfg.island.num_islands = is.value("num_islands", cfg.island.num_islands);
        cfg.island.fitness_buckets = is.value("fitness_buckets", cfg.island.fitness_buckets);
        cfg.island.length_buckets = is.value("length_buckets", cfg.island.length_buckets);
    }
    if (j.contains("sandbox")) {
        cfg.real.limits.wall_seconds = j["sandbox"].value("wall_seconds", 30.0);
        cfg.real.limits.memory_bytes =
            j["sandbox"].value("memory_bytes", std::int64_t{1} << 30);
    }
    return cfg;
}

void validate_cli_config(const CliConfig& cfg) {
    std::set<std::uint64_t> distinct(cfg.seeds.begin(), cfg.seeds.end());
    if (distinct.size() != cfg.seeds.size()) throw config_error("seeds must be distinct");
    if (cfg.seeds.empty()) throw config_error("at least one seed required");
    for (int c : cfg.budgets)
        if (c < 1) throw config_error("budget C must be >= 1");
    for (int t : cfg.depths)
        for (int c : cfg.budgets)
            if (t < 1 || c % t != 0)
                throw config_error("depth " + std::to_string(t) + " does not divide budget " +
                                   std::to_string(c));
    for (int c : cfg.budgets)
        if (cfg.num_arms > c) throw config_error("K must not exceed C");
    for (const auto& p : cfg.policies) policy_from_name(p); // throws on unknown
    cfg.family_model.validate();
    if (cfg.backend_mode != "simulate" && cfg.backend_mode != "real")
        throw config_error("backend mode must be 'simulate' or 'real'");
    if (cfg.backend_mode == "real" && cfg.real.endpoint.base_url.empty())
        throw config_error("real backend requires an endpoint base_url");
}

json resolved_config_json(const CliConfig& cfg) {
    json fams = json::array();
    for (const auto& f : cfg.family_model.families)
        fams.push_back({{"ceiling", f.ceiling},
                        {"discovery_prob", f.discovery_prob},
                        {"improvement_rate", f.improvement_rate}});
    return json{{"root", cfg.root},
                {"task", task_name(cfg.task)},
                {"backend", {{"mode", cfg.backend_mode},
                             {"family_model", {{"families", fams},
                                               {"switch_prob", cfg.family_model.switch_prob},
                                               {"noise_sigma", cfg.family_model.noise_sigma}}}}},
                {"model", {{"id", cfg.model_id}, {"p_active", cfg.p_active}}},
                {"budgets", cfg.budgets},
                {"depths", cfg.depths},
                {"seeds", cfg.seeds},
                {"arms", cfg.num_arms},
                {"policies", cfg.policies}};
}

std::unique_ptr<Backend> make_backend(const CliConfig& cfg) {
    if (cfg.backend_mode == "simulate")
        return std::make_unique<SimulatedBackend>(cfg.family_model, cfg.model_id);
    RealBackendConfig real = cfg.real;
    if (const char* env = std::getenv("EVOALLOC_ENDPOINT")) real.endpoint.base_url = env;
    if (const char* env = std::getenv("EVOALLOC_API_KEY")) real.endpoint.api_key = env;
    if (real.endpoint.model_id.empty()) real.endpoint.model_id = cfg.model_id;
    if (real.template_root.empty()) real.template_root = "assets/prompts";
    if (real.initial_program_dir.empty()) real.initial_program_dir = "assets/initial";
    return std::make_unique<RealBackend>(real);
}

std::vector<int> depths_for(const CliConfig& cfg, int budget) {
    if (!cfg.depths.empty()) return cfg.depths;
    std::vector<int> out;
    for (int t = 1; t <= budget; t *= 2)
        if (budget % t == 0) out.push_back(t);
    return out;
}

std::string cell_run_id(const std::string& protocol, const CliConfig& cfg, int c, int t,
                        std::uint64_t seed) {
    std::ostringstream os;
    os << protocol << '-' << task_name(cfg.task) << "-C" << c << "-T" << t << "-seed" << seed;
    return os.str();
}

// ---------------------------------------------------------------------------
// Run commands

int run_cells(const CliConfig& cfg, const std::string& mode) {
    validate_cli_config(cfg);
    RunStore store(cfg.root);
    json config = resolved_config_json(cfg);
    std::vector<std::string> completed;
    std::vector<std::string> failures;
    int executed = 0, skipped = 0;

    auto run_one = [&](const std::string& run_id, auto&& produce) {
        if (store.run_exists(run_id)) {
            auto loaded = store.load_run_file(store.run_path(run_id));
            if (loaded && loaded->record.complete) {
                completed.push_back(run_id);
                ++skipped;
                return;
            }
        }
        try {
            produce();
            completed.push_back(run_id);
            ++executed;
        } catch (const std::exception& e) {
            failures.push_back(run_id + ": " + e.what());
            std::cerr << "FAILED " << run_id << ": " << e.what() << "\n";
        }
    };

    for (int c : cfg.budgets) {
        if (mode == "sweep") {
            for (int t : depths_for(cfg, c)) {
                for (std::uint64_t seed : cfg.seeds) {
                    std::string run_id = cell_run_id("greedy", cfg, c, t, seed);
                    run_one(run_id, [&] {
                        auto backend = make_backend(cfg);
                        RunRecord rec =
                            run_greedy(cfg.task, BudgetSpec::from_depth(c, t), *backend, seed);
                        rec.run_id = run_id;
                        rec.model_id = cfg.model_id;
                        store.save_run(rec);
                    });
                }
            }
        } else if (mode == "island") {
            for (std::uint64_t seed : cfg.seeds) {
                std::string run_id = cell_run_id("island", cfg, c, c, seed);
                run_one(run_id, [&] {
                    auto backend = make_backend(cfg);
                    RunRecord rec = run_island(cfg.task, BudgetSpec::from_depth(c, c), cfg.island,
                                               *backend, seed);
                    rec.run_id = run_id;
                    rec.model_id = cfg.model_id;
                    store.save_run(rec);
                });
            }
        } else { // base
            for (const auto& pol : cfg.policies) {
                for (std::uint64_t seed : cfg.seeds) {
                    std::string run_id = cell_run_id("base-" + pol, cfg, c, c, seed);
                    run_one(run_id, [&] {
                        auto backend = make_backend(cfg);
                        PolicyConfig policy = cfg.policy_defaults;
                        policy.policy = policy_from_name(pol);
                        BaseRunRecord rec = run_base(cfg.task, c, cfg.num_arms, policy,
                                                     ParentSampler::Greedy, *backend, seed);
                        rec.record.run_id = run_id;
                        rec.record.model_id = cfg.model_id;
                        store.save_run(rec.record, rec.arm_by_call);
                    });
                }
            }
        }
    }

    store.write_manifest(mode, config, completed);
    std::cout << mode << ": " << executed << " executed, " << skipped
              << " skipped (already complete), " << failures.size() << " failed\n";
    for (const auto& f : failures) std::cout << "  failure: " << f << "\n";
    return failures.empty() ? 0 : 1;
}

// ---------------------------------------------------------------------------
// Reports

std::vector<SweepCell> cells_from_runs(const std::vector<LoadedRun>& runs) {
    std::map<std::tuple<int, int>, SweepCell> cells;
    for (const auto& loaded : runs) {
        const RunRecord& r = loaded.record;
        auto key = std::make_tuple(r.budget.total_calls, r.budget.depth);
        auto it = cells.find(key);
        if (it == cells.end()) {
            SweepCell cell;
            cell.model_id = r.model_id;
            cell.task = r.task;
            cell.total_calls = r.budget.total_calls;
            cell.depth = r.budget.depth;
            cell.breadth = r.budget.breadth;
            it = cells.emplace(key, std::move(cell)).first;
        }
        it->second.fitnesses.push_back(r.best_fitness);
    }
    std::vector<SweepCell> out;
    for (auto& [key, cell] : cells) out.push_back(std::move(cell));
    return out;
}

json report_header(const RunStore& store, const std::vector<LoadedRun>& runs,
                   std::uint64_t analysis_seed) {
    std::set<std::uint64_t> seeds;
    for (const auto& r : runs) seeds.insert(r.record.seed);
    auto manifest = store.read_manifest("sweep");
    return json{{"seeds", seeds},
                {"analysis_seed", analysis_seed},
                {"config_hash", manifest ? (*manifest).value("config_hash", "") : ""}};
}

void write_report(const std::string& root, const std::string& name, const std::string& text) {
    std::filesystem::create_directories(std::filesystem::path(root) / "reports");
    std::filesystem::path p = std::filesystem::path(root) / "reports" / name;
    std::ofstream out(p);
    if (!out) throw environment_error("cannot write report " + p.string());
    out << text;
    std::cout << "wrote " << p.string() << "\n";
}

int cmd_report(const CliConfig& cfg, const std::string& kind, const std::string& protocol,
               double tau, std::uint64_t analysis_seed) {
    RunStore store(cfg.root);
    RunFilter filter;
    filter.task = cfg.task;
    if (!protocol.empty()) filter.protocol = protocol;
    else if (kind != "table2") filter.protocol = "greedy";
    std::vector<LoadedRun> runs = store.load_runs(filter);
    if (runs.empty()) {
        std::cerr << "no completed runs in " << cfg.root << " match the filter\n";
        return 1;
    }
    json header = report_header(store, runs, analysis_seed);
    Rng rng(analysis_seed);
    std::ostringstream os;
    os << "# " << kind << " report\n" << header.dump() << "\n\n";

    if (kind == "envelope") {
        auto cells = cells_from_runs(runs);
        os << "C,V_max,argmax_T,V_T1,penBoN\n";
        for (const auto& p : compute_envelope(cells)) {
            os << p.total_calls << ',' << p.v_max << ',' << p.argmax_depth << ',';
            if (p.v_depth1) os << *p.v_depth1;
            else os << "undefined";
            os << ',';
            if (p.pen_bon) os << *p.pen_bon;
            else os << "undefined";
            os << '\n';
        }
        write_report(cfg.root, "envelope.csv", os.str());
        return 0;
    }
    if (kind == "fit" || kind == "nested") {
        auto cells = cells_from_runs(runs);
        if (kind == "fit") {
            FitResult fit = fit_bilinear(cells);
            fit.p_c = permutation_p_for_c(cells, 0.97, 1000, rng);
            os << "beta0,a,b,c,R2,p_c,n_cells\n"
               << fit.beta0 << ',' << fit.a << ',' << fit.b << ',' << fit.c << ',' << fit.r2
               << ',' << fit.p_c << ',' << fit.n_cells << '\n';
            // surface matrix for plotting: C, T, mean fitness, mean FLOPs
            os << "\nC,T,N,mean_fitness\n";
            for (const auto& cell : cells)
                os << cell.total_calls << ',' << cell.depth << ',' << cell.breadth << ','
                   << cell.mean() << '\n';
            write_report(cfg.root, "fit.csv", os.str());
        } else {
            NestedModelResult nm = nested_model_compare(cells);
            os << "model,R2,p_F_vs_M1\n";
            for (int m = 0; m < 5; ++m) {
                os << 'M' << m << ',' << nm.r2[static_cast<std::size_t>(m)] << ',';
                if (m == 1) os << "ref";
                else os << nm.p_f[static_cast<std::size_t>(m)];
                os << '\n';
            }
            write_report(cfg.root, "nested.csv", os.str());
        }
        return 0;
    }
    if (kind == "threshold" || kind == "table3") {
        ModelSpec model{cfg.model_id, static_cast<std::int64_t>(cfg.p_active)};
        std::map<std::pair<std::string, std::pair<int, int>>, std::vector<RunRecord>> groups;
        for (const auto& r : runs)
            groups[{r.record.protocol,
                    {r.record.budget.total_calls, r.record.budget.depth}}]
                .push_back(r.record);
        os << "protocol,C,T,tau,generation,mean_flops\n";
        for (const auto& [key, group] : groups) {
            ThresholdResult res = time_to_threshold(group, tau, model, 0.9, 1000, analysis_seed);
            os << key.first << ',' << key.second.first << ',' << key.second.second << ',' << tau
               << ',';
            if (res.reached) os << res.generation << ',' << res.flops;
            else os << "---,---";
            os << '\n';
        }
        write_report(cfg.root, "threshold.csv", os.str());
        return 0;
    }
    if (kind == "table2") {
        std::map<std::string, std::vector<double>> by_protocol;
        for (const auto& r : runs) by_protocol[r.record.protocol].push_back(r.record.best_fitness);
        os << "protocol,n_runs,mean,se,ci_lo,ci_hi,iqm\n";
        for (const auto& [proto, vals] : by_protocol) {
            if (vals.size() < 2) {
                os << proto << ',' << vals.size() << ",insufficient,,,\n";
                continue;
            }
            BootstrapStats bs = bootstrap_stats({vals}, 1000, rng);
            os << proto << ',' << vals.size() << ',' << bs.mean << ',' << bs.se << ',' << bs.ci_lo
               << ',' << bs.ci_hi << ',' << bs.iqm << '\n';
        }
        write_report(cfg.root, "table2.csv", os.str());
        return 0;
    }
    std::cerr << "unknown report kind: " << kind
              << " (expected envelope|fit|nested|threshold|table2|table3)\n";
    return 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"fixed-budget LLM-guided evolutionary search framework"};
    app.require_subcommand(1);

    std::string config_path;
    std::string root_override, task_override, backend_override;
    std::vector<int> budgets_override, depths_override;
    std::vector<std::uint64_t> seeds_override;
    std::vector<std::string> policies_override;
    int arms_override = -1;

    app.add_option("--config", config_path, "JSON config file");
    app.add_option("--root", root_override, "experiment root directory");
    app.add_option("--task", task_override, "task: cp | mmd | ht");
    app.add_option("--backend", backend_override, "backend mode: simulate | real");
    app.add_option("--budgets", budgets_override, "budget grid (C values)");
    app.add_option("--depths", depths_override, "depth grid (T values; must divide C)");
    app.add_option("--seeds", seeds_override, "seed list");
    app.add_option("--policies", policies_override, "bandit policies for 'base'");
    app.add_option("--arms", arms_override, "number of BaSE arms (K)");

    auto* sweep = app.add_subcommand("sweep", "greedy (C, T) grid x seeds");
    auto* island = app.add_subcommand("island", "island protocol runs");
    auto* base = app.add_subcommand("base", "BaSE bandit runs: policies x seeds");
    auto* report = app.add_subcommand("report", "emit analysis tables from the archive");
    auto* validate = app.add_subcommand("validate-config", "check a config and echo it resolved");

    std::string report_kind = "envelope", report_protocol;
    double tau = 0.9;
    std::uint64_t analysis_seed = 1234;
    report->add_option("--kind", report_kind, "envelope|fit|nested|threshold|table2|table3");
    report->add_option("--protocol", report_protocol, "restrict to one protocol");
    report->add_option("--tau", tau, "fitness threshold for threshold reports");
    report->add_option("--analysis-seed", analysis_seed, "rng seed for bootstrap/permutation");

    CLI11_PARSE(app, argc, argv);

    try {
        CliConfig cfg = load_config(config_path);
        if (!root_override.empty()) cfg.root = root_override;
        if (!task_override.empty()) {
            auto t = task_from_name(task_override);
            if (!t) throw config_error("unknown task: " + task_override);
            cfg.task = *t;
        }
        if (!backend_override.empty()) cfg.backend_mode = backend_override;
        if (!budgets_override.empty()) cfg.budgets = budgets_override;
        if (!depths_override.empty()) cfg.depths = depths_override;
        if (!seeds_override.empty()) cfg.seeds = seeds_override;
        if (!policies_override.empty()) cfg.policies = policies_override;
        if (arms_override > 0) cfg.num_arms = arms_override;

        if (sweep->parsed()) return run_cells(cfg, "sweep");
        if (island->parsed()) return run_cells(cfg, "island");
        if (base->parsed()) return run_cells(cfg, "base");
        if (report->parsed()) return cmd_report(cfg, report_kind, report_protocol, tau, analysis_seed);
        if (validate->parsed()) {
            validate_cli_config(cfg);
            std::cout << resolved_config_json(cfg).dump(2) << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
