#include "evoalloc/bandit.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

namespace evoalloc {

std::string policy_name(Policy p) {
    switch (p) {
    case Policy::Ucb: return "ucb";
    case Policy::Exp3P: return "exp3p";
    case Policy::Thompson: return "thompson";
    case Policy::Random: return "random";
    }
    return "unknown";
}

Policy policy_from_name(const std::string& name) {
    if (name == "ucb") return Policy::Ucb;
    if (name == "exp3p") return Policy::Exp3P;
    if (name == "thompson") return Policy::Thompson;
    if (name == "random") return Policy::Random;
    throw config_error("unknown bandit policy: " + name);
}

void PolicyConfig::validate() const {
    if (ucb_c < 0.0) throw config_error("ucb_c must be >= 0");
    if (exp3p_gamma < 0.0 || exp3p_gamma > 1.0) throw config_error("exp3p_gamma outside [0,1]");
    if (!(thompson_prior_variance > 0.0)) throw config_error("thompson prior variance must be > 0");
    if (thompson_pseudo_counts < 0.0) throw config_error("thompson pseudo-counts must be >= 0");
}

double ArmState::mean_reward() const {
    if (rewards.empty()) return 0.0;
    return std::accumulate(rewards.begin(), rewards.end(), 0.0) / static_cast<double>(rewards.size());
}

double ArmState::latest_reward() const { return rewards.empty() ? 0.0 : rewards.back(); }

PolicyState init_policy_state(const PolicyConfig&, int num_arms) {
    PolicyState state;
    state.weights.assign(static_cast<std::size_t>(num_arms), 1.0);
    state.last_probs.assign(static_cast<std::size_t>(num_arms),
                            1.0 / static_cast<double>(num_arms));
    return state;
}

Exp3pParams resolve_exp3p(const PolicyConfig& config, int num_arms, int total_calls) {
    Exp3pParams p;
    double K = static_cast<double>(num_arms);
    double C = static_cast<double>(std::max(1, total_calls));
    double lnK = std::log(std::max(1.0, K));
    p.gamma = config.exp3p_gamma > 0.0 ? config.exp3p_gamma : std::min(1.0, std::sqrt(K * lnK / C));
    p.eta = config.exp3p_eta > 0.0 ? config.exp3p_eta : p.gamma / (3.0 * K);
    p.beta = config.exp3p_beta > 0.0 ? config.exp3p_beta : std::sqrt(lnK / (C * K));
    return p;
}

namespace {

std::vector<double> exp3p_probs(const PolicyState& state, double gamma) {
    double total = std::accumulate(state.weights.begin(), state.weights.end(), 0.0);
    std::size_t K = state.weights.size();
    std::vector<double> probs(K);
    for (std::size_t i = 0; i < K; ++i)
        probs[i] = (1.0 - gamma) * state.weights[i] / total + gamma / static_cast<double>(K);
    return probs;
}

int sample_categorical(const std::vector<double>& probs, Rng& rng) {
    double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(probs.size()) - 1;
}

} // namespace

std::pair<double, double> thompson_posterior(const PolicyConfig& config, const ArmState& arm) {
    double kappa = config.thompson_pseudo_counts;
    double n = static_cast<double>(arm.rewards.size());
    if (kappa + n <= 0.0) return {config.thompson_prior_mean, config.thompson_prior_variance};
    double sum = std::accumulate(arm.rewards.begin(), arm.rewards.end(), 0.0);
    double mean = (kappa * config.thompson_prior_mean + sum) / (kappa + n);
    double var = config.thompson_prior_variance / (kappa + n);
    return {mean, var};
}

int select_arm(const PolicyConfig& config, PolicyState& state, const std::vector<ArmState>& arms,
               int t, int total_calls, Rng& rng) {
    config.validate();
    if (arms.empty()) throw input_error("select_arm over zero arms");
    for (const auto& a : arms)
        if (a.pulls < 1) throw input_error("select_arm before all arms are initialized");

    switch (config.policy) {
    case Policy::Ucb: {
        int best = 0;
        double best_index = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < arms.size(); ++i) {
            double stat = config.ucb_stat == UcbStat::Mean ? arms[i].mean_reward()
                                                           : arms[i].latest_reward();
            double bonus = config.ucb_c *
                           std::sqrt(2.0 * std::log(static_cast<double>(t)) /
                                     static_cast<double>(arms[i].pulls));
            double index = stat + bonus;
            if (index > best_index) { // strict: ties keep the lowest arm index
                best_index = index;
                best = static_cast<int>(i);
            }
        }
        return best;
    }
    case Policy::Exp3P: {
        Exp3pParams p = resolve_exp3p(config, static_cast<int>(arms.size()), total_calls);
        state.last_probs = exp3p_probs(state, p.gamma);
        return sample_categorical(state.last_probs, rng);
    }
    case Policy::Thompson: {
        int best = 0;
        double best_sample = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < arms.size(); ++i) {
            auto [post_mean, post_var] = thompson_posterior(config, arms[i]);
            double sample = post_mean + std::sqrt(post_var) * rng.gaussian();
            if (sample > best_sample) {
                best_sample = sample;
                best = static_cast<int>(i);
            }
        }
        return best;
    }
    case Policy::Random:
        return static_cast<int>(rng.index(arms.size()));
    }
    throw config_error("unreachable policy");
}

void update_arm(const PolicyConfig& config, PolicyState& state, std::vector<ArmState>& arms,
                int arm, double reward, int total_calls) {
    if (arm < 0 || arm >= static_cast<int>(arms.size())) throw input_error("arm index out of range");
    ArmState& a = arms[static_cast<std::size_t>(arm)];
    a.rewards.push_back(reward);
    a.pulls += 1;
    a.running_best = std::max(a.running_best, reward);

    if (config.policy == Policy::Exp3P) {
        Exp3pParams p = resolve_exp3p(config, static_cast<int>(arms.size()), total_calls);
        // fitness may slightly exceed 1.0; EXP3.P rewards live in [0,1]
        double r = std::clamp(reward, 0.0, 1.0);
        if (state.last_probs.size() != arms.size()) state.last_probs = exp3p_probs(state, p.gamma);
        for (std::size_t j = 0; j < arms.size(); ++j) {
            double rhat = (static_cast<int>(j) == arm ? r / state.last_probs[j] : 0.0) +
                          p.beta / state.last_probs[j];
            state.weights[j] *= std::exp(p.eta * rhat);
        }
        // renormalize to dodge overflow; probabilities are scale-invariant
        double wmax = *std::max_element(state.weights.begin(), state.weights.end());
        if (wmax > 1e100)
            for (double& w : state.weights) w /= wmax;
    }
}

// ---------------------------------------------------------------------------
// BaSE driver

namespace {

std::int64_t now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

using Grid = std::map<std::pair<int, int>, Candidate>;

std::pair<int, int> feature_cell(const Candidate& c, const IslandConfig& cfg) {
    int fb = std::clamp(static_cast<int>(c.fitness * cfg.fitness_buckets), 0, cfg.fitness_buckets - 1);
    int lb = std::clamp(static_cast<int>(c.program.size() / 256), 0, cfg.length_buckets - 1);
    return {fb, lb};
}

} // namespace

BaseRunRecord run_base(Task task, int total_calls, int num_arms, const PolicyConfig& policy,
                       ParentSampler sampler, Backend& backend, std::uint64_t seed,
                       const IslandConfig& island_config, const CallObserver& observer) {
    policy.validate();
    if (num_arms < 1) throw config_error("BaSE needs K >= 1 arms");
    if (total_calls < num_arms) throw config_error("BaSE needs C >= K");

    BaseRunRecord base;
    base.policy = policy;
    RunRecord& record = base.record;
    record.protocol = "base:" + policy_name(policy.policy);
    record.task = task;
    record.budget = BudgetSpec{total_calls, total_calls, 1};
    record.seed = seed;
    record.model_id = backend.model_id();
    record.started_unix_ms = now_ms();
    {
        std::ostringstream os;
        os << record.protocol << '-' << task_name(task) << '-' << seed << '-' << record.started_unix_ms;
        record.run_id = os.str();
    }

    Candidate initial = backend.initial_candidate(task);
    record.initial_fitness = initial.fitness;

    std::vector<Rng> arm_rng;
    arm_rng.reserve(static_cast<std::size_t>(num_arms));
    for (int i = 0; i < num_arms; ++i)
        arm_rng.push_back(Rng::substream(seed, static_cast<std::uint64_t>(i)));
    Rng policy_rng = Rng::substream(seed, static_cast<std::uint64_t>(num_arms));

    base.arms.assign(static_cast<std::size_t>(num_arms), ArmState{});
    record.trajectories.assign(static_cast<std::size_t>(num_arms), Trajectory{});
    std::vector<Candidate> greedy_parent(static_cast<std::size_t>(num_arms), initial);
    std::vector<std::vector<Grid>> islands(
        static_cast<std::size_t>(num_arms),
        std::vector<Grid>(static_cast<std::size_t>(std::max(1, island_config.num_islands))));

    for (int i = 0; i < num_arms; ++i) {
        base.arms[static_cast<std::size_t>(i)].index = i;
        Trajectory& traj = record.trajectories[static_cast<std::size_t>(i)];
        TrajectoryEntry init_entry;
        init_entry.candidate_id = initial.id;
        init_entry.fitness = initial.fitness;
        init_entry.valid = initial.valid;
        init_entry.accepted = true;
        init_entry.generation = 0;
        init_entry.child_index = 0;
        init_entry.failure = initial.failure;
        traj.entries.push_back(init_entry);
        traj.running_best = initial.fitness;
    }

    Candidate best = initial;
    double global_best = initial.fitness;
    PolicyState state = init_policy_state(policy, num_arms);

    // One charged call on arm `i`: sample a parent under the configured
    // protocol, propose, score, and fold the child back into arm state.
    auto pull = [&](int i, int call_index) {
        std::size_t ai = static_cast<std::size_t>(i);
        Trajectory& traj = record.trajectories[ai];
        Rng& rng = arm_rng[ai];

        Candidate parent;
        std::size_t island_idx = 0;
        if (sampler == ParentSampler::Greedy) {
            parent = greedy_parent[ai];
        } else {
            auto& grids = islands[ai];
            std::vector<double> weights(grids.size());
            double total = 0.0;
            for (std::size_t k = 0; k < grids.size(); ++k) {
                weights[k] = 1.0 / (1.0 + static_cast<double>(grids[k].size()));
                total += weights[k];
            }
            double u = rng.uniform() * total;
            island_idx = grids.size() - 1;
            double acc = 0.0;
            for (std::size_t k = 0; k < grids.size(); ++k) {
                acc += weights[k];
                if (u < acc) {
                    island_idx = k;
                    break;
                }
            }
            Grid& grid = grids[island_idx];
            if (grid.empty()) {
                parent = initial;
            } else {
                std::size_t pick = rng.index(grid.size());
                auto it = grid.begin();
                std::advance(it, static_cast<long>(pick));
                parent = it->second;
            }
        }

        ParentContext ctx;
        ctx.task = task;
        ctx.parent = &parent;
        ctx.arm = i;
        // init pulls use the bare prompt: no history yet
        if (base.arms[ai].pulls > 0)
            for (const auto& e : traj.entries)
                if (e.accepted) ctx.history.push_back({"candidate " + e.candidate_id, e.fitness});

        ChildOutcome outcome = backend.propose(ctx, rng);
        record.usage.push_back(outcome.usage);
        base.arm_by_call.push_back(i);

        TrajectoryEntry e;
        e.candidate_id = outcome.child.id;
        e.fitness = outcome.child.fitness;
        e.valid = outcome.child.valid;
        e.generation = base.arms[ai].pulls + 1;
        e.child_index = 1;
        e.failure = outcome.child.failure;

        if (outcome.child.valid) {
            if (sampler == ParentSampler::Greedy) {
                if (outcome.child.fitness > traj.running_best) {
                    e.accepted = true;
                    greedy_parent[ai] = outcome.child;
                }
            } else {
                Grid& grid = islands[ai][island_idx];
                auto cell = feature_cell(outcome.child, island_config);
                auto it = grid.find(cell);
                if (it == grid.end() || outcome.child.fitness > it->second.fitness) {
                    grid[cell] = outcome.child;
                    e.accepted = true;
                }
            }
            if (outcome.child.fitness > traj.running_best) traj.running_best = outcome.child.fitness;
            if (outcome.child.fitness > best.fitness) best = outcome.child;
        }
        traj.entries.push_back(e);

        update_arm(policy, state, base.arms, i, outcome.child.fitness, total_calls);
        global_best = std::max(global_best, traj.running_best);
        record.running_best_by_call.push_back(global_best);
        if (observer) observer({record.run_id, call_index, i, outcome.child.fitness, global_best});
    };

    int call_index = 0;
    for (int i = 0; i < num_arms; ++i) pull(i, ++call_index);
    for (int c = num_arms + 1; c <= total_calls; ++c) {
        int i = select_arm(policy, state, base.arms, c, total_calls, policy_rng);
        pull(i, ++call_index);
    }

    record.best = best;
    record.best_fitness = best.fitness;
    record.complete = true;
    record.finished_unix_ms = now_ms();
    return base;
}

} // namespace evoalloc
