#pragma once

#include "evoalloc/engine.hpp"

#include <string>
#include <utility>
#include <vector>

namespace evoalloc {

// ---------------------------------------------------------------------------
// Policies

enum class Policy { Ucb, Exp3P, Thompson, Random };

std::string policy_name(Policy p);
Policy policy_from_name(const std::string& name);

// Statistic the UCB index is built on. Mean is classic UCB1; Latest treats
// the newest observation as the arm's current level, which suits the
// improving-arms regime where reward drifts upward along a trajectory.
enum class UcbStat { Mean, Latest };

struct PolicyConfig {
    Policy policy = Policy::Ucb;

    double ucb_c = 1.0;
    UcbStat ucb_stat = UcbStat::Mean;

    // EXP3.P; zero means "derive the standard default from (K, C)":
    // gamma = min(1, sqrt(K ln K / C)), eta = gamma/(3K), beta = sqrt(ln K/(C K)).
    double exp3p_gamma = 0.0;
    double exp3p_eta = 0.0;
    double exp3p_beta = 0.0;

    // Thompson: normal-conjugate posterior over the arm mean. pseudo-counts
    // of 0 give a flat prior (posterior mean = sample mean).
    double thompson_prior_mean = 0.0;
    double thompson_prior_variance = 1.0;
    double thompson_pseudo_counts = 0.0;

    void validate() const;
};

struct ArmState {
    int index = 0;
    int pulls = 0;
    std::vector<double> rewards; // one per pull, in pull order
    double running_best = 0.0;

    double mean_reward() const;
    double latest_reward() const;
};

// Shared mutable policy state (EXP3.P weights and the probabilities used
// for the most recent draw, kept for importance weighting).
struct PolicyState {
    std::vector<double> weights;
    std::vector<double> last_probs;
};

PolicyState init_policy_state(const PolicyConfig& config, int num_arms);

// Resolved EXP3.P constants for a given (K, C).
struct Exp3pParams {
    double gamma = 0.0, eta = 0.0, beta = 0.0;
};
Exp3pParams resolve_exp3p(const PolicyConfig& config, int num_arms, int total_calls);

// Normal-conjugate posterior (mean, variance) of an arm's reward level
// under the configured Thompson prior.
std::pair<double, double> thompson_posterior(const PolicyConfig& config, const ArmState& arm);

// One bandit decision at overall call index t (1-based). All arms must have
// pulls >= 1. UCB ties resolve to the lowest arm index.
int select_arm(const PolicyConfig& config, PolicyState& state, const std::vector<ArmState>& arms,
               int t, int total_calls, Rng& rng);

// Record the newest child's fitness on the pulled arm and refresh
// policy-specific statistics (EXP3.P importance-weighted weight update).
void update_arm(const PolicyConfig& config, PolicyState& state, std::vector<ArmState>& arms,
                int arm, double reward, int total_calls);

// ---------------------------------------------------------------------------
// BaSE driver

enum class ParentSampler { Greedy, Island };

struct BaseRunRecord {
    RunRecord record;             // trajectories[i] belongs to arm i
    std::vector<int> arm_by_call; // size C, chosen arm per charged call
    std::vector<ArmState> arms;
    PolicyConfig policy;
};

// K arms initialized with one charged call each from the bare task prompt,
// then one policy decision per remaining call.
// Exactly C calls issued; the record's best is the global argmax over every
// scored entry of every arm.
BaseRunRecord run_base(Task task, int total_calls, int num_arms, const PolicyConfig& policy,
                       ParentSampler sampler, Backend& backend, std::uint64_t seed,
                       const IslandConfig& island_config = {}, const CallObserver& observer = {});

} // namespace evoalloc
