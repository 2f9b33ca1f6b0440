#pragma once

#include "evoalloc/mutation.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace evoalloc {

// Depth-breadth allocation of a fixed call budget: C = T * N exactly.
struct BudgetSpec {
    int total_calls = 0; // C
    int depth = 0;       // T, generations
    int breadth = 0;     // N, children per generation

    void validate() const;

    static BudgetSpec from_depth(int total_calls, int depth);
};

struct TrajectoryEntry {
    std::string candidate_id;
    double fitness = 0.0;
    bool accepted = false;
    bool valid = false;
    int generation = 0;  // 1-based
    int child_index = 0; // 1-based within generation
    std::string failure;
};

struct Trajectory {
    std::vector<TrajectoryEntry> entries;
    double running_best = 0.0;
};

struct RunRecord {
    std::string run_id;
    std::string protocol; // greedy | island | base:<policy>
    Task task = Task::CirclePacking;
    BudgetSpec budget;
    std::uint64_t seed = 0;
    std::string model_id;
    std::vector<Trajectory> trajectories;
    std::vector<UsageRecord> usage; // one per issued call, in call order
    Candidate best;
    double best_fitness = 0.0;
    double initial_fitness = 0.0;
    bool complete = false;
    std::int64_t started_unix_ms = 0;
    std::int64_t finished_unix_ms = 0;

    // Running best across all trajectories, indexed by call order (size C).
    std::vector<double> running_best_by_call;
};

// One structured progress line per scored call.
struct CallEvent {
    std::string run_id;
    int call_index = 0; // 1-based
    int arm = 0;        // trajectory index
    double fitness = 0.0;
    double running_best = 0.0;
};
using CallObserver = std::function<void(const CallEvent&)>;

struct IslandConfig {
    int num_islands = 4;
    int fitness_buckets = 10;  // feature dim 1: fitness decile
    int length_buckets = 5;    // feature dim 2: program length bucket
};

// T generations of N children, each generation mutating the running best
// as of the previous generation boundary. Exactly C calls issued.
RunRecord run_greedy(Task task, const BudgetSpec& budget, Backend& backend, std::uint64_t seed,
                     const CallObserver& observer = {});

// Per call: pick an island by inverse-coverage weighting, sample a parent
// uniformly from its MAP-Elites archive (cold start: the initial program),
// insert the child into its feature cell when it beats the occupant.
RunRecord run_island(Task task, const BudgetSpec& budget, const IslandConfig& config, Backend& backend,
                     std::uint64_t seed, const CallObserver& observer = {});

// Global argmax over every scored entry; ties broken by earliest
// (generation, child index). Throws input_error on an empty record.
std::pair<TrajectoryEntry, double> select_best(const RunRecord& record);

} // namespace evoalloc
