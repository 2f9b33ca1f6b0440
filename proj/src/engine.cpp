#include "evoalloc/engine.hpp"

#include <algorithm>
#include <chrono>
#include <sstream>

namespace evoalloc {

namespace {

std::int64_t now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

std::string make_run_id(const std::string& protocol, Task task, std::uint64_t seed) {
    std::ostringstream os;
    os << protocol << '-' << task_name(task) << '-' << seed << '-' << now_ms();
    return os.str();
}

TrajectoryEntry entry_from(const Candidate& c, int generation, int child_index) {
    TrajectoryEntry e;
    e.candidate_id = c.id;
    e.fitness = c.fitness;
    e.valid = c.valid;
    e.generation = generation;
    e.child_index = child_index;
    e.failure = c.failure;
    return e;
}

std::vector<HistoryEntry> history_from(const Trajectory& traj) {
    std::vector<HistoryEntry> hist;
    for (const auto& e : traj.entries)
        if (e.accepted)
            hist.push_back({"candidate " + e.candidate_id, e.fitness});
    return hist;
}

} // namespace

void BudgetSpec::validate() const {
    if (depth < 1 || breadth < 1) throw config_error("budget requires T >= 1 and N >= 1");
    if (total_calls != depth * breadth)
        throw config_error("budget identity violated: C=" + std::to_string(total_calls) +
                           " != T*N=" + std::to_string(depth * breadth));
}

BudgetSpec BudgetSpec::from_depth(int total_calls, int depth) {
    if (depth < 1 || total_calls < 1 || total_calls % depth != 0)
        throw config_error("depth must divide the total budget");
    return BudgetSpec{total_calls, depth, total_calls / depth};
}

RunRecord run_greedy(Task task, const BudgetSpec& budget, Backend& backend, std::uint64_t seed,
                     const CallObserver& observer) {
    budget.validate();

    RunRecord record;
    record.protocol = "greedy";
    record.task = task;
    record.budget = budget;
    record.seed = seed;
    record.model_id = backend.model_id();
    record.run_id = make_run_id(record.protocol, task, seed);
    record.started_unix_ms = now_ms();

    Rng rng = Rng::substream(seed, 0);

    Candidate initial = backend.initial_candidate(task);
    record.initial_fitness = initial.fitness;

    Trajectory traj;
    TrajectoryEntry init_entry = entry_from(initial, 0, 0);
    init_entry.accepted = true;
    traj.entries.push_back(init_entry);
    traj.running_best = initial.fitness;

    Candidate parent = initial;       // parent used by the current generation
    Candidate best = initial;
    Candidate next_parent = initial;  // best accepted so far, applied at gen boundary

    int call_index = 0;
    for (int g = 1; g <= budget.depth; ++g) {
        parent = next_parent;
        std::vector<HistoryEntry> history = history_from(traj);
        for (int n = 1; n <= budget.breadth; ++n) {
            ParentContext ctx;
            ctx.task = task;
            ctx.parent = &parent;
            ctx.history = history;
            ChildOutcome outcome = backend.propose(ctx, rng);
            ++call_index;
            record.usage.push_back(outcome.usage);

            TrajectoryEntry e = entry_from(outcome.child, g, n);
            // strictly beats: equal fitness is rejected
            if (outcome.child.valid && outcome.child.fitness > traj.running_best) {
                e.accepted = true;
                traj.running_best = outcome.child.fitness;
                next_parent = outcome.child;
            }
            if (outcome.child.valid && outcome.child.fitness > best.fitness) best = outcome.child;
            traj.entries.push_back(e);
            record.running_best_by_call.push_back(traj.running_best);
            if (observer)
                observer({record.run_id, call_index, 0, outcome.child.fitness, traj.running_best});
        }
    }

    record.trajectories.push_back(std::move(traj));
    record.best = best;
    record.best_fitness = best.fitness;
    record.complete = true;
    record.finished_unix_ms = now_ms();
    return record;
}

RunRecord run_island(Task task, const BudgetSpec& budget, const IslandConfig& config, Backend& backend,
                     std::uint64_t seed, const CallObserver& observer) {
    budget.validate();
    if (config.num_islands < 1) throw config_error("island protocol needs num_islands >= 1");

    RunRecord record;
    record.protocol = "island";
    record.task = task;
    record.budget = budget;
    record.seed = seed;
    record.model_id = backend.model_id();
    record.run_id = make_run_id(record.protocol, task, seed);
    record.started_unix_ms = now_ms();

    Rng rng = Rng::substream(seed, 0);

    Candidate initial = backend.initial_candidate(task);
    record.initial_fitness = initial.fitness;

    struct Cell {
        Candidate occupant;
    };
    using Grid = std::map<std::pair<int, int>, Cell>;
    std::vector<Grid> islands(static_cast<std::size_t>(config.num_islands));

    auto feature_cell = [&](const Candidate& c) {
        int fb = std::clamp(static_cast<int>(c.fitness * config.fitness_buckets), 0,
                            config.fitness_buckets - 1);
        int lb = std::clamp(static_cast<int>(c.program.size() / 256), 0, config.length_buckets - 1);
        return std::make_pair(fb, lb);
    };

    Trajectory traj;
    TrajectoryEntry init_entry = entry_from(initial, 0, 0);
    init_entry.accepted = true;
    traj.entries.push_back(init_entry);
    traj.running_best = initial.fitness;

    Candidate best = initial;

    for (int c = 1; c <= budget.total_calls; ++c) {
        // inverse-coverage island weighting: least-filled grids first
        std::vector<double> weights(islands.size());
        double total = 0.0;
        for (std::size_t i = 0; i < islands.size(); ++i) {
            weights[i] = 1.0 / (1.0 + static_cast<double>(islands[i].size()));
            total += weights[i];
        }
        double u = rng.uniform() * total;
        std::size_t island = islands.size() - 1;
        double acc = 0.0;
        for (std::size_t i = 0; i < islands.size(); ++i) {
            acc += weights[i];
            if (u < acc) {
                island = i;
                break;
            }
        }

        // uniform parent from the island archive; empty island cold-starts
        // with the initial program
        Candidate parent;
        Grid& grid = islands[island];
        if (grid.empty()) {
            parent = initial;
        } else {
            std::size_t pick = rng.index(grid.size());
            auto it = grid.begin();
            std::advance(it, static_cast<long>(pick));
            parent = it->second.occupant;
        }

        ParentContext ctx;
        ctx.task = task;
        ctx.parent = &parent;
        ctx.history = history_from(traj);
        ChildOutcome outcome = backend.propose(ctx, rng);
        record.usage.push_back(outcome.usage);

        TrajectoryEntry e = entry_from(outcome.child, c, 1);
        if (outcome.child.valid) {
            auto cell = feature_cell(outcome.child);
            auto it = grid.find(cell);
            if (it == grid.end() || outcome.child.fitness > it->second.occupant.fitness) {
                grid[cell] = Cell{outcome.child};
                e.accepted = true;
            }
            if (outcome.child.fitness > traj.running_best) traj.running_best = outcome.child.fitness;
            if (outcome.child.fitness > best.fitness) best = outcome.child;
        }
        traj.entries.push_back(e);
        record.running_best_by_call.push_back(traj.running_best);
        if (observer)
            observer({record.run_id, c, static_cast<int>(island), outcome.child.fitness,
                      traj.running_best});
    }

    record.trajectories.push_back(std::move(traj));
    record.best = best;
    record.best_fitness = best.fitness;
    record.complete = true;
    record.finished_unix_ms = now_ms();
    return record;
}

std::pair<TrajectoryEntry, double> select_best(const RunRecord& record) {
    if (record.trajectories.empty()) throw input_error("empty run record");
    const TrajectoryEntry* best = nullptr;
    for (const auto& traj : record.trajectories) {
        for (const auto& e : traj.entries) {
            if (best == nullptr) {
                best = &e;
                continue;
            }
            if (e.fitness > best->fitness) best = &e;
            // ties keep the earliest (generation, child_index) in scan order
        }
    }
    if (best == nullptr) throw input_error("run record has no scored entries");
    return {*best, best->fitness};
}

} // namespace evoalloc
