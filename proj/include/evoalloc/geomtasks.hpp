#pragma once

#include <array>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace evoalloc {

using Point = std::array<double, 2>;

enum class Task { CirclePacking, MinMaxDist, Heilbronn };

std::string task_name(Task t);
std::optional<Task> task_from_name(const std::string& name);

// Number of entities the task's evaluator expects (circles or points).
std::size_t task_arity(Task t);

struct CirclePacking {
    std::vector<Point> centers; // 26 centers in [0,1]^2
    std::vector<double> radii;  // 26 positive radii
};

struct PointSet {
    std::vector<Point> points; // 16 (MMD) or 11 (HT)
};

using Configuration = std::variant<CirclePacking, PointSet>;

struct FitnessScore {
    double value = 0.0;
    std::vector<std::string> violations;

    bool valid() const { return violations.empty(); }
};

// Normalizers: fitness 1.0 matches the best published construction.
inline constexpr double kCpReferenceSumRadii = 2.635;
inline constexpr double kMmdReferenceRatio = 12.889266112;
inline constexpr double kHtReferenceMinArea = 0.036529889880030156;

inline constexpr double kCpDefaultTol = 1e-9;
inline constexpr double kHtContainmentTol = 1e-6;

// Sum of radii over the reference constant; violating configurations score
// 0 with every failed constraint listed. Wrong arity / non-finite input
// throws input_error.
FitnessScore eval_circle_packing(const CirclePacking& packing, double tol = kCpDefaultTol);

// (d_min/d_max)^2 times the reference constant over all 16-point pairs.
FitnessScore eval_minmaxdist(const PointSet& points);

// Minimum triangle area over all 165 triples, normalized by the container
// area and the reference constant. Points outside the equilateral triangle
// (beyond tol) score 0.
FitnessScore eval_heilbronn(const PointSet& points, double tol = kHtContainmentTol);

// Dispatch by task; the variant must hold the matching alternative.
FitnessScore evaluate(Task task, const Configuration& config, double tol_cp = kCpDefaultTol,
                      double tol_ht = kHtContainmentTol);

// Configuration wire format: a flat JSON record.
//   CP:      {"centers": [[x,y] x26], "radii": [r x26]}
//   MMD/HT:  {"points": [[x,y] xn]}
// parse returns nullopt with a reason on any malformed document; this is
// the failure-is-a-value path used by the sandbox executor.
std::string serialize_configuration(const Configuration& config);
struct ParsedConfiguration {
    std::optional<Configuration> config;
    std::string error;
};
ParsedConfiguration parse_configuration(Task task, const std::string& text);

} // namespace evoalloc
