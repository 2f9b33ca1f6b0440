#include "evoalloc/geomtasks.hpp"

#include "evoalloc/common.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <sstream>

namespace evoalloc {

namespace {

constexpr std::size_t kCpCount = 26;
constexpr std::size_t kMmdCount = 16;
constexpr std::size_t kHtCount = 11;

bool finite_point(const Point& p) { return std::isfinite(p[0]) && std::isfinite(p[1]); }

double dist(const Point& a, const Point& b) { return std::hypot(a[0] - b[0], a[1] - b[1]); }

std::string describe(const char* what, std::size_t i, std::size_t j) {
    std::ostringstream os;
    os << what << " (" << i << "," << j << ")";
    return os.str();
}

} // namespace

std::string task_name(Task t) {
    switch (t) {
    case Task::CirclePacking: return "cp";
    case Task::MinMaxDist: return "mmd";
    case Task::Heilbronn: return "ht";
    }
    return "?";
}

std::optional<Task> task_from_name(const std::string& name) {
    if (name == "cp" || name == "circle_packing") return Task::CirclePacking;
    if (name == "mmd" || name == "minmaxdist") return Task::MinMaxDist;
    if (name == "ht" || name == "heilbronn") return Task::Heilbronn;
    return std::nullopt;
}

std::size_t task_arity(Task t) {
    switch (t) {
    case Task::CirclePacking: return kCpCount;
    case Task::MinMaxDist: return kMmdCount;
    case Task::Heilbronn: return kHtCount;
    }
    return 0;
}

FitnessScore eval_circle_packing(const CirclePacking& packing, double tol) {
    if (packing.centers.size() != kCpCount || packing.radii.size() != kCpCount)
        throw input_error("circle packing must have exactly 26 centers and 26 radii");
    for (std::size_t i = 0; i < kCpCount; ++i) {
        if (!finite_point(packing.centers[i]) || !std::isfinite(packing.radii[i]))
            throw input_error("circle packing contains non-finite values");
    }

    FitnessScore score;
    double sum = 0.0;
    for (std::size_t i = 0; i < kCpCount; ++i) {
        double r = packing.radii[i];
        double x = packing.centers[i][0];
        double y = packing.centers[i][1];
        if (r <= 0.0) {
            score.violations.push_back("radius " + std::to_string(i) + " not strictly positive");
            continue;
        }
        if (x < r - tol || x > 1.0 - r + tol || y < r - tol || y > 1.0 - r + tol)
            score.violations.push_back("circle " + std::to_string(i) + " not inside unit square");
        sum += r;
    }
    for (std::size_t i = 0; i < kCpCount; ++i) {
        for (std::size_t j = i + 1; j < kCpCount; ++j) {
            double d = dist(packing.centers[i], packing.centers[j]);
            if (d < packing.radii[i] + packing.radii[j] - tol)
                score.violations.push_back(describe("circles overlap", i, j));
        }
    }
    score.value = score.violations.empty() ? sum / kCpReferenceSumRadii : 0.0;
    return score;
}

FitnessScore eval_minmaxdist(const PointSet& ps) {
    if (ps.points.size() != kMmdCount)
        throw input_error("minmaxdist expects exactly 16 points");
    for (const auto& p : ps.points)
        if (!finite_point(p)) throw input_error("minmaxdist input contains non-finite coordinates");

    double dmin = std::numeric_limits<double>::infinity();
    double dmax = 0.0;
    for (std::size_t i = 0; i < kMmdCount; ++i) {
        for (std::size_t j = i + 1; j < kMmdCount; ++j) {
            double d = dist(ps.points[i], ps.points[j]);
            dmin = std::min(dmin, d);
            dmax = std::max(dmax, d);
        }
    }
    FitnessScore score;
    if (dmin == 0.0) {
        // coincident points: ratio collapses to 0, well-formed but degenerate
        score.value = 0.0;
        score.violations.push_back("coincident point pair");
        return score;
    }
    double ratio = dmin / dmax;
    score.value = ratio * ratio * kMmdReferenceRatio;
    return score;
}

FitnessScore eval_heilbronn(const PointSet& ps, double tol) {
    if (ps.points.size() != kHtCount)
        throw input_error("heilbronn expects exactly 11 points");
    for (const auto& p : ps.points)
        if (!finite_point(p)) throw input_error("heilbronn input contains non-finite coordinates");

    // Containment: three half-plane tests against the equilateral triangle
    // (0,0), (1,0), (0.5, sqrt(3)/2), each with tol slack on signed distance.
    FitnessScore score;
    for (std::size_t i = 0; i < kHtCount; ++i) {
        double x = ps.points[i][0];
        double y = ps.points[i][1];
        // bottom edge: y >= 0; left edge: sqrt(3) x - y >= 0 (normalized /2);
        // right edge: sqrt(3)(1-x) - y >= 0 (normalized /2)
        double d0 = y;
        double d1 = (std::sqrt(3.0) * x - y) / 2.0;
        double d2 = (std::sqrt(3.0) * (1.0 - x) - y) / 2.0;
        if (d0 < -tol || d1 < -tol || d2 < -tol)
            score.violations.push_back("point " + std::to_string(i) + " outside triangle");
    }
    if (!score.violations.empty()) {
        score.value = 0.0;
        return score;
    }
    double min_area = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < kHtCount; ++i)
        for (std::size_t j = i + 1; j < kHtCount; ++j)
            for (std::size_t k = j + 1; k < kHtCount; ++k) {
                const auto& a = ps.points[i];
                const auto& b = ps.points[j];
                const auto& c = ps.points[k];
                double area = 0.5 * std::abs((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]));
                min_area = std::min(min_area, area);
            }
    double container_area = std::sqrt(3.0) / 4.0;
    score.value = (min_area / container_area) / kHtReferenceMinArea;
    return score;
}

FitnessScore evaluate(Task task, const Configuration& config, double tol_cp, double tol_ht) {
    switch (task) {
    case Task::CirclePacking:
        if (!std::holds_alternative<CirclePacking>(config))
            throw input_error("configuration does not match circle packing task");
        return eval_circle_packing(std::get<CirclePacking>(config), tol_cp);
    case Task::MinMaxDist:
        if (!std::holds_alternative<PointSet>(config))
            throw input_error("configuration does not match point-set task");
        return eval_minmaxdist(std::get<PointSet>(config));
    case Task::Heilbronn:
        if (!std::holds_alternative<PointSet>(config))
            throw input_error("configuration does not match point-set task");
        return eval_heilbronn(std::get<PointSet>(config), tol_ht);
    }
    throw input_error("unknown task");
}

std::string serialize_configuration(const Configuration& config) {
    nlohmann::json j;
    if (const auto* cp = std::get_if<CirclePacking>(&config)) {
        j["centers"] = cp->centers;
        j["radii"] = cp->radii;
    } else {
        j["points"] = std::get<PointSet>(config).points;
    }
    return j.dump();
}

ParsedConfiguration parse_configuration(Task task, const std::string& text) {
    ParsedConfiguration out;
    nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded()) {
        out.error = "not a valid JSON document";
        return out;
    }
    auto read_points = [&](const nlohmann::json& arr, std::vector<Point>& dst) -> bool {
        if (!arr.is_array()) return false;
        for (const auto& e : arr) {
            if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number()) return false;
            dst.push_back({e[0].get<double>(), e[1].get<double>()});
        }
        return true;
    };
    if (task == Task::CirclePacking) {
        CirclePacking cp;
        if (!j.contains("centers") || !j.contains("radii") || !read_points(j["centers"], cp.centers) ||
            !j["radii"].is_array()) {
            out.error = "expected {centers, radii}";
            return out;
        }
        for (const auto& r : j["radii"]) {
            if (!r.is_number()) {
                out.error = "non-numeric radius";
                return out;
            }
            cp.radii.push_back(r.get<double>());
        }
        if (cp.centers.size() != task_arity(task) || cp.radii.size() != task_arity(task)) {
            out.error = "wrong arity: expected " + std::to_string(task_arity(task));
            return out;
        }
        out.config = Configuration{std::move(cp)};
    } else {
        PointSet ps;
        if (!j.contains("points") || !read_points(j["points"], ps.points)) {
            out.error = "expected {points}";
            return out;
        }
        if (ps.points.size() != task_arity(task)) {
            out.error = "wrong arity: expected " + std::to_string(task_arity(task));
            return out;
        }
        out.config = Configuration{std::move(ps)};
    }
    return out;
}

} // namespace evoalloc
