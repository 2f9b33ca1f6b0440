#pragma once

#include "evoalloc/accounting.hpp"
#include "evoalloc/engine.hpp"

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace evoalloc {

// ---------------------------------------------------------------------------
// Sweep cells and the envelope

struct SweepCell {
    std::string model_id;
    Task task = Task::CirclePacking;
    int total_calls = 0; // C
    int depth = 0;       // T
    int breadth = 0;     // N = C/T
    std::vector<double> fitnesses; // final fitness per seed

    double mean() const;
};

struct EnvelopePoint {
    int total_calls = 0;
    double v_max = 0.0;          // max over T of the cell mean
    int argmax_depth = 0;
    std::optional<double> v_depth1; // T=1 baseline, when present
    std::optional<double> pen_bon;  // v_max - v_depth1; undefined without T=1
};

// Per distinct budget C: the depth envelope V_max, its argmax T, the T=1
// baseline, and penBoN. Cells must share (model, task).
std::vector<EnvelopePoint> compute_envelope(const std::vector<SweepCell>& cells);

// ---------------------------------------------------------------------------
// Bilinear fit  log(1 - V) = beta0 + a logT + b logN + c logT logN

struct FitResult {
    double beta0 = 0.0, a = 0.0, b = 0.0, c = 0.0;
    double r2 = 0.0;
    int n_cells = 0;      // observations used (post ceiling filter)
    double p_c = -1.0;    // permutation p-value for c; negative = not computed
};

enum class FitResponse { CellMean, PerSeed };

// OLS with natural logs on sub-ceiling cells (cell mean < ceiling).
// Rank-deficient designs raise config_error naming the deficient axis.
FitResult fit_bilinear(const std::vector<SweepCell>& cells, double ceiling = 0.97,
                       FitResponse response = FitResponse::CellMean);

// Predicted log-gap at (T, N) under a fit.
double predict_log_gap(const FitResult& fit, double depth, double breadth);

// Permutation p-value for the interaction coefficient c: responses are
// shuffled across cells and the model refit; p = fraction of shuffles with
// |c_perm| >= |c_observed|.
double permutation_p_for_c(const std::vector<SweepCell>& cells, double ceiling, int n_shuffles,
                           Rng& rng, FitResponse response = FitResponse::CellMean);

// M0: beta0 + a logC.  M1: the bilinear model.  M2/M3/M4: M1 plus log^2 T,
// log^2 N, or both.  p_f[0] is the F-test of M1 against M0; p_f[2..4] test
// each extension against M1; p_f[1] is unset (-1).
struct NestedModelResult {
    std::array<double, 5> r2{};
    std::array<double, 5> p_f{};
};

NestedModelResult nested_model_compare(const std::vector<SweepCell>& cells, double ceiling = 0.97,
                                       FitResponse response = FitResponse::CellMean);

// ---------------------------------------------------------------------------
// Closed forms (vertex and plateau)

struct DepthOptimum {
    double log_t_star = 0.0; // vertex in log-T units (valid when interior)
    double t_star = 0.0;
    bool interior = false;     // vertex lies in [1, C] and is a fitness maximum
    bool vertex_is_minimum = false; // c > 0: vertex minimizes fitness
    double t_corner = 0.0;     // best corner (1 or C) when not interior
};

// log T* = (a - b)/(2c) + (log C)/2; c = 0 or a fitness-minimizing vertex
// falls back to the better corner of {T=1, T=C}.
DepthOptimum optimal_depth(const FitResult& fit, int total_calls);

// sqrt(Delta/|c|) in log-T units; c = 0 -> +infinity (flat plateau).
double plateau_halfwidth(const FitResult& fit, double delta);

// ---------------------------------------------------------------------------
// Permutation test for the depth gain (penBoN)

struct PermutationResult {
    double observed = 0.0; // penBoN = max_T mean - mean(T=1)
    double p = 1.0;        // fraction of shuffles with statistic >= observed
    int n_shuffles = 0;
};

PermutationResult permutation_test_depth_gain(const std::map<int, std::vector<double>>& per_depth,
                                              int n_shuffles, Rng& rng);

// ---------------------------------------------------------------------------
// Bootstrap / IQM

struct BootstrapStats {
    double mean = 0.0;
    double se = 0.0;
    double ci_lo = 0.0, ci_hi = 0.0; // percentile 95% CI of the mean
    double iqm = 0.0;                // interquartile mean of the pooled sample
};

// Stratified resampling with replacement within each stratum; the bootstrap
// statistic is the pooled mean. Empty stratum or < 2 total samples -> error.
BootstrapStats bootstrap_stats(const std::vector<std::vector<double>>& strata, int n_resamples,
                               Rng& rng);

// Interquartile mean with fractional-weight endpoints.
double interquartile_mean(std::vector<double> values);

// ---------------------------------------------------------------------------
// Time to threshold

struct ThresholdResult {
    double tau = 0.0;
    bool reached = false;
    int generation = -1;    // earliest qualifying call index (1-based)
    double flops = 0.0;     // mean cumulative FLOPs across runs at that index
};

// Earliest call index g where the bootstrap-resampled mean running best
// reaches tau in >= quantile of resamples. n_resamples = 0 enumerates the
// full ordered resample space exactly (n^n vectors; small instances only).
ThresholdResult time_to_threshold(const std::vector<RunRecord>& runs, double tau,
                                  const ModelSpec& model, double quantile = 0.9,
                                  int n_resamples = 1000, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Small-matrix OLS helper (exposed for tests)

struct OlsResult {
    std::vector<double> coef;
    double rss = 0.0;
    double r2 = 0.0;
};

// Least squares via normal equations; a near-zero pivot raises config_error
// naming the offending column.
OlsResult ols(const std::vector<std::vector<double>>& design, const std::vector<double>& response,
              const std::vector<std::string>& column_names);

// Regularized incomplete beta I_x(a, b) (for F-test p-values).
double regularized_incomplete_beta(double a, double b, double x);

// Upper-tail p-value of an F statistic with (d1, d2) degrees of freedom.
double f_test_p_value(double f, double d1, double d2);

} // namespace evoalloc
