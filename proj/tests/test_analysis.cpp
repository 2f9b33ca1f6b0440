#include "evoalloc/analysis.hpp"

#include <doctest.h>

#include <cmath>
#include <map>
#include <vector>

using namespace evoalloc;

namespace {

SweepCell cell(int c, int t, std::vector<double> fitnesses) {
    SweepCell s;
    s.model_id = "m";
    s.task = Task::MinMaxDist;
    s.total_calls = c;
    s.depth = t;
    s.breadth = c / t;
    s.fitnesses = std::move(fitnesses);
    return s;
}

// cells whose mean follows the bilinear surface exactly:
// log(1 - V) = beta0 + a logT + b logN + c logT logN
std::vector<SweepCell> surface_cells(double beta0, double a, double b, double c) {
    std::vector<SweepCell> cells;
    for (int C : {8, 16, 32, 64, 128, 256}) {
        for (int t = 1; t <= C; t *= 2) {
            int n = C / t;
            double lg = beta0 + a * std::log(t) + b * std::log(n) + c * std::log(t) * std::log(n);
            cells.push_back(cell(C, t, {1.0 - std::exp(lg)}));
        }
    }
    return cells;
}

RunRecord run_with(std::vector<double> running_best) {
    RunRecord r;
    r.running_best_by_call = std::move(running_best);
    for (std::size_t i = 0; i < r.running_best_by_call.size(); ++i)
        r.usage.push_back({100, 0, 50, "m"});
    return r;
}

const ModelSpec kModel1B{"m1b", 1000000000};

} // namespace

TEST_CASE("envelope: single depth per budget is its own envelope") {
    std::vector<SweepCell> cells{cell(8, 2, {0.4, 0.6})};
    auto env = compute_envelope(cells);
    REQUIRE(env.size() == 1);
    CHECK(env[0].v_max == doctest::Approx(0.5));
    CHECK(env[0].argmax_depth == 2);
    CHECK(!env[0].v_depth1.has_value());
    CHECK(!env[0].pen_bon.has_value());
}

TEST_CASE("envelope: argmax depth and the depth gain against the T=1 baseline") {
    std::vector<SweepCell> cells{cell(32, 1, {0.339}), cell(32, 4, {0.672}), cell(32, 32, {0.5}),
                                 cell(16, 1, {0.2}), cell(16, 16, {0.3})};
    auto env = compute_envelope(cells);
    REQUIRE(env.size() == 2); // budgets sorted ascending
    CHECK(env[0].total_calls == 16);
    CHECK(*env[0].pen_bon == doctest::Approx(0.1));
    CHECK(env[1].total_calls == 32);
    CHECK(env[1].v_max == doctest::Approx(0.672));
    CHECK(env[1].argmax_depth == 4);
    CHECK(*env[1].pen_bon == doctest::Approx(0.333));
}

TEST_CASE("envelope: mixed (model, task) rejected") {
    std::vector<SweepCell> cells{cell(8, 2, {0.4}), cell(8, 4, {0.5})};
    cells[1].model_id = "other";
    CHECK_THROWS_AS(compute_envelope(cells), input_error);
}

TEST_CASE("bilinear fit: planted coefficients recovered exactly") {
    auto cells = surface_cells(-0.5, -0.3, -0.2, -0.08);
    FitResult fit = fit_bilinear(cells);
    CHECK(fit.beta0 == doctest::Approx(-0.5).epsilon(1e-10));
    CHECK(fit.a == doctest::Approx(-0.3).epsilon(1e-10));
    CHECK(fit.b == doctest::Approx(-0.2).epsilon(1e-10));
    CHECK(fit.c == doctest::Approx(-0.08).epsilon(1e-10));
    CHECK(fit.r2 == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(fit.n_cells == static_cast<int>(cells.size()));
}

TEST_CASE("bilinear fit: ceiling filter drops saturated cells") {
    auto cells = surface_cells(-0.5, -0.3, -0.2, -0.08);
    cells.push_back(cell(64, 8, {0.999})); // above 0.97: must not disturb the fit
    FitResult fit = fit_bilinear(cells);
    CHECK(fit.a == doctest::Approx(-0.3).epsilon(1e-10));
    CHECK(fit.n_cells == static_cast<int>(cells.size()) - 1);
}

TEST_CASE("bilinear fit: single-budget grids are rank-deficient along the budget line") {
    // with one C, logN = logC - logT and the design loses a column
    std::vector<SweepCell> cells;
    for (int t = 1; t <= 64; t *= 2)
        cells.push_back(cell(64, t, {0.5 - 0.01 * std::log(t)}));
    CHECK_THROWS_WITH_AS(fit_bilinear(cells), doctest::Contains("rank-deficient"), config_error);
}

TEST_CASE("bilinear fit: fewer than five usable observations rejected") {
    std::vector<SweepCell> cells{cell(4, 1, {0.3}), cell(4, 2, {0.31}), cell(4, 4, {0.32}),
                                 cell(8, 2, {0.4})};
    CHECK_THROWS_AS(fit_bilinear(cells), input_error);
}

TEST_CASE("bilinear fit: per-seed response agrees with cell means on balanced data") {
    // duplicate each cell's mean as two identical seeds: identical fits
    auto mean_cells = surface_cells(-0.6, -0.25, -0.31, -0.05);
    auto seed_cells = mean_cells;
    for (auto& s : seed_cells) s.fitnesses = {s.fitnesses[0], s.fitnesses[0]};
    FitResult a = fit_bilinear(mean_cells, 0.97, FitResponse::CellMean);
    FitResult b = fit_bilinear(seed_cells, 0.97, FitResponse::PerSeed);
    CHECK(a.c == doctest::Approx(b.c).epsilon(1e-12));
    CHECK(b.n_cells == 2 * a.n_cells);
}

TEST_CASE("predict_log_gap: frozen fitted coefficients give the expected level") {
    FitResult fit;
    fit.beta0 = -0.590;
    fit.a = -0.208;
    fit.b = -0.290;
    fit.c = -0.106;
    double lg = predict_log_gap(fit, 16.0, 32.0);
    double expected = -0.590 - 0.208 * std::log(16.0) - 0.290 * std::log(32.0) -
                      0.106 * std::log(16.0) * std::log(32.0);
    CHECK(lg == doctest::Approx(expected).epsilon(1e-12));
    CHECK(1.0 - std::exp(lg) == doctest::Approx(0.9588).epsilon(2e-3));
}

TEST_CASE("permutation p for c: planted interaction is significant, shuffled labels are not") {
    auto cells = surface_cells(-0.5, -0.3, -0.2, -0.12);
    Rng rng(41);
    double p = permutation_p_for_c(cells, 0.97, 500, rng);
    CHECK(p < 0.01);

    // pure additive surface: c = 0, so permutations match it often
    auto flat = surface_cells(-0.5, -0.3, -0.2, 0.0);
    Rng rng2(42);
    double p_flat = permutation_p_for_c(flat, 0.97, 500, rng2);
    CHECK(p_flat > 0.05);
}

TEST_CASE("nested models: R2 ordering and F-tests on noisy bilinear data") {
    auto cells = surface_cells(-0.5, -0.3, -0.2, -0.08);
    Rng noise(7);
    for (auto& s : cells) {
        double v = s.fitnesses[0];
        double lg = std::log(1.0 - v) + 0.01 * noise.gaussian();
        s.fitnesses = {1.0 - std::exp(lg)};
    }
    NestedModelResult res = nested_model_compare(cells);
    CHECK(res.r2[1] >= res.r2[0]);
    for (std::size_t m = 2; m < 5; ++m) CHECK(res.r2[m] >= res.r2[1] - 1e-12);
    CHECK(res.p_f[0] < 1e-6); // the (T, N) split matters far beyond budget alone
    CHECK(res.p_f[1] == -1.0);
    // data generated by the bilinear model: quadratic terms add nothing real
    for (std::size_t m = 2; m < 5; ++m) CHECK(res.p_f[m] > 0.01);
}

TEST_CASE("optimal depth: a = b puts the vertex at sqrt(C)") {
    FitResult fit;
    fit.beta0 = -0.5;
    fit.a = -0.3;
    fit.b = -0.3;
    fit.c = -0.1;
    DepthOptimum opt = optimal_depth(fit, 256);
    CHECK(opt.interior);
    CHECK(opt.t_star == doctest::Approx(16.0).epsilon(1e-12));
    // first-order condition along the budget line: a - b + c(logC - 2 logT*) = 0
    double foc = fit.a - fit.b + fit.c * (std::log(256.0) - 2.0 * opt.log_t_star);
    CHECK(std::fabs(foc) < 1e-8);
}

TEST_CASE("optimal depth: interior vertex matches a fine grid search") {
    FitResult fit;
    fit.beta0 = -0.4;
    fit.a = -0.35;
    fit.b = -0.15;
    fit.c = -0.09;
    const int C = 1024;
    DepthOptimum opt = optimal_depth(fit, C);
    REQUIRE(opt.interior);
    double best_lt = 0.0, best_gap = 1e300;
    for (int i = 0; i <= 100000; ++i) {
        double lt = std::log(static_cast<double>(C)) * i / 100000.0;
        double gap = predict_log_gap(fit, std::exp(lt), C / std::exp(lt));
        if (gap < best_gap) {
            best_gap = gap;
            best_lt = lt;
        }
    }
    CHECK(opt.log_t_star == doctest::Approx(best_lt).epsilon(1e-4));
}

TEST_CASE("optimal depth: positive curvature pushes the optimum to a corner") {
    FitResult fit;
    fit.beta0 = -0.5;
    fit.a = -0.3;
    fit.b = -0.2;
    fit.c = 0.05;
    DepthOptimum opt = optimal_depth(fit, 64);
    CHECK(!opt.interior);
    CHECK(opt.vertex_is_minimum);
    double at_one = predict_log_gap(fit, 1.0, 64.0);
    double at_c = predict_log_gap(fit, 64.0, 1.0);
    CHECK(opt.t_corner == (at_one <= at_c ? 1.0 : 64.0));

    fit.c = 0.0;
    DepthOptimum flat = optimal_depth(fit, 64);
    CHECK(!flat.interior);
    CHECK(flat.t_corner == 64.0); // a < b: depth helps more, so T = C wins
}

TEST_CASE("plateau halfwidth: closed form and the gap identity at the rim") {
    FitResult fit;
    fit.beta0 = -0.5;
    fit.a = -0.3;
    fit.b = -0.3;
    fit.c = -0.1;
    double delta = std::fabs(fit.c);
    CHECK(plateau_halfwidth(fit, delta) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(plateau_halfwidth(fit, 4.0 * delta) == doctest::Approx(2.0).epsilon(1e-12));

    // log-gap rises by exactly delta at vertex +- halfwidth along the line
    const double C = 256.0;
    DepthOptimum opt = optimal_depth(fit, 256);
    double w = plateau_halfwidth(fit, 0.05);
    double at_star = predict_log_gap(fit, opt.t_star, C / opt.t_star);
    for (double sign : {-1.0, 1.0}) {
        double t = std::exp(opt.log_t_star + sign * w);
        CHECK(predict_log_gap(fit, t, C / t) - at_star == doctest::Approx(0.05).epsilon(1e-10));
    }

    FitResult flat = fit;
    flat.c = 0.0;
    CHECK(std::isinf(plateau_halfwidth(flat, 0.05)));
}

TEST_CASE("depth-gain permutation test: null and planted alternatives") {
    std::map<int, std::vector<double>> same{{1, {0.5, 0.5, 0.5}}, {4, {0.5, 0.5, 0.5}}};
    Rng rng(13);
    PermutationResult null_res = permutation_test_depth_gain(same, 200, rng);
    CHECK(null_res.observed == doctest::Approx(0.0));
    CHECK(null_res.p == doctest::Approx(1.0));

    std::map<int, std::vector<double>> planted{
        {1, {0.40, 0.41, 0.39, 0.42, 0.40, 0.41}},
        {4, {0.70, 0.71, 0.69, 0.72, 0.70, 0.71}},
    };
    Rng rng2(14);
    PermutationResult alt = permutation_test_depth_gain(planted, 1000, rng2);
    CHECK(alt.observed == doctest::Approx(0.3).epsilon(0.05));
    CHECK(alt.p < 0.01);

    std::map<int, std::vector<double>> no_baseline{{2, {0.1}}, {4, {0.2}}};
    CHECK_THROWS_AS(permutation_test_depth_gain(no_baseline, 10, rng2), input_error);
}

TEST_CASE("interquartile mean: fractional trimming oracle values") {
    CHECK(interquartile_mean({1, 2, 3, 4}) == doctest::Approx(2.5).epsilon(1e-12));
    CHECK(interquartile_mean({1, 2, 3, 4, 100}) == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(interquartile_mean({5}) == doctest::Approx(5.0));
    CHECK_THROWS_AS(interquartile_mean({}), input_error);
}

TEST_CASE("bootstrap: constant data has zero spread") {
    Rng rng(3);
    BootstrapStats s = bootstrap_stats({{0.7, 0.7}, {0.7, 0.7, 0.7}}, 500, rng);
    CHECK(s.mean == doctest::Approx(0.7));
    CHECK(s.se == doctest::Approx(0.0));
    CHECK(s.ci_lo == doctest::Approx(0.7));
    CHECK(s.ci_hi == doctest::Approx(0.7));
    CHECK(s.iqm == doctest::Approx(0.7));
}

TEST_CASE("bootstrap: two-point stratum matches the exact resampling SE") {
    // resampling {0,1} twice: mean is 0, 0.5, 1 with probs 1/4, 1/2, 1/4,
    // so the exact bootstrap SE is sqrt(1/8) = 0.35355
    Rng rng(5);
    BootstrapStats s = bootstrap_stats({{0.0, 1.0}}, 200000, rng);
    CHECK(s.se == doctest::Approx(0.353553).epsilon(0.02));
    CHECK(s.mean == doctest::Approx(0.5));
}

TEST_CASE("bootstrap: SE tracks sigma/sqrt(n) on a gaussian sample") {
    Rng data_rng(29);
    std::vector<double> sample;
    for (int i = 0; i < 400; ++i) sample.push_back(data_rng.gaussian());
    Rng rng(31);
    BootstrapStats s = bootstrap_stats({sample}, 4000, rng);
    CHECK(s.se == doctest::Approx(1.0 / std::sqrt(400.0)).epsilon(0.2));
    CHECK(s.ci_lo < s.mean);
    CHECK(s.ci_hi > s.mean);
    CHECK_THROWS_AS(bootstrap_stats({{}}, 10, rng), input_error);
    CHECK_THROWS_AS(bootstrap_stats({{1.0}}, 10, rng), input_error);
}

TEST_CASE("time to threshold: immediate, unreachable, and monotone in tau") {
    std::vector<RunRecord> runs{run_with({0.8, 0.9, 0.95}), run_with({0.85, 0.9, 0.92}),
                                run_with({0.82, 0.88, 0.9})};
    ThresholdResult hit = time_to_threshold(runs, 0.5, kModel1B);
    CHECK(hit.reached);
    CHECK(hit.generation == 1);
    // per-call FLOPs 2 * 1e9 * 150 = 3e11; cumulative at call 1 for all runs
    CHECK(hit.flops == doctest::Approx(3e11));

    ThresholdResult miss = time_to_threshold(runs, 2.0, kModel1B);
    CHECK(!miss.reached);
    CHECK(miss.generation == -1);

    int prev = 1;
    for (double tau : {0.79, 0.86, 0.89}) {
        ThresholdResult r = time_to_threshold(runs, tau, kModel1B);
        REQUIRE(r.reached);
        CHECK(r.generation >= prev);
        prev = r.generation;
    }
}

TEST_CASE("time to threshold: exact enumeration agrees with a local oracle") {
    std::vector<RunRecord> runs{run_with({0.2, 0.5, 0.9, 0.9}), run_with({0.1, 0.4, 0.6, 0.95}),
                                run_with({0.3, 0.3, 0.8, 0.85})};
    const double tau = 0.6, quantile = 0.7;
    ThresholdResult exact = time_to_threshold(runs, tau, kModel1B, quantile, 0);

    // oracle: walk all 27 ordered index vectors per call index
    int oracle_gen = -1;
    for (std::size_t g = 0; g < 4 && oracle_gen < 0; ++g) {
        int hits = 0;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                for (int k = 0; k < 3; ++k) {
                    double m = (runs[0].running_best_by_call[g] * 0 +
                                runs[static_cast<std::size_t>(i)].running_best_by_call[g] +
                                runs[static_cast<std::size_t>(j)].running_best_by_call[g] +
                                runs[static_cast<std::size_t>(k)].running_best_by_call[g]) /
                               3.0;
                    if (m >= tau) ++hits;
                }
        if (hits / 27.0 >= quantile) oracle_gen = static_cast<int>(g) + 1;
    }
    REQUIRE(oracle_gen > 0);
    CHECK(exact.reached);
    CHECK(exact.generation == oracle_gen);

    // the sampled estimator converges to the same call index
    ThresholdResult sampled = time_to_threshold(runs, tau, kModel1B, quantile, 20000, 77);
    CHECK(sampled.generation == oracle_gen);
}

TEST_CASE("ols: exact linear recovery and rank-deficiency naming") {
    std::vector<std::vector<double>> design;
    std::vector<double> y;
    for (double x = 0; x < 6; ++x) {
        design.push_back({1.0, x});
        y.push_back(2.0 + 3.0 * x);
    }
    OlsResult r = ols(design, y, {"intercept", "x"});
    CHECK(r.coef[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(r.coef[1] == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(r.r2 == doctest::Approx(1.0));

    std::vector<std::vector<double>> dup;
    for (double x = 0; x < 6; ++x) dup.push_back({1.0, x, 2.0 * x});
    CHECK_THROWS_WITH_AS(ols(dup, y, {"intercept", "x", "copy-of-x"}),
                         doctest::Contains("copy-of-x"), config_error);
}

TEST_CASE("incomplete beta and F-test p-values") {
    // I_x(1,1) is the identity
    CHECK(regularized_incomplete_beta(1.0, 1.0, 0.37) == doctest::Approx(0.37).epsilon(1e-10));
    CHECK(regularized_incomplete_beta(2.0, 2.0, 0.5) == doctest::Approx(0.5).epsilon(1e-10));
    // the classic F table entry: F(1, 10) upper 5% point is 4.9646
    CHECK(f_test_p_value(4.9646, 1.0, 10.0) == doctest::Approx(0.05).epsilon(2e-3));
    CHECK(f_test_p_value(0.0, 1.0, 10.0) == doctest::Approx(1.0));
    CHECK(f_test_p_value(1e6, 1.0, 10.0) < 1e-6);
}
