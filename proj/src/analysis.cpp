#include "evoalloc/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>

namespace evoalloc {

double SweepCell::mean() const {
    if (fitnesses.empty()) throw input_error("sweep cell with no seeds");
    return std::accumulate(fitnesses.begin(), fitnesses.end(), 0.0) /
           static_cast<double>(fitnesses.size());
}

// ---------------------------------------------------------------------------
// Envelope

std::vector<EnvelopePoint> compute_envelope(const std::vector<SweepCell>& cells) {
    if (cells.empty()) throw input_error("compute_envelope over zero cells");
    for (const auto& cell : cells)
        if (cell.model_id != cells.front().model_id || cell.task != cells.front().task)
            throw input_error("envelope cells must share (model, task)");

    std::map<int, std::vector<const SweepCell*>> by_budget;
    for (const auto& cell : cells) by_budget[cell.total_calls].push_back(&cell);

    std::vector<EnvelopePoint> out;
    for (const auto& [budget, group] : by_budget) {
        EnvelopePoint p;
        p.total_calls = budget;
        p.v_max = -std::numeric_limits<double>::infinity();
        for (const SweepCell* cell : group) {
            double m = cell->mean();
            if (m > p.v_max) {
                p.v_max = m;
                p.argmax_depth = cell->depth;
            }
            if (cell->depth == 1) p.v_depth1 = m;
        }
        if (p.v_depth1) p.pen_bon = p.v_max - *p.v_depth1;
        out.push_back(p);
    }
    return out;
}

// ---------------------------------------------------------------------------
// OLS + F machinery

namespace {

// Gaussian elimination with partial pivoting on the normal equations.
std::vector<double> solve_normal(std::vector<std::vector<double>> m, std::vector<double> v,
                                 const std::vector<std::string>& column_names) {
    std::size_t p = v.size();
    // scale reference for the relative pivot threshold
    double scale = 0.0;
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < p; ++j) scale = std::max(scale, std::fabs(m[i][j]));
    if (scale == 0.0) scale = 1.0;

    std::vector<std::size_t> col(p);
    std::iota(col.begin(), col.end(), std::size_t{0});

    for (std::size_t k = 0; k < p; ++k) {
        std::size_t pivot = k;
        for (std::size_t i = k + 1; i < p; ++i)
            if (std::fabs(m[i][k]) > std::fabs(m[pivot][k])) pivot = i;
        if (std::fabs(m[pivot][k]) < 1e-10 * scale)
            throw config_error("rank-deficient design: column '" +
                               (k < column_names.size() ? column_names[k] : std::to_string(k)) +
                               "' carries no independent variation");
        std::swap(m[k], m[pivot]);
        std::swap(v[k], v[pivot]);
        for (std::size_t i = k + 1; i < p; ++i) {
            double f = m[i][k] / m[k][k];
            for (std::size_t j = k; j < p; ++j) m[i][j] -= f * m[k][j];
            v[i] -= f * v[k];
        }
    }
    std::vector<double> x(p);
    for (std::size_t k = p; k-- > 0;) {
        double s = v[k];
        for (std::size_t j = k + 1; j < p; ++j) s -= m[k][j] * x[j];
        x[k] = s / m[k][k];
    }
    return x;
}

} // namespace

OlsResult ols(const std::vector<std::vector<double>>& design, const std::vector<double>& response,
              const std::vector<std::string>& column_names) {
    std::size_t n = design.size();
    if (n == 0 || n != response.size()) throw input_error("OLS design/response size mismatch");
    std::size_t p = design.front().size();
    if (p == 0 || p > n) throw input_error("OLS needs 1 <= p <= n");
    for (const auto& row : design)
        if (row.size() != p) throw input_error("ragged OLS design");

    std::vector<std::vector<double>> xtx(p, std::vector<double>(p, 0.0));
    std::vector<double> xty(p, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t i = 0; i < p; ++i) {
            xty[i] += design[r][i] * response[r];
            for (std::size_t j = 0; j < p; ++j) xtx[i][j] += design[r][i] * design[r][j];
        }
    }

    OlsResult res;
    res.coef = solve_normal(std::move(xtx), std::move(xty), column_names);

    double ybar = std::accumulate(response.begin(), response.end(), 0.0) / static_cast<double>(n);
    double tss = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        double fitted = 0.0;
        for (std::size_t i = 0; i < p; ++i) fitted += design[r][i] * res.coef[i];
        double e = response[r] - fitted;
        res.rss += e * e;
        tss += (response[r] - ybar) * (response[r] - ybar);
    }
    res.r2 = tss > 0.0 ? std::max(0.0, 1.0 - res.rss / tss) : 1.0;
    return res;
}

double regularized_incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    // continued fraction (Lentz), with the symmetry transform for convergence
    if (x > (a + 1.0) / (a + b + 2.0)) return 1.0 - regularized_incomplete_beta(b, a, 1.0 - x);

    double ln_front = a * std::log(x) + b * std::log(1.0 - x) + std::lgamma(a + b) -
                      std::lgamma(a) - std::lgamma(b);
    double front = std::exp(ln_front) / a;

    const double tiny = 1e-300;
    double f = 1.0, c = 1.0, d = 0.0;
    for (int i = 0; i <= 400; ++i) {
        int m = i / 2;
        double numerator;
        if (i == 0)
            numerator = 1.0;
        else if (i % 2 == 0)
            numerator = m * (b - m) * x / ((a + 2.0 * m - 1.0) * (a + 2.0 * m));
        else
            numerator = -(a + m) * (a + b + m) * x / ((a + 2.0 * m) * (a + 2.0 * m + 1.0));
        d = 1.0 + numerator * d;
        if (std::fabs(d) < tiny) d = tiny;
        d = 1.0 / d;
        c = 1.0 + numerator / c;
        if (std::fabs(c) < tiny) c = tiny;
        double delta = c * d;
        f *= delta;
        if (std::fabs(1.0 - delta) < 1e-14) break;
    }
    return std::clamp(front * (f - 1.0), 0.0, 1.0);
}

double f_test_p_value(double f, double d1, double d2) {
    if (f <= 0.0) return 1.0;
    return regularized_incomplete_beta(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f));
}

// ---------------------------------------------------------------------------
// Bilinear fit

namespace {

struct Observation {
    double log_t = 0.0, log_n = 0.0, log_c = 0.0;
    double response = 0.0; // log(1 - V)
};

std::vector<Observation> fit_observations(const std::vector<SweepCell>& cells, double ceiling,
                                          FitResponse response) {
    std::vector<Observation> obs;
    for (const auto& cell : cells) {
        if (cell.depth < 1 || cell.breadth < 1) throw input_error("cell with nonpositive T or N");
        double m = cell.mean();
        if (m >= ceiling) continue; // ceiling filter applies to the cell mean
        auto push = [&](double v) {
            if (v >= 1.0) return; // log(1-V) undefined at/above 1
            Observation o;
            o.log_t = std::log(static_cast<double>(cell.depth));
            o.log_n = std::log(static_cast<double>(cell.breadth));
            o.log_c = std::log(static_cast<double>(cell.total_calls));
            o.response = std::log(1.0 - v);
            obs.push_back(o);
        };
        if (response == FitResponse::CellMean) {
            push(m);
        } else {
            for (double v : cell.fitnesses) push(v);
        }
    }
    if (obs.size() < 5) throw input_error("bilinear fit needs at least 5 sub-ceiling observations");
    return obs;
}

OlsResult fit_model(const std::vector<Observation>& obs, int model) {
    std::vector<std::vector<double>> design;
    std::vector<double> y;
    std::vector<std::string> names;
    switch (model) {
    case 0: names = {"intercept", "logC"}; break;
    case 1: names = {"intercept", "logT (depth)", "logN (breadth)", "logT*logN"}; break;
    case 2: names = {"intercept", "logT (depth)", "logN (breadth)", "logT*logN", "logT^2"}; break;
    case 3: names = {"intercept", "logT (depth)", "logN (breadth)", "logT*logN", "logN^2"}; break;
    default:
        names = {"intercept", "logT (depth)", "logN (breadth)", "logT*logN", "logT^2", "logN^2"};
    }
    for (const auto& o : obs) {
        std::vector<double> row{1.0};
        if (model == 0) {
            row.push_back(o.log_c);
        } else {
            row.push_back(o.log_t);
            row.push_back(o.log_n);
            row.push_back(o.log_t * o.log_n);
            if (model == 2 || model == 4) row.push_back(o.log_t * o.log_t);
            if (model == 3 || model == 4) row.push_back(o.log_n * o.log_n);
        }
        design.push_back(std::move(row));
        y.push_back(o.response);
    }
    return ols(design, y, names);
}

} // namespace

FitResult fit_bilinear(const std::vector<SweepCell>& cells, double ceiling, FitResponse response) {
    std::vector<Observation> obs = fit_observations(cells, ceiling, response);
    OlsResult r = fit_model(obs, 1);
    FitResult fit;
    fit.beta0 = r.coef[0];
    fit.a = r.coef[1];
    fit.b = r.coef[2];
    fit.c = r.coef[3];
    fit.r2 = r.r2;
    fit.n_cells = static_cast<int>(obs.size());
    return fit;
}

double predict_log_gap(const FitResult& fit, double depth, double breadth) {
    double lt = std::log(depth), ln = std::log(breadth);
    return fit.beta0 + fit.a * lt + fit.b * ln + fit.c * lt * ln;
}

double permutation_p_for_c(const std::vector<SweepCell>& cells, double ceiling, int n_shuffles,
                           Rng& rng, FitResponse response) {
    std::vector<Observation> obs = fit_observations(cells, ceiling, response);
    OlsResult base = fit_model(obs, 1);
    double observed = std::fabs(base.coef[3]);
    int at_least = 0;
    std::vector<Observation> shuffled = obs;
    for (int s = 0; s < n_shuffles; ++s) {
        for (std::size_t i = shuffled.size(); i > 1; --i) {
            std::size_t j = rng.index(i);
            std::swap(shuffled[i - 1].response, shuffled[j].response);
        }
        OlsResult perm = fit_model(shuffled, 1);
        if (std::fabs(perm.coef[3]) >= observed) ++at_least;
    }
    return n_shuffles > 0 ? static_cast<double>(at_least) / static_cast<double>(n_shuffles) : 1.0;
}

NestedModelResult nested_model_compare(const std::vector<SweepCell>& cells, double ceiling,
                                       FitResponse response) {
    std::vector<Observation> obs = fit_observations(cells, ceiling, response);
    double n = static_cast<double>(obs.size());

    NestedModelResult res;
    std::array<OlsResult, 5> fits;
    std::array<int, 5> params{2, 4, 5, 5, 6};
    for (int m = 0; m < 5; ++m) {
        fits[static_cast<std::size_t>(m)] = fit_model(obs, m);
        res.r2[static_cast<std::size_t>(m)] = fits[static_cast<std::size_t>(m)].r2;
    }

    auto f_nested = [&](int reduced, int full) {
        double rss_r = fits[static_cast<std::size_t>(reduced)].rss;
        double rss_f = fits[static_cast<std::size_t>(full)].rss;
        double d1 = params[static_cast<std::size_t>(full)] - params[static_cast<std::size_t>(reduced)];
        double d2 = n - params[static_cast<std::size_t>(full)];
        if (d2 <= 0.0) return 1.0;
        if (rss_f <= 0.0) return rss_r > rss_f ? 0.0 : 1.0;
        double f = ((rss_r - rss_f) / d1) / (rss_f / d2);
        return f_test_p_value(f, d1, d2);
    };

    res.p_f[0] = f_nested(0, 1); // does the bilinear model beat budget-only?
    res.p_f[1] = -1.0;           // M1 is the reference model
    for (int m = 2; m < 5; ++m) res.p_f[static_cast<std::size_t>(m)] = f_nested(1, m);
    return res;
}

// ---------------------------------------------------------------------------
// Closed forms

DepthOptimum optimal_depth(const FitResult& fit, int total_calls) {
    if (total_calls < 1) throw input_error("optimal_depth needs C >= 1");
    double log_c = std::log(static_cast<double>(total_calls));
    DepthOptimum out;

    auto corner = [&] {
        // smaller predicted log-gap = higher fitness
        double at_one = predict_log_gap(fit, 1.0, static_cast<double>(total_calls));
        double at_c = predict_log_gap(fit, static_cast<double>(total_calls), 1.0);
        out.t_corner = at_one <= at_c ? 1.0 : static_cast<double>(total_calls);
    };

    if (fit.c == 0.0) {
        corner();
        return out;
    }
    out.log_t_star = (fit.a - fit.b) / (2.0 * fit.c) + log_c / 2.0;
    out.t_star = std::exp(out.log_t_star);
    if (fit.c > 0.0) {
        // positive curvature of the log-gap along the budget line: the
        // vertex minimizes fitness, so the optimum sits at a corner
        out.vertex_is_minimum = true;
        corner();
        return out;
    }
    if (out.log_t_star >= 0.0 && out.log_t_star <= log_c) {
        out.interior = true;
    } else {
        corner();
    }
    return out;
}

double plateau_halfwidth(const FitResult& fit, double delta) {
    if (!(delta > 0.0)) throw input_error("plateau tolerance must be positive");
    if (fit.c == 0.0) return std::numeric_limits<double>::infinity();
    return std::sqrt(delta / std::fabs(fit.c));
}

// ---------------------------------------------------------------------------
// Permutation test

PermutationResult permutation_test_depth_gain(const std::map<int, std::vector<double>>& per_depth,
                                              int n_shuffles, Rng& rng) {
    if (per_depth.size() < 2) throw input_error("permutation test needs at least two depths");
    if (per_depth.find(1) == per_depth.end())
        throw input_error("permutation test requires the T=1 stratum");
    for (const auto& [depth, vals] : per_depth)
        if (vals.empty()) throw input_error("empty stratum at T=" + std::to_string(depth));

    std::vector<int> depths;
    std::vector<std::size_t> sizes;
    std::vector<double> pool;
    for (const auto& [depth, vals] : per_depth) {
        depths.push_back(depth);
        sizes.push_back(vals.size());
        pool.insert(pool.end(), vals.begin(), vals.end());
    }

    auto statistic = [&](const std::vector<double>& flat) {
        double best = -std::numeric_limits<double>::infinity();
        double baseline = 0.0;
        std::size_t offset = 0;
        for (std::size_t g = 0; g < depths.size(); ++g) {
            double m = 0.0;
            for (std::size_t i = 0; i < sizes[g]; ++i) m += flat[offset + i];
            m /= static_cast<double>(sizes[g]);
            best = std::max(best, m);
            if (depths[g] == 1) baseline = m;
            offset += sizes[g];
        }
        return best - baseline;
    };

    PermutationResult res;
    res.observed = statistic(pool);
    res.n_shuffles = n_shuffles;

    int at_least = 0;
    std::vector<double> shuffled = pool;
    for (int s = 0; s < n_shuffles; ++s) {
        // Fisher-Yates reassignment of fitnesses across depth slots
        for (std::size_t i = shuffled.size(); i > 1; --i) {
            std::size_t j = rng.index(i);
            std::swap(shuffled[i - 1], shuffled[j]);
        }
        if (statistic(shuffled) >= res.observed) ++at_least;
    }
    res.p = n_shuffles > 0 ? static_cast<double>(at_least) / static_cast<double>(n_shuffles) : 1.0;
    return res;
}

// ---------------------------------------------------------------------------
// Bootstrap / IQM

double interquartile_mean(std::vector<double> values) {
    if (values.empty()) throw input_error("IQM of an empty sample");
    std::sort(values.begin(), values.end());
    double n = static_cast<double>(values.size());
    double q = n / 4.0; // trimmed mass on each side
    double total = 0.0, weight = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        double lo = std::max(static_cast<double>(i), q);
        double hi = std::min(static_cast<double>(i + 1), n - q);
        double w = std::max(0.0, hi - lo);
        total += w * values[i];
        weight += w;
    }
    return total / weight;
}

BootstrapStats bootstrap_stats(const std::vector<std::vector<double>>& strata, int n_resamples,
                               Rng& rng) {
    std::size_t total_n = 0;
    for (const auto& s : strata) {
        if (s.empty()) throw input_error("bootstrap stratum is empty");
        total_n += s.size();
    }
    if (total_n < 2) throw input_error("bootstrap needs at least 2 samples");

    std::vector<double> pooled;
    pooled.reserve(total_n);
    for (const auto& s : strata) pooled.insert(pooled.end(), s.begin(), s.end());

    BootstrapStats out;
    out.mean = std::accumulate(pooled.begin(), pooled.end(), 0.0) / static_cast<double>(total_n);
    out.iqm = interquartile_mean(pooled);

    std::vector<double> means;
    means.reserve(static_cast<std::size_t>(n_resamples));
    for (int r = 0; r < n_resamples; ++r) {
        double sum = 0.0;
        for (const auto& s : strata)
            for (std::size_t i = 0; i < s.size(); ++i) sum += s[rng.index(s.size())];
        means.push_back(sum / static_cast<double>(total_n));
    }
    if (!means.empty()) {
        double m = std::accumulate(means.begin(), means.end(), 0.0) /
                   static_cast<double>(means.size());
        double var = 0.0;
        for (double v : means) var += (v - m) * (v - m);
        var /= static_cast<double>(means.size());
        out.se = std::sqrt(var);
        std::sort(means.begin(), means.end());
        auto percentile = [&](double p) {
            double idx = p * (static_cast<double>(means.size()) - 1.0);
            std::size_t lo = static_cast<std::size_t>(idx);
            std::size_t hi = std::min(lo + 1, means.size() - 1);
            double frac = idx - static_cast<double>(lo);
            return means[lo] * (1.0 - frac) + means[hi] * frac;
        };
        out.ci_lo = percentile(0.025);
        out.ci_hi = percentile(0.975);
    } else {
        out.ci_lo = out.ci_hi = out.mean;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Time to threshold

ThresholdResult time_to_threshold(const std::vector<RunRecord>& runs, double tau,
                                  const ModelSpec& model, double quantile, int n_resamples,
                                  std::uint64_t seed) {
    ThresholdResult out;
    out.tau = tau;
    if (runs.empty()) return out;

    std::size_t n = runs.size();
    std::size_t horizon = std::numeric_limits<std::size_t>::max();
    for (const auto& r : runs) horizon = std::min(horizon, r.running_best_by_call.size());
    if (horizon == 0 || horizon == std::numeric_limits<std::size_t>::max()) return out;

    // per-run cumulative FLOPs by call index
    std::vector<std::vector<double>> cum_flops(n);
    for (std::size_t i = 0; i < n; ++i) {
        FlopsLedger ledger = cumulative_flops(runs[i].usage, model);
        cum_flops[i].reserve(ledger.cumulative.size());
        for (const Flops& f : ledger.cumulative) cum_flops[i].push_back(flops_to_double(f));
    }

    // fraction of resampled run-sets whose mean running best at g reaches tau
    auto qualifies = [&](std::size_t g) {
        if (n_resamples == 0) {
            // exact: enumerate every ordered resample vector (n^n of them)
            std::size_t count = 1;
            for (std::size_t i = 0; i < n; ++i) count *= n;
            std::size_t hits = 0;
            for (std::size_t v = 0; v < count; ++v) {
                std::size_t rem = v;
                double sum = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    std::size_t idx = rem % n;
                    rem /= n;
                    sum += runs[idx].running_best_by_call[g];
                }
                if (sum / static_cast<double>(n) >= tau) ++hits;
            }
            return static_cast<double>(hits) / static_cast<double>(count) >= quantile;
        }
        Rng rng = Rng::substream(seed, g);
        int hits = 0;
        for (int r = 0; r < n_resamples; ++r) {
            double sum = 0.0;
            for (std::size_t i = 0; i < n; ++i) sum += runs[rng.index(n)].running_best_by_call[g];
            if (sum / static_cast<double>(n) >= tau) ++hits;
        }
        return static_cast<double>(hits) / static_cast<double>(n_resamples) >= quantile;
    };

    for (std::size_t g = 0; g < horizon; ++g) {
        if (qualifies(g)) {
            out.reached = true;
            out.generation = static_cast<int>(g) + 1;
            double mean_flops = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                mean_flops += g < cum_flops[i].size() ? cum_flops[i][g] : 0.0;
            out.flops = mean_flops / static_cast<double>(n);
            return out;
        }
    }
    return out;
}

} // namespace evoalloc
