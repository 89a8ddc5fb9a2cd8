#ifndef MGPO_TUNING_HPP
#define MGPO_TUNING_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "mgpo/belief.hpp"
#include "mgpo/envgraph.hpp"
#include "mgpo/gaussian.hpp"
#include "mgpo/metamdp.hpp"
#include "mgpo/rng.hpp"
#include "mgpo/voc.hpp"

namespace mgpo {

struct BayesOptConfig {
    int budget = 50;
    double lower = 0.0;
    double upper = 1.0;
    double first_probe = 0.5;
    int grid_points = 1001;
    double length_scale = 0.1; // relative to the interval width
    double noise = 1e-6;       // relative to the observed variance
};

struct BayesOptResult {
    double best_x = 0.0;
    double best_y = -std::numeric_limits<double>::infinity();
    std::vector<double> xs;
    std::vector<double> ys;
};

// One-dimensional maximization with a squared-exponential GP surrogate and
// expected improvement, maximized over a dense grid. Already-probed grid
// points are skipped so the budget is never spent twice on the same x.
inline BayesOptResult bayes_opt_1d(const std::function<double(double)>& objective, const BayesOptConfig& cfg = {}) {
    if (cfg.budget < 1) throw std::invalid_argument("budget must be >= 1");
    if (!(cfg.upper > cfg.lower)) throw std::invalid_argument("empty search interval");
    BayesOptResult out;
    const double width = cfg.upper - cfg.lower;
    const double ell = cfg.length_scale * width;
    auto kernel = [&](double a, double b) { return std::exp(-0.5 * (a - b) * (a - b) / (ell * ell)); };

    std::vector<double> grid(static_cast<std::size_t>(cfg.grid_points));
    for (int g = 0; g < cfg.grid_points; ++g) {
        grid[static_cast<std::size_t>(g)] = cfg.lower + width * g / (cfg.grid_points - 1);
    }
    std::vector<bool> used(grid.size(), false);

    auto probe = [&](double x) {
        const double y = objective(x);
        out.xs.push_back(x);
        out.ys.push_back(y);
        if (y > out.best_y) {
            out.best_y = y;
            out.best_x = x;
        }
    };

    probe(std::clamp(cfg.first_probe, cfg.lower, cfg.upper));
    for (std::size_t g = 0; g < grid.size(); ++g) {
        if (std::abs(grid[g] - out.xs.back()) < 1e-12) used[g] = true;
    }

    while (static_cast<int>(out.xs.size()) < cfg.budget) {
        const auto n = static_cast<Eigen::Index>(out.xs.size());
        Eigen::VectorXd y(n);
        for (Eigen::Index i = 0; i < n; ++i) y(i) = out.ys[static_cast<std::size_t>(i)];
        const double y_mean = y.mean();
        double y_scale = std::sqrt((y.array() - y_mean).square().sum() / static_cast<double>(n));
        if (!(y_scale > 0.0)) y_scale = 1.0;
        const Eigen::VectorXd yn = (y.array() - y_mean) / y_scale;

        Eigen::MatrixXd k(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < n; ++j) {
                k(i, j) = kernel(out.xs[static_cast<std::size_t>(i)], out.xs[static_cast<std::size_t>(j)]);
            }
            k(i, i) += cfg.noise + 1e-9;
        }
        const Eigen::LLT<Eigen::MatrixXd> chol(k);
        const Eigen::VectorXd alpha = chol.solve(yn);
        const double best_n = (out.best_y - y_mean) / y_scale;

        double best_ei = -1.0;
        std::size_t best_g = grid.size();
        Eigen::VectorXd kx(n);
        for (std::size_t g = 0; g < grid.size(); ++g) {
            if (used[g]) continue;
            for (Eigen::Index i = 0; i < n; ++i) kx(i) = kernel(grid[g], out.xs[static_cast<std::size_t>(i)]);
            const double mean = kx.dot(alpha);
            const double var = std::max(1e-12, 1.0 - kx.dot(chol.solve(kx)));
            const double sd = std::sqrt(var);
            const double z = (mean - best_n) / sd;
            const double ei = (mean - best_n) * normal_cdf(z) + sd * normal_pdf(z);
            if (ei > best_ei) {
                best_ei = ei;
                best_g = g;
            }
        }
        if (best_g == grid.size()) break; // grid exhausted
        used[best_g] = true;
        probe(grid[best_g]);
    }
    return out;
}

struct TuningConfig {
    int budget = 50;
    int n_instances = 200;
    std::uint64_t seed = 0;
};

struct TuningResult {
    double w_lambda = 0.5;
    double mean_rr = 0.0;
    BayesOptResult search;
};

// Mean ground-truth return of MGPO with a given cost weight on a fixed set of
// training instances (common random numbers across probes).
inline double evaluate_cost_weight(const TemplatePtr& env, VocConfig voc, const EpisodeConfig& episode,
                                   double w_lambda, int n_instances, std::uint64_t seed) {
    voc.w_lambda = w_lambda;
    MgpoPolicy policy(env, voc);
    EpisodeConfig cfg = episode;
    cfg.score_mode = ScoreMode::ground_truth;
    double total = 0.0;
    for (int i = 0; i < n_instances; ++i) {
        const std::uint64_t s = derive_seed({seed, 0x74756E65ULL, static_cast<std::uint64_t>(i)});
        const auto inst = sample_instance(env, s);
        const StreamObservations source(inst, cfg.tau_obs, s);
        total += run_episode(policy, inst, cfg, source).rr;
    }
    return total / n_instances;
}

inline TuningResult tune_cost_weight(const TemplatePtr& env, const VocConfig& voc, const EpisodeConfig& episode,
                                     const TuningConfig& tuning = {}) {
    BayesOptConfig bo;
    bo.budget = tuning.budget;
    auto result = bayes_opt_1d(
        [&](double w) { return evaluate_cost_weight(env, voc, episode, w, tuning.n_instances, tuning.seed); }, bo);
    TuningResult out;
    out.w_lambda = result.best_x;
    out.mean_rr = result.best_y;
    out.search = std::move(result);
    return out;
}

} // namespace mgpo

#endif // MGPO_TUNING_HPP
