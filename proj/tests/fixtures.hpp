#pragma once

#include <string>
#include <vector>

#include "mgpo/belief.hpp"
#include "mgpo/envgraph.hpp"

namespace fixtures {

inline mgpo::TemplatePtr chain3(double sigma = 10.0) {
    return mgpo::EnvTemplate::create({{0, 0, 0}, {1, 0, sigma}, {2, 0, sigma}}, {{0, 1}, {1, 2}}, 0, {2}, "chain3");
}

// 0 -> 1 -> 3 and 0 -> 2 -> 3, goal 3.
inline mgpo::TemplatePtr diamond(double sigma = 10.0) {
    return mgpo::EnvTemplate::create({{0, 0, 0}, {1, 0, sigma}, {2, 0, sigma}, {3, 0, sigma}},
                                     {{0, 1}, {0, 2}, {1, 3}, {2, 3}}, 0, {3}, "diamond");
}

// Two disjoint branches 0 -> 1 -> 3 and 0 -> 2 -> 4 with goals 3 and 4.
inline mgpo::TemplatePtr fork(double sigma = 10.0) {
    return mgpo::EnvTemplate::create({{0, 0, 0}, {1, 0, sigma}, {2, 0, sigma}, {3, 0, sigma}, {4, 0, sigma}},
                                     {{0, 1}, {0, 2}, {1, 3}, {2, 4}}, 0, {3, 4}, "fork");
}

// Belief whose means are `mu`, reached through one update on every node whose
// target differs from the prior, so precisions stay consistent with counts.
inline mgpo::BeliefState belief_with(const mgpo::EnvTemplate& env, const std::vector<double>& mu,
                                     double tau_obs = 0.005) {
    auto b = mgpo::init_belief(env);
    for (mgpo::NodeId n = 1; n < env.node_count(); ++n) {
        const double target = mu[static_cast<std::size_t>(n)];
        if (target == b.mean(n) || !b.inspectable(n)) continue;
        const double tau = b.precision(n);
        const double o = (target * (tau + tau_obs) - tau * b.mean(n)) / tau_obs;
        b.apply(n, o, tau_obs);
    }
    return b;
}

inline std::string data_path(const std::string& rel) { return std::string(MGPO_DATA_DIR) + "/" + rel; }

} // namespace fixtures
