#ifndef MGPO_VOC_HPP
#define MGPO_VOC_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <vector>

#include "mgpo/belief.hpp"
#include "mgpo/envgraph.hpp"
#include "mgpo/gaussian.hpp"
#include "mgpo/metamdp.hpp"

namespace mgpo {

struct VocConfig {
    double lambda = 1.0;
    double tau_obs = 0.005;
    double w_lambda = 0.5;
    // Earlier variant used in the human experiment: observation sd ignores
    // the belief's own uncertainty and the cost is subtracted unweighted.
    bool legacy_mode = false;
};

struct PathStats {
    double r_max = 0.0;
    double r_i = 0.0;
    double r_alt = 0.0;
};

struct VocBreakdown {
    NodeId node = -1;
    double r_max = 0.0;
    double r_i = 0.0;
    double r_alt = 0.0;
    double threshold = 0.0;
    double sigma_obs = 0.0;
    double p_change = 0.0;
    double o_change = 0.0;
    double mu_prime = 0.0;
    double voc_pre_cost = 0.0;
    double voc = 0.0;
    bool bottleneck = false; // no path avoids the node; r_alt is -inf
};

inline constexpr double kNoAlternative = -std::numeric_limits<double>::infinity();

// Best path values overall, through `node`, and avoiding `node`.
inline PathStats path_stats(const BeliefState& belief, NodeId node, const EnvTemplate& env) {
    const auto& paths = env.paths();
    PathStats s{kNoAlternative, kNoAlternative, kNoAlternative};
    for (std::size_t p = 0; p < paths.size(); ++p) {
        const double v = belief.path_value(paths[p]);
        s.r_max = std::max(s.r_max, v);
        if (env.path_contains(static_cast<int>(p), node)) {
            s.r_i = std::max(s.r_i, v);
        } else {
            s.r_alt = std::max(s.r_alt, v);
        }
    }
    return s;
}

// Path statistics for every node at once: one pass to value all paths, then
// r_i from each node's path list and r_alt from the best path avoiding it.
inline std::vector<PathStats> all_path_stats(const BeliefState& belief, const EnvTemplate& env) {
    const auto& paths = env.paths();
    std::vector<double> values(paths.size());
    int best = 0;
    for (std::size_t p = 0; p < paths.size(); ++p) {
        values[p] = belief.path_value(paths[p]);
        if (values[p] > values[static_cast<std::size_t>(best)]) best = static_cast<int>(p);
    }
    const double r_max = values[static_cast<std::size_t>(best)];
    std::vector<PathStats> stats(static_cast<std::size_t>(env.node_count()),
                                 PathStats{r_max, kNoAlternative, r_max});
    for (NodeId n = 0; n < env.node_count(); ++n) {
        auto& s = stats[static_cast<std::size_t>(n)];
        for (int p : env.paths_through(n)) s.r_i = std::max(s.r_i, values[static_cast<std::size_t>(p)]);
    }
    for (NodeId n : paths[static_cast<std::size_t>(best)]) {
        double alt = kNoAlternative;
        for (std::size_t p = 0; p < paths.size(); ++p) {
            if (values[p] > alt && !env.path_contains(static_cast<int>(p), n)) alt = values[p];
        }
        stats[static_cast<std::size_t>(n)].r_alt = alt;
    }
    return stats;
}

// sd of the next observation as seen from the current belief.
inline double observation_sd(double tau_node, double tau_obs, bool legacy_mode) {
    if (legacy_mode) return 1.0 / std::sqrt(tau_obs);
    return std::sqrt(1.0 / tau_obs + 1.0 / tau_node);
}

// Closed-form myopic value of inspecting `node` once given precomputed path stats.
inline VocBreakdown myopic_voc(NodeId node, const BeliefState& belief, const PathStats& stats,
                               const VocConfig& config) {
    VocBreakdown out;
    out.node = node;
    out.r_max = stats.r_max;
    out.r_i = stats.r_i;
    out.r_alt = stats.r_alt;

    const double mu = belief.mean(node);
    const double tau = belief.precision(node);
    const double tau_obs = config.tau_obs;
    out.sigma_obs = observation_sd(tau, tau_obs, config.legacy_mode);

    auto finish = [&](double pre_cost) {
        out.voc_pre_cost = std::max(0.0, pre_cost);
        out.voc = config.legacy_mode ? out.voc_pre_cost - config.lambda
                                     : (1.0 - config.w_lambda) * out.voc_pre_cost - config.w_lambda * config.lambda;
        return out;
    };

    if (stats.r_alt == kNoAlternative) {
        out.bottleneck = true;
        out.threshold = -std::numeric_limits<double>::infinity();
        out.o_change = mu;
        out.mu_prime = mu;
        return finish(0.0);
    }

    out.threshold = (1.0 + tau / tau_obs) * (stats.r_alt - stats.r_i) + mu;
    const double z = (out.threshold - mu) / out.sigma_obs;
    auto posterior_mean = [&](double o) { return (mu * tau + o * tau_obs) / (tau + tau_obs); };

    if (stats.r_i > stats.r_alt) {
        // Node lies on the best path: the plan changes if the observation falls below t.
        out.p_change = normal_cdf(z);
        out.o_change = mu - out.sigma_obs * inverse_mills(-z);
        out.mu_prime = posterior_mean(out.o_change);
        return finish(out.p_change * (stats.r_alt - stats.r_i + mu - out.mu_prime));
    }

    // Node is off the best path: the plan changes if the observation exceeds t.
    out.p_change = normal_sf(z);
    out.o_change = mu + out.sigma_obs * inverse_mills(z);
    out.mu_prime = posterior_mean(out.o_change);
    return finish(out.p_change * (stats.r_i - stats.r_alt - mu + out.mu_prime));
}

inline VocBreakdown myopic_voc(NodeId node, const BeliefState& belief, const EnvTemplate& env,
                               const VocConfig& config) {
    if (!env.inspectable(node) || !belief.inspectable(node)) {
        throw BeliefError("node " + std::to_string(node) + " is not inspectable");
    }
    return myopic_voc(node, belief, path_stats(belief, node, env), config);
}

// VOC of every inspectable node, in ascending node order.
inline std::vector<VocBreakdown> voc_table(const BeliefState& belief, const EnvTemplate& env,
                                           const VocConfig& config) {
    const auto stats = all_path_stats(belief, env);
    std::vector<VocBreakdown> table;
    table.reserve(env.inspectable_nodes().size());
    for (NodeId n : env.inspectable_nodes()) {
        table.push_back(myopic_voc(n, belief, stats[static_cast<std::size_t>(n)], config));
    }
    return table;
}

inline double max_voc(const std::vector<VocBreakdown>& table) {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& row : table) best = std::max(best, row.voc);
    return best;
}

// Greedy selection: the highest-VOC computation if its VOC is positive,
// otherwise terminate. Ties go to the lowest node id.
inline MetaAction select_from_table(const std::vector<VocBreakdown>& table) {
    const VocBreakdown* best = nullptr;
    for (const auto& row : table) {
        if (best == nullptr || row.voc > best->voc) best = &row;
    }
    if (best == nullptr || !(best->voc > 0.0)) return MetaAction::terminate();
    return MetaAction::inspect(best->node);
}

inline MetaAction select_computation(const BeliefState& belief, const EnvTemplate& env, const VocConfig& config) {
    return select_from_table(voc_table(belief, env, config));
}

class MgpoPolicy final : public Policy {
public:
    MgpoPolicy(TemplatePtr env, VocConfig config) : env_(std::move(env)), config_(config) {}

    MetaAction select(const BeliefState& belief) override { return select_computation(belief, *env_, config_); }

    const VocConfig& config() const { return config_; }

private:
    TemplatePtr env_;
    VocConfig config_;
};

inline void write_voc_csv(std::ostream& out, const std::vector<VocBreakdown>& table, bool header = true) {
    if (header) out << "node,r_max,r_i,r_alt,t,p_change,o_change,mu_prime,voc\n";
    for (const auto& r : table) {
        out << r.node << ',' << r.r_max << ',' << r.r_i << ',' << r.r_alt << ',' << r.threshold << ','
            << r.p_change << ',' << r.o_change << ',' << r.mu_prime << ',' << r.voc << '\n';
    }
}

} // namespace mgpo

#endif // MGPO_VOC_HPP
