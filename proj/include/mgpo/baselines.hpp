#ifndef MGPO_BASELINES_HPP
#define MGPO_BASELINES_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "mgpo/belief.hpp"
#include "mgpo/envgraph.hpp"
#include "mgpo/gaussian.hpp"
#include "mgpo/metamdp.hpp"
#include "mgpo/rng.hpp"
#include "mgpo/voc.hpp"

namespace mgpo {

// ---------------------------------------------------------------------------
// Four-point discretization of the observation channel

struct DiscretizationOptions {
    // Bins are built from the predictive sd sqrt(1/tau_i + 1/tau_obs); set to
    // false to use the belief sd 1/sqrt(tau_i) instead.
    bool predictive_sd = true;
};

struct DiscretizedOutcome {
    std::array<double, 4> values{};
    std::array<double, 4> probs{};
};

inline DiscretizedOutcome discretize(double mu, double sd) {
    constexpr double kOuter = 2.0;
    constexpr double kInner = 2.0 / 3.0;
    constexpr double kEdge = 4.0 / 3.0; // midpoint between inner and outer representatives
    DiscretizedOutcome out;
    out.values = {mu - kOuter * sd, mu - kInner * sd, mu + kInner * sd, mu + kOuter * sd};
    const double tail = normal_cdf(-kEdge);
    const double inner = 0.5 - tail;
    out.probs = {tail, inner, inner, tail};
    return out;
}

inline DiscretizedOutcome discretize_observation(const BeliefState& belief, NodeId node, double tau_obs,
                                                 DiscretizationOptions options = {}) {
    const double tau = belief.precision(node);
    const double sd = options.predictive_sd ? std::sqrt(1.0 / tau + 1.0 / tau_obs) : 1.0 / std::sqrt(tau);
    return discretize(belief.mean(node), sd);
}

// ---------------------------------------------------------------------------
// Discretized meta-greedy policy

struct GreedyEntry {
    NodeId node = -1;
    double gain = 0.0; // expected one-step improvement of the termination value
    double net = 0.0;  // gain - lambda
};

inline std::vector<GreedyEntry> meta_greedy_table(const BeliefState& belief, const EnvTemplate& env, double lambda,
                                                  double tau_obs, DiscretizationOptions options = {}) {
    const auto stats = all_path_stats(belief, env);
    std::vector<GreedyEntry> table;
    for (NodeId n : env.inspectable_nodes()) {
        const auto& s = stats[static_cast<std::size_t>(n)];
        const auto outcome = discretize_observation(belief, n, tau_obs, options);
        const double mu = belief.mean(n);
        const double tau = belief.precision(n);
        double gain = 0.0;
        for (std::size_t k = 0; k < 4; ++k) {
            const double mu_new = (tau * mu + tau_obs * outcome.values[k]) / (tau + tau_obs);
            const double r_new = std::max(s.r_alt, s.r_i - mu + mu_new);
            gain += outcome.probs[k] * (r_new - s.r_max);
        }
        table.push_back({n, gain, gain - lambda});
    }
    return table;
}

inline MetaAction meta_greedy_select(const BeliefState& belief, const EnvTemplate& env, double lambda, double tau_obs,
                                     DiscretizationOptions options = {}) {
    const auto table = meta_greedy_table(belief, env, lambda, tau_obs, options);
    const GreedyEntry* best = nullptr;
    for (const auto& e : table) {
        if (best == nullptr || e.net > best->net) best = &e;
    }
    if (best == nullptr || !(best->net > 0.0)) return MetaAction::terminate();
    return MetaAction::inspect(best->node);
}

class MetaGreedyPolicy final : public Policy {
public:
    MetaGreedyPolicy(TemplatePtr env, double lambda, double tau_obs, DiscretizationOptions options = {})
        : env_(std::move(env)), lambda_(lambda), tau_obs_(tau_obs), options_(options) {}

    MetaAction select(const BeliefState& belief) override {
        return meta_greedy_select(belief, *env_, lambda_, tau_obs_, options_);
    }

private:
    TemplatePtr env_;
    double lambda_;
    double tau_obs_;
    DiscretizationOptions options_;
};

// ---------------------------------------------------------------------------
// PO-UCT hyperparameters

struct PouctConfig {
    int n_sims = 100;
    double c_explore = 1.0;
    int rollout_depth = 0;
    std::uint64_t seed = 0;
};

struct PouctGridRow {
    double cost;
    int steps;
    int goals;
    double c_explore;
    int rollout_depth;
};

// Grid-searched exploration coefficient and rollout depth per
// (cost, simulation budget, goal count).
inline const std::vector<PouctGridRow>& pouct_grid() {
    static const std::vector<PouctGridRow> grid = [] {
        struct Row {
            double cost;
            int steps;
            std::array<double, 4> c;
            std::array<int, 4> depth;
        };
        const Row rows[] = {
            {0.05, 10, {100, 100, 100, 100}, {0, 3, 3, 0}},  {0.05, 100, {100, 100, 10, 5}, {3, 3, 3, 3}},
            {0.05, 1000, {1, 5, 10, 100}, {3, 3, 3, 3}},      {0.05, 5000, {5, 50, 5, 5}, {0, 0, 3, 3}},
            {1.00, 10, {100, 100, 100, 100}, {0, 3, 3, 0}},  {1.00, 100, {10, 100, 5, 50}, {0, 0, 0, 0}},
            {1.00, 1000, {100, 10, 50, 100}, {0, 0, 0, 0}},  {1.00, 5000, {5, 100, 100, 50}, {0, 0, 0, 0}},
        };
        std::vector<PouctGridRow> out;
        for (const auto& r : rows) {
            for (int g = 0; g < 4; ++g) {
                out.push_back({r.cost, r.steps, g + 2, r.c[static_cast<std::size_t>(g)],
                               r.depth[static_cast<std::size_t>(g)]});
            }
        }
        return out;
    }();
    return grid;
}

struct PouctParams {
    double c_explore;
    int rollout_depth;
};

inline PouctParams pouct_default_params(int goal_count, double cost, int n_sims) {
    for (const auto& row : pouct_grid()) {
        if (row.goals == goal_count && row.steps == n_sims && std::abs(row.cost - cost) < 1e-9) {
            return {row.c_explore, row.rollout_depth};
        }
    }
    throw std::out_of_range("no PO-UCT grid cell for goals=" + std::to_string(goal_count) +
                            " cost=" + std::to_string(cost) + " steps=" + std::to_string(n_sims));
}

// Reads the grid CSV (cost,steps,goals,c_explore,rollout_depth).
inline std::vector<PouctGridRow> load_pouct_grid_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<PouctGridRow> rows;
    std::string line;
    std::getline(in, line); // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 5) throw std::runtime_error("malformed grid row: " + line);
        rows.push_back({std::stod(cells[0]), std::stoi(cells[1]), std::stoi(cells[2]), std::stod(cells[3]),
                        std::stoi(cells[4])});
    }
    return rows;
}

// ---------------------------------------------------------------------------
// PO-UCT over discretized beliefs

struct PouctActionStats {
    MetaAction action;
    int visits = 0;
    double value = 0.0;
};

struct PouctResult {
    MetaAction action = MetaAction::terminate();
    std::vector<PouctActionStats> root;
    int tree_size = 0;
    bool root_unexpanded = false;
};

class PouctSearch {
public:
    PouctSearch(const EnvTemplate& env, const EpisodeConfig& episode, const PouctConfig& config)
        : env_(env), episode_(episode), config_(config), actions_(env.inspectable_nodes()) {
        if (config_.n_sims < 1) throw std::invalid_argument("PO-UCT needs n_sims >= 1");
    }

    PouctResult run(const BeliefState& root) {
        table_.clear();
        nodes_.clear();
        // Seeded from the configuration and the belief's position in the
        // episode so repeated calls on the same belief return the same action.
        gen_ = SplitMix64(derive_seed({config_.seed, static_cast<std::uint64_t>(root.total_observations())}));
        const int remaining = episode_.max_computations - root.total_observations();

        const int root_index = lookup_or_create(root);
        for (int s = 0; s < config_.n_sims; ++s) {
            BeliefState b = root;
            simulate_from(root_index, b, remaining);
        }

        PouctResult result;
        const auto& node = nodes_[static_cast<std::size_t>(root_index)];
        const std::size_t m = actions_.size();
        int best = -1;
        for (std::size_t a = 0; a <= m; ++a) {
            const MetaAction act = a < m ? MetaAction::inspect(actions_[a]) : MetaAction::terminate();
            result.root.push_back({act, node.visits[a], node.values[a]});
            if (node.visits[a] == 0) continue;
            if (best < 0 || node.values[a] > node.values[static_cast<std::size_t>(best)]) best = static_cast<int>(a);
        }
        result.tree_size = static_cast<int>(nodes_.size());
        if (best < 0) {
            result.root_unexpanded = true;
            result.action = MetaAction::terminate();
        } else {
            result.action = static_cast<std::size_t>(best) < m ? MetaAction::inspect(actions_[static_cast<std::size_t>(best)])
                                                               : MetaAction::terminate();
        }
        return result;
    }

private:
    struct TreeNode {
        int total = 0;
        std::vector<int> visits;
        std::vector<double> values;
        std::vector<int> order; // untried actions are expanded in this order
        std::size_t next_untried = 0;
    };

    struct KeyHash {
        std::size_t operator()(const std::vector<std::int64_t>& key) const {
            std::uint64_t h = 0x9E3779B97F4A7C15ULL;
            for (auto k : key) h = mix64(h ^ static_cast<std::uint64_t>(k));
            return static_cast<std::size_t>(h);
        }
    };

    // Beliefs are identified by per-node (observation count, rounded mean),
    // which merges transpositions of the same discrete outcomes.
    std::vector<std::int64_t> key_of(const BeliefState& b) const {
        std::vector<std::int64_t> key;
        key.reserve(actions_.size() * 2);
        for (NodeId n : actions_) {
            key.push_back(b.obs_count(n));
            key.push_back(std::llround(b.mean(n) * 1e6));
        }
        return key;
    }

    int lookup_or_create(const BeliefState& b) {
        auto key = key_of(b);
        auto it = table_.find(key);
        if (it != table_.end()) return it->second;
        const std::size_t m = actions_.size();
        TreeNode node;
        node.visits.assign(m + 1, 0);
        node.values.assign(m + 1, 0.0);
        node.order.resize(m);
        std::iota(node.order.begin(), node.order.end(), 0);
        std::shuffle(node.order.begin(), node.order.end(), gen_);
        node.order.push_back(static_cast<int>(m)); // terminate is tried last
        nodes_.push_back(std::move(node));
        const int index = static_cast<int>(nodes_.size()) - 1;
        table_.emplace(std::move(key), index);
        return index;
    }

    double sample_transition(BeliefState& b, NodeId n) {
        const auto outcome = discretize_observation(b, n, episode_.tau_obs);
        const double u = uniform01(gen_);
        double acc = 0.0;
        std::size_t k = 0;
        for (; k < 3; ++k) {
            acc += outcome.probs[k];
            if (u < acc) break;
        }
        b.apply(n, outcome.values[k], episode_.tau_obs);
        return -episode_.lambda;
    }

    double rollout(BeliefState& b, int remaining) {
        double total = 0.0;
        const int steps = std::min(config_.rollout_depth, remaining);
        for (int d = 0; d < steps && !actions_.empty(); ++d) {
            total += sample_transition(b, actions_[uniform_index(gen_, actions_.size())]);
        }
        return total + best_path_value(b, env_);
    }

    int choose(const TreeNode& node, int remaining) const {
        const std::size_t m = actions_.size();
        if (remaining <= 0) return static_cast<int>(m);
        if (node.next_untried < node.order.size()) return node.order[node.next_untried];
        const double log_total = std::log(static_cast<double>(node.total));
        int best = static_cast<int>(m);
        double best_score = -std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a <= m; ++a) {
            const double score = node.values[a] + config_.c_explore * std::sqrt(log_total / node.visits[a]);
            if (score > best_score) {
                best_score = score;
                best = static_cast<int>(a);
            }
        }
        return best;
    }

    double simulate_from(int index, BeliefState& b, int remaining) {
        const std::size_t m = actions_.size();
        const int a = choose(nodes_[static_cast<std::size_t>(index)], remaining);
        double ret;
        if (static_cast<std::size_t>(a) == m) {
            ret = best_path_value(b, env_);
        } else {
            ret = sample_transition(b, actions_[static_cast<std::size_t>(a)]);
            ret += simulate(b, remaining - 1);
        }
        auto& node = nodes_[static_cast<std::size_t>(index)];
        if (node.next_untried < node.order.size() && node.order[node.next_untried] == a) ++node.next_untried;
        ++node.total;
        auto& n_a = node.visits[static_cast<std::size_t>(a)];
        auto& q_a = node.values[static_cast<std::size_t>(a)];
        ++n_a;
        q_a += (ret - q_a) / n_a;
        return ret;
    }

    double simulate(BeliefState& b, int remaining) {
        if (remaining <= 0) return best_path_value(b, env_);
        auto key = key_of(b);
        auto it = table_.find(key);
        if (it == table_.end()) {
            lookup_or_create(b);
            return rollout(b, remaining);
        }
        return simulate_from(it->second, b, remaining);
    }

    const EnvTemplate& env_;
    EpisodeConfig episode_;
    PouctConfig config_;
    std::vector<NodeId> actions_;
    std::unordered_map<std::vector<std::int64_t>, int, KeyHash> table_;
    std::vector<TreeNode> nodes_;
    SplitMix64 gen_{0};
};

inline PouctResult pouct_search(const BeliefState& belief, const EnvTemplate& env, const EpisodeConfig& episode,
                                const PouctConfig& config) {
    PouctSearch search(env, episode, config);
    return search.run(belief);
}

inline MetaAction pouct_select(const BeliefState& belief, const EnvTemplate& env, const EpisodeConfig& episode,
                               const PouctConfig& config) {
    return pouct_search(belief, env, episode, config).action;
}

class PouctPolicy final : public Policy {
public:
    PouctPolicy(TemplatePtr env, EpisodeConfig episode, PouctConfig config)
        : env_(std::move(env)), search_(*env_, episode, config) {}

    MetaAction select(const BeliefState& belief) override { return search_.run(belief).action; }

private:
    TemplatePtr env_;
    PouctSearch search_;
};

} // namespace mgpo

#endif // MGPO_BASELINES_HPP
