#ifndef MGPO_BELIEF_HPP
#define MGPO_BELIEF_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mgpo/envgraph.hpp"
#include "mgpo/rng.hpp"

namespace mgpo {

class BeliefError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct Observation {
    NodeId node = 0;
    double value = 0.0;
};

// Independent Gaussian posterior (mean, precision) per node. Node 0 (start)
// and zero-sigma nodes have infinite precision and can never be updated.
//
// Each node keeps the sums tau and tau*mu in 128-bit fixed point (2^-80
// resolution). Integer addition is associative, so any reordering of the same
// observations yields bit-identical means and precisions.
class BeliefState {
    __extension__ typedef __int128 Fixed;
    static constexpr int kFracBits = 80;
    static constexpr double kFixedLimit = 0x1p46; // |x| * 2^80 stays below 2^126

    static Fixed to_fixed(double x) {
        if (!(std::abs(x) < kFixedLimit)) {
            throw BeliefError("belief statistic out of range: " + std::to_string(x));
        }
        return static_cast<Fixed>(std::nearbyint(std::ldexp(x, kFracBits)));
    }
    static double from_fixed(Fixed x) { return std::ldexp(static_cast<double>(x), -kFracBits); }

public:
public:
    BeliefState() = default;

    int size() const { return static_cast<int>(mu_.size()); }
    double mean(NodeId n) const { return mu_[idx(n)]; }
    double precision(NodeId n) const { return tau_[idx(n)]; }
    double variance(NodeId n) const { return 1.0 / tau_[idx(n)]; }
    int obs_count(NodeId n) const { return count_[idx(n)]; }
    int total_observations() const { return total_; }
    bool inspectable(NodeId n) const { return n != 0 && std::isfinite(tau_[idx(n)]); }

    const std::vector<double>& means() const { return mu_; }
    const std::vector<double>& precisions() const { return tau_; }
    const std::vector<int>& obs_counts() const { return count_; }

    double path_value(const Path& path) const {
        double total = 0.0;
        for (NodeId v : path) total += mu_[idx(v)];
        return total;
    }

    friend bool operator==(const BeliefState&, const BeliefState&) = default;

    // Conjugate update with a known observation precision. Returns a new state.
    BeliefState updated(const Observation& obs, double tau_obs) const {
        if (!(tau_obs > 0.0)) {
            throw BeliefError("observation precision must be positive");
        }
        if (obs.node < 0 || obs.node >= size()) {
            throw BeliefError("observation on unknown node " + std::to_string(obs.node));
        }
        if (!inspectable(obs.node)) {
            throw BeliefError("node " + std::to_string(obs.node) + " is not inspectable");
        }
        BeliefState next = *this;
        next.apply(obs.node, obs.value, tau_obs);
        return next;
    }

    // In-place variant for hot loops that own their copy. Same conjugate rule,
    // mu' = (tau mu + tau_obs o) / (tau + tau_obs), on the fixed-point sums.
    void apply(NodeId n, double value, double tau_obs) {
        const auto i = idx(n);
        weighted_[i] += to_fixed(tau_obs * value);
        total_tau_[i] += to_fixed(tau_obs);
        tau_[i] = from_fixed(total_tau_[i]);
        mu_[i] = static_cast<double>(weighted_[i]) / static_cast<double>(total_tau_[i]);
        ++count_[i];
        ++total_;
    }

    static BeliefState from_prior(const EnvTemplate& env) {
        BeliefState b;
        const auto n = static_cast<std::size_t>(env.node_count());
        b.mu_.resize(n);
        b.tau_.resize(n);
        b.count_.assign(n, 0);
        b.weighted_.assign(n, 0);
        b.total_tau_.assign(n, 0);
        for (const auto& spec : env.nodes()) {
            const auto i = static_cast<std::size_t>(spec.id);
            if (spec.id == env.start()) {
                b.mu_[i] = 0.0;
                b.tau_[i] = std::numeric_limits<double>::infinity();
            } else {
                b.mu_[i] = spec.mean;
                b.tau_[i] = spec.sigma > 0.0 ? 1.0 / (spec.sigma * spec.sigma)
                                             : std::numeric_limits<double>::infinity();
                if (std::isfinite(b.tau_[i])) {
                    b.total_tau_[i] = to_fixed(b.tau_[i]);
                    b.weighted_[i] = to_fixed(b.tau_[i] * spec.mean);
                }
            }
        }
        return b;
    }

private:
    static std::size_t idx(NodeId n) { return static_cast<std::size_t>(n); }

    std::vector<double> mu_;
    std::vector<double> tau_;
    std::vector<int> count_;
    std::vector<Fixed> weighted_;  // tau * mu
    std::vector<Fixed> total_tau_; // tau
    int total_ = 0;
};

inline BeliefState init_belief(const EnvTemplate& env) { return BeliefState::from_prior(env); }

inline BeliefState update(const BeliefState& belief, const Observation& obs, double tau_obs) {
    return belief.updated(obs, tau_obs);
}

template <class URBG>
Observation sample_observation(const EnvInstance& inst, NodeId node, double tau_obs, URBG& gen) {
    const double truth = inst.truths[static_cast<std::size_t>(node)];
    return {node, truth + standard_normal(gen) / std::sqrt(tau_obs)};
}

// Source of observation values indexed by (node, k) where k counts earlier
// inspections of that node in the same episode. Implementations are pure, so
// two policies that issue the same inspections see the same values.
class ObservationSource {
public:
    virtual ~ObservationSource() = default;
    virtual double draw(NodeId node, int index) const = 0;
};

// Per-(node, draw-index) hashed streams: common random numbers for benchmarks.
class StreamObservations final : public ObservationSource {
public:
    StreamObservations(const EnvInstance& inst, double tau_obs, std::uint64_t seed)
        : truths_(inst.truths), sd_(1.0 / std::sqrt(tau_obs)), seed_(seed) {}

    double draw(NodeId node, int index) const override {
        SplitMix64 gen(derive_seed({seed_, 0x6F6273ULL, static_cast<std::uint64_t>(node),
                                    static_cast<std::uint64_t>(index)}));
        return truths_[static_cast<std::size_t>(node)] + sd_ * standard_normal(gen);
    }

private:
    std::vector<double> truths_;
    double sd_;
    std::uint64_t seed_;
};

struct BestPath {
    int index = -1;
    Path path;
    double value = 0.0;
};

// argmax over all paths of the summed posterior means. Paths are enumerated
// in lexicographic order and only a strictly better value replaces the
// incumbent, so ties go to the lexicographically smallest path.
inline BestPath best_expected_path(const BeliefState& belief, const EnvTemplate& env) {
    const auto& paths = env.paths();
    BestPath best;
    for (std::size_t p = 0; p < paths.size(); ++p) {
        const double v = belief.path_value(paths[p]);
        if (best.index < 0 || v > best.value) {
            best.index = static_cast<int>(p);
            best.value = v;
        }
    }
    best.path = paths[static_cast<std::size_t>(best.index)];
    return best;
}

// Value of the best path only, by dynamic programming over the topological
// order. O(|E|) instead of O(|paths| * depth).
inline double best_path_value(const BeliefState& belief, const EnvTemplate& env) {
    thread_local std::vector<double> best_to;
    best_to.assign(static_cast<std::size_t>(env.node_count()), -std::numeric_limits<double>::infinity());
    best_to[static_cast<std::size_t>(env.start())] = belief.mean(env.start());
    double result = -std::numeric_limits<double>::infinity();
    for (NodeId v : env.topo_order()) {
        const double here = best_to[static_cast<std::size_t>(v)];
        if (here == -std::numeric_limits<double>::infinity()) continue;
        if (env.is_goal(v)) result = std::max(result, here);
        for (NodeId w : env.children(v)) {
            auto& slot = best_to[static_cast<std::size_t>(w)];
            slot = std::max(slot, here + belief.mean(w));
        }
    }
    return result;
}

} // namespace mgpo

#endif // MGPO_BELIEF_HPP
