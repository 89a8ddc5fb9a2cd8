#ifndef MGPO_METAMDP_HPP
#define MGPO_METAMDP_HPP

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mgpo/belief.hpp"
#include "mgpo/envgraph.hpp"

namespace mgpo {

class EpisodeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct MetaAction {
    enum class Kind { inspect, terminate };

    Kind kind = Kind::terminate;
    NodeId node = -1;

    static MetaAction inspect(NodeId n) { return {Kind::inspect, n}; }
    static MetaAction terminate() { return {Kind::terminate, -1}; }

    bool is_terminate() const { return kind == Kind::terminate; }
    bool is_inspect() const { return kind == Kind::inspect; }

    friend bool operator==(const MetaAction&, const MetaAction&) = default;
};

inline std::string to_string(const MetaAction& a) {
    return a.is_terminate() ? std::string("terminate") : "inspect(" + std::to_string(a.node) + ")";
}

enum class ScoreMode { ground_truth, posterior };

struct EpisodeConfig {
    double lambda = 1.0;
    double tau_obs = 0.005;
    int max_computations = 200;
    ScoreMode score_mode = ScoreMode::ground_truth;
};

// Decision rule over belief states. Implementations are bound to a template
// and configuration at construction.
class Policy {
public:
    virtual ~Policy() = default;
    virtual MetaAction select(const BeliefState& belief) = 0;
};

struct StepRecord {
    BeliefState before;
    MetaAction action;
    std::optional<double> observation;
    double meta_reward = 0.0;
};

struct EpisodeTrace {
    std::vector<StepRecord> records;
    BeliefState final_belief;
    Path chosen_path;
    double lambda = 0.0;
    double path_truth = 0.0;     // sum of ground-truth rewards on the chosen path
    double path_posterior = 0.0; // sum of final posterior means on the chosen path
    double rr = 0.0;
    ScoreMode score_mode = ScoreMode::ground_truth;

    int inspect_count() const {
        int n = 0;
        for (const auto& r : records) n += r.action.is_inspect() ? 1 : 0;
        return n;
    }

    double meta_return() const {
        double total = 0.0;
        for (const auto& r : records) total += r.meta_reward;
        return total;
    }
};

inline double rr_score(const EpisodeTrace& trace, ScoreMode mode) {
    const double cost = trace.lambda * trace.inspect_count();
    return (mode == ScoreMode::ground_truth ? trace.path_truth : trace.path_posterior) - cost;
}

// One meta-level episode on a fixed instance. Observation values are pulled
// from `source` by (node, per-node inspection index).
class Episode {
public:
    Episode(const EnvInstance& inst, EpisodeConfig config, const ObservationSource& source)
        : inst_(inst), config_(config), source_(source), belief_(init_belief(*inst.env)) {
        if (config_.max_computations < 1) {
            throw EpisodeError("max_computations must be >= 1");
        }
        trace_.lambda = config_.lambda;
        trace_.score_mode = config_.score_mode;
    }

    const BeliefState& belief() const { return belief_; }
    bool done() const { return done_; }
    int computations() const { return computations_; }
    bool at_cap() const { return computations_ >= config_.max_computations; }

    struct StepResult {
        double reward = 0.0;
        bool done = false;
        std::optional<double> observation;
    };

    StepResult step(const MetaAction& action) {
        if (done_) {
            throw EpisodeError("step after episode terminated");
        }
        StepRecord rec{belief_, action, std::nullopt, 0.0};
        StepResult result;
        if (action.is_inspect()) {
            const auto& env = *inst_.env;
            if (action.node < 0 || action.node >= env.node_count() || !env.inspectable(action.node)) {
                throw EpisodeError("illegal action " + to_string(action));
            }
            if (at_cap()) {
                throw EpisodeError("computation cap reached; only terminate is legal");
            }
            const double value = source_.draw(action.node, belief_.obs_count(action.node));
            belief_.apply(action.node, value, config_.tau_obs);
            ++computations_;
            rec.observation = value;
            rec.meta_reward = -config_.lambda;
            result.observation = value;
        } else {
            const auto best = best_expected_path(belief_, *inst_.env);
            trace_.chosen_path = best.path;
            trace_.path_truth = path_truth(inst_, best.path);
            trace_.path_posterior = best.value;
            rec.meta_reward = trace_.path_truth;
            done_ = true;
            result.done = true;
        }
        result.reward = rec.meta_reward;
        trace_.records.push_back(std::move(rec));
        return result;
    }

    EpisodeTrace finish() && {
        if (!done_) {
            throw EpisodeError("episode has not terminated");
        }
        trace_.final_belief = belief_;
        trace_.rr = rr_score(trace_, config_.score_mode);
        return std::move(trace_);
    }

private:
    const EnvInstance& inst_;
    EpisodeConfig config_;
    const ObservationSource& source_;
    BeliefState belief_;
    EpisodeTrace trace_;
    int computations_ = 0;
    bool done_ = false;
};

inline EpisodeTrace run_episode(Policy& policy, const EnvInstance& inst, const EpisodeConfig& config,
                                const ObservationSource& source) {
    Episode episode(inst, config, source);
    while (!episode.done()) {
        MetaAction action = episode.at_cap() ? MetaAction::terminate() : policy.select(episode.belief());
        if (action.is_inspect() && !inst.env->inspectable(action.node)) {
            throw EpisodeError("policy returned illegal action " + to_string(action) + " after " +
                               std::to_string(episode.computations()) + " computations");
        }
        episode.step(action);
    }
    return std::move(episode).finish();
}

class TerminatePolicy final : public Policy {
public:
    MetaAction select(const BeliefState&) override { return MetaAction::terminate(); }
};

} // namespace mgpo

#endif // MGPO_METAMDP_HPP
