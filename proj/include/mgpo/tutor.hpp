#ifndef MGPO_TUTOR_HPP
#define MGPO_TUTOR_HPP

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mgpo/belief.hpp"
#include "mgpo/envgraph.hpp"
#include "mgpo/metamdp.hpp"
#include "mgpo/rng.hpp"
#include "mgpo/voc.hpp"

namespace mgpo {

class TutorError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct FeedbackConfig {
    double voc_threshold = 0.05;
    double d_click = 3.0; // wrong-click delay, seconds
    double d_c = 3.0;     // base premature-termination delay
    double d_max = 4.0;   // scaled premature-termination delay

    void validate() const {
        if (voc_threshold < 0 || d_click < 0 || d_c < 0 || d_max < 0) {
            throw TutorError("feedback parameters must be non-negative");
        }
    }
};

struct ChoiceSet {
    std::vector<MetaAction> options; // Inspect entries only
    std::vector<double> option_voc;
    bool includes_terminate = true;
    MetaAction correct = MetaAction::terminate();
    bool relaxed = false; // filled with duplicate-VOC options for lack of distinct values

    bool offers(const MetaAction& a) const {
        if (a.is_terminate()) return includes_terminate;
        return std::find(options.begin(), options.end(), a) != options.end();
    }
};

namespace detail {
inline bool same_voc(double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(a)); }
} // namespace detail

// The argmax-VOC computation plus k-1 others drawn one at a time, uniformly,
// among computations whose VOC differs from every VOC already offered.
template <class URBG>
ChoiceSet build_choice_set(const BeliefState& belief, const EnvTemplate& env, const VocConfig& config, int k,
                           URBG& gen) {
    if (k < 2) throw TutorError("choice set size must be >= 2");
    const auto table = voc_table(belief, env, config);
    if (table.empty()) throw TutorError("no inspectable nodes");
    std::size_t best = 0;
    for (std::size_t i = 1; i < table.size(); ++i) {
        if (table[i].voc > table[best].voc) best = i;
    }
    ChoiceSet set;
    set.correct = select_from_table(table);
    std::vector<bool> taken(table.size(), false);
    auto take = [&](std::size_t i) {
        taken[i] = true;
        set.options.push_back(MetaAction::inspect(table[i].node));
        set.option_voc.push_back(table[i].voc);
    };
    take(best);
    while (static_cast<int>(set.options.size()) < k) {
        std::vector<std::size_t> distinct, rest;
        for (std::size_t i = 0; i < table.size(); ++i) {
            if (taken[i]) continue;
            rest.push_back(i);
            const bool fresh = std::none_of(set.option_voc.begin(), set.option_voc.end(),
                                            [&](double v) { return detail::same_voc(v, table[i].voc); });
            if (fresh) distinct.push_back(i);
        }
        if (rest.empty()) break;
        if (distinct.empty()) {
            set.relaxed = true;
            take(rest[uniform_index(gen, rest.size())]);
        } else {
            take(distinct[uniform_index(gen, distinct.size())]);
        }
    }
    if (static_cast<int>(set.options.size()) < k) set.relaxed = true;
    return set;
}

struct FeedbackResult {
    bool correct = false;
    double delay = 0.0;
    MetaAction highlighted = MetaAction::terminate();
    bool executed = true; // false for a premature terminate, which is not carried out
};

// Delay for terminating while computations still have positive value:
// d_c + d_max * clamp(current max VOC / largest max VOC seen earlier in the trial, 0, 1).
// With no usable history the ratio is 1.
inline double termination_delay(double current_max_voc, const std::vector<double>& voc_history,
                                const FeedbackConfig& feedback) {
    double ratio = 1.0;
    if (!voc_history.empty()) {
        const double peak = *std::max_element(voc_history.begin(), voc_history.end());
        if (peak > 0.0) ratio = std::clamp(current_max_voc / peak, 0.0, 1.0);
    }
    return feedback.d_c + feedback.d_max * ratio;
}

// `voc_history` holds the max VOC at each earlier decision point of the trial.
inline FeedbackResult evaluate_click(const BeliefState& belief, const EnvTemplate& env, const MetaAction& chosen,
                                     const ChoiceSet& choices, const VocConfig& config,
                                     const FeedbackConfig& feedback, const std::vector<double>& voc_history) {
    feedback.validate();
    if (!choices.offers(chosen)) throw TutorError(to_string(chosen) + " was not offered");
    const auto table = voc_table(belief, env, config);
    const double best = max_voc(table);
    const MetaAction mgpo_choice = select_from_table(table);
    FeedbackResult out;
    out.highlighted = choices.correct;
    if (chosen.is_inspect()) {
        const auto row = std::find_if(table.begin(), table.end(), [&](const auto& r) { return r.node == chosen.node; });
        out.correct = row->voc >= 0.0 && best - row->voc <= feedback.voc_threshold;
        out.delay = out.correct ? 0.0 : feedback.d_click;
        return out;
    }
    if (mgpo_choice.is_inspect()) {
        out.correct = false;
        out.executed = false;
        out.delay = termination_delay(best, voc_history, feedback);
        return out;
    }
    out.correct = true;
    return out;
}

// ---------------------------------------------------------------------------
// Demonstrations

enum class DemoMode { mgpo, dummy };

struct DemoStep {
    BeliefState before;
    MetaAction action;
    std::optional<double> observation;
};

struct DemoTrace {
    std::vector<DemoStep> steps; // ends in Terminate
    Path chosen_path;
    int inspect_count() const { return static_cast<int>(steps.size()) - 1; }
};

inline DemoTrace demo_from_trace(const EpisodeTrace& trace) {
    DemoTrace demo;
    for (const auto& r : trace.records) demo.steps.push_back({r.before, r.action, r.observation});
    demo.chosen_path = trace.chosen_path;
    return demo;
}

// MGPO mode rolls MGPO to termination. Dummy mode performs as many uniformly
// random Inspects as MGPO performs on the same instance, then terminates.
template <class URBG>
DemoTrace generate_demo(const EnvInstance& inst, const VocConfig& config, const EpisodeConfig& episode,
                        const ObservationSource& source, URBG& gen, DemoMode mode) {
    MgpoPolicy mgpo(inst.env, config);
    const auto reference = run_episode(mgpo, inst, episode, source);
    if (mode == DemoMode::mgpo) return demo_from_trace(reference);

    const auto nodes = inst.env->inspectable_nodes();
    Episode ep(inst, episode, source);
    const int clicks = reference.inspect_count();
    for (int c = 0; c < clicks && !nodes.empty(); ++c) {
        ep.step(MetaAction::inspect(nodes[uniform_index(gen, nodes.size())]));
    }
    ep.step(MetaAction::terminate());
    return demo_from_trace(std::move(ep).finish());
}

// Dummy tutor: two nodes at one uniformly chosen depth; which of them is
// called correct is a coin flip.
template <class URBG>
ChoiceSet dummy_choice_set(const EnvTemplate& env, URBG& gen) {
    std::map<int, std::vector<NodeId>> by_depth;
    for (NodeId n : env.inspectable_nodes()) by_depth[env.depth(n)].push_back(n);
    std::vector<int> depths;
    for (const auto& [d, nodes] : by_depth) {
        if (nodes.size() >= 2) depths.push_back(d);
    }
    if (depths.empty()) throw TutorError("template has no depth with two inspectable nodes");
    const auto& pool = by_depth[depths[uniform_index(gen, depths.size())]];
    const std::size_t a = uniform_index(gen, pool.size());
    std::size_t b = uniform_index(gen, pool.size() - 1);
    if (b >= a) ++b;
    ChoiceSet set;
    set.options = {MetaAction::inspect(pool[a]), MetaAction::inspect(pool[b])};
    set.correct = set.options[uniform_index(gen, 2)];
    return set;
}

// ---------------------------------------------------------------------------
// Curriculum

enum class Condition { choice_tutor, dummy_tutor, no_tutor };
enum class TrialKind { demo, feedback, practice, test };

inline std::string to_string(Condition c) {
    switch (c) {
    case Condition::choice_tutor: return "choice_tutor";
    case Condition::dummy_tutor: return "dummy_tutor";
    case Condition::no_tutor: return "no_tutor";
    }
    return "?";
}

inline std::string to_string(TrialKind k) {
    switch (k) {
    case TrialKind::demo: return "demo";
    case TrialKind::feedback: return "feedback";
    case TrialKind::practice: return "practice";
    case TrialKind::test: return "test";
    }
    return "?";
}

inline Condition parse_condition(std::string_view s) {
    if (s == "choice_tutor") return Condition::choice_tutor;
    if (s == "dummy_tutor") return Condition::dummy_tutor;
    if (s == "no_tutor") return Condition::no_tutor;
    throw TutorError("unknown condition '" + std::string(s) + "'");
}

inline int stage_choice_count(int stage) {
    static constexpr int k[] = {2, 3, 4, 4};
    if (stage < 1 || stage > 4) throw TutorError("stage must be in 1..4");
    return k[stage - 1];
}

struct TrialPlan {
    int index = 0; // 0-based position in the session
    int stage = 4;
    TrialKind kind = TrialKind::test;
    int k_choices = 0; // 0 when no choice set is offered
};

inline constexpr int kTrainingTrials = 12;
inline constexpr int kTestTrials = 10;

// Twelve training trials, three per stage, then ten test trials on stage 4.
// Tutor conditions see one demonstration and two feedback trials per stage.
inline std::vector<TrialPlan> curriculum_schedule(Condition condition) {
    std::vector<TrialPlan> plan;
    for (int t = 0; t < kTrainingTrials; ++t) {
        TrialPlan p;
        p.index = t;
        p.stage = t / 3 + 1;
        if (condition == Condition::no_tutor) {
            p.kind = TrialKind::practice;
        } else {
            p.kind = t % 3 == 0 ? TrialKind::demo : TrialKind::feedback;
            if (p.kind == TrialKind::feedback) {
                p.k_choices = condition == Condition::dummy_tutor ? 2 : stage_choice_count(p.stage);
            }
        }
        plan.push_back(p);
    }
    for (int t = 0; t < kTestTrials; ++t) plan.push_back({kTrainingTrials + t, 4, TrialKind::test, 0});
    return plan;
}

// ---------------------------------------------------------------------------
// Precomputed observation lists

// A fixed list of observations per node; the k-th inspection of a node
// reads entry k. Exhausting a list is an error rather than a silent wrap.
class TableObservations final : public ObservationSource {
public:
    static constexpr int kDefaultDepth = 200;

    TableObservations(const EnvInstance& inst, double tau_obs, std::uint64_t seed, int depth = kDefaultDepth) {
        const double sd = 1.0 / std::sqrt(tau_obs);
        table_.resize(inst.truths.size());
        for (NodeId n : inst.env->inspectable_nodes()) {
            SplitMix64 gen(derive_seed({seed, 0x7461626CULL, static_cast<std::uint64_t>(n)}));
            auto& column = table_[static_cast<std::size_t>(n)];
            column.resize(static_cast<std::size_t>(depth));
            for (auto& v : column) v = inst.truths[static_cast<std::size_t>(n)] + sd * standard_normal(gen);
        }
    }

    explicit TableObservations(std::vector<std::vector<double>> table) : table_(std::move(table)) {}

    double draw(NodeId node, int index) const override {
        if (node < 0 || static_cast<std::size_t>(node) >= table_.size()) {
            throw TutorError("no observations for node " + std::to_string(node));
        }
        const auto& column = table_[static_cast<std::size_t>(node)];
        if (index < 0 || static_cast<std::size_t>(index) >= column.size()) {
            throw TutorError("observation list for node " + std::to_string(node) + " exhausted after " +
                             std::to_string(column.size()) + " inspections");
        }
        return column[static_cast<std::size_t>(index)];
    }

    std::size_t depth(NodeId node) const { return table_[static_cast<std::size_t>(node)].size(); }
    const std::vector<std::vector<double>>& table() const { return table_; }

private:
    std::vector<std::vector<double>> table_;
};

} // namespace mgpo

#endif // MGPO_TUTOR_HPP
