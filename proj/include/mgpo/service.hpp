#ifndef MGPO_SERVICE_HPP
#define MGPO_SERVICE_HPP

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "mgpo/belief.hpp"
#include "mgpo/envgraph.hpp"
#include "mgpo/harness.hpp"
#include "mgpo/metamdp.hpp"
#include "mgpo/rng.hpp"
#include "mgpo/tutor.hpp"
#include "mgpo/voc.hpp"

namespace mgpo {

// Carries the HTTP status the error maps to.
class ServiceError : public std::runtime_error {
public:
    ServiceError(int status, const std::string& what) : std::runtime_error(what), status_(status) {}
    int status() const { return status_; }

private:
    int status_;
};

struct ParameterSet {
    double lambda = 0.05;
    double tau_obs = 0.005;
};

inline constexpr int kParameterSets = 100;

// lambda ~ N(0.05, 0.002) clipped to [0.01, 0.5]; tau ~ N(0.005, 0.002)
// clipped to [0.0001, 0.1]. The second argument of N is the sd.
inline std::vector<ParameterSet> pregenerate_parameter_sets(std::uint64_t seed, int count = kParameterSets) {
    SplitMix64 gen(derive_seed({seed, 0x706172616DULL}));
    std::vector<ParameterSet> sets;
    sets.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        const double lambda = std::clamp(0.05 + 0.002 * standard_normal(gen), 0.01, 0.5);
        const double tau = std::clamp(0.005 + 0.002 * standard_normal(gen), 0.0001, 0.1);
        sets.push_back({lambda, tau});
    }
    return sets;
}

enum class TutorProfile { legacy, standard };

inline TutorProfile parse_profile(const std::string& s) {
    if (s == "legacy") return TutorProfile::legacy;
    if (s == "standard") return TutorProfile::standard;
    throw std::invalid_argument("unknown profile '" + s + "' (expected legacy or standard)");
}

struct ServiceConfig {
    std::string data_dir;         // empty: no persistence
    std::uint64_t param_seed = 0; // parameter sets and trial seeds
    TutorProfile profile = TutorProfile::legacy;
    double w_lambda = 0.5; // standard profile only
    FeedbackConfig feedback;
    int max_computations = 200;
    int observation_depth = TableObservations::kDefaultDepth;
};

// ---------------------------------------------------------------------------
// Session state

struct TrialState {
    TrialPlan plan;
    std::uint64_t seed = 0;
    EnvInstance instance;
    std::shared_ptr<TableObservations> observations;
    BeliefState belief;
    std::vector<Observation> clicks;
    std::vector<double> voc_history;
    std::optional<ChoiceSet> choices;
    int dummy_click_target = -1;
    std::optional<nlohmann::json> demo;
    nlohmann::json events = nlohmann::json::array();
    bool closed = false;
    Path final_path;
    double rr = 0.0;
};

struct Session {
    std::mutex mutex;
    std::string id;
    Condition condition = Condition::choice_tutor;
    int param_index = 0;
    ParameterSet params;
    std::vector<TrialState> trials;
    int cursor = 0;
    bool complete = false;
    std::map<std::string, nlohmann::json> responses; // event id -> response
    double last_timestamp = 0.0;
};

inline nlohmann::json action_json(const MetaAction& a) {
    if (a.is_terminate()) return "terminate";
    return a.node;
}

class SessionManager {
public:
    explicit SessionManager(ServiceConfig config)
        : config_(std::move(config)), params_(pregenerate_parameter_sets(config_.param_seed)) {
        config_.feedback.validate();
        for (int stage = 1; stage <= 4; ++stage) templates_[static_cast<std::size_t>(stage - 1)] = builtin_curriculum(stage);
        if (!config_.data_dir.empty()) std::filesystem::create_directories(config_.data_dir);
    }

    const ServiceConfig& config() const { return config_; }
    const std::vector<ParameterSet>& parameter_sets() const { return params_; }
    TemplatePtr stage_template(int stage) const { return templates_[static_cast<std::size_t>(stage - 1)]; }

    // Trial seeds depend only on the parameter-set index and trial position,
    // so sessions that share a parameter set see the same instances and
    // observation lists in every condition.
    std::uint64_t trial_seed(int param_index, int trial) const {
        return derive_seed({config_.param_seed, 0x747269616CULL, static_cast<std::uint64_t>(param_index),
                            static_cast<std::uint64_t>(trial)});
    }

    VocConfig voc_config(const ParameterSet& p) const {
        VocConfig v;
        v.lambda = p.lambda;
        v.tau_obs = p.tau_obs;
        v.legacy_mode = config_.profile == TutorProfile::legacy;
        v.w_lambda = config_.w_lambda;
        return v;
    }

    EpisodeConfig episode_config(const ParameterSet& p) const {
        return {p.lambda, p.tau_obs, config_.max_computations, ScoreMode::posterior};
    }

    nlohmann::json create_session(const std::string& condition_name) {
        Condition condition;
        try {
            condition = parse_condition(condition_name);
        } catch (const TutorError& e) {
            throw ServiceError(400, e.what());
        }
        auto session = std::make_shared<Session>();
        {
            std::unique_lock lock(registry_mutex_);
            auto& counter = round_robin_[static_cast<std::size_t>(condition)];
            session->param_index = counter % kParameterSets;
            ++counter;
            session->id = new_token();
        }
        session->condition = condition;
        session->params = params_[static_cast<std::size_t>(session->param_index)];
        for (const auto& plan : curriculum_schedule(condition)) {
            TrialState t;
            t.plan = plan;
            t.seed = trial_seed(session->param_index, plan.index);
            t.instance = sample_instance(stage_template(plan.stage), t.seed);
            t.observations = std::make_shared<TableObservations>(t.instance, session->params.tau_obs, t.seed,
                                                                 config_.observation_depth);
            t.belief = init_belief(*t.instance.env);
            session->trials.push_back(std::move(t));
        }
        nlohmann::json record = session_summary(*session);
        {
            std::lock_guard lock(session->mutex);
            append_log(*session, {{"type", "session"},
                                  {"session", session->id},
                                  {"condition", to_string(condition)},
                                  {"param_index", session->param_index},
                                  {"lambda", session->params.lambda},
                                  {"tau_obs", session->params.tau_obs},
                                  {"profile", config_.profile == TutorProfile::legacy ? "legacy" : "standard"},
                                  {"trial_seeds", trial_seeds(*session)}});
        }
        {
            std::unique_lock lock(registry_mutex_);
            sessions_.emplace(session->id, session);
        }
        return record;
    }

    nlohmann::json get_trial(const std::string& id, int k) {
        auto s = find(id);
        std::lock_guard lock(s->mutex);
        auto& t = trial_at(*s, k);
        if (k > s->cursor) throw ServiceError(409, "trial " + std::to_string(k) + " is not yet available");
        nlohmann::json out = trial_view(*s, t);
        if (!t.closed && t.plan.kind == TrialKind::feedback) {
            out["choice_set"] = choice_json(ensure_choices(*s, t));
        }
        return out;
    }

    nlohmann::json post_click(const std::string& id, int k, NodeId node, const std::string& event_id = {}) {
        auto s = find(id);
        std::lock_guard lock(s->mutex);
        if (auto cached = replay(*s, event_id)) return *cached;
        auto& t = current_trial(*s, k);
        if (t.plan.kind == TrialKind::demo) throw ServiceError(409, "demo trials do not accept clicks");
        const auto& env = *t.instance.env;
        if (node < 0 || node >= env.node_count() || !env.inspectable(node)) {
            throw ServiceError(400, "node " + std::to_string(node) + " cannot be inspected");
        }
        const MetaAction action = MetaAction::inspect(node);
        if (static_cast<int>(t.clicks.size()) >= config_.max_computations) {
            throw ServiceError(409, "computation limit reached; only terminate is allowed");
        }
        const int index = t.belief.obs_count(node);
        if (static_cast<std::size_t>(index) >= t.observations->depth(node)) {
            throw ServiceError(409, "observation list for node " + std::to_string(node) + " is exhausted");
        }

        nlohmann::json response;
        std::optional<FeedbackResult> feedback;
        if (t.plan.kind == TrialKind::feedback) {
            const auto& choices = ensure_choices(*s, t);
            if (!choices.offers(action)) {
                throw ServiceError(400, "node " + std::to_string(node) + " is not in the offered choice set");
            }
            feedback = feedback_for(*s, t, action, choices);
        }

        const auto voc = voc_config(s->params);
        const double pre_max = t.plan.kind == TrialKind::feedback && s->condition == Condition::choice_tutor
                                   ? max_voc(voc_table(t.belief, env, voc))
                                   : 0.0;
        const double value = t.observations->draw(node, index);
        t.belief.apply(node, value, s->params.tau_obs);
        t.clicks.push_back({node, value});
        if (t.plan.kind == TrialKind::feedback && s->condition == Condition::choice_tutor) {
            t.voc_history.push_back(pre_max);
        }
        t.choices.reset();

        response["node"] = node;
        response["observation"] = value;
        response["observation_index"] = index;
        response["posterior_mean"] = t.belief.mean(node);
        response["posterior_sd"] = std::sqrt(t.belief.variance(node));
        response["clicks"] = t.clicks.size();
        response["delay"] = feedback ? feedback->delay : 0.0;
        if (feedback) response["feedback"] = feedback_json(*feedback);

        nlohmann::json event = {{"type", "click"}, {"trial", k},          {"node", node},
                                {"index", index},  {"value", value},      {"posterior_mean", t.belief.mean(node)},
                                {"delay", response["delay"]}};
        if (feedback) event["feedback"] = response["feedback"];
        record_event(*s, t, std::move(event), event_id);
        remember(*s, event_id, response);
        return response;
    }

    nlohmann::json post_terminate(const std::string& id, int k, const std::string& event_id = {}) {
        auto s = find(id);
        std::lock_guard lock(s->mutex);
        if (auto cached = replay(*s, event_id)) return *cached;
        auto& t = current_trial(*s, k);
        if (t.plan.kind == TrialKind::demo) throw ServiceError(409, "demo trials end through the demo endpoint");

        nlohmann::json response;
        if (t.plan.kind == TrialKind::feedback) {
            const auto& choices = ensure_choices(*s, t);
            const auto feedback = feedback_for(*s, t, MetaAction::terminate(), choices);
            response["feedback"] = feedback_json(feedback);
            if (!feedback.executed) {
                response["executed"] = false;
                response["delay"] = feedback.delay;
                record_event(*s, t,
                             {{"type", "terminate"},
                              {"trial", k},
                              {"executed", false},
                              {"delay", feedback.delay},
                              {"feedback", response["feedback"]}},
                             event_id);
                remember(*s, event_id, response);
                return response;
            }
        }

        const auto best = best_expected_path(t.belief, *t.instance.env);
        t.final_path = best.path;
        t.rr = best.value - s->params.lambda * static_cast<double>(t.clicks.size());
        t.closed = true;
        response["executed"] = true;
        response["delay"] = 0.0;
        response["path"] = best.path;
        response["rr"] = t.rr;
        record_event(*s, t,
                     {{"type", "terminate"}, {"trial", k}, {"executed", true}, {"path", best.path}, {"rr", t.rr}},
                     event_id);
        advance(*s);
        remember(*s, event_id, response);
        return response;
    }

    // Generates (once) and returns the demonstration for a demo trial. The
    // first request closes the trial and advances the cursor.
    nlohmann::json get_demo(const std::string& id, int k) {
        auto s = find(id);
        std::lock_guard lock(s->mutex);
        auto& t = trial_at(*s, k);
        if (t.plan.kind != TrialKind::demo) throw ServiceError(409, "trial " + std::to_string(k) + " is not a demo trial");
        if (t.demo) return *t.demo;
        if (k != s->cursor) throw ServiceError(409, "trial " + std::to_string(k) + " is not the current trial");

        const auto mode = s->condition == Condition::dummy_tutor ? DemoMode::dummy : DemoMode::mgpo;
        SplitMix64 gen(derive_seed({t.seed, 0x64656D6FULL}));
        const auto demo = generate_demo(t.instance, voc_config(s->params), episode_config(s->params),
                                        *t.observations, gen, mode);
        nlohmann::json steps = nlohmann::json::array();
        for (const auto& step : demo.steps) {
            nlohmann::json j = {{"action", step.action.is_terminate() ? "terminate" : "inspect"}};
            if (step.action.is_inspect()) {
                j["node"] = step.action.node;
                j["obs"] = *step.observation;
            }
            steps.push_back(std::move(j));
        }
        t.final_path = demo.chosen_path;
        t.closed = true;
        t.demo = nlohmann::json{{"trial", k},
                                {"mode", mode == DemoMode::mgpo ? "mgpo" : "dummy"},
                                {"steps", steps},
                                {"path", demo.chosen_path}};
        record_event(*s, t, {{"type", "demo"}, {"trial", k}, {"mode", (*t.demo)["mode"]}, {"steps", steps}}, {});
        advance(*s);
        return *t.demo;
    }

    nlohmann::json export_session(const std::string& id) {
        auto s = find(id);
        std::lock_guard lock(s->mutex);
        nlohmann::json out = session_summary(*s);
        out["cursor"] = s->cursor;
        out["status"] = s->complete ? "complete" : "active";
        nlohmann::json trials = nlohmann::json::array();

        double click_sum = 0.0, term_sum = 0.0, repeat_sum = 0.0;
        int scored = 0;
        AgreementCounts click_pool, repeat_pool;
        ConfusionCounts term_pool;
        std::vector<bool> goal_flags;

        const auto voc = voc_config(s->params);
        for (const auto& t : s->trials) {
            nlohmann::json j = trial_view(*s, t);
            j["events"] = t.events;
            j["final_path"] = t.final_path;
            if (t.closed && t.plan.kind != TrialKind::demo) {
                j["rr"] = t.rr;
                MgpoPolicy reference(t.instance.env, voc);
                const auto trace = executed_trace(*s, t);
                const double ca = click_agreement(trace, reference);
                const double ta = termination_agreement(trace, reference);
                const double ra = repeat_agreement(trace, reference);
                j["metrics"] = {{"click_agreement", ca}, {"termination_agreement", ta}, {"repeat_agreement", ra}};
                click_sum += ca;
                term_sum += ta;
                repeat_sum += ra;
                ++scored;
                const auto cc = click_agreement_counts(trace, reference);
                click_pool.matches += cc.matches;
                click_pool.total += cc.total;
                const auto rc = repeat_agreement_counts(trace, reference);
                repeat_pool.matches += rc.matches;
                repeat_pool.total += rc.total;
                term_pool += termination_counts(trace, reference);
                if (t.plan.kind == TrialKind::test) {
                    const bool flag = goal_planning_detect(trace, *t.instance.env);
                    j["metrics"]["goal_planning"] = flag;
                    goal_flags.push_back(flag);
                }
            }
            trials.push_back(std::move(j));
        }
        out["trials"] = std::move(trials);
        nlohmann::json metrics;
        if (scored > 0) {
            metrics["click_agreement"] = click_sum / scored;
            metrics["termination_agreement"] = term_sum / scored;
            metrics["repeat_agreement"] = repeat_sum / scored;
            metrics["pooled"] = {{"click_agreement", click_pool.total ? click_pool.rate() : 1.0},
                                 {"termination_agreement", balanced_accuracy(term_pool)},
                                 {"repeat_agreement", repeat_pool.total ? repeat_pool.rate() : 1.0}};
        }
        if (!goal_flags.empty()) {
            metrics["goal_planning_trials"] = std::count(goal_flags.begin(), goal_flags.end(), true);
            metrics["learned_goal_planning"] = learned_goal_planning(goal_flags);
        }
        out["metrics"] = std::move(metrics);
        return out;
    }

    // Executed part of a trial as an episode trace (premature terminates that
    // were not carried out are left out).
    EpisodeTrace executed_trace(const Session& s, const TrialState& t) const {
        TraceDocument doc;
        doc.env = t.instance.env;
        doc.lambda = s.params.lambda;
        doc.tau_obs = s.params.tau_obs;
        doc.inspects = t.clicks;
        doc.terminated = t.closed;
        return replay_trace(doc);
    }

    std::shared_ptr<Session> find(const std::string& id) const {
        std::shared_lock lock(registry_mutex_);
        auto it = sessions_.find(id);
        if (it == sessions_.end()) throw ServiceError(404, "unknown session");
        return it->second;
    }

    // MGPO's action at the current belief of the current trial. Used by
    // scripted clients and tests; never exposed over HTTP.
    MetaAction reference_action(const std::string& id, int k) {
        auto s = find(id);
        std::lock_guard lock(s->mutex);
        auto& t = trial_at(*s, k);
        return select_computation(t.belief, *t.instance.env, voc_config(s->params));
    }

private:
    static nlohmann::json feedback_json(const FeedbackResult& f) {
        return {{"correct", f.correct}, {"delay", f.delay}, {"highlighted", action_json(f.highlighted)},
                {"executed", f.executed}};
    }

    static nlohmann::json choice_json(const ChoiceSet& c) {
        nlohmann::json options = nlohmann::json::array();
        for (const auto& o : c.options) options.push_back(o.node);
        return {{"options", options}, {"includes_terminate", c.includes_terminate}};
    }

    nlohmann::json session_summary(const Session& s) const {
        nlohmann::json plan = nlohmann::json::array();
        for (const auto& t : s.trials) {
            plan.push_back({{"trial", t.plan.index},
                            {"stage", t.plan.stage},
                            {"kind", to_string(t.plan.kind)},
                            {"k_choices", t.plan.k_choices}});
        }
        return {{"session", s.id},         {"condition", to_string(s.condition)},
                {"param_index", s.param_index}, {"lambda", s.params.lambda},
                {"tau_obs", s.params.tau_obs},  {"trials", plan}};
    }

    nlohmann::json trial_view(const Session& s, const TrialState& t) const {
        const auto& env = *t.instance.env;
        nlohmann::json means = nlohmann::json::array(), sds = nlohmann::json::array();
        for (NodeId n = 0; n < env.node_count(); ++n) {
            means.push_back(t.belief.mean(n));
            sds.push_back(std::isfinite(t.belief.precision(n)) ? std::sqrt(t.belief.variance(n)) : 0.0);
        }
        nlohmann::json out = {{"trial", t.plan.index},
                              {"stage", t.plan.stage},
                              {"kind", to_string(t.plan.kind)},
                              {"template", template_to_json(env)},
                              {"cost", s.params.lambda},
                              {"posterior_mean", means},
                              {"posterior_sd", sds},
                              {"clicks", t.clicks.size()},
                              {"closed", t.closed}};
        if (t.dummy_click_target >= 0) out["click_limit"] = t.dummy_click_target;
        return out;
    }

    static nlohmann::json trial_seeds(const Session& s) {
        nlohmann::json seeds = nlohmann::json::array();
        for (const auto& t : s.trials) seeds.push_back(t.seed);
        return seeds;
    }

    TrialState& trial_at(Session& s, int k) const {
        if (k < 0 || k >= static_cast<int>(s.trials.size())) {
            throw ServiceError(404, "trial " + std::to_string(k) + " does not exist");
        }
        return s.trials[static_cast<std::size_t>(k)];
    }

    TrialState& current_trial(Session& s, int k) const {
        auto& t = trial_at(s, k);
        if (s.complete || k != s.cursor) {
            throw ServiceError(409, "trial " + std::to_string(k) + " is not the current trial (current: " +
                                        std::to_string(s.cursor) + ")");
        }
        if (t.closed) throw ServiceError(409, "trial " + std::to_string(k) + " is already closed");
        return t;
    }

    // The dummy tutor's trials last exactly as many clicks as MGPO makes on
    // the same instance.
    int dummy_target(const Session& s, TrialState& t) const {
        if (t.dummy_click_target < 0) {
            MgpoPolicy mgpo(t.instance.env, voc_config(s.params));
            t.dummy_click_target =
                run_episode(mgpo, t.instance, episode_config(s.params), *t.observations).inspect_count();
        }
        return t.dummy_click_target;
    }

    const ChoiceSet& ensure_choices(const Session& s, TrialState& t) const {
        if (t.choices) return *t.choices;
        SplitMix64 gen(derive_seed({t.seed, 0x63686F696365ULL, static_cast<std::uint64_t>(t.clicks.size())}));
        const auto& env = *t.instance.env;
        if (s.condition == Condition::dummy_tutor) {
            if (static_cast<int>(t.clicks.size()) >= dummy_target(s, t)) {
                t.choices = ChoiceSet{};
            } else {
                t.choices = dummy_choice_set(env, gen);
            }
        } else {
            t.choices = build_choice_set(t.belief, env, voc_config(s.params), t.plan.k_choices, gen);
        }
        return *t.choices;
    }

    FeedbackResult feedback_for(const Session& s, TrialState& t, const MetaAction& action,
                                const ChoiceSet& choices) const {
        if (s.condition == Condition::choice_tutor) {
            try {
                return evaluate_click(t.belief, *t.instance.env, action, choices, voc_config(s.params),
                                      config_.feedback, t.voc_history);
            } catch (const TutorError& e) {
                throw ServiceError(400, e.what());
            }
        }
        FeedbackResult out;
        out.highlighted = choices.correct;
        if (action.is_inspect()) {
            out.correct = action == choices.correct;
            out.delay = out.correct ? 0.0 : config_.feedback.d_click;
        } else {
            // Terminating before the click budget is used up is refused without delay.
            out.executed = static_cast<int>(t.clicks.size()) >= dummy_target(s, t);
            out.correct = out.executed;
        }
        return out;
    }

    void advance(Session& s) {
        ++s.cursor;
        if (s.cursor >= static_cast<int>(s.trials.size())) s.complete = true;
    }

    std::optional<nlohmann::json> replay(const Session& s, const std::string& event_id) const {
        if (event_id.empty()) return std::nullopt;
        auto it = s.responses.find(event_id);
        if (it == s.responses.end()) return std::nullopt;
        return std::optional<nlohmann::json>(std::in_place, it->second);
    }

    void remember(Session& s, const std::string& event_id, const nlohmann::json& response) {
        if (!event_id.empty()) s.responses.emplace(event_id, response);
    }

    void record_event(Session& s, TrialState& t, nlohmann::json event, const std::string& event_id) {
        const double now =
            std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
        s.last_timestamp = std::max(s.last_timestamp, now);
        event["ts"] = s.last_timestamp;
        if (!event_id.empty()) event["event_id"] = event_id;
        t.events.push_back(event);
        append_log(s, event);
    }

    void append_log(const Session& s, const nlohmann::json& line) const {
        if (config_.data_dir.empty()) return;
        std::ofstream out(std::filesystem::path(config_.data_dir) / (s.id + ".jsonl"), std::ios::app);
        if (!out) throw ServiceError(500, "cannot write session log");
        out << line.dump() << '\n';
    }

    std::string new_token() {
        static constexpr char hex[] = "0123456789abcdef";
        std::string token;
        for (int i = 0; i < 2; ++i) {
            std::uint64_t v = mix64(token_gen_() ^ ++token_counter_);
            for (int d = 0; d < 16; ++d) {
                token.push_back(hex[v & 0xF]);
                v >>= 4;
            }
        }
        return token;
    }

    ServiceConfig config_;
    std::vector<ParameterSet> params_;
    std::array<TemplatePtr, 4> templates_;
    mutable std::shared_mutex registry_mutex_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    std::array<int, 3> round_robin_{};
    std::random_device token_gen_;
    std::uint64_t token_counter_ = 0;
};

} // namespace mgpo

#endif // MGPO_SERVICE_HPP
