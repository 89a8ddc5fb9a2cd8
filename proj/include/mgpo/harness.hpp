#ifndef MGPO_HARNESS_HPP
#define MGPO_HARNESS_HPP

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "mgpo/baselines.hpp"
#include "mgpo/belief.hpp"
#include "mgpo/envgraph.hpp"
#include "mgpo/metamdp.hpp"
#include "mgpo/tuning.hpp"
#include "mgpo/voc.hpp"

namespace mgpo {

class HarnessError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// ---------------------------------------------------------------------------
// Descriptive statistics

struct Summary {
    std::size_t count = 0;
    double mean = 0.0;
    double median = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;
    double iqr = 0.0;
    double sd = 0.0;
    double se = 0.0;
};

// Linear-interpolation quantile (the common "type 7" definition).
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) throw HarnessError("quantile of empty sample");
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

inline Summary summarize(std::vector<double> values) {
    if (values.empty()) throw HarnessError("summary of empty sample");
    Summary s;
    s.count = values.size();
    double total = 0.0;
    for (double v : values) total += v;
    s.mean = total / static_cast<double>(s.count);
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.sd = s.count > 1 ? std::sqrt(ss / static_cast<double>(s.count - 1)) : 0.0;
    s.se = s.sd / std::sqrt(static_cast<double>(s.count));
    std::sort(values.begin(), values.end());
    s.median = quantile_sorted(values, 0.5);
    s.q1 = quantile_sorted(values, 0.25);
    s.q3 = quantile_sorted(values, 0.75);
    s.iqr = s.q3 - s.q1;
    return s;
}

// Shortest decimal text that reads back to the same double.
inline std::string format_double(double v) {
    char buf[32];
    for (int precision = 6; precision <= 17; ++precision) {
        std::snprintf(buf, sizeof buf, "%.*g", precision, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

// ---------------------------------------------------------------------------
// Algorithm registry

struct AlgorithmSpec {
    enum class Kind { mgpo, metagreedy, pouct, terminate };
    Kind kind = Kind::mgpo;
    int steps = 0;
    std::optional<double> c_explore;
    std::optional<int> rollout_depth;
    std::string label;
};

// Names: mgpo, metagreedy, terminate, pouct:<steps>, pouct:<steps>:<c>:<depth>.
inline AlgorithmSpec parse_algorithm(const std::string& name) {
    AlgorithmSpec spec;
    spec.label = name;
    if (name == "mgpo") return spec;
    if (name == "metagreedy") {
        spec.kind = AlgorithmSpec::Kind::metagreedy;
        return spec;
    }
    if (name == "terminate") {
        spec.kind = AlgorithmSpec::Kind::terminate;
        return spec;
    }
    if (name.rfind("pouct:", 0) == 0) {
        spec.kind = AlgorithmSpec::Kind::pouct;
        std::vector<std::string> parts;
        std::string rest = name.substr(6);
        std::size_t pos;
        while ((pos = rest.find(':')) != std::string::npos) {
            parts.push_back(rest.substr(0, pos));
            rest = rest.substr(pos + 1);
        }
        parts.push_back(rest);
        try {
            std::size_t used = 0;
            spec.steps = std::stoi(parts[0], &used);
            if (used != parts[0].size() || spec.steps < 1) throw std::invalid_argument("steps");
            if (parts.size() == 3) {
                spec.c_explore = std::stod(parts[1]);
                spec.rollout_depth = std::stoi(parts[2]);
            } else if (parts.size() != 1) {
                throw std::invalid_argument("arity");
            }
        } catch (const std::exception&) {
            throw HarnessError("malformed PO-UCT algorithm '" + name + "' (expected pouct:<steps>[:<c>:<depth>])");
        }
        return spec;
    }
    throw HarnessError("unregistered algorithm '" + name + "'");
}

struct PolicyContext {
    TemplatePtr env;
    EpisodeConfig episode;
    double w_lambda = 0.5;
    bool legacy_mode = false;
    std::uint64_t seed = 0;
};

inline std::unique_ptr<Policy> make_policy(const AlgorithmSpec& algo, const PolicyContext& ctx) {
    switch (algo.kind) {
    case AlgorithmSpec::Kind::mgpo:
        return std::make_unique<MgpoPolicy>(
            ctx.env, VocConfig{ctx.episode.lambda, ctx.episode.tau_obs, ctx.w_lambda, ctx.legacy_mode});
    case AlgorithmSpec::Kind::metagreedy:
        return std::make_unique<MetaGreedyPolicy>(ctx.env, ctx.episode.lambda, ctx.episode.tau_obs);
    case AlgorithmSpec::Kind::terminate:
        return std::make_unique<TerminatePolicy>();
    case AlgorithmSpec::Kind::pouct: {
        PouctConfig cfg;
        cfg.n_sims = algo.steps;
        cfg.seed = ctx.seed;
        if (algo.c_explore) {
            cfg.c_explore = *algo.c_explore;
            cfg.rollout_depth = *algo.rollout_depth;
        } else {
            const auto p = pouct_default_params(static_cast<int>(ctx.env->goals().size()), ctx.episode.lambda,
                                                algo.steps);
            cfg.c_explore = p.c_explore;
            cfg.rollout_depth = p.rollout_depth;
        }
        return std::make_unique<PouctPolicy>(ctx.env, ctx.episode, cfg);
    }
    }
    throw HarnessError("unhandled algorithm kind");
}

// ---------------------------------------------------------------------------
// Benchmark driver

struct BenchmarkSpec {
    std::vector<std::string> algorithms;
    std::vector<std::string> envs; // builtin names, e.g. g2..g5, exp60
    std::vector<double> costs;
    double tau_obs = 0.005;
    int n_instances = 5000;
    std::uint64_t base_seed = 0;
    int max_computations = 200;
    // MGPO cost weight. When unset it is tuned per (env, cost) on training
    // instances disjoint from the evaluation seeds.
    std::optional<double> w_lambda;
    TuningConfig tuning{50, 200, 0x5EED};
    bool timing = false; // record wall-clock times (makes output non-reproducible)
    int threads = 1;
    std::string output_dir; // empty: do not write files
};

struct EpisodeRow {
    std::string algo;
    std::string env;
    double cost = 0.0;
    std::uint64_t seed = 0;
    double rr = 0.0;
    int n_clicks = 0;
    int decisions = 0;
    double wall_ms = 0.0;
};

struct CellResult {
    std::string algo;
    std::string env;
    double cost = 0.0;
    double w_lambda = 0.0;
    int episodes = 0;
    Summary rr;
    double mean_clicks = 0.0;
    double mean_decision_ms = 0.0;
    std::uint64_t instance_hash = 0; // identical across algorithms in the same (env, cost)
};

struct BenchmarkResult {
    std::vector<CellResult> cells;
    std::vector<EpisodeRow> episodes;

    const CellResult& cell(const std::string& algo, const std::string& env, double cost) const {
        for (const auto& c : cells) {
            if (c.algo == algo && c.env == env && std::abs(c.cost - cost) < 1e-12) return c;
        }
        throw HarnessError("no cell for " + algo + "/" + env);
    }
};

inline std::uint64_t hash_truths(const std::vector<double>& truths, std::uint64_t h) {
    for (double t : truths) {
        std::uint64_t bits;
        std::memcpy(&bits, &t, sizeof bits);
        h = mix64(h ^ bits);
    }
    return h;
}

inline void write_results_csv(std::ostream& out, const std::vector<EpisodeRow>& rows) {
    out << "algo,env,cost,seed,rr,n_clicks,wall_ms\n";
    for (const auto& r : rows) {
        out << r.algo << ',' << r.env << ',' << format_double(r.cost) << ',' << r.seed << ',' << format_double(r.rr)
            << ',' << r.n_clicks << ',' << format_double(r.wall_ms) << '\n';
    }
}

inline void write_summary_csv(std::ostream& out, const std::vector<CellResult>& cells) {
    out << "algo,env,cost,w_lambda,episodes,mean_rr,median_rr,q1_rr,q3_rr,iqr_rr,se_rr,mean_clicks,"
           "mean_decision_ms,instance_hash\n";
    for (const auto& c : cells) {
        out << c.algo << ',' << c.env << ',' << format_double(c.cost) << ',' << format_double(c.w_lambda) << ','
            << c.episodes << ',' << format_double(c.rr.mean) << ',' << format_double(c.rr.median) << ','
            << format_double(c.rr.q1) << ',' << format_double(c.rr.q3) << ',' << format_double(c.rr.iqr) << ','
            << format_double(c.rr.se) << ',' << format_double(c.mean_clicks) << ','
            << format_double(c.mean_decision_ms) << ',' << c.instance_hash << '\n';
    }
}

// Runs `fn(i)` for i in [0, n) on up to `threads` workers. Each index writes
// only its own slot, so results do not depend on scheduling.
inline void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
    threads = std::max(1, std::min(threads, n));
    if (threads == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (int i = t; i < n; i += threads) fn(i);
            } catch (...) {
                errors[static_cast<std::size_t>(t)] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

inline BenchmarkResult run_benchmark(const BenchmarkSpec& spec,
                                     const std::function<void(const std::string&)>& log = {}) {
    if (spec.n_instances < 1) throw HarnessError("n_instances must be >= 1");
    if (spec.algorithms.empty() || spec.envs.empty() || spec.costs.empty()) {
        throw HarnessError("benchmark needs at least one algorithm, environment and cost");
    }
    if (!(spec.tau_obs > 0.0)) throw HarnessError("precision must be positive");
    std::vector<AlgorithmSpec> algos;
    for (const auto& a : spec.algorithms) algos.push_back(parse_algorithm(a));

    BenchmarkResult result;
    for (const auto& env_name : spec.envs) {
        const TemplatePtr env = builtin_by_name(env_name);
        std::vector<EnvInstance> instances;
        std::uint64_t instance_hash = 0;
        for (int i = 0; i < spec.n_instances; ++i) {
            instances.push_back(sample_instance(env, spec.base_seed + static_cast<std::uint64_t>(i)));
            instance_hash = hash_truths(instances.back().truths, instance_hash);
        }
        for (double cost : spec.costs) {
            if (!(cost >= 0.0)) throw HarnessError("cost must be non-negative");
            EpisodeConfig episode{cost, spec.tau_obs, spec.max_computations, ScoreMode::ground_truth};
            double w = 0.5;
            const bool needs_w = std::any_of(algos.begin(), algos.end(),
                                             [](const auto& a) { return a.kind == AlgorithmSpec::Kind::mgpo; });
            if (spec.w_lambda) {
                w = *spec.w_lambda;
            } else if (needs_w) {
                const auto tuned = tune_cost_weight(env, VocConfig{cost, spec.tau_obs, 0.5, false}, episode, spec.tuning);
                w = tuned.w_lambda;
                if (log) log("tuned w_lambda=" + format_double(w) + " for " + env_name + " cost " + format_double(cost));
            }
            for (const auto& algo : algos) {
                std::vector<EpisodeRow> rows(static_cast<std::size_t>(spec.n_instances));
                parallel_for(spec.n_instances, spec.threads, [&](int i) {
                    const auto& inst = instances[static_cast<std::size_t>(i)];
                    const StreamObservations source(inst, spec.tau_obs, inst.seed);
                    PolicyContext ctx{env, episode, w, false, inst.seed};
                    auto policy = make_policy(algo, ctx);
                    const auto t0 = std::chrono::steady_clock::now();
                    const auto trace = run_episode(*policy, inst, episode, source);
                    const auto t1 = std::chrono::steady_clock::now();
                    auto& row = rows[static_cast<std::size_t>(i)];
                    row.algo = algo.label;
                    row.env = env_name;
                    row.cost = cost;
                    row.seed = inst.seed;
                    row.rr = trace.rr;
                    row.n_clicks = trace.inspect_count();
                    row.decisions = static_cast<int>(trace.records.size());
                    row.wall_ms = spec.timing ? std::chrono::duration<double, std::milli>(t1 - t0).count() : 0.0;
                });
                CellResult cell;
                cell.algo = algo.label;
                cell.env = env_name;
                cell.cost = cost;
                cell.w_lambda = algo.kind == AlgorithmSpec::Kind::mgpo ? w : 0.0;
                cell.episodes = spec.n_instances;
                cell.instance_hash = instance_hash;
                std::vector<double> rr;
                double clicks = 0.0, wall = 0.0, decisions = 0.0;
                for (const auto& r : rows) {
                    rr.push_back(r.rr);
                    clicks += r.n_clicks;
                    wall += r.wall_ms;
                    decisions += r.decisions;
                }
                cell.rr = summarize(rr);
                cell.mean_clicks = clicks / spec.n_instances;
                cell.mean_decision_ms = wall / decisions;
                if (log) {
                    log(algo.label + " " + env_name + " cost " + format_double(cost) + ": mean rr " +
                        format_double(cell.rr.mean));
                }
                result.cells.push_back(cell);
                result.episodes.insert(result.episodes.end(), rows.begin(), rows.end());
            }
        }
    }

    if (!spec.output_dir.empty()) {
        std::filesystem::create_directories(spec.output_dir);
        std::ofstream results(std::filesystem::path(spec.output_dir) / "results.csv", std::ios::binary);
        std::ofstream summary(std::filesystem::path(spec.output_dir) / "summary.csv", std::ios::binary);
        if (!results || !summary) throw std::runtime_error("cannot write to " + spec.output_dir);
        write_results_csv(results, result.episodes);
        write_summary_csv(summary, result.cells);
    }
    return result;
}

// Exhaustive search over exploration coefficients and rollout depths for one
// (template, cost, budget) cell, scored by mean ground-truth rr on training
// instances. The first best setting in grid order wins ties.
struct GridSearchResult {
    double c_explore = 0.0;
    int rollout_depth = 0;
    double mean_rr = -std::numeric_limits<double>::infinity();
};

inline GridSearchResult pouct_grid_search(const TemplatePtr& env, double cost, int n_sims, int n_instances,
                                          std::uint64_t seed, double tau_obs = 0.005,
                                          const std::vector<double>& c_values = {0.5, 1, 5, 10, 50, 100},
                                          const std::vector<int>& depths = {0, 3}) {
    GridSearchResult best;
    const EpisodeConfig episode{cost, tau_obs, 200, ScoreMode::ground_truth};
    for (double c : c_values) {
        for (int depth : depths) {
            double total = 0.0;
            for (int i = 0; i < n_instances; ++i) {
                const std::uint64_t s = derive_seed({seed, 0x67726964ULL, static_cast<std::uint64_t>(i)});
                const auto inst = sample_instance(env, s);
                const StreamObservations source(inst, tau_obs, s);
                PouctPolicy policy(env, episode, PouctConfig{n_sims, c, depth, s});
                total += run_episode(policy, inst, episode, source).rr;
            }
            const double mean = total / n_instances;
            if (mean > best.mean_rr) best = {c, depth, mean};
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// Timing

// Mean wall-clock seconds per select() call over beliefs reached by random
// inspection prefixes of length 0..max_prefix on fresh instances.
inline double time_per_decision(Policy& policy, const TemplatePtr& env, const EpisodeConfig& config,
                                int n_decisions, std::uint64_t seed = 1, int max_prefix = 30) {
    if (n_decisions < 30) throw HarnessError("time_per_decision needs at least 30 decisions");
    const auto nodes = env->inspectable_nodes();
    std::vector<BeliefState> beliefs;
    SplitMix64 gen(derive_seed({seed, 0x74696D65ULL}));
    for (int d = 0; d < n_decisions; ++d) {
        const auto inst = sample_instance(env, derive_seed({seed, static_cast<std::uint64_t>(d)}));
        BeliefState b = init_belief(*env);
        const auto len = uniform_index(gen, static_cast<std::size_t>(std::min(max_prefix, config.max_computations - 1)) + 1);
        for (std::size_t k = 0; k < len && !nodes.empty(); ++k) {
            const auto obs = sample_observation(inst, nodes[uniform_index(gen, nodes.size())], config.tau_obs, gen);
            b.apply(obs.node, obs.value, config.tau_obs);
        }
        beliefs.push_back(std::move(b));
    }
    volatile int sink = 0;
    const auto t0 = std::chrono::steady_clock::now();
    for (const auto& b : beliefs) sink = sink + policy.select(b).node;
    const auto t1 = std::chrono::steady_clock::now();
    (void)sink;
    return std::chrono::duration<double>(t1 - t0).count() / n_decisions;
}

// ---------------------------------------------------------------------------
// Agreement metrics between an executed trace and a reference policy

struct AgreementCounts {
    int matches = 0;
    int total = 0;
    double rate() const { return total == 0 ? 0.0 : static_cast<double>(matches) / total; }
};

// Matches of each participant Inspect against the policy's choice at the same
// belief. A trace without Inspects scores 1 if the policy would also
// terminate at once, else 0.
inline AgreementCounts click_agreement_counts(const EpisodeTrace& trace, Policy& reference) {
    AgreementCounts c;
    for (const auto& r : trace.records) {
        if (!r.action.is_inspect()) continue;
        ++c.total;
        if (reference.select(r.before) == r.action) ++c.matches;
    }
    return c;
}

inline double zero_inspect_agreement(const EpisodeTrace& trace, Policy& reference) {
    const BeliefState& first = trace.records.empty() ? trace.final_belief : trace.records.front().before;
    return reference.select(first).is_terminate() ? 1.0 : 0.0;
}

inline double click_agreement(const EpisodeTrace& trace, Policy& reference) {
    const auto c = click_agreement_counts(trace, reference);
    if (c.total == 0) return zero_inspect_agreement(trace, reference);
    return c.rate();
}

struct ConfusionCounts {
    int tp = 0; // both terminate
    int fn = 0; // policy terminates, participant continues
    int tn = 0; // both continue
    int fp = 0; // policy continues, participant terminates

    ConfusionCounts& operator+=(const ConfusionCounts& o) {
        tp += o.tp;
        fn += o.fn;
        tn += o.tn;
        fp += o.fp;
        return *this;
    }
};

// Balanced accuracy. A class with no cases borrows the other class's rate;
// with no decisions at all the score is 1.
inline double balanced_accuracy(const ConfusionCounts& c) {
    const int pos = c.tp + c.fn;
    const int neg = c.tn + c.fp;
    if (pos == 0 && neg == 0) return 1.0;
    const double tpr = pos > 0 ? static_cast<double>(c.tp) / pos : static_cast<double>(c.tn) / neg;
    const double tnr = neg > 0 ? static_cast<double>(c.tn) / neg : tpr;
    return 0.5 * (tpr + tnr);
}

inline ConfusionCounts termination_counts(const EpisodeTrace& trace, Policy& reference) {
    ConfusionCounts c;
    for (const auto& r : trace.records) {
        const bool policy_stops = reference.select(r.before).is_terminate();
        const bool participant_stops = r.action.is_terminate();
        if (policy_stops) {
            (participant_stops ? c.tp : c.fn)++;
        } else {
            (participant_stops ? c.fp : c.tn)++;
        }
    }
    return c;
}

inline double termination_agreement(const EpisodeTrace& trace, Policy& reference) {
    return balanced_accuracy(termination_counts(trace, reference));
}

// Whether each participant Inspect revisits a node agrees with whether the
// policy's choice at that belief would revisit one. A policy Terminate counts
// as a mismatch. Zero-inspect traces follow the click_agreement rule.
inline AgreementCounts repeat_agreement_counts(const EpisodeTrace& trace, Policy& reference) {
    AgreementCounts c;
    std::set<NodeId> seen;
    for (const auto& r : trace.records) {
        if (!r.action.is_inspect()) continue;
        ++c.total;
        const bool participant_repeats = seen.count(r.action.node) > 0;
        const auto choice = reference.select(r.before);
        if (choice.is_inspect()) {
            const bool policy_repeats = seen.count(choice.node) > 0;
            if (policy_repeats == participant_repeats) ++c.matches;
        }
        seen.insert(r.action.node);
    }
    return c;
}

inline double repeat_agreement(const EpisodeTrace& trace, Policy& reference) {
    const auto c = repeat_agreement_counts(trace, reference);
    if (c.total == 0) return zero_inspect_agreement(trace, reference);
    return c.rate();
}

// Variance tier of each inspectable node: 2 = highest prior sigma, 1 =
// medium, 0 = lowest. Throws unless there are exactly three distinct sigmas.
inline std::vector<int> variance_tiers(const EnvTemplate& env) {
    std::set<double> sigmas;
    for (NodeId n : env.inspectable_nodes()) sigmas.insert(env.node(n).sigma);
    if (sigmas.size() != 3) {
        throw HarnessError("template '" + env.name() + "' has " + std::to_string(sigmas.size()) +
                           " variance tiers; goal-planning detection needs 3");
    }
    const std::vector<double> ordered(sigmas.begin(), sigmas.end());
    std::vector<int> tiers(static_cast<std::size_t>(env.node_count()), -1);
    for (NodeId n : env.inspectable_nodes()) {
        const double s = env.node(n).sigma;
        tiers[static_cast<std::size_t>(n)] =
            static_cast<int>(std::find(ordered.begin(), ordered.end(), s) - ordered.begin());
    }
    return tiers;
}

// True iff the first Inspect targets the highest tier and some medium-tier
// Inspect happens before the first low-tier Inspect.
inline bool goal_planning_detect(const EpisodeTrace& trace, const EnvTemplate& env) {
    const auto tiers = variance_tiers(env);
    bool high_first = false;
    bool seen_any = false;
    bool medium_before_low = false;
    for (const auto& r : trace.records) {
        if (!r.action.is_inspect()) continue;
        const int tier = tiers[static_cast<std::size_t>(r.action.node)];
        if (!seen_any) {
            seen_any = true;
            high_first = tier == 2;
        }
        if (tier == 1) medium_before_low = true;
        if (tier == 0) break;
    }
    return high_first && medium_before_low;
}

inline bool learned_goal_planning(const std::vector<bool>& trial_flags) {
    const auto hits = std::count(trial_flags.begin(), trial_flags.end(), true);
    return 2 * static_cast<std::size_t>(hits) > trial_flags.size();
}

// ---------------------------------------------------------------------------
// Trace serialization
//
// One JSON object per episode:
//   {"env": "<builtin name>" | "template": {...},
//    "cost": <lambda>, "precision": <tau_obs>,
//    "steps": [{"action": "inspect", "node": n, "obs": x}, ..., {"action": "terminate"}],
//    "rr": <number, informational>}
// A trace without a final terminate is a partial trace; metrics use the
// steps that are present.

struct TraceDocument {
    TemplatePtr env;
    std::string env_name;
    double lambda = 0.0;
    double tau_obs = 0.005;
    std::vector<Observation> inspects; // in order
    bool terminated = false;
};

inline nlohmann::json trace_to_json(const EpisodeTrace& trace, const EnvTemplate& env, double tau_obs,
                                    const std::string& env_name = {}) {
    nlohmann::json doc;
    if (!env_name.empty()) {
        doc["env"] = env_name;
    } else {
        doc["template"] = template_to_json(env);
    }
    doc["cost"] = trace.lambda;
    doc["precision"] = tau_obs;
    auto steps = nlohmann::json::array();
    for (const auto& r : trace.records) {
        if (r.action.is_inspect()) {
            steps.push_back({{"action", "inspect"}, {"node", r.action.node}, {"obs", r.observation.value_or(0.0)}});
        } else {
            steps.push_back({{"action", "terminate"}});
        }
    }
    doc["steps"] = std::move(steps);
    doc["rr"] = trace.rr;
    return doc;
}

inline TraceDocument trace_from_json(const nlohmann::json& doc) {
    TraceDocument out;
    try {
        if (doc.contains("template")) {
            out.env = template_from_json(doc.at("template"));
            out.env_name = out.env->name();
        } else {
            out.env_name = doc.at("env").get<std::string>();
            out.env = builtin_by_name(out.env_name);
        }
        out.lambda = doc.at("cost").get<double>();
        out.tau_obs = doc.value("precision", 0.005);
        for (const auto& step : doc.at("steps")) {
            if (out.terminated) throw HarnessError("step after terminate");
            const auto action = step.at("action").get<std::string>();
            if (action == "inspect") {
                out.inspects.push_back({step.at("node").get<NodeId>(), step.at("obs").get<double>()});
            } else if (action == "terminate") {
                out.terminated = true;
            } else {
                throw HarnessError("unknown action '" + action + "'");
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw HarnessError(std::string("malformed trace: ") + e.what());
    }
    return out;
}

// Rebuilds the belief sequence of a logged trace. Without ground truth the
// score is posterior mode.
inline EpisodeTrace replay_trace(const TraceDocument& doc) {
    EpisodeTrace trace;
    trace.lambda = doc.lambda;
    trace.score_mode = ScoreMode::posterior;
    BeliefState b = init_belief(*doc.env);
    for (const auto& obs : doc.inspects) {
        if (!doc.env->inspectable(obs.node)) {
            throw HarnessError("trace inspects non-inspectable node " + std::to_string(obs.node));
        }
        StepRecord rec{b, MetaAction::inspect(obs.node), obs.value, -doc.lambda};
        b.apply(obs.node, obs.value, doc.tau_obs);
        trace.records.push_back(std::move(rec));
    }
    if (doc.terminated) {
        const auto best = best_expected_path(b, *doc.env);
        trace.chosen_path = best.path;
        trace.path_posterior = best.value;
        trace.records.push_back({b, MetaAction::terminate(), std::nullopt, best.value});
    }
    trace.final_belief = b;
    trace.rr = rr_score(trace, ScoreMode::posterior);
    return trace;
}

} // namespace mgpo

#endif // MGPO_HARNESS_HPP
