// bench: benchmark runner, agreement metrics over logged traces, and
// template export.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "mgpo/harness.hpp"
#include "mgpo/voc.hpp"

namespace {

std::vector<std::string> split_list(const std::vector<std::string>& items) {
    std::vector<std::string> out;
    for (const auto& item : items) {
        std::stringstream ss(item);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            if (!tok.empty()) out.push_back(tok);
        }
    }
    return out;
}

int run_metrics(const std::string& traces_path, const std::string& policy, double w_lambda, bool legacy,
                const std::string& env_override) {
    if (policy != "mgpo") throw mgpo::HarnessError("only the mgpo reference policy is supported");
    std::ifstream in(traces_path);
    if (!in) throw std::runtime_error("cannot open " + traces_path);
    std::cout << "trace,env,inspects,click_agreement,termination_agreement,repeat_agreement,goal_planning\n";
    std::string line;
    int row = 0;
    double click_sum = 0, term_sum = 0, repeat_sum = 0;
    mgpo::AgreementCounts click_pool, repeat_pool;
    mgpo::ConfusionCounts term_pool;
    std::vector<bool> flags;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto json = nlohmann::json::parse(line, nullptr, false);
        if (json.is_discarded()) throw mgpo::HarnessError("line " + std::to_string(row + 1) + " is not valid JSON");
        if (!env_override.empty() && !json.contains("template")) json["env"] = env_override;
        const auto doc = mgpo::trace_from_json(json);
        const auto trace = mgpo::replay_trace(doc);
        mgpo::MgpoPolicy reference(doc.env, mgpo::VocConfig{doc.lambda, doc.tau_obs, w_lambda, legacy});
        const double ca = mgpo::click_agreement(trace, reference);
        const double ta = mgpo::termination_agreement(trace, reference);
        const double ra = mgpo::repeat_agreement(trace, reference);
        std::string goal = "NA";
        try {
            const bool flag = mgpo::goal_planning_detect(trace, *doc.env);
            flags.push_back(flag);
            goal = flag ? "1" : "0";
        } catch (const mgpo::HarnessError&) {
        }
        const auto cc = mgpo::click_agreement_counts(trace, reference);
        const auto rc = mgpo::repeat_agreement_counts(trace, reference);
        click_pool.matches += cc.matches;
        click_pool.total += cc.total;
        repeat_pool.matches += rc.matches;
        repeat_pool.total += rc.total;
        term_pool += mgpo::termination_counts(trace, reference);
        click_sum += ca;
        term_sum += ta;
        repeat_sum += ra;
        std::cout << row << ',' << doc.env_name << ',' << trace.inspect_count() << ',' << mgpo::format_double(ca) << ','
                  << mgpo::format_double(ta) << ',' << mgpo::format_double(ra) << ',' << goal << '\n';
        ++row;
    }
    if (row > 0) {
        std::cout << "mean,,," << mgpo::format_double(click_sum / row) << ',' << mgpo::format_double(term_sum / row)
                  << ',' << mgpo::format_double(repeat_sum / row) << ','
                  << (flags.empty() ? std::string("NA") : (mgpo::learned_goal_planning(flags) ? "1" : "0")) << '\n';
        std::cout << "pooled,,," << mgpo::format_double(click_pool.total ? click_pool.rate() : 1.0) << ','
                  << mgpo::format_double(mgpo::balanced_accuracy(term_pool)) << ','
                  << mgpo::format_double(repeat_pool.total ? repeat_pool.rate() : 1.0) << ",\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Meta-level planning benchmark tools"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "Run a benchmark and write results.csv and summary.csv");
    std::vector<std::string> envs, algos;
    std::vector<double> costs;
    double precision = 0.005;
    int instances = 5000;
    std::uint64_t seed = 0;
    std::string out_dir = "bench_out";
    double w_lambda = -1.0;
    int tune_budget = 50, tune_instances = 200, threads = 1, max_computations = 200;
    bool timing = false, quiet = false;
    run->add_option("--env", envs, "Environment(s): g2 g3 g4 g5 exp60 (comma lists allowed)")->required();
    run->add_option("--algo", algos, "Algorithm(s): mgpo, metagreedy, terminate, pouct:<steps>[:<c>:<depth>]")
        ->required();
    run->add_option("--cost", costs, "Computation cost(s) lambda")->required()->delimiter(',');
    run->add_option("--precision", precision, "Observation precision tau_obs")->check(CLI::PositiveNumber);
    run->add_option("--instances", instances, "Instances per cell")->check(CLI::PositiveNumber);
    run->add_option("--seed", seed, "Base seed; instance i uses seed + i");
    run->add_option("--out", out_dir, "Output directory");
    run->add_option("--w-lambda", w_lambda, "Fixed MGPO cost weight in [0,1]; tuned when omitted");
    run->add_option("--tune-budget", tune_budget, "Evaluations for cost-weight tuning");
    run->add_option("--tune-instances", tune_instances, "Training instances per tuning evaluation");
    run->add_option("--max-computations", max_computations, "Computation cap per episode");
    run->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
    run->add_flag("--timing", timing, "Record wall-clock times (output is then not byte-reproducible)");
    run->add_flag("--quiet", quiet, "No progress output");

    auto* metrics = app.add_subcommand("metrics", "Agreement metrics for JSON-lines traces");
    std::string traces, policy = "mgpo", metrics_env;
    double metrics_w = 0.5;
    bool legacy = false;
    metrics->add_option("--traces", traces, "File with one JSON trace per line")->required();
    metrics->add_option("--policy", policy, "Reference policy")->check(CLI::IsMember({"mgpo"}));
    metrics->add_option("--w-lambda", metrics_w, "Reference cost weight");
    metrics->add_option("--env", metrics_env, "Template name for traces that do not name one");
    metrics->add_flag("--legacy", legacy, "Use the legacy VOC variant for the reference policy");

    auto* env_cmd = app.add_subcommand("env", "Print a builtin template as JSON");
    std::string env_name;
    env_cmd->add_option("name", env_name, "g2..g5, exp60, curriculum_1..curriculum_4")->required();

    auto* voc_cmd = app.add_subcommand("voc", "Print the VOC table of the prior belief as CSV");
    std::string voc_env = "g2";
    double voc_cost = 1.0, voc_w = 0.5, voc_precision = 0.005;
    bool voc_legacy = false;
    voc_cmd->add_option("--env", voc_env, "Template name");
    voc_cmd->add_option("--cost", voc_cost, "Computation cost");
    voc_cmd->add_option("--w-lambda", voc_w, "Cost weight");
    voc_cmd->add_option("--precision", voc_precision, "Observation precision");
    voc_cmd->add_flag("--legacy", voc_legacy, "Legacy VOC variant");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            mgpo::BenchmarkSpec spec;
            spec.envs = split_list(envs);
            spec.algorithms = split_list(algos);
            spec.costs = costs;
            spec.tau_obs = precision;
            spec.n_instances = instances;
            spec.base_seed = seed;
            spec.output_dir = out_dir;
            spec.timing = timing;
            spec.threads = threads;
            spec.max_computations = max_computations;
            spec.tuning.budget = tune_budget;
            spec.tuning.n_instances = tune_instances;
            if (w_lambda >= 0.0) spec.w_lambda = w_lambda;
            std::function<void(const std::string&)> log;
            if (!quiet) log = [](const std::string& msg) { std::cerr << msg << '\n'; };
            mgpo::run_benchmark(spec, log);
            if (!quiet) std::cerr << "wrote " << out_dir << "/results.csv and summary.csv\n";
        } else if (*metrics) {
            return run_metrics(traces, policy, metrics_w, legacy, metrics_env);
        } else if (*env_cmd) {
            std::cout << mgpo::template_to_json(*mgpo::builtin_by_name(env_name)).dump(2) << '\n';
        } else if (*voc_cmd) {
            const auto env = mgpo::builtin_by_name(voc_env);
            const auto table = mgpo::voc_table(mgpo::init_belief(*env), *env,
                                               mgpo::VocConfig{voc_cost, voc_precision, voc_w, voc_legacy});
            mgpo::write_voc_csv(std::cout, table);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
