// tutor_server: HTTP session service for tutor experiments.

#include "mgpo/service_http.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <string>

namespace {

std::string env_or(const char* name, const std::string& fallback) {
    const char* v = std::getenv(name);
    return v ? std::string(v) : fallback;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tutor session service"};
    std::string data_dir = env_or("MGPO_DATA_DIR", "sessions");
    std::string bind = env_or("MGPO_BIND", "127.0.0.1");
    int port = std::stoi(env_or("MGPO_PORT", "8080"));
    std::uint64_t param_seed = std::stoull(env_or("MGPO_PARAM_SEED", "0"));
    std::string profile = env_or("MGPO_PROFILE", "legacy");
    double w_lambda = 0.5;
    double d_click = 3.0;
    app.add_option("--data-dir", data_dir, "Directory for per-session JSONL logs (MGPO_DATA_DIR)");
    app.add_option("--bind", bind, "Bind address (MGPO_BIND)");
    app.add_option("--port", port, "Port (MGPO_PORT)");
    app.add_option("--param-seed", param_seed, "Seed for parameter sets and trial instances (MGPO_PARAM_SEED)");
    app.add_option("--profile", profile, "VOC variant: legacy or standard (MGPO_PROFILE)")
        ->check(CLI::IsMember({"legacy", "standard"}));
    app.add_option("--w-lambda", w_lambda, "Cost weight for the standard profile");
    app.add_option("--d-click", d_click, "Wrong-click delay in seconds");
    CLI11_PARSE(app, argc, argv);

    mgpo::ServiceConfig config;
    config.data_dir = data_dir;
    config.param_seed = param_seed;
    config.profile = mgpo::parse_profile(profile);
    config.w_lambda = w_lambda;
    config.feedback.d_click = d_click;

    mgpo::SessionManager manager(config);
    httplib::Server server;
    mgpo::register_routes(server, manager);
    std::cerr << "listening on " << bind << ':' << port << " (profile " << profile << ", data " << data_dir << ")\n";
    if (!server.listen(bind, port)) {
        std::cerr << "error: cannot listen on " << bind << ':' << port << '\n';
        return 1;
    }
    return 0;
}
