#ifndef MGPO_SERVICE_HTTP_HPP
#define MGPO_SERVICE_HTTP_HPP

// Eigen must be seen before httplib: glibc's <resolv.h> defines a `_res`
// macro that collides with Eigen's parameter names.
#include "mgpo/service.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <functional>
#include <string>

namespace mgpo {

namespace detail {

inline void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

inline nlohmann::json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return nlohmann::json::object();
    auto body = nlohmann::json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object()) throw ServiceError(400, "request body must be a JSON object");
    return body;
}

inline int trial_param(const httplib::Request& req) {
    try {
        return std::stoi(req.matches[2].str());
    } catch (const std::exception&) {
        throw ServiceError(400, "bad trial index");
    }
}

// Maps ServiceError (and malformed JSON) to a JSON error body.
inline httplib::Server::Handler guarded(std::function<nlohmann::json(const httplib::Request&)> fn,
                                        int ok_status = 200) {
    return [fn = std::move(fn), ok_status](const httplib::Request& req, httplib::Response& res) {
        try {
            send_json(res, ok_status, fn(req));
        } catch (const ServiceError& e) {
            send_json(res, e.status(), {{"error", e.what()}});
        } catch (const nlohmann::json::exception& e) {
            send_json(res, 400, {{"error", e.what()}});
        } catch (const std::exception& e) {
            send_json(res, 500, {{"error", e.what()}});
        }
    };
}

} // namespace detail

inline void register_routes(httplib::Server& server, SessionManager& manager) {
    using detail::guarded;
    using detail::parse_body;
    using detail::trial_param;

    server.Post("/sessions", guarded(
                                 [&](const httplib::Request& req) {
                                     const auto body = parse_body(req);
                                     if (!body.contains("condition")) throw ServiceError(400, "missing condition");
                                     return manager.create_session(body.at("condition").get<std::string>());
                                 },
                                 201));

    server.Get(R"(/sessions/([0-9a-f]+)/trials/(\d+))", guarded([&](const httplib::Request& req) {
                   return manager.get_trial(req.matches[1].str(), trial_param(req));
               }));

    server.Post(R"(/sessions/([0-9a-f]+)/trials/(\d+)/click)", guarded([&](const httplib::Request& req) {
                    const auto body = parse_body(req);
                    if (!body.contains("node")) throw ServiceError(400, "missing node");
                    return manager.post_click(req.matches[1].str(), trial_param(req), body.at("node").get<NodeId>(),
                                              body.value("event_id", std::string{}));
                }));

    server.Post(R"(/sessions/([0-9a-f]+)/trials/(\d+)/terminate)", guarded([&](const httplib::Request& req) {
                    const auto body = parse_body(req);
                    return manager.post_terminate(req.matches[1].str(), trial_param(req),
                                                  body.value("event_id", std::string{}));
                }));

    server.Get(R"(/sessions/([0-9a-f]+)/trials/(\d+)/demo)", guarded([&](const httplib::Request& req) {
                   return manager.get_demo(req.matches[1].str(), trial_param(req));
               }));

    server.Get(R"(/sessions/([0-9a-f]+)/export)", guarded([&](const httplib::Request& req) {
                   return manager.export_session(req.matches[1].str());
               }));
}

} // namespace mgpo

#endif // MGPO_SERVICE_HTTP_HPP
