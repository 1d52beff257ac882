#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "coachai/json_support.hpp"
#include "coachai/service.hpp"

namespace coachai::api {

struct Request {
    std::string method;
    std::string path;
    std::map<std::string, std::string> query;
    std::string body;
    std::optional<std::string> authorization;  // raw Authorization header
};

struct Response {
    int status = 200;
    Json body;
};

// HTTP status for an error kind; problem bodies are {error, detail, status}.
int status_for(ErrorKind kind);

// Maps the HTTP surface onto CoachService. Usable in process (tests, the
// simulator) and behind HttpServer.
class Router {
public:
    // With a token, every route except /api/health and /webhook requires
    // "Authorization: Bearer <token>".
    explicit Router(service::CoachService& service, std::optional<std::string> token = std::nullopt);
    ~Router();

    Response handle(const Request& request);

    // Every (method, pattern) pair served, e.g. {"GET", "/api/users/{id}"}.
    std::vector<std::pair<std::string, std::string>> routes() const;

private:
    struct Route;
    service::CoachService& service_;
    std::optional<std::string> token_;
    std::vector<Route> routes_;
};

class HttpServer {
public:
    explicit HttpServer(Router& router);
    ~HttpServer();

    // Binds; port 0 picks a free one. Returns the bound port or throws.
    int bind(const std::string& host, int port);
    // Blocks until stop().
    void listen();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace coachai::api
