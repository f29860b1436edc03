#pragma once

#include <atomic>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <thread>

#include <json.hpp>

#include "avalon/bot.hpp"
#include "avalon/model.hpp"

namespace httplib {
class Server;
}

namespace avalon {

struct ServiceConfig {
    std::filesystem::path checkpoint;
    std::optional<std::filesystem::path> static_dir;
    BotConfig bot;
    // Bot validations allowed to run at once; further requests wait their turn.
    int validation_workers = 2;
};

struct ApiResponse {
    int status = 200;
    nlohmann::json body;
};

/// HTTP front end over one read-only checkpoint.
class Service {
public:
    explicit Service(ServiceConfig config);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Loads the checkpoint on a background thread; requests get 503 until it lands.
    void load_async();
    /// Loads synchronously. Throws whatever load_checkpoint throws.
    void load();
    bool ready() const { return snapshot() != nullptr; }

    ApiResponse health() const;
    ApiResponse model_info() const;
    ApiResponse generate(const nlohmann::json& payload) const;
    ApiResponse validate(const nlohmann::json& payload);

    /// Binds and serves on a background thread. port 0 picks a free port; returns the bound port.
    int start(const std::string& host, int port);
    /// Blocks serving on the calling thread.
    void listen(const std::string& host, int port);
    void stop();

private:
    void install_routes();
    std::shared_ptr<const Checkpoint> snapshot() const;

    ServiceConfig config_;
    mutable std::mutex model_mutex_;
    std::shared_ptr<const Checkpoint> model_;
    std::string load_error_;
    std::counting_semaphore<> workers_;
    std::unique_ptr<httplib::Server> server_;
    std::jthread loader_;
    std::jthread listener_;
};

}  // namespace avalon
