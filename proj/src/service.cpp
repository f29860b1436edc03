#include "avalon/service.hpp"

#include <httplib.h>

#include <cmath>
#include <stdexcept>

#include "avalon/json_io.hpp"

namespace avalon {

namespace {

using nlohmann::json;

ApiResponse field_error(const std::string& field, const std::string& message) {
    return {400, {{"error", "invalid request"}, {"fields", {{field, message}}}}};
}

ApiResponse unavailable(const std::string& why) { return {503, {{"error", why}}}; }

// Reads an optional integer field; returns an error message on a bad value.
std::optional<std::string> read_int(const json& payload, const char* field, int lo, int hi, std::optional<int>& out) {
    if (!payload.contains(field) || payload.at(field).is_null()) return std::nullopt;
    const auto& v = payload.at(field);
    if (!v.is_number_integer()) return std::string("must be an integer");
    const auto n = v.get<long long>();
    if (n < lo || n > hi) return "must be in [" + std::to_string(lo) + "," + std::to_string(hi) + "]";
    out = static_cast<int>(n);
    return std::nullopt;
}

}  // namespace

Service::Service(ServiceConfig config)
    : config_(std::move(config)),
      workers_(std::max(1, config_.validation_workers)),
      server_(std::make_unique<httplib::Server>()) {
    install_routes();
}

Service::~Service() { stop(); }

std::shared_ptr<const Checkpoint> Service::snapshot() const {
    std::lock_guard lock(model_mutex_);
    return model_;
}

void Service::load() {
    std::shared_ptr<const Checkpoint> ckpt;
    try {
        ckpt = std::make_shared<const Checkpoint>(load_checkpoint(config_.checkpoint));
    } catch (const std::exception& e) {
        std::lock_guard lock(model_mutex_);
        load_error_ = e.what();
        throw;
    }
    std::lock_guard lock(model_mutex_);
    model_ = std::move(ckpt);
    load_error_.clear();
}

void Service::load_async() {
    loader_ = std::jthread([this] {
        try {
            load();
        } catch (const std::exception&) {
            // recorded in load_error_
        }
    });
}

ApiResponse Service::health() const {
    const bool loaded = ready();
    std::string status = loaded ? "ok" : "loading";
    {
        std::lock_guard lock(model_mutex_);
        if (!loaded && !load_error_.empty()) status = "error";
    }
    return {loaded ? 200 : 503, {{"status", status}}};
}

ApiResponse Service::model_info() const {
    const auto model = snapshot();
    if (!model) return unavailable("model is loading");
    const auto& cfg = model->model.config();
    return {200,
            {{"variant", to_string(cfg.variant)},
             {"epoch", model->epoch},
             {"m_min", model->m_min},
             {"m_max", model->m_max},
             {"moves_max", move_cap_for(kValidMoves)},
             {"width", {kMinWidth, kMaxWidth}},
             {"height", {kMinHeight, kMaxHeight}},
             {"symmetries", {"vertical", "horizontal", "quadrant"}}}};
}

ApiResponse Service::generate(const json& payload) const {
    const auto model = snapshot();
    if (!model) return unavailable("model is loading");
    if (!payload.is_object()) return field_error("body", "must be a JSON object");

    std::optional<int> width;
    std::optional<int> height;
    if (auto err = read_int(payload, "width", kMinWidth, kMaxWidth, width)) return field_error("width", *err);
    if (!width) return field_error("width", "is required");
    if (auto err = read_int(payload, "height", kMinHeight, kMaxHeight, height)) return field_error("height", *err);
    if (!height) return field_error("height", "is required");

    if (!payload.contains("symmetry") || !payload.at("symmetry").is_string()) {
        return field_error("symmetry", "must be one of vertical, horizontal, quadrant");
    }
    const auto symmetry = parse_symmetry(payload.at("symmetry").get<std::string>());
    if (!symmetry || *symmetry == SymmetryKind::Unknown) {
        return field_error("symmetry", "must be one of vertical, horizontal, quadrant");
    }

    ConditionSpec spec;
    spec.size = {*width, *height};
    spec.symmetry = *symmetry;
    const bool conditioned = model->model.config().conditioned_on_difficulty();
    if (payload.contains("moves") && !payload.at("moves").is_null()) {
        if (!conditioned) return field_error("moves", "model has no difficulty conditioner");
        if (!payload.at("moves").is_number()) return field_error("moves", "must be a number");
        const double moves = payload.at("moves").get<double>();
        if (!std::isfinite(moves) || moves < model->m_min || moves > move_cap_for(kValidMoves)) {
            return field_error("moves", "must be in [" + std::to_string(model->m_min) + "," +
                                            std::to_string(move_cap_for(kValidMoves)) + "]");
        }
        spec.target_moves = moves;
    } else if (conditioned) {
        return field_error("moves", "is required for this model");
    }

    std::uint64_t seed = 0;
    if (payload.contains("seed")) {
        const auto& v = payload.at("seed");
        if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<long long>() < 0)) {
            return field_error("seed", "must be a non-negative integer");
        }
        seed = v.get<std::uint64_t>();
    }

    try {
        json body = level_to_json(avalon::generate(*model, spec, seed));
        body["requested"] = {{"width", *width}, {"height", *height}, {"symmetry", to_string(*symmetry)},
                             {"seed", seed}};
        if (spec.target_moves) body["requested"]["moves"] = *spec.target_moves;
        return {200, body};
    } catch (const std::invalid_argument& e) {
        return field_error("body", e.what());
    }
}

ApiResponse Service::validate(const json& payload) {
    if (!payload.is_object()) return field_error("body", "must be a JSON object");
    if (!payload.contains("grid")) return field_error("grid", "is required");
    LevelGrid grid;
    try {
        grid = grid_from_json(payload.at("grid"));
    } catch (const std::invalid_argument& e) {
        return field_error("grid", e.what());
    }
    if (grid.count(CellKind::Playfield) == 0) return field_error("grid", "has no PLAYFIELD cell");
    if (!is_well_formed(grid)) return field_error("grid", "is not a well-formed centered level");

    BotConfig bot = config_.bot;
    std::optional<int> runs;
    if (auto err = read_int(payload, "runs", 1, 1000, runs)) return field_error("runs", *err);
    if (runs) bot.run_count = *runs;

    workers_.acquire();
    PlaythroughStats stats;
    try {
        stats = evaluate_level(grid, bot);
    } catch (...) {
        workers_.release();
        throw;
    }
    workers_.release();

    return {200,
            {{"median_moves", stats.median_moves},
             {"std_moves", stats.std_moves},
             {"success_rate", stats.success_rate},
             {"valid", stats.median_moves <= kValidMoves},
             {"runs", bot.run_count},
             {"full_protocol", bot.run_count == BotConfig{}.run_count},
             {"move_cap", bot.move_cap}}};
}

void Service::install_routes() {
    auto reply = [](httplib::Response& res, const ApiResponse& r) {
        res.status = r.status;
        res.set_content(r.body.dump(), "application/json");
    };
    auto with_body = [reply](httplib::Response& res, const httplib::Request& req, auto&& handler) {
        json payload;
        try {
            payload = json::parse(req.body);
        } catch (const json::parse_error&) {
            reply(res, field_error("body", "is not valid JSON"));
            return;
        }
        reply(res, handler(payload));
    };

    server_->Get("/api/health", [this, reply](const httplib::Request&, httplib::Response& res) {
        reply(res, health());
    });
    server_->Get("/api/model-info", [this, reply](const httplib::Request&, httplib::Response& res) {
        reply(res, model_info());
    });
    server_->Post("/api/generate", [this, with_body](const httplib::Request& req, httplib::Response& res) {
        with_body(res, req, [this](const json& p) { return generate(p); });
    });
    server_->Post("/api/validate", [this, with_body](const httplib::Request& req, httplib::Response& res) {
        with_body(res, req, [this](const json& p) { return validate(p); });
    });
    server_->set_exception_handler([reply](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string what = "internal error";
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            what = e.what();
        } catch (...) {
        }
        reply(res, {500, {{"error", what}}});
    });
    if (config_.static_dir) server_->set_mount_point("/", config_.static_dir->string());
}

int Service::start(const std::string& host, int port) {
    const int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
    listener_ = std::jthread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return bound;
}

void Service::listen(const std::string& host, int port) {
    if (!server_->listen(host, port)) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
}

void Service::stop() {
    if (server_) server_->stop();
    if (listener_.joinable()) listener_.join();
    if (loader_.joinable()) loader_.join();
}

}  // namespace avalon
