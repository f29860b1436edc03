#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "avalon/bot.hpp"
#include "avalon/dataset.hpp"
#include "avalon/eval.hpp"
#include "avalon/json_io.hpp"
#include "avalon/model.hpp"
#include "avalon/service.hpp"

namespace fs = std::filesystem;
using namespace avalon;

namespace {

struct StageError : std::runtime_error {
    StageError(const std::string& stage, const std::string& cause) : std::runtime_error(stage + ": " + cause) {}
};

void write_text(const std::optional<std::string>& out, const std::string& text) {
    if (!out || *out == "-") {
        std::cout << text;
        return;
    }
    std::ofstream file(*out);
    if (!file) throw std::runtime_error("cannot write " + *out);
    file << text;
}

BotConfig bot_from(int runs, int move_cap, std::uint64_t seed) {
    BotConfig bot;
    bot.run_count = runs;
    bot.move_cap = move_cap;
    bot.base_seed = seed;
    return bot;
}

struct BotArgs {
    int runs = 30;
    int move_cap = move_cap_for(kValidMoves);
    std::uint64_t seed = 0;
    void add(CLI::App* app) {
        app->add_option("--runs", runs, "Bot playthroughs per level")->check(CLI::PositiveNumber);
        app->add_option("--move-cap", move_cap, "Moves before a playthrough counts as failed")
            ->check(CLI::PositiveNumber);
        app->add_option("--bot-seed", seed, "Seed of the first playthrough");
    }
    BotConfig config() const { return bot_from(runs, move_cap, seed); }
};

struct TrainArgs {
    std::string variant = "avalon";
    std::optional<int> epochs;
    std::optional<int> batch;
    std::optional<double> lr;
    std::optional<int> interval;
    std::uint64_t seed = 0;
    void add(CLI::App* app, bool with_variant) {
        if (with_variant) {
            app->add_option("--variant", variant, "avalon or vanilla")
                ->check(CLI::IsMember({"avalon", "vanilla"}));
        }
        app->add_option("--epochs", epochs, "Training epochs")->check(CLI::PositiveNumber);
        app->add_option("--batch", batch, "Mini-batch size")->check(CLI::PositiveNumber);
        app->add_option("--lr", lr, "Adam learning rate")->check(CLI::PositiveNumber);
        app->add_option("--interval", interval, "Epochs between checkpoints")->check(CLI::PositiveNumber);
        app->add_option("--train-seed", seed, "Initialisation, shuffle and noise seed");
    }
    ModelConfig config(Variant v) const {
        ModelConfig c = v == Variant::Avalon ? ModelConfig::avalon() : ModelConfig::vanilla();
        if (epochs) c.epochs = *epochs;
        if (batch) c.batch_size = *batch;
        if (lr) c.learning_rate = *lr;
        if (interval) c.checkpoint_interval = *interval;
        c.seed = seed;
        return c;
    }
};

int run_gen_dataset(const std::string& style, int count, std::uint64_t seed, const std::string& out) {
    const auto levels = style == "main" ? generate_main_style(count, seed) : generate_stylized(count, seed);
    DatasetManifest manifest;
    manifest.style = style == "main" ? DatasetStyle::Main : DatasetStyle::Stylized;
    manifest.generator_seed = seed;
    for (const auto& grid : levels) {
        AnnotatedLevel level;
        level.grid = grid;
        level.size = measure_size(grid);
        level.symmetry = detect_symmetry(grid, level.size);
        manifest.levels.push_back(level);
    }
    save_manifest(manifest, out);
    std::cerr << "wrote " << levels.size() << " levels to " << out << "\n";
    return 0;
}

int run_annotate(const std::string& in, const std::string& out, const BotConfig& bot) {
    const DatasetManifest source = load_manifest(in);
    std::vector<LevelGrid> grids;
    for (const auto& level : source.levels) grids.push_back(level.grid);
    const DatasetManifest annotated = annotate(grids, bot, source.style, source.generator_seed);
    save_manifest(annotated, out);
    std::cerr << "annotated " << grids.size() << " levels, m_min " << annotated.m_min << ", m_max "
              << annotated.m_max << ", valid " << dataset_valid_pct(annotated) << "%\n";
    return 0;
}

int run_train(const std::string& dataset, const ModelConfig& config, const std::string& out_dir, bool fresh) {
    const DatasetManifest manifest = load_manifest(dataset);
    TrainOptions options;
    options.out_dir = out_dir;
    options.resume = !fresh;
    options.on_epoch = [&](const EpochLog& e) {
        if (e.epoch % config.checkpoint_interval == 0) {
            std::cerr << "epoch " << e.epoch << " ce " << e.ce << " kl " << e.kl;
            if (e.val_ce) std::cerr << " val_ce " << *e.val_ce;
            std::cerr << "\n";
        }
    };
    const auto written = train(manifest, config, options);
    std::cerr << written.size() << " checkpoints in " << out_dir << "\n";
    return 0;
}

int run_select(const std::string& dataset, const std::string& dir, std::uint64_t seed,
               const std::optional<std::string>& out) {
    const DatasetManifest manifest = load_manifest(dataset);
    SweepSpec spec;
    spec.seed = seed;
    const Selection selection = select_checkpoint(list_checkpoints(dir), manifest, spec);
    nlohmann::json j{{"best", selection.best.string()}, {"scores", nlohmann::json::array()}};
    for (const auto& s : selection.scores) {
        j["scores"].push_back({{"path", s.path.string()},
                               {"epoch", s.epoch},
                               {"size", s.size},
                               {"diversity", s.diversity},
                               {"tile_distribution", s.tile_distribution},
                               {"mean", s.mean}});
    }
    write_text(out, j.dump(2) + "\n");
    std::cerr << "best checkpoint " << selection.best.string() << "\n";
    return 0;
}

int run_generate(const std::string& model, int width, int height, const std::string& symmetry,
                 const std::optional<double>& moves, std::uint64_t seed, int count, const std::string& format,
                 const std::optional<std::string>& out) {
    const Checkpoint ckpt = load_checkpoint(model);
    if (moves && !ckpt.model.config().conditioned_on_difficulty()) {
        throw std::invalid_argument("model has no difficulty conditioner");
    }
    if (!moves && ckpt.model.config().conditioned_on_difficulty()) {
        throw std::invalid_argument("--moves is required for an avalon model");
    }
    ConditionSpec spec;
    spec.size = {width, height};
    spec.symmetry = *parse_symmetry(symmetry);
    spec.target_moves = moves;
    std::string text;
    nlohmann::json levels = nlohmann::json::array();
    for (int i = 0; i < count; ++i) {
        const LevelGrid level = generate(ckpt, spec, seed + static_cast<std::uint64_t>(i));
        if (format == "ascii") {
            if (i > 0) text += "\n";
            text += render_ascii(level);
        } else {
            levels.push_back(level_to_json(level));
        }
    }
    if (format == "json") text = levels.dump(2) + "\n";
    write_text(out, text);
    return 0;
}

int run_evaluate(const std::string& model, const std::string& dataset, std::uint64_t seed, const BotConfig& bot,
                 bool details, const std::optional<std::string>& csv, const std::optional<std::string>& out) {
    const DatasetManifest manifest = load_manifest(dataset);
    SweepSpec spec;
    spec.seed = seed;
    const MetricsReport report = evaluate(load_checkpoint(model), manifest, spec, bot);
    nlohmann::json j = report.to_json(details);
    j["dataset_valid_levels"] = dataset_valid_pct(manifest);
    write_text(out, j.dump(2) + "\n");
    if (csv) write_text(csv, report.details_csv());
    return 0;
}

int run_ablation_cmd(const std::string& dataset, const std::string& out_dir, std::uint64_t seed,
                     const TrainArgs& args, const std::optional<double>& vanilla_lr, const BotConfig& bot,
                     const std::optional<std::string>& out) {
    const DatasetManifest manifest = load_manifest(dataset);
    const ModelConfig avalon_cfg = args.config(Variant::Avalon);
    ModelConfig vanilla_cfg = args.config(Variant::Vanilla);
    if (vanilla_lr) vanilla_cfg.learning_rate = *vanilla_lr;
    else if (!args.lr) vanilla_cfg.learning_rate = ModelConfig::vanilla().learning_rate;
    const AblationReport report = run_ablation(manifest, avalon_cfg, vanilla_cfg, seed, out_dir, bot);
    write_text(out, report.to_json().dump(2) + "\n");
    std::cerr << "valid levels: avalon " << report.avalon.valid_level_pct << "%, vanilla "
              << report.vanilla.valid_level_pct << "%, dataset " << report.dataset_valid_pct << "%\n";
    return 0;
}

int run_pipeline(const std::string& work, const std::string& style, int count, std::uint64_t seed,
                 const TrainArgs& args, const BotConfig& bot) {
    const fs::path dir(work);
    fs::create_directories(dir);
    const auto raw = dir / "dataset_raw.json";
    const auto annotated = dir / "dataset.json";
    auto stage = [](const char* name, auto&& fn) {
        try {
            fn();
        } catch (const std::exception& e) {
            throw StageError(name, e.what());
        }
    };
    stage("gen-dataset", [&] {
        if (!fs::exists(raw)) run_gen_dataset(style, count, seed, raw.string());
    });
    stage("annotate", [&] {
        if (!fs::exists(annotated)) run_annotate(raw.string(), annotated.string(), bot);
    });
    for (const Variant v : {Variant::Avalon, Variant::Vanilla}) {
        const std::string name(to_string(v));
        ModelConfig cfg = args.config(v);
        if (v == Variant::Vanilla && !args.lr) cfg.learning_rate = ModelConfig::vanilla().learning_rate;
        stage("train", [&] { run_train(annotated.string(), cfg, (dir / name).string(), false); });
        const auto selection = dir / (name + "_selection.json");
        stage("select", [&] { run_select(annotated.string(), (dir / name).string(), seed, selection.string()); });
        stage("evaluate", [&] {
            std::ifstream in(selection);
            const auto best = nlohmann::json::parse(in).at("best").get<std::string>();
            run_evaluate(best, annotated.string(), seed, bot, true, (dir / (name + "_levels.csv")).string(),
                         (dir / (name + "_metrics.json")).string());
        });
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Match-3 level generation with a conditional VAE and bot validation"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen-dataset", "Generate unannotated levels");
    std::string style = "main";
    int count = 198;
    std::uint64_t seed = 0;
    std::string out_path;
    gen->add_option("--style", style)->check(CLI::IsMember({"main", "stylized"}));
    gen->add_option("--count", count)->check(CLI::PositiveNumber);
    gen->add_option("--seed", seed);
    gen->add_option("--out", out_path)->required();

    auto* ann = app.add_subcommand("annotate", "Run the bot on every level and assign splits");
    std::string in_path;
    BotArgs bot_args;
    ann->add_option("--in", in_path)->required()->check(CLI::ExistingFile);
    ann->add_option("--out", out_path)->required();
    bot_args.add(ann);

    auto* tr = app.add_subcommand("train", "Train one variant, resuming from existing checkpoints");
    std::string dataset;
    std::string out_dir;
    TrainArgs train_args;
    bool fresh = false;
    tr->add_option("--dataset", dataset)->required()->check(CLI::ExistingFile);
    tr->add_option("--out-dir", out_dir)->required();
    tr->add_flag("--fresh", fresh, "Ignore checkpoints already in --out-dir");
    train_args.add(tr, true);

    auto* sel = app.add_subcommand("select", "Pick the best checkpoint of a training run");
    std::string ckpt_dir;
    std::optional<std::string> out_opt;
    sel->add_option("--dataset", dataset)->required()->check(CLI::ExistingFile);
    sel->add_option("--checkpoints", ckpt_dir)->required()->check(CLI::ExistingDirectory);
    sel->add_option("--seed", seed);
    sel->add_option("--out", out_opt);

    auto* gn = app.add_subcommand("generate", "Generate levels from a checkpoint");
    std::string model;
    int width = 9;
    int height = 11;
    std::string symmetry = "vertical";
    std::optional<double> moves;
    std::string format = "json";
    gn->add_option("--model", model)->required()->check(CLI::ExistingFile);
    gn->add_option("--width", width)->required();
    gn->add_option("--height", height)->required();
    gn->add_option("--symmetry", symmetry)->check(CLI::IsMember({"vertical", "horizontal", "quadrant"}));
    gn->add_option("--moves", moves);
    gn->add_option("--seed", seed);
    gn->add_option("--count", count = 1)->check(CLI::PositiveNumber);
    gn->add_option("--format", format)->check(CLI::IsMember({"json", "ascii"}));
    gn->add_option("--out", out_opt);

    auto* ev = app.add_subcommand("evaluate", "Run the 144-level sweep and every metric");
    bool details = false;
    std::optional<std::string> csv;
    ev->add_option("--model", model)->required()->check(CLI::ExistingFile);
    ev->add_option("--dataset", dataset)->required()->check(CLI::ExistingFile);
    ev->add_option("--seed", seed);
    ev->add_option("--out", out_opt);
    ev->add_option("--csv", csv, "Per-level CSV");
    ev->add_flag("--details", details, "Include every generated level in the JSON report");
    bot_args.add(ev);

    auto* ab = app.add_subcommand("ablation", "Train, select and evaluate both variants");
    std::optional<double> vanilla_lr;
    ab->add_option("--dataset", dataset)->required()->check(CLI::ExistingFile);
    ab->add_option("--out-dir", out_dir)->required();
    ab->add_option("--seed", seed);
    ab->add_option("--out", out_opt);
    ab->add_option("--vanilla-lr", vanilla_lr)->check(CLI::PositiveNumber);
    train_args.add(ab, false);
    bot_args.add(ab);

    auto* pipe = app.add_subcommand("pipeline", "gen-dataset, annotate, train, select and evaluate in one go");
    pipe->add_option("--work-dir", out_dir)->required();
    pipe->add_option("--style", style)->check(CLI::IsMember({"main", "stylized"}));
    pipe->add_option("--count", count = 198)->check(CLI::PositiveNumber);
    pipe->add_option("--seed", seed);
    train_args.add(pipe, false);
    bot_args.add(pipe);

    auto* sv = app.add_subcommand("serve", "HTTP API for the designer UI");
    std::string host = "127.0.0.1";
    int port = 8080;
    int workers = 2;
    std::optional<std::string> static_dir;
    sv->add_option("--model", model)->required()->check(CLI::ExistingFile);
    sv->add_option("--host", host);
    sv->add_option("--port", port)->check(CLI::Range(1, 65535));
    sv->add_option("--workers", workers, "Concurrent bot validations")->check(CLI::PositiveNumber);
    sv->add_option("--static", static_dir, "Directory served under /")->check(CLI::ExistingDirectory);
    bot_args.add(sv);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) return run_gen_dataset(style, count, seed, out_path);
        if (*ann) return run_annotate(in_path, out_path, bot_args.config());
        if (*tr) return run_train(dataset, train_args.config(*parse_variant(train_args.variant)), out_dir, fresh);
        if (*sel) return run_select(dataset, ckpt_dir, seed, out_opt);
        if (*gn) {
            if (width < kMinWidth || width > kMaxWidth) throw CLI::ValidationError("width must be in [4,9]");
            if (height < kMinHeight || height > kMaxHeight) throw CLI::ValidationError("height must be in [4,11]");
            return run_generate(model, width, height, symmetry, moves, seed, count, format, out_opt);
        }
        if (*ev) return run_evaluate(model, dataset, seed, bot_args.config(), details, csv, out_opt);
        if (*ab) return run_ablation_cmd(dataset, out_dir, seed, train_args, vanilla_lr, bot_args.config(), out_opt);
        if (*pipe) return run_pipeline(out_dir, style, count, seed, train_args, bot_args.config());
        if (*sv) {
            ServiceConfig config;
            config.checkpoint = model;
            config.static_dir = static_dir ? std::optional<fs::path>(*static_dir) : std::nullopt;
            config.bot = bot_args.config();
            config.validation_workers = workers;
            Service service(config);
            service.load_async();
            std::cerr << "serving on http://" << host << ":" << port << "\n";
            service.listen(host, port);
            return 0;
        }
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n" << gn->help();
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
