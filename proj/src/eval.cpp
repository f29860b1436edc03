#include "avalon/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "avalon/json_io.hpp"
#include "avalon/parallel.hpp"

namespace avalon {

namespace {

constexpr std::uint64_t kDifficultyTag = 0x44494646ULL;

double percent(std::size_t hits, std::size_t total) {
    return total == 0 ? 0.0 : 100.0 * static_cast<double>(hits) / static_cast<double>(total);
}

std::vector<LevelGrid> levels_of(const std::vector<SweepItem>& items) {
    std::vector<LevelGrid> out;
    out.reserve(items.size());
    for (const auto& item : items) out.push_back(item.level);
    return out;
}

bool size_matches(const LevelGrid& level, LevelSize size) {
    return level.count(CellKind::Playfield) > 0 && measure_size(level) == size;
}

int count_in_area(const LevelGrid& level, LevelSize size, CellKind kind) {
    int n = 0;
    const Coord o = size.origin();
    for (int y = o.y; y < o.y + size.height; ++y) {
        for (int x = o.x; x < o.x + size.width; ++x) n += level.at(x, y) == kind;
    }
    return n;
}

}  // namespace

std::vector<SweepItem> inference_sweep(const Checkpoint& checkpoint, const DatasetManifest& manifest,
                                       const SweepSpec& spec) {
    const bool conditioned = checkpoint.model.config().conditioned_on_difficulty();
    Rng difficulty(derive_seed(spec.seed, kDifficultyTag));
    const double lo = manifest.m_min;
    const double hi = std::max(manifest.m_min, spec.difficulty_max);

    std::vector<SweepItem> items;
    items.reserve(spec.total());
    for (const LevelSize size : spec.sizes) {
        for (const SymmetryKind symmetry : spec.symmetries) {
            SweepItem item;
            item.spec.size = size;
            item.spec.symmetry = symmetry;
            if (conditioned) item.spec.target_moves = difficulty.uniform(lo, hi);
            items.push_back(item);
        }
    }
    parallel_for(items.size(), [&](std::size_t i) {
        items[i].level = generate(checkpoint, items[i].spec, derive_seed(spec.seed, i));
    });
    return items;
}

double size_accuracy(const std::vector<SweepItem>& items) {
    std::size_t hits = 0;
    for (const auto& item : items) hits += size_matches(item.level, item.spec.size);
    return percent(hits, items.size());
}

double diversity_accuracy(const std::vector<LevelGrid>& levels) {
    std::size_t distinct = 0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < levels.size(); ++i) {
        for (std::size_t j = i + 1; j < levels.size(); ++j) {
            distinct += !(levels[i] == levels[j]);
            ++pairs;
        }
    }
    return percent(distinct, pairs);
}

double diversity_accuracy(const std::vector<SweepItem>& items) { return diversity_accuracy(levels_of(items)); }

std::vector<PlaythroughStats> validate_levels(const std::vector<SweepItem>& items, const BotConfig& config) {
    std::vector<PlaythroughStats> stats(items.size());
    parallel_for(items.size(), [&](std::size_t i) { stats[i] = evaluate_level(items[i].level, config); });
    return stats;
}

bool within_difficulty_window(double target, double validated_median, double validated_std) {
    return std::abs(target - validated_median) <= validated_std;
}

DifficultyAccuracy difficulty_accuracy(const std::vector<SweepItem>& items,
                                       const std::vector<PlaythroughStats>& validated) {
    if (items.size() != validated.size()) throw std::invalid_argument("one validation per level is required");
    DifficultyAccuracy out;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (!items[i].spec.target_moves) throw std::invalid_argument("difficulty accuracy needs target moves");
        const double target = *items[i].spec.target_moves;
        hits += within_difficulty_window(target, validated[i].median_moves, validated[i].std_moves);
        out.distances.push_back(std::abs(target - validated[i].median_moves));
    }
    out.accuracy = percent(hits, items.size());
    if (!out.distances.empty()) {
        double mean = 0.0;
        for (double d : out.distances) mean += d;
        mean /= static_cast<double>(out.distances.size());
        double var = 0.0;
        for (double d : out.distances) var += (d - mean) * (d - mean);
        out.distance_mean = mean;
        out.distance_std = std::sqrt(var / static_cast<double>(out.distances.size()));
    }
    return out;
}

DifficultyAccuracy difficulty_accuracy(const std::vector<SweepItem>& items, const BotConfig& config) {
    return difficulty_accuracy(items, validate_levels(items, config));
}

double plagiarism_score(const std::vector<LevelGrid>& levels, const DatasetManifest& manifest) {
    std::set<std::array<CellKind, kCanvasCells>> train;
    for (const AnnotatedLevel* level : manifest.split(Split::Train)) train.insert(level->grid.cells());
    std::size_t copies = 0;
    for (const auto& level : levels) copies += train.contains(level.cells());
    return percent(copies, levels.size());
}

double plagiarism_score(const std::vector<SweepItem>& items, const DatasetManifest& manifest) {
    return plagiarism_score(levels_of(items), manifest);
}

double valid_level_pct(const std::vector<PlaythroughStats>& validated, double threshold) {
    std::size_t valid = 0;
    for (const auto& s : validated) valid += s.median_moves <= threshold;
    return percent(valid, validated.size());
}

double valid_level_pct(const std::vector<SweepItem>& items, const BotConfig& config, double threshold) {
    return valid_level_pct(validate_levels(items, config), threshold);
}

double median_of(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("median of an empty sample");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double quantile_linear(std::vector<double> values, double q) {
    if (values.empty()) throw std::invalid_argument("quantile of an empty sample");
    std::sort(values.begin(), values.end());
    const double pos = (static_cast<double>(values.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

double tile_distribution_accuracy(const std::vector<SweepItem>& items, const DatasetManifest& manifest,
                                  std::vector<TileBucket>* buckets) {
    auto key = [](LevelSize s) { return std::pair{s.width, s.height}; };
    std::map<std::pair<int, int>, std::vector<const LevelGrid*>> train_by_size;
    for (const AnnotatedLevel* level : manifest.split(Split::Train)) {
        train_by_size[key(level->size)].push_back(&level->grid);
    }
    std::map<std::pair<int, int>, std::vector<const LevelGrid*>> generated_by_size;
    for (const auto& item : items) generated_by_size[key(item.spec.size)].push_back(&item.level);

    std::size_t accurate = 0;
    std::size_t total = 0;
    for (const auto& [wh, train] : train_by_size) {
        if (train.size() < 3) continue;
        const auto generated = generated_by_size.find(wh);
        if (generated == generated_by_size.end()) continue;
        const LevelSize size{wh.first, wh.second};
        for (int k = 0; k < kCellKinds; ++k) {
            const auto kind = static_cast<CellKind>(k);
            std::vector<double> train_counts;
            for (const LevelGrid* g : train) train_counts.push_back(count_in_area(*g, size, kind));
            std::vector<double> inferred;
            for (const LevelGrid* g : generated->second) inferred.push_back(count_in_area(*g, size, kind));
            TileBucket bucket;
            bucket.kind = kind;
            bucket.size = size;
            bucket.q1 = quantile_linear(train_counts, 0.25);
            bucket.q3 = quantile_linear(train_counts, 0.75);
            bucket.inference_median = median_of(inferred);
            bucket.accurate = bucket.inference_median >= bucket.q1 && bucket.inference_median <= bucket.q3;
            accurate += bucket.accurate;
            ++total;
            if (buckets != nullptr) buckets->push_back(bucket);
        }
    }
    if (total == 0) throw std::runtime_error("insufficient training coverage");
    return percent(accurate, total);
}

nlohmann::json MetricsReport::to_json(bool with_details) const {
    auto optional = [](const std::optional<double>& v) -> nlohmann::json {
        return v ? nlohmann::json(*v) : nlohmann::json("N/A");
    };
    nlohmann::json j{{"variant", to_string(variant)},
                     {"epoch", epoch},
                     {"size_accuracy", size_accuracy},
                     {"diversity_accuracy", diversity_accuracy},
                     {"plagiarism_score", plagiarism_score},
                     {"difficulty_accuracy", optional(difficulty_accuracy)},
                     {"difficulty_distance_mean", optional(difficulty_distance_mean)},
                     {"difficulty_distance_std", optional(difficulty_distance_std)},
                     {"valid_levels", valid_level_pct},
                     {"tile_distribution_accuracy", tile_distribution_accuracy}};
    if (with_details) {
        j["levels"] = nlohmann::json::array();
        for (const auto& d : details) {
            nlohmann::json row = level_to_json(d.level);
            row["requested_width"] = d.spec.size.width;
            row["requested_height"] = d.spec.size.height;
            row["requested_symmetry"] = to_string(d.spec.symmetry);
            row["target_moves"] = d.spec.target_moves ? nlohmann::json(*d.spec.target_moves) : nlohmann::json();
            row["size_ok"] = d.size_ok;
            row["plagiarized"] = d.plagiarized;
            if (d.validated) {
                row["median_moves"] = d.validated->median_moves;
                row["std_moves"] = d.validated->std_moves;
                row["success_rate"] = d.validated->success_rate;
            }
            j["levels"].push_back(std::move(row));
        }
    }
    return j;
}

std::string MetricsReport::details_csv() const {
    std::ostringstream out;
    out << "width,height,symmetry,target_moves,measured_width,measured_height,size_ok,plagiarized,"
           "median_moves,std_moves,success_rate,valid\n";
    for (const auto& d : details) {
        out << d.spec.size.width << ',' << d.spec.size.height << ',' << to_string(d.spec.symmetry) << ',';
        if (d.spec.target_moves) out << *d.spec.target_moves;
        out << ',' << d.measured.width << ',' << d.measured.height << ',' << d.size_ok << ',' << d.plagiarized << ',';
        if (d.validated) {
            out << d.validated->median_moves << ',' << d.validated->std_moves << ',' << d.validated->success_rate << ','
                << (d.validated->median_moves <= kValidMoves);
        } else {
            out << ",,,";
        }
        out << '\n';
    }
    return out.str();
}

MetricsReport evaluate(const Checkpoint& checkpoint, const DatasetManifest& manifest, const SweepSpec& spec,
                       const BotConfig& bot) {
    const auto items = inference_sweep(checkpoint, manifest, spec);
    const auto validated = validate_levels(items, bot);
    MetricsReport report;
    report.variant = checkpoint.model.config().variant;
    report.epoch = checkpoint.epoch;
    report.size_accuracy = size_accuracy(items);
    report.diversity_accuracy = diversity_accuracy(items);
    report.plagiarism_score = plagiarism_score(items, manifest);
    report.valid_level_pct = valid_level_pct(validated);
    report.tile_distribution_accuracy = tile_distribution_accuracy(items, manifest);
    if (checkpoint.model.config().conditioned_on_difficulty()) {
        const auto d = difficulty_accuracy(items, validated);
        report.difficulty_accuracy = d.accuracy;
        report.difficulty_distance_mean = d.distance_mean;
        report.difficulty_distance_std = d.distance_std;
    }
    const auto train = manifest.split(Split::Train);
    for (std::size_t i = 0; i < items.size(); ++i) {
        LevelDetail d;
        d.spec = items[i].spec;
        d.level = items[i].level;
        if (d.level.count(CellKind::Playfield) > 0) d.measured = measure_size(d.level);
        else d.measured = {0, 0};
        d.size_ok = d.measured == d.spec.size;
        d.plagiarized = std::any_of(train.begin(), train.end(),
                                    [&](const AnnotatedLevel* t) { return t->grid == d.level; });
        d.validated = validated[i];
        report.details.push_back(std::move(d));
    }
    return report;
}

Selection select_checkpoint(const std::vector<std::filesystem::path>& checkpoints, const DatasetManifest& manifest,
                            const SweepSpec& spec) {
    if (checkpoints.empty()) throw std::invalid_argument("no checkpoints to select from");
    Selection selection;
    const CheckpointScore* best = nullptr;
    for (const auto& path : checkpoints) {
        const Checkpoint ckpt = load_checkpoint(path);
        const auto items = inference_sweep(ckpt, manifest, spec);
        CheckpointScore score;
        score.path = path;
        score.epoch = ckpt.epoch;
        score.size = size_accuracy(items);
        score.diversity = diversity_accuracy(items);
        score.tile_distribution = tile_distribution_accuracy(items, manifest);
        score.mean = (score.size + score.diversity + score.tile_distribution) / 3.0;
        selection.scores.push_back(score);
    }
    for (const auto& score : selection.scores) {
        if (best == nullptr || score.mean > best->mean || (score.mean == best->mean && score.epoch > best->epoch)) {
            best = &score;
        }
    }
    selection.best = best->path;
    return selection;
}

double dataset_valid_pct(const DatasetManifest& manifest, double threshold) {
    std::size_t valid = 0;
    for (const auto& level : manifest.levels) valid += level.median_moves <= threshold;
    return percent(valid, manifest.levels.size());
}

nlohmann::json AblationReport::to_json() const {
    auto scores = [](const Selection& s) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& c : s.scores) {
            arr.push_back({{"epoch", c.epoch},
                           {"size", c.size},
                           {"diversity", c.diversity},
                           {"tile_distribution", c.tile_distribution},
                           {"mean", c.mean}});
        }
        return arr;
    };
    return {{"avalon", avalon.to_json()},
            {"vanilla", vanilla.to_json()},
            {"dataset_valid_levels", dataset_valid_pct},
            {"avalon_selection", scores(avalon_selection)},
            {"vanilla_selection", scores(vanilla_selection)}};
}

AblationReport run_ablation(const DatasetManifest& manifest, const ModelConfig& avalon_config,
                            const ModelConfig& vanilla_config, std::uint64_t seed,
                            const std::filesystem::path& out_dir, const BotConfig& bot) {
    AblationReport report;
    report.dataset_valid_pct = dataset_valid_pct(manifest);
    SweepSpec spec;
    spec.seed = seed;
    auto run = [&](const ModelConfig& config, const char* name, Selection& selection) {
        TrainOptions options;
        options.out_dir = out_dir / name;
        const auto checkpoints = train(manifest, config, options);
        selection = select_checkpoint(checkpoints, manifest, spec);
        return evaluate(load_checkpoint(selection.best), manifest, spec, bot);
    };
    report.avalon = run(avalon_config, "avalon", report.avalon_selection);
    report.vanilla = run(vanilla_config, "vanilla", report.vanilla_selection);
    return report;
}

}  // namespace avalon
