#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "avalon/bot.hpp"
#include "avalon/dataset.hpp"
#include "avalon/model.hpp"

namespace avalon {

struct SweepSpec {
    std::vector<LevelSize> sizes = all_sizes();
    std::vector<SymmetryKind> symmetries{SymmetryKind::Vertical, SymmetryKind::Horizontal, SymmetryKind::Quadrant};
    /// Upper end of the uniform difficulty draw (the validity threshold).
    double difficulty_max = kValidMoves;
    std::uint64_t seed = 0;

    std::size_t total() const { return sizes.size() * symmetries.size(); }
};

struct SweepItem {
    ConditionSpec spec;
    LevelGrid level;
};

/// Every (size, symmetry) pair once, sizes outermost. Avalon targets are drawn
/// uniformly from [m_min, difficulty_max] of the manifest.
std::vector<SweepItem> inference_sweep(const Checkpoint& checkpoint, const DatasetManifest& manifest,
                                       const SweepSpec& spec);

/// Percentage of levels whose measured size equals the requested size.
double size_accuracy(const std::vector<SweepItem>& items);

/// Percentage of unordered level pairs that differ in at least one cell.
double diversity_accuracy(const std::vector<LevelGrid>& levels);
double diversity_accuracy(const std::vector<SweepItem>& items);

/// Bot statistics for every generated level, same protocol as annotation.
std::vector<PlaythroughStats> validate_levels(const std::vector<SweepItem>& items, const BotConfig& config);

struct DifficultyAccuracy {
    double accuracy = 0.0;
    double distance_mean = 0.0;
    double distance_std = 0.0;  // population
    std::vector<double> distances;
};

/// A level is accurate iff |target - validated median| <= validated std.
bool within_difficulty_window(double target, double validated_median, double validated_std);

/// Requires target_moves on every item; throws std::invalid_argument otherwise.
DifficultyAccuracy difficulty_accuracy(const std::vector<SweepItem>& items,
                                       const std::vector<PlaythroughStats>& validated);
DifficultyAccuracy difficulty_accuracy(const std::vector<SweepItem>& items, const BotConfig& config);

/// Percentage of generated levels equal (all 99 cells) to some TRAIN level.
double plagiarism_score(const std::vector<SweepItem>& items, const DatasetManifest& manifest);
double plagiarism_score(const std::vector<LevelGrid>& levels, const DatasetManifest& manifest);

/// Percentage of levels whose validated median is <= threshold.
double valid_level_pct(const std::vector<PlaythroughStats>& validated, double threshold = kValidMoves);
double valid_level_pct(const std::vector<SweepItem>& items, const BotConfig& config,
                       double threshold = kValidMoves);

/// Median of a sample (mean of the middle pair for even sizes).
double median_of(std::vector<double> values);
/// Linear-interpolation quantile: position (n - 1) * q over the sorted sample.
double quantile_linear(std::vector<double> values, double q);

struct TileBucket {
    CellKind kind = CellKind::Playfield;
    LevelSize size;
    double q1 = 0.0;
    double q3 = 0.0;
    double inference_median = 0.0;
    bool accurate = false;
};

/// Buckets are (cell kind, board size) with >= 3 TRAIN levels of that size and
/// at least one generated level requested at that size. Counts are taken inside
/// the play area. A bucket is accurate iff the inference median lies in [Q1, Q3].
/// Throws std::runtime_error("insufficient training coverage") when no bucket qualifies.
double tile_distribution_accuracy(const std::vector<SweepItem>& items, const DatasetManifest& manifest,
                                  std::vector<TileBucket>* buckets = nullptr);

struct LevelDetail {
    ConditionSpec spec;
    LevelSize measured;
    bool size_ok = false;
    bool plagiarized = false;
    std::optional<PlaythroughStats> validated;
    LevelGrid level;
};

struct MetricsReport {
    Variant variant = Variant::Avalon;
    int epoch = 0;
    double size_accuracy = 0.0;
    double diversity_accuracy = 0.0;
    std::optional<double> difficulty_accuracy;
    std::optional<double> difficulty_distance_mean;
    std::optional<double> difficulty_distance_std;
    double plagiarism_score = 0.0;
    double valid_level_pct = 0.0;
    double tile_distribution_accuracy = 0.0;
    std::vector<LevelDetail> details;

    nlohmann::json to_json(bool with_details = false) const;
    std::string details_csv() const;
};

/// Full metric suite on one sweep, including bot validation of every level.
MetricsReport evaluate(const Checkpoint& checkpoint, const DatasetManifest& manifest, const SweepSpec& spec,
                       const BotConfig& bot);

struct CheckpointScore {
    std::filesystem::path path;
    int epoch = 0;
    double size = 0.0;
    double diversity = 0.0;
    double tile_distribution = 0.0;
    double mean = 0.0;
};

struct Selection {
    std::filesystem::path best;
    std::vector<CheckpointScore> scores;
};

/// Argmax over checkpoints of mean(size, diversity, tile distribution) on a sweep
/// with the same seed; ties go to the later epoch.
Selection select_checkpoint(const std::vector<std::filesystem::path>& checkpoints, const DatasetManifest& manifest,
                            const SweepSpec& spec);

/// Percentage of manifest levels whose median is within the validity threshold.
double dataset_valid_pct(const DatasetManifest& manifest, double threshold = kValidMoves);

struct AblationReport {
    MetricsReport avalon;
    MetricsReport vanilla;
    Selection avalon_selection;
    Selection vanilla_selection;
    double dataset_valid_pct = 0.0;

    nlohmann::json to_json() const;
};

/// Trains (or resumes) both variants under out_dir/{avalon,vanilla}, selects each
/// best checkpoint and evaluates both on sweeps seeded by `seed`.
AblationReport run_ablation(const DatasetManifest& manifest, const ModelConfig& avalon_config,
                            const ModelConfig& vanilla_config, std::uint64_t seed,
                            const std::filesystem::path& out_dir, const BotConfig& bot);

}  // namespace avalon
