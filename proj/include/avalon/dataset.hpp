#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "avalon/bot.hpp"
#include "avalon/grid.hpp"

namespace avalon {

enum class Split : std::uint8_t { Train, Val, Test };
enum class DatasetStyle : std::uint8_t { Main, Stylized };

std::string_view to_string(Split split);
std::string_view to_string(DatasetStyle style);

struct AnnotatedLevel {
    LevelGrid grid;
    SymmetryKind symmetry = SymmetryKind::Unknown;
    LevelSize size;
    double median_moves = 0.0;
    double std_moves = 0.0;
    Split split = Split::Train;

    friend bool operator==(const AnnotatedLevel&, const AnnotatedLevel&) = default;
};

struct DatasetManifest {
    std::vector<AnnotatedLevel> levels;
    double m_min = 0.0;
    double m_max = 0.0;
    DatasetStyle style = DatasetStyle::Main;
    std::uint64_t generator_seed = 0;
    // False for freshly generated levels that carry no bot statistics yet.
    bool annotated = false;

    std::vector<const AnnotatedLevel*> split(Split which) const;

    friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

/// Rule-based main-style levels: mirrored BLOCK/GAP scatter with rejection.
/// Throws std::runtime_error("generator starved") after 1000 rejections for one level.
std::vector<LevelGrid> generate_main_style(int count, std::uint64_t seed);

/// Full play area with exactly one 2x2 BLOCK square placed uniformly inside it.
std::vector<LevelGrid> generate_stylized(int count, std::uint64_t seed);

struct SplitCounts {
    int train = 0;
    int val = 0;
    int test = 0;
};

/// 170/15/13 out of 198, scaled to `count`.
SplitCounts split_counts(int count);

/// Runs the bot on every level, assigns splits by a shuffle seeded from
/// `generator_seed`, and computes the TRAIN difficulty bounds.
DatasetManifest annotate(const std::vector<LevelGrid>& levels, const BotConfig& config,
                         DatasetStyle style, std::uint64_t generator_seed);

/// Recomputes m_min/m_max from the TRAIN medians.
void refresh_bounds(DatasetManifest& manifest);

/// clamp((median - m_min) / (m_max - m_min), 0, 1).
/// Throws std::domain_error("degenerate difficulty range") when m_max <= m_min.
double normalize_difficulty(double median_moves, double m_min, double m_max);
double normalize_difficulty(double median_moves, const DatasetManifest& manifest);

class ManifestParseError : public std::runtime_error {
public:
    ManifestParseError(int record, const std::string& what)
        : std::runtime_error(record < 0 ? what : "level " + std::to_string(record) + ": " + what),
          record_(record) {}
    int record() const { return record_; }

private:
    int record_;
};

std::string manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(std::string_view text);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

}  // namespace avalon
