#include "avalon/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "avalon/json_io.hpp"
#include "avalon/parallel.hpp"

namespace avalon {

namespace {

constexpr int kStarvationLimit = 1000;
constexpr int kMinPlayfieldCells = 12;

SymmetryKind sample_symmetry(Rng& rng) {
    const double u = rng.uniform01();
    if (u < 0.30) return SymmetryKind::Vertical;
    if (u < 0.50) return SymmetryKind::Horizontal;
    if (u < 0.70) return SymmetryKind::Quadrant;
    return SymmetryKind::Unknown;
}

bool acceptable(const LevelGrid& level, LevelSize size) {
    if (level.count(CellKind::Playfield) < kMinPlayfieldCells) return false;
    const Coord o = size.origin();
    for (int j = 0; j < size.width; ++j) {
        bool any = false;
        for (int i = 0; i < size.height && !any; ++i) {
            any = level.at(o.x + j, o.y + i) == CellKind::Playfield;
        }
        if (!any) return false;
    }
    // Broken rows/columns would shrink the measured size and strand cells outside it.
    return measure_size(level) == size;
}

}  // namespace

std::string_view to_string(Split split) {
    switch (split) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "train";
}

std::string_view to_string(DatasetStyle style) {
    return style == DatasetStyle::Main ? "main" : "stylized";
}

std::vector<const AnnotatedLevel*> DatasetManifest::split(Split which) const {
    std::vector<const AnnotatedLevel*> out;
    for (const auto& level : levels) {
        if (level.split == which) out.push_back(&level);
    }
    return out;
}

std::vector<LevelGrid> generate_main_style(int count, std::uint64_t seed) {
    if (count < 1) throw std::invalid_argument("count must be at least 1");
    const auto sizes = all_sizes();
    Rng rng(seed);
    std::vector<LevelGrid> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int n = 0; n < count; ++n) {
        const LevelSize size = sizes[rng.uniform_below(static_cast<std::uint32_t>(sizes.size()))];
        const SymmetryKind symmetry = sample_symmetry(rng);
        const BinaryMask kept = build_symmetry_mask(size, symmetry);
        bool accepted = false;
        for (int attempt = 0; attempt < kStarvationLimit && !accepted; ++attempt) {
            const double block_density = rng.uniform(0.05, 0.25);
            const double gap_density = rng.uniform(0.0, 0.08);
            LevelGrid partial;
            for (int y = 0; y < kCanvasHeight; ++y) {
                for (int x = 0; x < kCanvasWidth; ++x) {
                    if (!size.contains(x, y) || !kept.at(x, y)) continue;
                    const double u = rng.uniform01();
                    const CellKind kind = u < block_density               ? CellKind::Block
                                          : u < block_density + gap_density ? CellKind::Gap
                                                                            : CellKind::Playfield;
                    partial.set(x, y, kind);
                }
            }
            LevelGrid level = complete_symmetry(partial, size, symmetry);
            if (acceptable(level, size)) {
                out.push_back(level);
                accepted = true;
            }
        }
        if (!accepted) throw std::runtime_error("generator starved");
    }
    return out;
}

std::vector<LevelGrid> generate_stylized(int count, std::uint64_t seed) {
    if (count < 1) throw std::invalid_argument("count must be at least 1");
    const auto sizes = all_sizes();
    Rng rng(seed);
    std::vector<LevelGrid> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int n = 0; n < count; ++n) {
        const LevelSize size = sizes[rng.uniform_below(static_cast<std::uint32_t>(sizes.size()))];
        LevelGrid level = clip_to_play_area(LevelGrid::filled(CellKind::Playfield), size);
        const Coord o = size.origin();
        const int bx = static_cast<int>(rng.uniform_below(static_cast<std::uint32_t>(size.width - 1)));
        const int by = static_cast<int>(rng.uniform_below(static_cast<std::uint32_t>(size.height - 1)));
        for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) level.set(o.x + bx + dx, o.y + by + dy, CellKind::Block);
        }
        out.push_back(level);
    }
    return out;
}

SplitCounts split_counts(int count) {
    SplitCounts c;
    c.val = static_cast<int>(std::lround(count * 15.0 / 198.0));
    c.test = static_cast<int>(std::lround(count * 13.0 / 198.0));
    c.train = count - c.val - c.test;
    if (c.train < 1 && count >= 1) {
        c = {count, 0, 0};
    }
    return c;
}

void refresh_bounds(DatasetManifest& manifest) {
    bool first = true;
    for (const auto& level : manifest.levels) {
        if (level.split != Split::Train) continue;
        if (first) {
            manifest.m_min = manifest.m_max = level.median_moves;
            first = false;
        } else {
            manifest.m_min = std::min(manifest.m_min, level.median_moves);
            manifest.m_max = std::max(manifest.m_max, level.median_moves);
        }
    }
}

DatasetManifest annotate(const std::vector<LevelGrid>& levels, const BotConfig& config,
                         DatasetStyle style, std::uint64_t generator_seed) {
    if (levels.empty()) throw std::invalid_argument("no levels to annotate");
    std::vector<PlaythroughStats> stats(levels.size());
    parallel_for(levels.size(), [&](std::size_t i) { stats[i] = evaluate_level(levels[i], config); });

    std::vector<std::size_t> order(levels.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle(derive_seed(generator_seed, 0x53504c4954ULL));
    for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[shuffle.uniform_below(static_cast<std::uint32_t>(i))]);
    }
    const SplitCounts counts = split_counts(static_cast<int>(levels.size()));
    std::vector<Split> assignment(levels.size());
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
        const int r = static_cast<int>(rank);
        assignment[order[rank]] = r < counts.train              ? Split::Train
                                  : r < counts.train + counts.val ? Split::Val
                                                                  : Split::Test;
    }

    DatasetManifest manifest;
    manifest.style = style;
    manifest.generator_seed = generator_seed;
    manifest.annotated = true;
    for (std::size_t i = 0; i < levels.size(); ++i) {
        AnnotatedLevel level;
        level.grid = levels[i];
        level.size = measure_size(levels[i]);
        level.symmetry = detect_symmetry(levels[i], level.size);
        level.median_moves = stats[i].median_moves;
        level.std_moves = stats[i].std_moves;
        level.split = assignment[i];
        manifest.levels.push_back(level);
    }
    refresh_bounds(manifest);
    return manifest;
}

double normalize_difficulty(double median_moves, double m_min, double m_max) {
    if (!(m_max > m_min)) throw std::domain_error("degenerate difficulty range");
    return std::clamp((median_moves - m_min) / (m_max - m_min), 0.0, 1.0);
}

double normalize_difficulty(double median_moves, const DatasetManifest& manifest) {
    return normalize_difficulty(median_moves, manifest.m_min, manifest.m_max);
}

nlohmann::json grid_to_json(const LevelGrid& grid) {
    nlohmann::json rows = nlohmann::json::array();
    for (int y = 0; y < kCanvasHeight; ++y) {
        nlohmann::json row = nlohmann::json::array();
        for (int x = 0; x < kCanvasWidth; ++x) row.push_back(static_cast<int>(grid.at(x, y)));
        rows.push_back(std::move(row));
    }
    return rows;
}

LevelGrid grid_from_json(const nlohmann::json& rows) {
    if (!rows.is_array() || rows.size() != static_cast<std::size_t>(kCanvasHeight)) {
        throw std::invalid_argument("grid must have 11 rows");
    }
    LevelGrid grid;
    for (int y = 0; y < kCanvasHeight; ++y) {
        const auto& row = rows[static_cast<std::size_t>(y)];
        if (!row.is_array() || row.size() != static_cast<std::size_t>(kCanvasWidth)) {
            throw std::invalid_argument("grid row " + std::to_string(y) + " must have 9 cells");
        }
        for (int x = 0; x < kCanvasWidth; ++x) {
            const auto& cell = row[static_cast<std::size_t>(x)];
            if (!cell.is_number_integer() || cell.get<int>() < 0 || cell.get<int>() > 2) {
                throw std::invalid_argument("grid cell (" + std::to_string(x) + "," + std::to_string(y) +
                                            ") must be 0, 1 or 2");
            }
            grid.set(x, y, static_cast<CellKind>(cell.get<int>()));
        }
    }
    return grid;
}

nlohmann::json level_to_json(const AnnotatedLevel& level, bool annotated) {
    nlohmann::json j;
    j["grid"] = grid_to_json(level.grid);
    j["symmetry"] = to_string(level.symmetry);
    j["width"] = level.size.width;
    j["height"] = level.size.height;
    if (annotated) {
        j["median_moves"] = level.median_moves;
        j["std_moves"] = level.std_moves;
        j["split"] = to_string(level.split);
    }
    return j;
}

nlohmann::json level_to_json(const LevelGrid& grid) {
    AnnotatedLevel level;
    level.grid = grid;
    if (grid.count(CellKind::Playfield) > 0) level.size = measure_size(grid);
    level.symmetry = detect_symmetry(grid);
    return level_to_json(level, false);
}

std::string manifest_to_json(const DatasetManifest& manifest) {
    nlohmann::json j;
    j["style"] = to_string(manifest.style);
    j["generator_seed"] = manifest.generator_seed;
    j["m_min"] = manifest.m_min;
    j["m_max"] = manifest.m_max;
    const bool annotated = manifest.annotated;
    j["levels"] = nlohmann::json::array();
    for (const auto& level : manifest.levels) j["levels"].push_back(level_to_json(level, annotated));
    return j.dump() + "\n";
}

namespace {

AnnotatedLevel parse_level(const nlohmann::json& j) {
    if (!j.is_object()) throw std::invalid_argument("level record must be an object");
    if (!j.contains("grid")) throw std::invalid_argument("missing grid");
    AnnotatedLevel level;
    level.grid = grid_from_json(j.at("grid"));
    if (!is_well_formed(level.grid)) throw std::invalid_argument("grid is not a well-formed centered level");

    const auto symmetry = parse_symmetry(j.at("symmetry").get<std::string>());
    if (!symmetry) throw std::invalid_argument("unknown symmetry '" + j.at("symmetry").get<std::string>() + "'");
    level.symmetry = *symmetry;
    level.size = {j.at("width").get<int>(), j.at("height").get<int>()};
    if (!level.size.valid()) throw std::invalid_argument("size out of range");
    if (!(measure_size(level.grid) == level.size)) throw std::invalid_argument("width/height disagree with grid");
    if (detect_symmetry(level.grid, level.size) != level.symmetry) {
        throw std::invalid_argument("symmetry label disagrees with grid");
    }

    if (j.contains("median_moves")) {
        level.median_moves = j.at("median_moves").get<double>();
        level.std_moves = j.at("std_moves").get<double>();
        if (!std::isfinite(level.median_moves) || level.median_moves < 1.0) {
            throw std::invalid_argument("median_moves must be at least 1");
        }
        if (!std::isfinite(level.std_moves) || level.std_moves < 0.0) {
            throw std::invalid_argument("std_moves must be non-negative");
        }
    }
    if (j.contains("split")) {
        const auto s = j.at("split").get<std::string>();
        if (s == "train") level.split = Split::Train;
        else if (s == "val") level.split = Split::Val;
        else if (s == "test") level.split = Split::Test;
        else throw std::invalid_argument("unknown split '" + s + "'");
    }
    return level;
}

}  // namespace

DatasetManifest manifest_from_json(std::string_view text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ManifestParseError(-1, std::string("malformed JSON: ") + e.what());
    }
    DatasetManifest manifest;
    try {
        const auto style = j.at("style").get<std::string>();
        if (style == "main") manifest.style = DatasetStyle::Main;
        else if (style == "stylized") manifest.style = DatasetStyle::Stylized;
        else throw std::invalid_argument("unknown style '" + style + "'");
        manifest.generator_seed = j.at("generator_seed").get<std::uint64_t>();
        manifest.m_min = j.at("m_min").get<double>();
        manifest.m_max = j.at("m_max").get<double>();
        if (!j.at("levels").is_array()) throw std::invalid_argument("levels must be an array");
    } catch (const std::exception& e) {
        throw ManifestParseError(-1, e.what());
    }
    const auto& levels = j.at("levels");
    manifest.annotated = !levels.empty();
    for (std::size_t i = 0; i < levels.size(); ++i) {
        try {
            manifest.levels.push_back(parse_level(levels[i]));
            manifest.annotated = manifest.annotated && levels[i].contains("median_moves");
        } catch (const std::exception& e) {
            throw ManifestParseError(static_cast<int>(i), e.what());
        }
    }
    return manifest;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << manifest_to_json(manifest);
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return manifest_from_json(buffer.str());
}

}  // namespace avalon
