#include "avalon/grid.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace avalon {

int LevelGrid::count(CellKind kind) const {
    return static_cast<int>(std::count(cells_.begin(), cells_.end(), kind));
}

int BinaryMask::ones() const {
    return static_cast<int>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

std::vector<LevelSize> all_sizes() {
    std::vector<LevelSize> sizes;
    for (int w = kMinWidth; w <= kMaxWidth; ++w) {
        for (int h = kMinHeight; h <= kMaxHeight; ++h) sizes.push_back({w, h});
    }
    return sizes;
}

std::string_view to_string(SymmetryKind s) {
    switch (s) {
        case SymmetryKind::Vertical: return "vertical";
        case SymmetryKind::Horizontal: return "horizontal";
        case SymmetryKind::Quadrant: return "quadrant";
        case SymmetryKind::Unknown: return "unknown";
    }
    return "unknown";
}

std::optional<SymmetryKind> parse_symmetry(std::string_view text) {
    if (text == "vertical") return SymmetryKind::Vertical;
    if (text == "horizontal") return SymmetryKind::Horizontal;
    if (text == "quadrant") return SymmetryKind::Quadrant;
    if (text == "unknown") return SymmetryKind::Unknown;
    return std::nullopt;
}

LevelSize measure_size(const LevelGrid& level) {
    int width = 0;
    for (int y = 0; y < kCanvasHeight; ++y) {
        int run = 0;
        for (int x = 0; x < kCanvasWidth; ++x) {
            run = level.at(x, y) == CellKind::Playfield ? run + 1 : 0;
            width = std::max(width, run);
        }
    }
    int height = 0;
    for (int x = 0; x < kCanvasWidth; ++x) {
        int run = 0;
        for (int y = 0; y < kCanvasHeight; ++y) {
            run = level.at(x, y) == CellKind::Playfield ? run + 1 : 0;
            height = std::max(height, run);
        }
    }
    if (width == 0) throw std::invalid_argument("empty level");
    return {width, height};
}

bool is_mirror_left_right(const LevelGrid& level, LevelSize size) {
    const Coord o = size.origin();
    for (int j = 0; j < size.width / 2; ++j) {
        for (int i = 0; i < size.height; ++i) {
            if (level.at(o.x + j, o.y + i) != level.at(o.x + size.width - 1 - j, o.y + i)) return false;
        }
    }
    return true;
}

bool is_mirror_top_bottom(const LevelGrid& level, LevelSize size) {
    const Coord o = size.origin();
    for (int i = 0; i < size.height / 2; ++i) {
        for (int j = 0; j < size.width; ++j) {
            if (level.at(o.x + j, o.y + i) != level.at(o.x + j, o.y + size.height - 1 - i)) return false;
        }
    }
    return true;
}

bool satisfies_symmetry(const LevelGrid& level, LevelSize size, SymmetryKind symmetry) {
    switch (symmetry) {
        case SymmetryKind::Vertical: return is_mirror_left_right(level, size);
        case SymmetryKind::Horizontal: return is_mirror_top_bottom(level, size);
        case SymmetryKind::Quadrant:
            return is_mirror_left_right(level, size) && is_mirror_top_bottom(level, size);
        case SymmetryKind::Unknown: return true;
    }
    return true;
}

SymmetryKind detect_symmetry(const LevelGrid& level, LevelSize size) {
    const bool lr = is_mirror_left_right(level, size);
    const bool tb = is_mirror_top_bottom(level, size);
    if (lr && tb) return SymmetryKind::Quadrant;
    if (lr) return SymmetryKind::Vertical;
    if (tb) return SymmetryKind::Horizontal;
    return SymmetryKind::Unknown;
}

SymmetryKind detect_symmetry(const LevelGrid& level) {
    if (level.count(CellKind::Playfield) == 0) return SymmetryKind::Unknown;
    return detect_symmetry(level, measure_size(level));
}

BinaryMask build_symmetry_mask(LevelSize size, SymmetryKind symmetry) {
    BinaryMask mask;
    const bool cut_columns = symmetry == SymmetryKind::Vertical || symmetry == SymmetryKind::Quadrant;
    const bool cut_rows = symmetry == SymmetryKind::Horizontal || symmetry == SymmetryKind::Quadrant;
    const int kept_columns = (size.width + 1) / 2;
    const int kept_rows = (size.height + 1) / 2;
    const Coord o = size.origin();
    for (int i = 0; i < size.height; ++i) {
        for (int j = 0; j < size.width; ++j) {
            const bool redundant = (cut_columns && j >= kept_columns) || (cut_rows && i >= kept_rows);
            if (redundant) mask.set(o.x + j, o.y + i, false);
        }
    }
    return mask;
}

BinaryMask build_size_mask(LevelSize size) {
    BinaryMask mask = BinaryMask::zeros();
    for (int y = 0; y < kCanvasHeight; ++y) {
        for (int x = 0; x < kCanvasWidth; ++x) {
            if (size.contains(x, y)) mask.set(x, y, true);
        }
    }
    return mask;
}

LevelGrid clip_to_play_area(const LevelGrid& level, LevelSize size) {
    LevelGrid out = level;
    for (int y = 0; y < kCanvasHeight; ++y) {
        for (int x = 0; x < kCanvasWidth; ++x) {
            if (!size.contains(x, y)) out.set(x, y, CellKind::Block);
        }
    }
    return out;
}

LevelGrid complete_symmetry(const LevelGrid& partial, LevelSize size, SymmetryKind symmetry) {
    LevelGrid out = clip_to_play_area(partial, size);
    const Coord o = size.origin();
    if (symmetry == SymmetryKind::Vertical || symmetry == SymmetryKind::Quadrant) {
        for (int j = (size.width + 1) / 2; j < size.width; ++j) {
            for (int i = 0; i < size.height; ++i) {
                out.set(o.x + j, o.y + i, out.at(o.x + size.width - 1 - j, o.y + i));
            }
        }
    }
    if (symmetry == SymmetryKind::Horizontal || symmetry == SymmetryKind::Quadrant) {
        for (int i = (size.height + 1) / 2; i < size.height; ++i) {
            for (int j = 0; j < size.width; ++j) {
                out.set(o.x + j, o.y + i, out.at(o.x + j, o.y + size.height - 1 - i));
            }
        }
    }
    return out;
}

std::vector<float> one_hot_encode(const LevelGrid& level) {
    std::vector<float> planes(static_cast<std::size_t>(kCellKinds) * kCanvasCells, 0.0f);
    for (int i = 0; i < kCanvasCells; ++i) {
        const int k = static_cast<int>(level.cells()[i]);
        planes[static_cast<std::size_t>(k) * kCanvasCells + i] = 1.0f;
    }
    return planes;
}

LevelGrid decode_one_hot(const std::vector<float>& planes) {
    if (planes.size() != static_cast<std::size_t>(kCellKinds) * kCanvasCells) {
        throw std::invalid_argument("one-hot planes must hold 3x9x11 values");
    }
    LevelGrid g;
    for (int i = 0; i < kCanvasCells; ++i) {
        int best = 0;
        for (int k = 1; k < kCellKinds; ++k) {
            if (planes[k * kCanvasCells + i] > planes[best * kCanvasCells + i]) best = k;
        }
        g.set(i % kCanvasWidth, i / kCanvasWidth, static_cast<CellKind>(best));
    }
    return g;
}

bool is_well_formed(const LevelGrid& level) {
    if (level.count(CellKind::Playfield) == 0) return false;
    const LevelSize size = measure_size(level);
    if (!size.valid()) return false;
    for (int y = 0; y < kCanvasHeight; ++y) {
        for (int x = 0; x < kCanvasWidth; ++x) {
            if (!size.contains(x, y) && level.at(x, y) != CellKind::Block) return false;
        }
    }
    return true;
}

char to_ascii(CellKind kind) {
    switch (kind) {
        case CellKind::Gap: return '.';
        case CellKind::Block: return '#';
        case CellKind::Playfield: return 'o';
    }
    return '?';
}

std::string render_ascii(const LevelGrid& level) {
    std::string out;
    out.reserve(kCanvasHeight * (kCanvasWidth + 1));
    for (int y = 0; y < kCanvasHeight; ++y) {
        for (int x = 0; x < kCanvasWidth; ++x) out.push_back(to_ascii(level.at(x, y)));
        out.push_back('\n');
    }
    return out;
}

LevelGrid parse_ascii(std::string_view text) {
    LevelGrid g;
    std::istringstream in{std::string(text)};
    std::string line;
    int y = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (y >= kCanvasHeight) throw std::invalid_argument("ascii level has more than 11 rows");
        if (static_cast<int>(line.size()) != kCanvasWidth) {
            throw std::invalid_argument("ascii row " + std::to_string(y) + " must have 9 characters");
        }
        for (int x = 0; x < kCanvasWidth; ++x) {
            switch (line[x]) {
                case '.': g.set(x, y, CellKind::Gap); break;
                case '#': g.set(x, y, CellKind::Block); break;
                case 'o': g.set(x, y, CellKind::Playfield); break;
                default:
                    throw std::invalid_argument("unexpected character '" + std::string(1, line[x]) +
                                                "' at row " + std::to_string(y));
            }
        }
        ++y;
    }
    if (y != kCanvasHeight) throw std::invalid_argument("ascii level must have 11 rows");
    return g;
}

}  // namespace avalon
