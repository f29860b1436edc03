#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace avalon {

// Fixed canvas. Columns x run left to right, rows y top to bottom.
inline constexpr int kCanvasWidth = 9;
inline constexpr int kCanvasHeight = 11;
inline constexpr int kCanvasCells = kCanvasWidth * kCanvasHeight;
inline constexpr int kCellKinds = 3;

inline constexpr int kMinWidth = 4;
inline constexpr int kMaxWidth = 9;
inline constexpr int kMinHeight = 4;
inline constexpr int kMaxHeight = 11;

enum class CellKind : std::uint8_t { Gap = 0, Block = 1, Playfield = 2 };

struct Coord {
    int x = 0;
    int y = 0;

    friend bool operator==(const Coord&, const Coord&) = default;
    friend auto operator<=>(const Coord& a, const Coord& b) {
        if (auto c = a.y <=> b.y; c != 0) return c;
        return a.x <=> b.x;
    }
};

constexpr int cell_index(int x, int y) { return y * kCanvasWidth + x; }
constexpr bool on_canvas(int x, int y) {
    return x >= 0 && x < kCanvasWidth && y >= 0 && y < kCanvasHeight;
}

class LevelGrid {
public:
    LevelGrid() { cells_.fill(CellKind::Block); }

    static LevelGrid filled(CellKind kind) {
        LevelGrid g;
        g.cells_.fill(kind);
        return g;
    }

    CellKind at(int x, int y) const { return cells_[cell_index(x, y)]; }
    CellKind at(Coord c) const { return at(c.x, c.y); }
    void set(int x, int y, CellKind kind) { cells_[cell_index(x, y)] = kind; }
    void set(Coord c, CellKind kind) { set(c.x, c.y, kind); }

    const std::array<CellKind, kCanvasCells>& cells() const { return cells_; }

    int count(CellKind kind) const;

    friend bool operator==(const LevelGrid&, const LevelGrid&) = default;

private:
    std::array<CellKind, kCanvasCells> cells_;
};

struct LevelSize {
    int width = kMaxWidth;
    int height = kMaxHeight;

    bool valid() const {
        return width >= kMinWidth && width <= kMaxWidth && height >= kMinHeight &&
               height <= kMaxHeight;
    }
    // Top-left corner of the centered play area.
    Coord origin() const { return {(kCanvasWidth - width) / 2, (kCanvasHeight - height) / 2}; }
    bool contains(int x, int y) const {
        const Coord o = origin();
        return x >= o.x && x < o.x + width && y >= o.y && y < o.y + height;
    }
    int area() const { return width * height; }

    friend bool operator==(const LevelSize&, const LevelSize&) = default;
};

// All 48 admissible sizes, width-major.
std::vector<LevelSize> all_sizes();

enum class SymmetryKind : std::uint8_t { Vertical, Horizontal, Quadrant, Unknown };

std::string_view to_string(SymmetryKind s);
std::optional<SymmetryKind> parse_symmetry(std::string_view text);

class BinaryMask {
public:
    BinaryMask() { bits_.fill(1); }

    static BinaryMask zeros() {
        BinaryMask m;
        m.bits_.fill(0);
        return m;
    }

    bool at(int x, int y) const { return bits_[cell_index(x, y)] != 0; }
    bool at_index(int i) const { return bits_[i] != 0; }
    void set(int x, int y, bool on) { bits_[cell_index(x, y)] = on ? 1 : 0; }
    int ones() const;

    friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

private:
    std::array<std::uint8_t, kCanvasCells> bits_;
};

struct ConditionSpec {
    LevelSize size;
    SymmetryKind symmetry = SymmetryKind::Unknown;
    std::optional<double> target_moves;
};

/// Longest consecutive PLAYFIELD run over rows (width) and columns (height).
/// Throws std::invalid_argument("empty level") when no PLAYFIELD cell exists.
LevelSize measure_size(const LevelGrid& level);

/// Mirror predicates restricted to the play area of `size`.
bool is_mirror_left_right(const LevelGrid& level, LevelSize size);
bool is_mirror_top_bottom(const LevelGrid& level, LevelSize size);
bool satisfies_symmetry(const LevelGrid& level, LevelSize size, SymmetryKind symmetry);

/// Classifies the play area given by `size`, priority QUADRANT > VERTICAL > HORIZONTAL.
SymmetryKind detect_symmetry(const LevelGrid& level, LevelSize size);
/// Same, over the measured play area. A level without PLAYFIELD cells is UNKNOWN.
SymmetryKind detect_symmetry(const LevelGrid& level);

/// Ones everywhere except the redundant mirror half (or three quarters) of the play area.
BinaryMask build_symmetry_mask(LevelSize size, SymmetryKind symmetry);
BinaryMask build_size_mask(LevelSize size);

/// Rebuilds the redundant part of the play area from the kept part and forces
/// every cell outside the play area to BLOCK.
LevelGrid complete_symmetry(const LevelGrid& partial, LevelSize size, SymmetryKind symmetry);

/// Sets every cell outside the play area of `size` to BLOCK.
LevelGrid clip_to_play_area(const LevelGrid& level, LevelSize size);

/// Channel-major one-hot planes, index (k * kCanvasHeight + y) * kCanvasWidth + x.
std::vector<float> one_hot_encode(const LevelGrid& level);
/// Per-cell argmax over the three planes; ties resolve to the lower code.
LevelGrid decode_one_hot(const std::vector<float>& planes);

/// Whether outside-play-area cells are all BLOCK and the measured size fits the canvas bounds.
bool is_well_formed(const LevelGrid& level);

char to_ascii(CellKind kind);
std::string render_ascii(const LevelGrid& level);
/// Parses 11 lines of 9 characters ('.', '#', 'o'); throws std::invalid_argument.
LevelGrid parse_ascii(std::string_view text);

}  // namespace avalon
