#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "avalon/grid.hpp"
#include "avalon/rng.hpp"

namespace avalon {

enum class TileColor : std::uint8_t { Red = 0, Green = 1, Blue = 2, Orange = 3 };

inline constexpr int kColorCount = 4;
inline constexpr int kRedTarget = 60;

char to_ascii(TileColor color);

/// Orthogonal swap, stored with a < b in (y, x) order.
struct SwapMove {
    Coord a;
    Coord b;

    static SwapMove between(Coord p, Coord q) { return p < q ? SwapMove{p, q} : SwapMove{q, p}; }
    bool adjacent() const {
        const int dx = a.x > b.x ? a.x - b.x : b.x - a.x;
        const int dy = a.y > b.y ? a.y - b.y : b.y - a.y;
        return dx + dy == 1;
    }

    friend bool operator==(const SwapMove&, const SwapMove&) = default;
    friend auto operator<=>(const SwapMove&, const SwapMove&) = default;
};

using SpawnSpots = std::vector<Coord>;

/// One spot per maximal vertical run of non-BLOCK cells that contains a PLAYFIELD
/// cell, placed at that run's first PLAYFIELD cell. Ordered by column, then row.
SpawnSpots derive_spawn_spots(const LevelGrid& layout);

using TileArray = std::array<std::optional<TileColor>, kCanvasCells>;

class BoardState {
public:
    /// Empty board (no tiles) over `layout`; the RNG is seeded but untouched.
    BoardState(const LevelGrid& layout, std::uint64_t seed);

    /// Fills from the spawn spots, then re-rolls any cell that sits on a 3-run
    /// (at most 100 re-rolls per cell).
    static BoardState start(const LevelGrid& layout, std::uint64_t seed);

    /// Board with a hand-placed tile set. Tiles must sit exactly on PLAYFIELD cells.
    static BoardState from_tiles(const LevelGrid& layout, const TileArray& tiles, std::uint64_t seed);

    const LevelGrid& layout() const { return layout_; }
    const SpawnSpots& spawn_spots() const { return spots_; }
    std::optional<TileColor> tile(Coord c) const { return tile(c.x, c.y); }
    std::optional<TileColor> tile(int x, int y) const;
    int red_cleared() const { return red_cleared_; }
    int moves_used() const { return moves_used_; }
    const Rng& rng() const { return rng_; }

    void set_tile(Coord c, std::optional<TileColor> color);
    void swap_tiles(Coord a, Coord b);

    /// Removes tiles at `cells`; returns how many of them were RED and adds that
    /// count to red_cleared.
    int clear(const std::vector<Coord>& cells);
    /// Drops every tile straight down within its column segment.
    void settle_gravity();
    /// Spawns uniformly sampled tiles for every empty PLAYFIELD cell; returns the
    /// filled cells in spawn order.
    std::vector<Coord> refill();
    void count_move() { ++moves_used_; }

    /// Board rendering: R/G/B/O tiles, '_' empty PLAYFIELD, '#' BLOCK, '.' GAP.
    std::string render() const;

    friend bool operator==(const BoardState&, const BoardState&) = default;

private:
    struct Segment {
        int x = 0;
        std::vector<int> slots;  // PLAYFIELD rows, top to bottom

        friend bool operator==(const Segment&, const Segment&) = default;
    };

    LevelGrid layout_;
    SpawnSpots spots_;
    std::vector<Segment> segments_;
    std::array<std::int8_t, kCanvasCells> tiles_{};
    int red_cleared_ = 0;
    int moves_used_ = 0;
    Rng rng_;
};

/// Parses the board rendering produced by BoardState::render.
TileArray parse_tiles(std::string_view text);
/// Layout implied by a board rendering (tile or '_' cells are PLAYFIELD).
LevelGrid layout_from_tiles_text(std::string_view text);

/// Union of all maximal horizontal and vertical same-color runs of length >= 3,
/// sorted in (y, x) order.
std::vector<Coord> find_matches(const BoardState& state);

/// Cells that would match right after `move`, before any removal or spawn.
std::vector<Coord> matches_after_swap(const BoardState& state, SwapMove move);

bool creates_match(const BoardState& state, SwapMove move);

/// Adjacent PLAYFIELD pairs whose swap produces a match, in (a, b) order.
std::vector<SwapMove> legal_moves(const BoardState& state);

/// Swap then resolve cascades to a fixpoint. Throws std::invalid_argument
/// ("no match produced") for a swap that is not legal.
BoardState apply_move(BoardState state, SwapMove move);

enum class GameStatus { Won, Lost, Ongoing };

std::string_view to_string(GameStatus status);

GameStatus game_status(const BoardState& state, int move_cap);

}  // namespace avalon
