#include "avalon/engine.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace avalon {

namespace {

constexpr std::int8_t kNoTile = -1;
constexpr int kInitialRerollLimit = 100;
constexpr int kCascadeLimit = 10000;

// Length of the same-color run through (x, y) along (dx, dy), both directions.
int run_through(const std::array<std::int8_t, kCanvasCells>& tiles, int x, int y, int dx, int dy) {
    const std::int8_t color = tiles[cell_index(x, y)];
    if (color == kNoTile) return 0;
    int length = 1;
    for (int cx = x + dx, cy = y + dy; on_canvas(cx, cy) && tiles[cell_index(cx, cy)] == color;
         cx += dx, cy += dy) {
        ++length;
    }
    for (int cx = x - dx, cy = y - dy; on_canvas(cx, cy) && tiles[cell_index(cx, cy)] == color;
         cx -= dx, cy -= dy) {
        ++length;
    }
    return length;
}

bool on_run(const std::array<std::int8_t, kCanvasCells>& tiles, int x, int y) {
    return run_through(tiles, x, y, 1, 0) >= 3 || run_through(tiles, x, y, 0, 1) >= 3;
}

std::vector<Coord> scan_matches(const std::array<std::int8_t, kCanvasCells>& tiles) {
    std::array<bool, kCanvasCells> hit{};
    for (int y = 0; y < kCanvasHeight; ++y) {
        int x = 0;
        while (x < kCanvasWidth) {
            const std::int8_t color = tiles[cell_index(x, y)];
            int end = x + 1;
            while (end < kCanvasWidth && color != kNoTile && tiles[cell_index(end, y)] == color) ++end;
            if (color != kNoTile && end - x >= 3) {
                for (int i = x; i < end; ++i) hit[cell_index(i, y)] = true;
            }
            x = end;
        }
    }
    for (int x = 0; x < kCanvasWidth; ++x) {
        int y = 0;
        while (y < kCanvasHeight) {
            const std::int8_t color = tiles[cell_index(x, y)];
            int end = y + 1;
            while (end < kCanvasHeight && color != kNoTile && tiles[cell_index(x, end)] == color) ++end;
            if (color != kNoTile && end - y >= 3) {
                for (int i = y; i < end; ++i) hit[cell_index(x, i)] = true;
            }
            y = end;
        }
    }
    std::vector<Coord> out;
    for (int i = 0; i < kCanvasCells; ++i) {
        if (hit[i]) out.push_back({i % kCanvasWidth, i / kCanvasWidth});
    }
    return out;
}

std::optional<TileColor> color_from_char(char c) {
    switch (c) {
        case 'R': return TileColor::Red;
        case 'G': return TileColor::Green;
        case 'B': return TileColor::Blue;
        case 'O': return TileColor::Orange;
        default: return std::nullopt;
    }
}

std::vector<std::string> board_lines(std::string_view text) {
    std::vector<std::string> lines;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (static_cast<int>(line.size()) != kCanvasWidth) {
            throw std::invalid_argument("board row " + std::to_string(lines.size()) + " must have 9 characters");
        }
        lines.push_back(line);
    }
    if (static_cast<int>(lines.size()) != kCanvasHeight) {
        throw std::invalid_argument("board must have 11 rows");
    }
    return lines;
}

}  // namespace

char to_ascii(TileColor color) {
    switch (color) {
        case TileColor::Red: return 'R';
        case TileColor::Green: return 'G';
        case TileColor::Blue: return 'B';
        case TileColor::Orange: return 'O';
    }
    return '?';
}

SpawnSpots derive_spawn_spots(const LevelGrid& layout) {
    SpawnSpots spots;
    for (int x = 0; x < kCanvasWidth; ++x) {
        bool in_segment = false;
        bool has_spot = false;
        for (int y = 0; y < kCanvasHeight; ++y) {
            const CellKind kind = layout.at(x, y);
            if (kind == CellKind::Block) {
                in_segment = false;
                continue;
            }
            if (!in_segment) {
                in_segment = true;
                has_spot = false;
            }
            if (kind == CellKind::Playfield && !has_spot) {
                spots.push_back({x, y});
                has_spot = true;
            }
        }
    }
    return spots;
}

BoardState::BoardState(const LevelGrid& layout, std::uint64_t seed)
    : layout_(layout), spots_(derive_spawn_spots(layout)), rng_(seed) {
    tiles_.fill(kNoTile);
    for (int x = 0; x < kCanvasWidth; ++x) {
        Segment current{x, {}};
        bool in_segment = false;
        for (int y = 0; y <= kCanvasHeight; ++y) {
            const bool blocked = y == kCanvasHeight || layout.at(x, y) == CellKind::Block;
            if (blocked) {
                if (in_segment && !current.slots.empty()) segments_.push_back(current);
                current.slots.clear();
                in_segment = false;
                continue;
            }
            in_segment = true;
            if (layout.at(x, y) == CellKind::Playfield) current.slots.push_back(y);
        }
    }
}

BoardState BoardState::start(const LevelGrid& layout, std::uint64_t seed) {
    BoardState state(layout, seed);
    state.refill();
    for (int y = 0; y < kCanvasHeight; ++y) {
        for (int x = 0; x < kCanvasWidth; ++x) {
            if (layout.at(x, y) != CellKind::Playfield) continue;
            for (int attempt = 0; attempt < kInitialRerollLimit && on_run(state.tiles_, x, y); ++attempt) {
                state.tiles_[cell_index(x, y)] = static_cast<std::int8_t>(state.rng_.uniform_below(kColorCount));
            }
        }
    }
    return state;
}

BoardState BoardState::from_tiles(const LevelGrid& layout, const TileArray& tiles, std::uint64_t seed) {
    BoardState state(layout, seed);
    for (int i = 0; i < kCanvasCells; ++i) {
        const bool playfield = layout.cells()[i] == CellKind::Playfield;
        if (playfield != tiles[i].has_value()) {
            throw std::invalid_argument("tiles must occupy exactly the PLAYFIELD cells");
        }
        if (tiles[i]) state.tiles_[i] = static_cast<std::int8_t>(*tiles[i]);
    }
    return state;
}

std::optional<TileColor> BoardState::tile(int x, int y) const {
    const std::int8_t t = tiles_[cell_index(x, y)];
    if (t == kNoTile) return std::nullopt;
    return static_cast<TileColor>(t);
}

void BoardState::set_tile(Coord c, std::optional<TileColor> color) {
    if (color && layout_.at(c) != CellKind::Playfield) {
        throw std::invalid_argument("tiles may only sit on PLAYFIELD cells");
    }
    tiles_[cell_index(c.x, c.y)] = color ? static_cast<std::int8_t>(*color) : kNoTile;
}

void BoardState::swap_tiles(Coord a, Coord b) {
    std::swap(tiles_[cell_index(a.x, a.y)], tiles_[cell_index(b.x, b.y)]);
}

int BoardState::clear(const std::vector<Coord>& cells) {
    int red = 0;
    for (const Coord c : cells) {
        std::int8_t& t = tiles_[cell_index(c.x, c.y)];
        if (t == static_cast<std::int8_t>(TileColor::Red)) ++red;
        t = kNoTile;
    }
    red_cleared_ += red;
    return red;
}

void BoardState::settle_gravity() {
    for (const Segment& seg : segments_) {
        // Walk slots bottom-up, packing tiles toward the bottom in order.
        int write = static_cast<int>(seg.slots.size()) - 1;
        for (int read = write; read >= 0; --read) {
            const int from = cell_index(seg.x, seg.slots[read]);
            if (tiles_[from] == kNoTile) continue;
            const int to = cell_index(seg.x, seg.slots[write]);
            if (to != from) {
                tiles_[to] = tiles_[from];
                tiles_[from] = kNoTile;
            }
            --write;
        }
    }
}

std::vector<Coord> BoardState::refill() {
    std::vector<Coord> filled;
    for (const Segment& seg : segments_) {
        // After gravity the empty slots are the top ones; the first spawned tile
        // falls furthest.
        for (int i = static_cast<int>(seg.slots.size()) - 1; i >= 0; --i) {
            const int idx = cell_index(seg.x, seg.slots[i]);
            if (tiles_[idx] != kNoTile) continue;
            tiles_[idx] = static_cast<std::int8_t>(rng_.uniform_below(kColorCount));
            filled.push_back({seg.x, seg.slots[i]});
        }
    }
    return filled;
}

std::string BoardState::render() const {
    std::string out;
    for (int y = 0; y < kCanvasHeight; ++y) {
        for (int x = 0; x < kCanvasWidth; ++x) {
            const CellKind kind = layout_.at(x, y);
            if (kind == CellKind::Playfield) {
                const auto t = tile(x, y);
                out.push_back(t ? to_ascii(*t) : '_');
            } else {
                out.push_back(avalon::to_ascii(kind));
            }
        }
        out.push_back('\n');
    }
    return out;
}

TileArray parse_tiles(std::string_view text) {
    TileArray tiles{};
    const auto lines = board_lines(text);
    for (int y = 0; y < kCanvasHeight; ++y) {
        for (int x = 0; x < kCanvasWidth; ++x) {
            const char c = lines[y][x];
            if (auto color = color_from_char(c)) {
                tiles[cell_index(x, y)] = color;
            } else if (c != '_' && c != '#' && c != '.') {
                throw std::invalid_argument("unexpected board character '" + std::string(1, c) + "'");
            }
        }
    }
    return tiles;
}

LevelGrid layout_from_tiles_text(std::string_view text) {
    LevelGrid g;
    const auto lines = board_lines(text);
    for (int y = 0; y < kCanvasHeight; ++y) {
        for (int x = 0; x < kCanvasWidth; ++x) {
            const char c = lines[y][x];
            if (c == '#') g.set(x, y, CellKind::Block);
            else if (c == '.') g.set(x, y, CellKind::Gap);
            else if (c == '_' || color_from_char(c)) g.set(x, y, CellKind::Playfield);
            else throw std::invalid_argument("unexpected board character '" + std::string(1, c) + "'");
        }
    }
    return g;
}

namespace {

std::array<std::int8_t, kCanvasCells> tile_codes(const BoardState& state) {
    std::array<std::int8_t, kCanvasCells> codes{};
    for (int i = 0; i < kCanvasCells; ++i) {
        const auto t = state.tile(i % kCanvasWidth, i / kCanvasWidth);
        codes[i] = t ? static_cast<std::int8_t>(*t) : kNoTile;
    }
    return codes;
}

bool swappable(const BoardState& state, SwapMove move) {
    return move.adjacent() && on_canvas(move.a.x, move.a.y) && on_canvas(move.b.x, move.b.y) &&
           state.layout().at(move.a) == CellKind::Playfield &&
           state.layout().at(move.b) == CellKind::Playfield;
}

}  // namespace

std::vector<Coord> find_matches(const BoardState& state) { return scan_matches(tile_codes(state)); }

std::vector<Coord> matches_after_swap(const BoardState& state, SwapMove move) {
    auto codes = tile_codes(state);
    std::swap(codes[cell_index(move.a.x, move.a.y)], codes[cell_index(move.b.x, move.b.y)]);
    return scan_matches(codes);
}

bool creates_match(const BoardState& state, SwapMove move) {
    if (!swappable(state, move)) return false;
    auto codes = tile_codes(state);
    const int ia = cell_index(move.a.x, move.a.y);
    const int ib = cell_index(move.b.x, move.b.y);
    if (codes[ia] == codes[ib]) return on_run(codes, move.a.x, move.a.y);
    std::swap(codes[ia], codes[ib]);
    return on_run(codes, move.a.x, move.a.y) || on_run(codes, move.b.x, move.b.y);
}

std::vector<SwapMove> legal_moves(const BoardState& state) {
    std::vector<SwapMove> moves;
    auto codes = tile_codes(state);
    const LevelGrid& layout = state.layout();
    auto try_swap = [&](Coord a, Coord b) {
        if (layout.at(b) != CellKind::Playfield) return;
        const int ia = cell_index(a.x, a.y);
        const int ib = cell_index(b.x, b.y);
        bool hit = false;
        if (codes[ia] == codes[ib]) {
            hit = on_run(codes, a.x, a.y);
        } else {
            std::swap(codes[ia], codes[ib]);
            hit = on_run(codes, a.x, a.y) || on_run(codes, b.x, b.y);
            std::swap(codes[ia], codes[ib]);
        }
        if (hit) moves.push_back({a, b});
    };
    for (int y = 0; y < kCanvasHeight; ++y) {
        for (int x = 0; x < kCanvasWidth; ++x) {
            if (layout.at(x, y) != CellKind::Playfield) continue;
            if (x + 1 < kCanvasWidth) try_swap({x, y}, {x + 1, y});
            if (y + 1 < kCanvasHeight) try_swap({x, y}, {x, y + 1});
        }
    }
    return moves;
}

BoardState apply_move(BoardState state, SwapMove move) {
    move = SwapMove::between(move.a, move.b);
    if (!creates_match(state, move)) throw std::invalid_argument("no match produced");
    state.swap_tiles(move.a, move.b);
    for (int round = 0; round < kCascadeLimit; ++round) {
        const auto matched = find_matches(state);
        if (matched.empty()) break;
        state.clear(matched);
        state.settle_gravity();
        state.refill();
    }
    state.count_move();
    return state;
}

std::string_view to_string(GameStatus status) {
    switch (status) {
        case GameStatus::Won: return "won";
        case GameStatus::Lost: return "lost";
        case GameStatus::Ongoing: return "ongoing";
    }
    return "ongoing";
}

GameStatus game_status(const BoardState& state, int move_cap) {
    if (state.red_cleared() >= kRedTarget && state.moves_used() <= move_cap) return GameStatus::Won;
    if (state.moves_used() >= move_cap && state.red_cleared() < kRedTarget) return GameStatus::Lost;
    if (legal_moves(state).empty()) return GameStatus::Lost;
    return GameStatus::Ongoing;
}

}  // namespace avalon
