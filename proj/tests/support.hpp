#pragma once

#include "avalon/grid.hpp"
#include "avalon/rng.hpp"

namespace avalon::testing {

// Uniform random cell codes over the whole canvas (not necessarily well formed).
inline LevelGrid random_canvas(Rng& rng) {
    LevelGrid g;
    for (int y = 0; y < kCanvasHeight; ++y) {
        for (int x = 0; x < kCanvasWidth; ++x) g.set(x, y, static_cast<CellKind>(rng.uniform_below(3)));
    }
    return g;
}

inline LevelSize random_size(Rng& rng) {
    return {kMinWidth + static_cast<int>(rng.uniform_below(kMaxWidth - kMinWidth + 1)),
            kMinHeight + static_cast<int>(rng.uniform_below(kMaxHeight - kMinHeight + 1))};
}

inline SymmetryKind random_symmetry(Rng& rng) {
    return static_cast<SymmetryKind>(rng.uniform_below(3));
}

// Symmetric level of exactly `size`: the first row and column stay PLAYFIELD so the
// measured size is the requested one.
inline LevelGrid random_symmetric_level(Rng& rng, LevelSize size, SymmetryKind symmetry) {
    LevelGrid partial;
    const Coord o = size.origin();
    for (int i = 0; i < size.height; ++i) {
        for (int j = 0; j < size.width; ++j) {
            const bool frame = i == 0 || j == 0;
            partial.set(o.x + j, o.y + i,
                        frame ? CellKind::Playfield : static_cast<CellKind>(rng.uniform_below(3)));
        }
    }
    return complete_symmetry(partial, size, symmetry);
}

}  // namespace avalon::testing
