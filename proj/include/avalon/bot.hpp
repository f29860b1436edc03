#pragma once

#include <cstdint>
#include <vector>

#include "avalon/engine.hpp"
#include "avalon/grid.hpp"

namespace avalon {

inline constexpr int kValidMoves = 20;

/// Bot move budget derived from the designers' validity threshold: 2 * valid - 1.
constexpr int move_cap_for(int valid_moves) { return 2 * valid_moves - 1; }

struct BotConfig {
    int run_count = 30;
    int move_cap = move_cap_for(kValidMoves);
    std::uint64_t base_seed = 0;
};

struct PlaythroughStats {
    double median_moves = 0.0;
    double std_moves = 0.0;
    std::vector<int> runs;
    double success_rate = 0.0;
};

/// Greedy one-ply policy: score = 10 * red tiles matched + tiles matched, for the
/// immediate match set of each legal swap. Ties go to the smallest (a, b) in (y, x)
/// order. Throws std::runtime_error("deadlock") when no move is legal.
SwapMove select_move(const BoardState& state);

/// Score that select_move assigns to `move`.
int move_score(const BoardState& state, SwapMove move);

/// Moves used on a win, move_cap + 1 otherwise.
int play_once(const LevelGrid& layout, std::uint64_t seed, int move_cap);

/// Baseline that picks uniformly among legal moves with a policy RNG derived from `seed`.
int play_random(const LevelGrid& layout, std::uint64_t seed, int move_cap);

/// Median of the run values (mean of the two middle values for even counts),
/// population standard deviation, success = runs <= move_cap.
PlaythroughStats summarize_runs(std::vector<int> runs, int move_cap);

/// Plays seeds base_seed + i for i in [0, run_count).
PlaythroughStats evaluate_level(const LevelGrid& layout, const BotConfig& config);

}  // namespace avalon
