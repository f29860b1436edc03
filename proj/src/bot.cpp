#include "avalon/bot.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace avalon {

int move_score(const BoardState& state, SwapMove move) {
    int red = 0;
    const auto matched = matches_after_swap(state, move);
    for (const Coord c : matched) {
        // The swap moved tiles, so look the color up at its pre-swap position.
        Coord source = c;
        if (c == move.a) source = move.b;
        else if (c == move.b) source = move.a;
        if (state.tile(source) == TileColor::Red) ++red;
    }
    return 10 * red + static_cast<int>(matched.size());
}

SwapMove select_move(const BoardState& state) {
    const auto moves = legal_moves(state);
    if (moves.empty()) throw std::runtime_error("deadlock");
    // legal_moves is already ordered by (a, b), so strict > keeps the first of equals.
    SwapMove best = moves.front();
    int best_score = move_score(state, best);
    for (std::size_t i = 1; i < moves.size(); ++i) {
        const int score = move_score(state, moves[i]);
        if (score > best_score) {
            best = moves[i];
            best_score = score;
        }
    }
    return best;
}

namespace {

template <typename Policy>
int play(const LevelGrid& layout, std::uint64_t seed, int move_cap, Policy&& choose) {
    const int failure = move_cap + 1;
    if (layout.count(CellKind::Playfield) == 0) return failure;
    BoardState state = BoardState::start(layout, seed);
    while (true) {
        switch (game_status(state, move_cap)) {
            case GameStatus::Won: return state.moves_used();
            case GameStatus::Lost: return failure;
            case GameStatus::Ongoing: break;
        }
        state = apply_move(std::move(state), choose(state));
    }
}

}  // namespace

int play_once(const LevelGrid& layout, std::uint64_t seed, int move_cap) {
    return play(layout, seed, move_cap, [](const BoardState& s) { return select_move(s); });
}

int play_random(const LevelGrid& layout, std::uint64_t seed, int move_cap) {
    Rng policy(derive_seed(seed, 0x52414e44ULL));
    return play(layout, seed, move_cap, [&policy](const BoardState& s) {
        const auto moves = legal_moves(s);
        return moves[policy.uniform_below(static_cast<std::uint32_t>(moves.size()))];
    });
}

PlaythroughStats summarize_runs(std::vector<int> runs, int move_cap) {
    PlaythroughStats stats;
    stats.runs = runs;
    if (runs.empty()) return stats;
    std::sort(runs.begin(), runs.end());
    const std::size_t n = runs.size();
    stats.median_moves = n % 2 == 1 ? runs[n / 2] : 0.5 * (runs[n / 2 - 1] + runs[n / 2]);
    double mean = 0.0;
    for (int r : runs) mean += r;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (int r : runs) var += (r - mean) * (r - mean);
    stats.std_moves = std::sqrt(var / static_cast<double>(n));
    const auto wins = std::count_if(runs.begin(), runs.end(), [&](int r) { return r <= move_cap; });
    stats.success_rate = static_cast<double>(wins) / static_cast<double>(n);
    return stats;
}

PlaythroughStats evaluate_level(const LevelGrid& layout, const BotConfig& config) {
    std::vector<int> runs;
    runs.reserve(static_cast<std::size_t>(config.run_count));
    for (int i = 0; i < config.run_count; ++i) {
        runs.push_back(play_once(layout, config.base_seed + static_cast<std::uint64_t>(i), config.move_cap));
    }
    return summarize_runs(std::move(runs), config.move_cap);
}

}  // namespace avalon
