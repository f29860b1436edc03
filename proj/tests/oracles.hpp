#pragma once

// Reference implementations shared by the unit suites and the acceptance runner.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "avalon/engine.hpp"
#include "avalon/neural.hpp"

namespace avalon::testing {

struct CascadeFixture {
    std::string name;
    std::uint64_t seed = 0;
    std::vector<SwapMove> moves;
    std::string board;
    std::string expected;
    int red_cleared = 0;
    std::vector<int> rounds;
};

inline CascadeFixture load_fixture(const std::filesystem::path& path) {
    CascadeFixture f;
    f.name = path.filename().string();
    std::ifstream in(path);
    std::string line;
    std::string* section = nullptr;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#' && line.size() != kCanvasWidth) continue;
        if (line.rfind("seed:", 0) == 0) {
            f.seed = std::stoull(line.substr(5));
        } else if (line.rfind("move:", 0) == 0) {
            int ax, ay, bx, by;
            std::sscanf(line.c_str(), "move: %d,%d %d,%d", &ax, &ay, &bx, &by);
            f.moves.push_back({{ax, ay}, {bx, by}});
        } else if (line == "board:") {
            section = &f.board;
        } else if (line == "expected:") {
            section = &f.expected;
        } else if (line.rfind("red_cleared:", 0) == 0) {
            f.red_cleared = std::stoi(line.substr(12));
        } else if (line.rfind("rounds:", 0) == 0) {
            f.rounds.push_back(std::stoi(line.substr(7)));
        } else if (section != nullptr) {
            *section += line + "\n";
        }
    }
    return f;
}

inline std::vector<CascadeFixture> all_fixtures(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> paths;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.path().extension() == ".txt") paths.push_back(entry.path());
    }
    std::sort(paths.begin(), paths.end());
    std::vector<CascadeFixture> out;
    for (const auto& p : paths) out.push_back(load_fixture(p));
    return out;
}

inline BoardState board_from(const std::string& text, std::uint64_t seed) {
    return BoardState::from_tiles(layout_from_tiles_text(text), parse_tiles(text), seed);
}

// Every window of three equal tiles, horizontal or vertical.
inline std::set<Coord> brute_force_matches(const BoardState& s) {
    std::set<Coord> hit;
    for (int y = 0; y < kCanvasHeight; ++y) {
        for (int x = 0; x < kCanvasWidth; ++x) {
            const auto c = s.tile(x, y);
            if (!c) continue;
            if (x + 2 < kCanvasWidth && s.tile(x + 1, y) == c && s.tile(x + 2, y) == c) {
                hit.insert({{x, y}, {x + 1, y}, {x + 2, y}});
            }
            if (y + 2 < kCanvasHeight && s.tile(x, y + 1) == c && s.tile(x, y + 2) == c) {
                hit.insert({{x, y}, {x, y + 1}, {x, y + 2}});
            }
        }
    }
    return hit;
}

inline LevelGrid full_area(LevelSize size) {
    LevelGrid g;
    for (int y = 0; y < kCanvasHeight; ++y) {
        for (int x = 0; x < kCanvasWidth; ++x) {
            if (size.contains(x, y)) g.set(x, y, CellKind::Playfield);
        }
    }
    return g;
}

// Textbook statistics written independently of summarize_runs: the median by
// rank counting, the variance by the E[x^2] - E[x]^2 identity in long double.
inline double rank_median(const std::vector<int>& v) {
    const std::size_t n = v.size();
    auto kth = [&](std::size_t k) {
        for (int candidate : v) {
            std::size_t below = 0;
            std::size_t equal = 0;
            for (int other : v) {
                below += other < candidate;
                equal += other == candidate;
            }
            if (below <= k && k < below + equal) return candidate;
        }
        return 0;
    };
    return n % 2 == 1 ? kth(n / 2) : (kth(n / 2 - 1) + kth(n / 2)) / 2.0;
}

inline double moment_std(const std::vector<int>& v) {
    long double s = 0;
    long double s2 = 0;
    for (int x : v) {
        s += x;
        s2 += static_cast<long double>(x) * x;
    }
    const long double n = static_cast<long double>(v.size());
    return static_cast<double>(std::sqrt(s2 / n - (s / n) * (s / n)));
}

// Norm-wise relative error between an analytic gradient and central differences of
// `loss` with respect to every entry of `param`.
inline double fd_error(nn::Tensor<double>& param, const nn::Tensor<double>& analytic,
                       const std::function<double()>& loss, double step = 1e-4) {
    double diff = 0.0;
    double norm_a = 0.0;
    double norm_n = 0.0;
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double saved = param[i];
        param[i] = saved + step;
        const double up = loss();
        param[i] = saved - step;
        const double down = loss();
        param[i] = saved;
        const double numeric = (up - down) / (2 * step);
        diff += (numeric - analytic[i]) * (numeric - analytic[i]);
        norm_a += analytic[i] * analytic[i];
        norm_n += numeric * numeric;
    }
    return std::sqrt(diff) / std::max(1e-12, std::max(std::sqrt(norm_a), std::sqrt(norm_n)));
}

}  // namespace avalon::testing
