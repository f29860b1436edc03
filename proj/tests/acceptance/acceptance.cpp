// Acceptance runner: one PASS/FAIL line per criterion. Slow artifacts (dataset,
// desk-scale training runs) are cached under AVALON_ARTIFACTS and reused.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "avalon/bot.hpp"
#include "avalon/dataset.hpp"
#include "avalon/eval.hpp"
#include "avalon/model.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace avalon;
using namespace avalon::testing;
namespace fs = std::filesystem;
using nn::Tensor;

namespace {

constexpr std::uint64_t kDatasetSeed = 7;
constexpr int kDatasetCount = 198;
constexpr int kDeskEpochs = 4000;
constexpr double kSmokeLr = 1e-3;
const fs::path kArtifacts = AVALON_ARTIFACTS;

// Collects failed checks for one criterion.
struct Check {
    std::vector<std::string> failures;
    std::ostringstream notes;

    void expect(bool ok, const std::string& what) {
        if (!ok) failures.push_back(what);
    }
};

void log(const std::string& line) { std::cerr << "  .. " << line << std::endl; }

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Tensor<double> random_tensor(std::vector<int> shape, Rng& rng) {
    Tensor<double> t(std::move(shape));
    for (auto& v : t.values) v = rng.uniform(-1.0, 1.0);
    return t;
}

double dot(const Tensor<double>& a, const Tensor<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

Sample random_sample(Rng& rng) {
    Sample s;
    s.size = random_size(rng);
    s.symmetry = random_symmetry(rng);
    s.grid = random_symmetric_level(rng, s.size, s.symmetry);
    s.difficulty = rng.uniform01();
    return s;
}

// ---------------------------------------------------------------------------
// Shared artifacts
// ---------------------------------------------------------------------------

BotConfig protocol_bot() { return BotConfig{}; }

const DatasetManifest& dataset() {
    static const DatasetManifest manifest = [] {
        fs::create_directories(kArtifacts);
        const fs::path path = kArtifacts / "dataset.json";
        if (fs::exists(path)) {
            const DatasetManifest m = load_manifest(path);
            if (m.annotated && m.levels.size() == kDatasetCount) return m;
        }
        const auto t0 = std::chrono::steady_clock::now();
        const auto levels = generate_main_style(kDatasetCount, kDatasetSeed);
        DatasetManifest m = annotate(levels, protocol_bot(), DatasetStyle::Main, kDatasetSeed);
        save_manifest(m, path);
        log("annotated dataset in " + std::to_string(seconds_since(t0)) + " s");
        return m;
    }();
    return manifest;
}

ModelConfig desk_config(Variant variant, std::uint64_t seed) {
    ModelConfig c = variant == Variant::Avalon ? ModelConfig::avalon() : ModelConfig::vanilla();
    c.epochs = kDeskEpochs;
    c.seed = seed;
    return c;
}

fs::path ablation_dir(std::uint64_t seed) { return kArtifacts / ("ablation_seed_" + std::to_string(seed)); }

const AblationReport& ablation(std::uint64_t seed) {
    static std::map<std::uint64_t, AblationReport> cache;
    if (auto it = cache.find(seed); it != cache.end()) return it->second;
    const auto t0 = std::chrono::steady_clock::now();
    log("ablation seed " + std::to_string(seed) + ": training/resuming both variants");
    AblationReport r = run_ablation(dataset(), desk_config(Variant::Avalon, seed), desk_config(Variant::Vanilla, seed),
                                    seed, ablation_dir(seed), protocol_bot());
    log("ablation seed " + std::to_string(seed) + " done in " + std::to_string(seconds_since(t0)) + " s");
    return cache.emplace(seed, std::move(r)).first->second;
}

// ---------------------------------------------------------------------------
// Criteria
// ---------------------------------------------------------------------------

void criterion_gradients(Check& c) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(101);
    constexpr double kKernelTol = 1e-4;

    {
        Tensor<double> x = random_tensor({2, 2, 5, 4}, rng);
        Tensor<double> w = random_tensor({3, 2, 3, 3}, rng);
        Tensor<double> b = random_tensor({3}, rng);
        const Tensor<double> r = random_tensor({2, 3, 5, 4}, rng);
        Tensor<double> dx, dw(w.shape), db(b.shape);
        nn::conv2d_backward(x, w, r, &dx, dw, db);
        auto loss = [&] { return dot(nn::conv2d(x, w, b), r); };
        c.expect(fd_error(x, dx, loss) < kKernelTol, "conv2d dx");
        c.expect(fd_error(w, dw, loss) < kKernelTol, "conv2d dw");
        c.expect(fd_error(b, db, loss) < kKernelTol, "conv2d db");
    }
    {
        Tensor<double> x = random_tensor({2, 3, 4, 5}, rng);
        Tensor<double> w = random_tensor({3, 2, 3, 3}, rng);
        Tensor<double> b = random_tensor({2}, rng);
        const Tensor<double> r = random_tensor({2, 2, 4, 5}, rng);
        Tensor<double> dx, dw(w.shape), db(b.shape);
        nn::transposed_conv2d_backward(x, w, r, &dx, dw, db);
        auto loss = [&] { return dot(nn::transposed_conv2d(x, w, b), r); };
        c.expect(fd_error(x, dx, loss) < kKernelTol, "transposed conv dx");
        c.expect(fd_error(w, dw, loss) < kKernelTol, "transposed conv dw");
        c.expect(fd_error(b, db, loss) < kKernelTol, "transposed conv db");
    }
    {
        Tensor<double> x = random_tensor({3, 6}, rng);
        Tensor<double> w = random_tensor({4, 6}, rng);
        Tensor<double> b = random_tensor({4}, rng);
        const Tensor<double> r = random_tensor({3, 4}, rng);
        Tensor<double> dx, dw(w.shape), db(b.shape);
        nn::fully_connected_backward(x, w, r, &dx, dw, db);
        auto loss = [&] { return dot(nn::fully_connected(x, w, b), r); };
        c.expect(fd_error(x, dx, loss) < kKernelTol, "fully connected dx");
        c.expect(fd_error(w, dw, loss) < kKernelTol, "fully connected dw");
        c.expect(fd_error(b, db, loss) < kKernelTol, "fully connected db");
    }
    {
        Tensor<double> x = random_tensor({40}, rng);
        for (auto& v : x.values) {
            if (std::abs(v) < 0.01) v = 0.5;  // keep clear of the kink
        }
        const Tensor<double> r = random_tensor({40}, rng);
        auto loss = [&] { return dot(nn::relu(x), r); };
        c.expect(fd_error(x, nn::relu_backward(x, r), loss) < kKernelTol, "relu");
    }
    {
        const LevelSize size{7, 9};
        const LevelGrid target = random_symmetric_level(rng, size, SymmetryKind::Vertical);
        const BinaryMask mask = build_symmetry_mask(size, SymmetryKind::Vertical);
        Tensor<double> logits = random_tensor({kCellKinds * kCanvasCells}, rng);
        auto ce = [&] {
            return nn::masked_softmax_cross_entropy<double>(std::span<const double>(logits.values), target, mask);
        };
        const auto g = ce();
        c.expect(fd_error(logits, Tensor<double>(logits.shape, g.grad), [&] { return ce().loss; }) < kKernelTol,
                 "masked cross-entropy");
    }
    {
        Tensor<double> mu = random_tensor({5}, rng);
        Tensor<double> lv = random_tensor({5}, rng);
        const auto k = nn::kl_standard_normal<double>(mu.values, lv.values);
        auto loss = [&] { return nn::kl_standard_normal<double>(mu.values, lv.values).loss; };
        c.expect(fd_error(mu, Tensor<double>({5}, k.dmu), loss) < kKernelTol, "kl dmu");
        c.expect(fd_error(lv, Tensor<double>({5}, k.dlogvar), loss) < kKernelTol, "kl dlogvar");
    }

    for (Variant variant : {Variant::Avalon, Variant::Vanilla}) {
        ModelConfig config = variant == Variant::Avalon ? ModelConfig::avalon() : ModelConfig::vanilla();
        config.encoder_filters = {1, 1, 1};
        config.decoder_filters = {1, 1, kCellKinds};
        config.latent_dim = 2;
        Cvae<double> model(config, 21);
        for (auto& p : model.params().params()) {
            if (p.value.shape.size() != 1) continue;
            for (auto& v : p.value.values) v = 0.2 * rng.uniform01() - 0.1;
        }
        std::vector<Sample> batch;
        for (int i = 0; i < 3; ++i) batch.push_back(random_sample(rng));
        model.params().zero_grad();
        {
            Rng noise(77);
            model.forward_backward(batch, noise, true);
        }
        auto loss = [&] {
            Rng noise(77);
            return model.forward_backward(batch, noise, false).total;
        };
        for (auto& p : model.params().params()) {
            const Tensor<double> analytic = p.grad;
            const double err = fd_error(p.value, analytic, loss, 1e-6);
            c.expect(err < 1e-3, std::string(to_string(variant)) + " end-to-end " + p.name);
        }
    }
    const double elapsed = seconds_since(t0);
    c.notes << "runtime " << elapsed << " s";
    c.expect(elapsed < 60.0, "runtime over 1 min");
}

void criterion_masking(Check& c) {
    Cvae<float> model(ModelConfig::avalon(), 31);
    Rng rng(32);
    int altered = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const Sample s = random_sample(rng);
        const BinaryMask mask = build_symmetry_mask(s.size, s.symmetry);
        Sample t = s;
        for (int i = 0; i < kCanvasCells; ++i) {
            if (mask.at_index(i)) continue;
            const int x = i % kCanvasWidth;
            const int y = i / kCanvasWidth;
            t.grid.set(x, y, static_cast<CellKind>((static_cast<int>(s.grid.at(x, y)) + 1 + rng.uniform_below(2)) %
                                                   kCellKinds));
            ++altered;
        }
        model.params().zero_grad();
        Rng n1(trial);
        const LossBreakdown a = model.forward_backward(std::span<const Sample>(&s, 1), n1, true);
        std::vector<std::vector<float>> grads;
        for (const auto& p : model.params().params()) grads.push_back(p.grad.values);
        model.params().zero_grad();
        Rng n2(trial);
        const LossBreakdown b = model.forward_backward(std::span<const Sample>(&t, 1), n2, true);
        c.expect(a.total == b.total && a.ce == b.ce && a.kl == b.kl, "loss changed on trial " + std::to_string(trial));
        for (std::size_t k = 0; k < grads.size(); ++k) {
            c.expect(grads[k] == model.params().params()[k].grad.values,
                     "gradient " + model.params().params()[k].name + " changed on trial " + std::to_string(trial));
        }
    }
    c.expect(altered > 0, "no masked-out cells were altered");
    c.notes << "50 levels, " << altered << " masked-out cells altered";
}

// Independent mirror predicate over the requested play area.
bool mirrored(const LevelGrid& level, LevelSize size, SymmetryKind sym) {
    const Coord o = size.origin();
    for (int i = 0; i < size.height; ++i) {
        for (int j = 0; j < size.width; ++j) {
            const CellKind v = level.at(o.x + j, o.y + i);
            const bool vert = sym == SymmetryKind::Vertical || sym == SymmetryKind::Quadrant;
            const bool horiz = sym == SymmetryKind::Horizontal || sym == SymmetryKind::Quadrant;
            if (vert && level.at(o.x + size.width - 1 - j, o.y + i) != v) return false;
            if (horiz && level.at(o.x + j, o.y + size.height - 1 - i) != v) return false;
        }
    }
    for (int i = 0; i < kCanvasCells; ++i) {
        if (!size.contains(i % kCanvasWidth, i / kCanvasWidth) && level.cells()[i] != CellKind::Block) return false;
    }
    return true;
}

void criterion_symmetry(Check& c) {
    const std::uint64_t seed = 1;
    for (const auto* report : {&ablation(seed).avalon, &ablation(seed).vanilla}) {
        const auto& details = report->details;
        int ok = 0;
        for (const auto& d : details) {
            const SymmetryKind detected = detect_symmetry(d.level, d.spec.size);
            const bool consistent = detected == d.spec.symmetry || detected == SymmetryKind::Quadrant;
            ok += consistent && mirrored(d.level, d.spec.size, d.spec.symmetry);
        }
        const double pct = details.empty() ? 0.0 : 100.0 * ok / static_cast<double>(details.size());
        c.notes << to_string(report->variant) << " " << pct << "% of " << details.size() << "  ";
        c.expect(details.size() == 144, std::string(to_string(report->variant)) + " sweep is not 144 levels");
        c.expect(ok == static_cast<int>(details.size()), std::string(to_string(report->variant)) + " below 100%");
    }
}

void criterion_round_trip(Check& c) {
    Rng rng(404);
    int cases = 0;
    for (const LevelSize size : all_sizes()) {
        for (SymmetryKind sym : {SymmetryKind::Vertical, SymmetryKind::Horizontal, SymmetryKind::Quadrant}) {
            for (int rep = 0; rep < 5; ++rep) {
                const LevelGrid level = random_symmetric_level(rng, size, sym);
                const BinaryMask mask = build_symmetry_mask(size, sym);
                LevelGrid masked;
                for (int i = 0; i < kCanvasCells; ++i) {
                    const int x = i % kCanvasWidth;
                    const int y = i / kCanvasWidth;
                    masked.set(x, y, mask.at_index(i) ? level.at(x, y) : static_cast<CellKind>(rng.uniform_below(3)));
                }
                c.expect(complete_symmetry(masked, size, sym) == level,
                         std::to_string(size.width) + "x" + std::to_string(size.height) + " " +
                             std::string(to_string(sym)));
                ++cases;
            }
        }
    }
    c.expect(all_sizes().size() == 48, "size count");
    c.notes << cases << " symmetric levels";
}

void criterion_engine(Check& c) {
    const auto fixtures = all_fixtures(fs::path(AVALON_FIXTURES) / "cascades");
    c.expect(fixtures.size() >= 5, "fewer than 5 golden traces");
    bool gap = false;
    bool chain = false;
    for (const auto& f : fixtures) {
        BoardState state = board_from(f.board, f.seed);
        gap = gap || state.layout().count(CellKind::Gap) > 0;
        for (std::size_t i = 0; i < f.moves.size(); ++i) {
            BoardState manual = state;
            manual.swap_tiles(f.moves[i].a, f.moves[i].b);
            int rounds = 0;
            for (auto hit = find_matches(manual); !hit.empty(); hit = find_matches(manual)) {
                manual.clear(hit);
                manual.settle_gravity();
                manual.refill();
                ++rounds;
            }
            chain = chain || rounds >= 2;
            c.expect(i < f.rounds.size() && rounds == f.rounds[i], f.name + " cascade rounds");
            state = apply_move(state, f.moves[i]);
        }
        c.expect(state.render() == f.expected, f.name + " final board");
        c.expect(state.red_cleared() == f.red_cleared, f.name + " red count");
    }
    c.expect(gap, "no trace exercises a GAP");
    c.expect(chain, "no multi-step cascade trace");

    Rng rng(2024);
    for (int t = 0; t < 1000; ++t) {
        const LevelSize size = random_size(rng);
        LevelGrid layout = full_area(size);
        TileArray tiles{};
        for (int y = 0; y < kCanvasHeight; ++y) {
            for (int x = 0; x < kCanvasWidth; ++x) {
                if (!size.contains(x, y)) continue;
                const auto r = rng.uniform_below(10);
                if (r == 0) layout.set(x, y, CellKind::Gap);
                else if (r == 1) layout.set(x, y, CellKind::Block);
                else tiles[cell_index(x, y)] = static_cast<TileColor>(rng.uniform_below(kColorCount));
            }
        }
        const BoardState s = BoardState::from_tiles(layout, tiles, 0);
        const auto found = find_matches(s);
        c.expect(std::set<Coord>(found.begin(), found.end()) == brute_force_matches(s) &&
                     found.size() == brute_force_matches(s).size(),
                 "find_matches disagrees on random board " + std::to_string(t));
    }
    c.notes << fixtures.size() << " traces, 1000 random boards";
}

void criterion_bot(Check& c) {
    const DatasetManifest& m = dataset();
    const BotConfig bot = protocol_bot();
    const auto train = m.split(Split::Train);

    // Statistics oracle on the recorded TRAIN runs.
    int checked = 0;
    for (const AnnotatedLevel* level : train) {
        const PlaythroughStats s = evaluate_level(level->grid, bot);
        c.expect(s.median_moves == rank_median(s.runs), "median oracle");
        c.expect(std::abs(s.std_moves - moment_std(s.runs)) <= 1e-12 * std::max(1.0, s.std_moves), "std oracle");
        c.expect(s.median_moves == level->median_moves && s.std_moves == level->std_moves,
                 "annotation differs from a fresh evaluation");
        ++checked;
    }

    // Determinism across three repeated runs.
    for (std::size_t i = 0; i < std::min<std::size_t>(10, train.size()); ++i) {
        const auto a = evaluate_level(train[i]->grid, bot);
        const auto b = evaluate_level(train[i]->grid, bot);
        const auto d = evaluate_level(train[i]->grid, bot);
        c.expect(a.runs == b.runs && b.runs == d.runs, "evaluate_level is not deterministic");
    }

    long greedy = 0;
    long random = 0;
    long total = 0;
    for (const AnnotatedLevel* level : train) {
        for (int i = 0; i < bot.run_count; ++i) {
            const std::uint64_t seed = bot.base_seed + static_cast<std::uint64_t>(i);
            greedy += play_once(level->grid, seed, bot.move_cap) <= bot.move_cap;
            random += play_random(level->grid, seed, bot.move_cap) <= bot.move_cap;
            ++total;
        }
    }
    const double g = 100.0 * greedy / static_cast<double>(total);
    const double r = 100.0 * random / static_cast<double>(total);
    c.notes << checked << " TRAIN levels; success greedy " << g << "% vs random " << r << "%";
    c.expect(greedy > random, "greedy does not beat the random baseline");
}

void criterion_training(Check& c) {
    const DatasetManifest& m = dataset();
    DatasetManifest subset = m;
    subset.levels.clear();
    for (const AnnotatedLevel* level : m.split(Split::Train)) {
        if (subset.levels.size() == 20) break;
        subset.levels.push_back(*level);
    }
    subset.m_min = m.m_min;
    subset.m_max = m.m_max;
    ModelConfig smoke = ModelConfig::avalon();
    smoke.epochs = 200;
    smoke.checkpoint_interval = 200;
    smoke.learning_rate = kSmokeLr;
    smoke.seed = 1;
    const fs::path dir = kArtifacts / "smoke";
    fs::remove_all(dir);
    std::vector<double> ce;
    train(subset, smoke, {dir, false, [&](const EpochLog& e) { ce.push_back(e.ce); }});
    c.expect(ce.size() == 200, "smoke run did not log 200 epochs");
    if (ce.size() == 200) {
        c.notes << "smoke CE " << ce.front() << " -> " << ce.back() << " (lr " << kSmokeLr << "); ";
        c.expect(std::abs(ce.front() - std::log(3.0)) < 0.15, "initial CE is not near ln 3");
        c.expect(ce.back() <= 0.5 * ce.front(), "smoke CE not halved");
    }

    const auto t0 = std::chrono::steady_clock::now();
    const ModelConfig desk = desk_config(Variant::Avalon, 1);
    const fs::path desk_dir = ablation_dir(1) / "avalon";
    const auto written = train(m, desk, {desk_dir, true, {}});
    const Checkpoint last = load_checkpoint(written.back());
    const double acc = last.model.masked_reconstruction_accuracy(samples_for(m, Split::Train, true));
    c.notes << "desk run " << last.epoch << " epochs, TRAIN reconstruction " << 100.0 * acc << "% ("
            << seconds_since(t0) << " s this session)";
    c.expect(last.epoch == kDeskEpochs, "desk run incomplete");
    c.expect(acc >= 0.9, "reconstruction accuracy below 90%");
}

void criterion_ablation(Check& c) {
    const double ds_valid = dataset_valid_pct(dataset());
    std::vector<std::uint64_t> seeds{1};
    int avalon_wins = 0;
    auto run = [&](std::uint64_t seed) {
        const AblationReport& r = ablation(seed);
        const bool ok = r.avalon.valid_level_pct >= r.vanilla.valid_level_pct;
        avalon_wins += ok;
        c.notes << "seed " << seed << ": avalon " << r.avalon.valid_level_pct << "% (epoch " << r.avalon.epoch
                << ") vs vanilla " << r.vanilla.valid_level_pct << "% (epoch " << r.vanilla.epoch << "); ";
        std::cout << "      seed " << seed << " report: " << r.to_json().dump() << std::endl;
        return ok;
    };
    if (!run(1)) {
        for (std::uint64_t extra : {2, 3}) {
            run(extra);
            seeds.push_back(extra);
        }
    }
    c.notes << "dataset valid " << ds_valid << "%";
    c.expect(2 * avalon_wins > static_cast<int>(seeds.size()), "Avalon valid % below Vanilla in the majority of seeds");
}

void criterion_plagiarism(Check& c) {
    const DatasetManifest& m = dataset();
    const auto train = m.split(Split::Train);
    const AblationReport& r = ablation(1);
    for (const MetricsReport* report : {&r.avalon, &r.vanilla}) {
        std::vector<LevelGrid> levels;
        for (const auto& d : report->details) levels.push_back(d.level);
        auto copied = [&](const LevelGrid& g) {
            for (const AnnotatedLevel* t : train) {
                if (t->grid == g) return true;
            }
            return false;
        };
        int base = 0;
        for (const auto& g : levels) base += copied(g);
        const double n = static_cast<double>(levels.size());
        c.expect(report->plagiarism_score == 100.0 * base / n, "reported score differs from the recount");
        c.expect(plagiarism_score(levels, m) == 100.0 * base / n, "baseline score differs from the recount");
        c.notes << to_string(report->variant) << " baseline " << report->plagiarism_score << "%; ";

        int injected = 0;
        std::size_t slot = 0;
        for (int k = 1; k <= 5; ++k) {
            while (slot < levels.size() && copied(levels[slot])) ++slot;
            if (slot >= levels.size()) break;
            levels[slot] = train[static_cast<std::size_t>(k)]->grid;
            ++injected;
            c.expect(plagiarism_score(levels, m) == 100.0 * (base + injected) / n,
                     "injection of " + std::to_string(k) + " levels");
        }
        if (base == 0) c.expect(plagiarism_score(levels, m) == 100.0 * 5 / 144.0, "5 injections != 500/144");
    }
}

void criterion_metrics(Check& c) {
    Rng rng(9);
    const LevelGrid a = random_symmetric_level(rng, {6, 8}, SymmetryKind::Vertical);
    LevelGrid b = a;
    b.set(0, 0, CellKind::Gap);
    c.expect(diversity_accuracy(std::vector<LevelGrid>{a, b, a}) == 200.0 / 3.0, "diversity 3-level case");
    c.expect(std::abs(diversity_accuracy(std::vector<LevelGrid>{a, b, a}) - 66.67) < 0.005, "diversity 66.67");
    c.expect(diversity_accuracy(std::vector<LevelGrid>{a, a}) == 0.0, "diversity duplicate pair");

    c.expect(within_difficulty_window(15, 14, 2), "window 15/14/2");
    c.expect(within_difficulty_window(17, 14, 3), "window boundary is inclusive");
    c.expect(!within_difficulty_window(10, 20, 3), "window 10/20/3");
    std::vector<SweepItem> items(2);
    items[0].spec.target_moves = 15;
    items[1].spec.target_moves = 10;
    std::vector<PlaythroughStats> validated(2);
    validated[0].median_moves = 14;
    validated[0].std_moves = 2;
    validated[1].median_moves = 20;
    validated[1].std_moves = 3;
    const auto d = difficulty_accuracy(items, validated);
    c.expect(d.accuracy == 50.0 && d.distances == std::vector<double>{1, 10}, "difficulty accuracy example");
    c.expect(d.distance_mean == 5.5 && d.distance_std == 4.5, "difficulty distance stats");

    c.expect(quantile_linear({2, 4, 6, 8}, 0.25) == 3.5 && quantile_linear({2, 4, 6, 8}, 0.75) == 6.5,
             "quartiles of {2,4,6,8}");
    const LevelSize size{6, 8};
    auto with_gaps = [&](int gaps) {
        LevelGrid g = full_area(size);
        const Coord o = size.origin();
        for (int k = 0; k < gaps; ++k) g.set(o.x + 1 + k % 5, o.y + 1 + k / 5, CellKind::Gap);
        return g;
    };
    DatasetManifest manifest;
    for (int gaps : {2, 4, 6, 8}) {
        AnnotatedLevel l;
        l.grid = with_gaps(gaps);
        l.size = size;
        l.split = Split::Train;
        manifest.levels.push_back(l);
    }
    std::vector<TileBucket> buckets;
    const std::vector<SweepItem> inference{{{size, SymmetryKind::Unknown, std::nullopt}, with_gaps(4)},
                                           {{size, SymmetryKind::Unknown, std::nullopt}, with_gaps(6)}};
    const double tile = tile_distribution_accuracy(inference, manifest, &buckets);
    bool gap_bucket = false;
    for (const auto& bkt : buckets) {
        if (bkt.kind != CellKind::Gap) continue;
        gap_bucket = bkt.q1 == 3.5 && bkt.q3 == 6.5 && bkt.inference_median == 5.0 && bkt.accurate;
    }
    c.expect(gap_bucket, "GAP bucket {2,4,6,8} with median 5");
    c.expect(tile == 100.0, "tile accuracy of an in-range inference set");

    std::vector<SweepItem> sized;
    for (const LevelSize s : all_sizes()) {
        for (int k = 0; k < 3; ++k) {
            sized.push_back({{s, SymmetryKind::Vertical, std::nullopt},
                             random_symmetric_level(rng, s, SymmetryKind::Vertical)});
        }
    }
    c.expect(size_accuracy(sized) == 100.0, "size accuracy all exact");
    for (std::size_t i = 0; i < 72; ++i) {
        const LevelSize s = sized[i].spec.size;
        sized[i].spec.size = {s.width == kMaxWidth ? kMinWidth : s.width + 1, s.height};
    }
    c.expect(size_accuracy(sized) == 50.0, "size accuracy 72 of 144");
}

void criterion_constants(Check& c) {
    const SweepSpec spec;
    c.expect(all_sizes().size() == 48, "48 sizes");
    c.expect(spec.sizes.size() == 48, "sweep sizes");
    c.expect(spec.symmetries.size() == 3, "3 symmetries");
    c.expect(spec.total() == 144, "144 levels");
    c.expect(spec.difficulty_max == 20.0, "difficulty upper bound 20");
    c.expect(move_cap_for(kValidMoves) == 39 && BotConfig{}.move_cap == 39, "bot cap 39");
    c.expect(BotConfig{}.run_count == 30, "30 runs per level");

    const AblationReport& r = ablation(1);
    const double m_min = dataset().m_min;
    c.expect(r.avalon.details.size() == 144, "avalon sweep size");
    for (const auto& d : r.avalon.details) {
        c.expect(d.spec.target_moves && *d.spec.target_moves >= m_min && *d.spec.target_moves <= 20.0,
                 "difficulty target outside [m_min, 20]");
    }
    for (const auto& d : r.vanilla.details) c.expect(!d.spec.target_moves, "vanilla sweep carries a target");
    c.notes << "m_min " << m_min;
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        std::function<void(Check&)> run;
    };
    const std::vector<Criterion> criteria{
        {1, "gradient correctness", criterion_gradients},
        {2, "masking semantics", criterion_masking},
        {3, "symmetry accuracy", criterion_symmetry},
        {4, "mask/mirror round trip", criterion_round_trip},
        {5, "engine oracle", criterion_engine},
        {6, "bot statistics", criterion_bot},
        {7, "training progress", criterion_training},
        {8, "ablation direction", criterion_ablation},
        {9, "plagiarism mechanics", criterion_plagiarism},
        {10, "metric unit suites", criterion_metrics},
        {11, "sweep protocol constants", criterion_constants},
    };
    int failed = 0;
    for (const auto& cr : criteria) {
        Check check;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            cr.run(check);
        } catch (const std::exception& e) {
            check.failures.push_back(std::string("exception: ") + e.what());
        }
        const bool pass = check.failures.empty();
        failed += !pass;
        std::cout << (pass ? "PASS" : "FAIL") << " " << cr.id << " " << cr.name << " (" << seconds_since(t0)
                  << " s) " << check.notes.str() << std::endl;
        for (std::size_t i = 0; i < std::min<std::size_t>(check.failures.size(), 10); ++i) {
            std::cout << "      " << check.failures[i] << std::endl;
        }
        if (check.failures.size() > 10) std::cout << "      ... " << check.failures.size() - 10 << " more" << std::endl;
    }
    std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
    return failed == 0 ? 0 : 1;
}
