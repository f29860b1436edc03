#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <stdexcept>

#include <json.hpp>

#include "avalon/model.hpp"
#include "support.hpp"

using namespace avalon;
using avalon::nn::Tensor;

namespace {

namespace fs = std::filesystem;

Sample random_sample(Rng& rng) {
    Sample s;
    s.size = testing::random_size(rng);
    s.symmetry = testing::random_symmetry(rng);
    s.grid = testing::random_symmetric_level(rng, s.size, s.symmetry);
    s.difficulty = rng.uniform01();
    return s;
}

DatasetManifest toy_manifest(int count, std::uint64_t seed) {
    Rng rng(seed);
    DatasetManifest m;
    for (int i = 0; i < count; ++i) {
        const Sample s = random_sample(rng);
        AnnotatedLevel level;
        level.grid = s.grid;
        level.size = s.size;
        level.symmetry = s.symmetry;
        level.median_moves = 10.0 + static_cast<double>(rng.uniform_below(31));
        level.split = Split::Train;
        m.levels.push_back(level);
    }
    m.annotated = true;
    refresh_bounds(m);
    return m;
}

ModelConfig shrunk(Variant variant) {
    ModelConfig c = variant == Variant::Avalon ? ModelConfig::avalon() : ModelConfig::vanilla();
    c.encoder_filters = {1, 1, 1};
    c.decoder_filters = {1, 1, kCellKinds};
    c.latent_dim = 2;
    return c;
}

std::string file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("avalon_test_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

Tensor<float> single_decode(const Cvae<float>& model, const Sample& s) {
    Tensor<float> zhat = model.decoder_batch(std::span<const Sample>(&s, 1));
    return model.decode(zhat);
}

}  // namespace

TEST_CASE("variant shapes") {
    const ModelConfig a = ModelConfig::avalon();
    const ModelConfig v = ModelConfig::vanilla();
    CHECK(a.encoder_channels() == 5);
    CHECK(v.encoder_channels() == 4);
    CHECK(a.decoder_input() == 20);
    CHECK(v.decoder_input() == 19);

    ModelConfig a_cmp = a;
    a_cmp.variant = v.variant;
    a_cmp.learning_rate = v.learning_rate;
    CHECK(a_cmp == v);

    Rng rng(3);
    const Sample s = random_sample(rng);
    for (const ModelConfig& c : {a, v}) {
        const Cvae<float> model(c, 1);
        const auto stats = model.encode(model.encoder_batch(std::span<const Sample>(&s, 1)));
        CHECK(stats.mu.shape == std::vector<int>{1, 5});
        CHECK(stats.logvar.shape == std::vector<int>{1, 5});
        const auto logits = single_decode(model, s);
        CHECK(logits.shape == std::vector<int>{1, 3, 11, 9});
    }
}

TEST_CASE("shape mismatches are rejected") {
    const Cvae<float> avalon_model(ModelConfig::avalon(), 1);
    const Cvae<float> vanilla_model(ModelConfig::vanilla(), 1);
    Rng rng(4);
    const Sample s = random_sample(rng);
    CHECK_THROWS_AS(avalon_model.encode(vanilla_model.encoder_batch(std::span<const Sample>(&s, 1))),
                    nn::ShapeError);
    CHECK_THROWS_AS(vanilla_model.decode(avalon_model.decoder_batch(std::span<const Sample>(&s, 1))),
                    nn::ShapeError);
}

TEST_CASE("encode and decode are deterministic") {
    const Cvae<float> model(ModelConfig::avalon(), 9);
    Rng rng(5);
    const Sample s = random_sample(rng);
    const auto x = model.encoder_batch(std::span<const Sample>(&s, 1));
    const auto a = model.encode(x);
    const auto b = model.encode(x);
    CHECK(a.mu.values == b.mu.values);
    CHECK(a.logvar.values == b.logvar.values);
    CHECK(single_decode(model, s).values == single_decode(model, s).values);

    const Cvae<float> twin(ModelConfig::avalon(), 9);
    CHECK(twin.encode(x).mu.values == a.mu.values);
}

TEST_CASE("encoder input is masked before encode") {
    const Cvae<float> model(ModelConfig::avalon(), 2);
    Rng rng(6);
    Sample s = random_sample(rng);
    s.size = {8, 10};
    s.symmetry = SymmetryKind::Vertical;
    s.grid = testing::random_symmetric_level(rng, s.size, s.symmetry);
    const BinaryMask mask = build_symmetry_mask(s.size, s.symmetry);
    const BinaryMask area = build_size_mask(s.size);

    Tensor<float> masked = model.encoder_batch(std::span<const Sample>(&s, 1));
    Tensor<float> raw = masked;
    int restored = 0;
    for (int i = 0; i < kCanvasCells; ++i) {
        if (mask.at_index(i) || !area.at_index(i)) continue;
        raw[static_cast<std::size_t>(s.grid.cells()[i]) * kCanvasCells + i] = 1.0f;
        ++restored;
    }
    REQUIRE(restored > 0);
    const auto a = model.encode(masked);
    const auto b = model.encode(raw);
    CHECK(a.mu.values != b.mu.values);
}

TEST_CASE("initial loss is near ln 3") {
    const Cvae<float> base(ModelConfig::avalon(), 11);
    Cvae<float> model = base;
    Rng rng(12);
    std::vector<Sample> batch;
    for (int i = 0; i < 20; ++i) batch.push_back(random_sample(rng));
    Rng noise(1);
    const LossBreakdown loss = model.forward_backward(batch, noise, false);
    CHECK(loss.ce == doctest::Approx(std::log(3.0)).epsilon(0.1));
    CHECK(loss.kl >= 0.0);
    CHECK(loss.kl < 0.1);
    CHECK(loss.total == doctest::Approx(loss.ce + loss.kl));
}

TEST_CASE("end-to-end gradient matches finite differences") {
    for (Variant variant : {Variant::Avalon, Variant::Vanilla}) {
        CAPTURE(to_string(variant));
        Cvae<double> model(shrunk(variant), 21);
        Rng rng(22);
        // Zero biases put many pre-activations exactly on the ReLU kink.
        for (auto& p : model.params().params()) {
            if (p.value.shape.size() != 1) continue;
            for (auto& v : p.value.values) v = 0.2 * rng.uniform01() - 0.1;
        }
        std::vector<Sample> batch;
        for (int i = 0; i < 3; ++i) batch.push_back(random_sample(rng));

        auto loss = [&] {
            Rng noise(77);
            return model.forward_backward(batch, noise, false).total;
        };
        model.params().zero_grad();
        {
            Rng noise(77);
            model.forward_backward(batch, noise, true);
        }
        constexpr double h = 1e-6;
        for (auto& p : model.params().params()) {
            CAPTURE(p.name);
            double diff = 0.0;
            double norm_a = 0.0;
            double norm_n = 0.0;
            for (std::size_t i = 0; i < p.value.size(); ++i) {
                const double saved = p.value[i];
                p.value[i] = saved + h;
                const double up = loss();
                p.value[i] = saved - h;
                const double down = loss();
                p.value[i] = saved;
                const double numeric = (up - down) / (2 * h);
                diff += (numeric - p.grad[i]) * (numeric - p.grad[i]);
                norm_a += p.grad[i] * p.grad[i];
                norm_n += numeric * numeric;
            }
            const double scale = std::max(std::sqrt(norm_a), std::sqrt(norm_n));
            if (scale < 1e-9) continue;
            CHECK(std::sqrt(diff) / scale < 1e-3);
        }
    }
}

TEST_CASE("loss ignores masked-out target cells") {
    Cvae<float> model(ModelConfig::avalon(), 31);
    Rng rng(32);
    int altered = 0;
    for (int trial = 0; trial < 50; ++trial) {
        Sample s = random_sample(rng);
        const BinaryMask mask = build_symmetry_mask(s.size, s.symmetry);
        Sample t = s;
        for (int i = 0; i < kCanvasCells; ++i) {
            if (mask.at_index(i)) continue;
            const int x = i % kCanvasWidth;
            const int y = i / kCanvasWidth;
            t.grid.set(x, y, static_cast<CellKind>((static_cast<int>(s.grid.at(x, y)) + 1) % kCellKinds));
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
        CHECK(a.total == b.total);
        for (std::size_t k = 0; k < grads.size(); ++k) CHECK(grads[k] == model.params().params()[k].grad.values);
    }
    CHECK(altered > 0);
}

TEST_CASE("checkpoint cadence, determinism and resume") {
    const DatasetManifest manifest = toy_manifest(12, 41);
    ModelConfig config = shrunk(Variant::Avalon);
    config.epochs = 60;
    config.checkpoint_interval = 5;
    config.batch_size = 5;
    config.learning_rate = 1e-3;
    config.seed = 17;

    TempDir a("cadence_a");
    TempDir b("cadence_b");
    TempDir c("cadence_c");
    const auto written = train(manifest, config, {a.path, true, {}});
    REQUIRE(written.size() == 12);
    for (std::size_t i = 0; i < written.size(); ++i) {
        CHECK(written[i] == checkpoint_path(a.path, static_cast<int>(5 * (i + 1))));
    }
    CHECK(list_checkpoints(a.path) == written);

    std::ifstream log(a.path / "train_log.jsonl");
    int lines = 0;
    for (std::string line; std::getline(log, line); ++lines) {
        const auto j = nlohmann::json::parse(line);
        CHECK(j.at("epoch").get<int>() == lines + 1);
        CHECK(j.at("ce").get<double>() >= 0.0);
        CHECK(j.at("kl").get<double>() >= 0.0);
        CHECK(j.at("lr").get<double>() == config.learning_rate);
    }
    CHECK(lines == 60);

    train(manifest, config, {b.path, true, {}});
    CHECK(file_bytes(checkpoint_path(a.path, 5)) == file_bytes(checkpoint_path(b.path, 5)));

    ModelConfig half = config;
    half.epochs = 30;
    train(manifest, half, {c.path, true, {}});
    train(manifest, config, {c.path, true, {}});
    CHECK(file_bytes(checkpoint_path(a.path, 60)) == file_bytes(checkpoint_path(c.path, 60)));
    ModelConfig other = config;
    other.learning_rate = 2e-3;
    CHECK_THROWS(train(manifest, other, {c.path, true, {}}));

    const ModelConfig defaults = ModelConfig::avalon();
    CHECK(defaults.epochs / defaults.checkpoint_interval == 48);
    CHECK(defaults.batch_size == 100);
    CHECK(defaults.checkpoint_interval == 500);
}

TEST_CASE("training rejects bad manifests") {
    DatasetManifest empty;
    empty.m_min = 1;
    empty.m_max = 2;
    TempDir d("bad_manifest");
    CHECK_THROWS_AS(train(empty, shrunk(Variant::Avalon), {d.path, true, {}}), std::invalid_argument);
    DatasetManifest flat = toy_manifest(4, 1);
    flat.m_max = flat.m_min;
    CHECK_THROWS(train(flat, shrunk(Variant::Avalon), {d.path, true, {}}));
}

TEST_CASE("checkpoint round trip") {
    Checkpoint ckpt;
    ckpt.model = Cvae<float>(ModelConfig::vanilla(), 5);
    ckpt.adam = nn::AdamState<float>::zeros_like(ckpt.model.params(), nn::AdamHyper{5e-6});
    ckpt.adam.step = 7;
    ckpt.adam.first_moment[0].values[3] = 0.25f;
    ckpt.epoch = 500;
    ckpt.m_min = 13;
    ckpt.m_max = 40;
    TempDir d("roundtrip");
    const auto path = checkpoint_path(d.path, 500);
    CHECK(path.filename() == "ckpt_epoch_000500.bin");
    save_checkpoint(ckpt, path);
    CHECK(file_bytes(path).substr(0, 8) == "AVLNCKPT");
    const Checkpoint back = load_checkpoint(path);
    CHECK(back.model.config() == ckpt.model.config());
    CHECK(back.epoch == 500);
    CHECK(back.m_min == 13);
    CHECK(back.m_max == 40);
    CHECK(back.adam.step == 7);
    CHECK(back.adam.hyper.lr == doctest::Approx(5e-6));
    CHECK(back.adam.first_moment[0].values[3] == 0.25f);
    for (std::size_t i = 0; i < back.model.params().params().size(); ++i) {
        CHECK(back.model.params().params()[i].value.values == ckpt.model.params().params()[i].value.values);
    }
    const ConditionSpec spec{{7, 9}, SymmetryKind::Horizontal, std::nullopt};
    CHECK(generate(ckpt, spec, 3) == generate(back, spec, 3));

    std::ofstream(d.path / "junk.bin") << "not a checkpoint";
    CHECK_THROWS(load_checkpoint(d.path / "junk.bin"));
    CHECK(list_checkpoints(d.path) == std::vector<fs::path>{path});
}

TEST_CASE("generation postprocessing and errors") {
    Checkpoint avalon_ckpt;
    avalon_ckpt.model = Cvae<float>(ModelConfig::avalon(), 8);
    avalon_ckpt.m_min = 13;
    avalon_ckpt.m_max = 40;
    Checkpoint vanilla_ckpt;
    vanilla_ckpt.model = Cvae<float>(ModelConfig::vanilla(), 8);
    vanilla_ckpt.m_min = 13;
    vanilla_ckpt.m_max = 40;

    Rng rng(51);
    for (int trial = 0; trial < 60; ++trial) {
        ConditionSpec spec;
        spec.size = testing::random_size(rng);
        spec.symmetry = testing::random_symmetry(rng);
        spec.target_moves = 13.0 + rng.uniform_below(27);
        const LevelGrid level = generate(avalon_ckpt, spec, static_cast<std::uint64_t>(trial));
        CHECK(level == generate(avalon_ckpt, spec, static_cast<std::uint64_t>(trial)));
        CHECK(level == complete_symmetry(level, spec.size, spec.symmetry));
        const BinaryMask area = build_size_mask(spec.size);
        for (int i = 0; i < kCanvasCells; ++i) {
            if (!area.at_index(i)) CHECK(level.cells()[i] == CellKind::Block);
        }
    }

    const ConditionSpec ok{{6, 8}, SymmetryKind::Quadrant, 20.0};
    CHECK_THROWS_WITH_AS(generate(avalon_ckpt, {ok.size, ok.symmetry, 12.0}, 0), "difficulty out of range",
                         std::invalid_argument);
    CHECK_THROWS_WITH_AS(generate(avalon_ckpt, {ok.size, ok.symmetry, 40.0}, 0), "difficulty out of range",
                         std::invalid_argument);
    CHECK_NOTHROW(generate(avalon_ckpt, {ok.size, ok.symmetry, 39.0}, 0));
    CHECK_THROWS_AS(generate(avalon_ckpt, {ok.size, ok.symmetry, std::nullopt}, 0), std::invalid_argument);
    CHECK_THROWS_WITH_AS(generate(vanilla_ckpt, ok, 0), "model has no difficulty conditioner",
                         std::invalid_argument);
    CHECK_THROWS_AS(generate(vanilla_ckpt, {{3, 8}, SymmetryKind::Vertical, std::nullopt}, 0),
                    std::invalid_argument);
}

TEST_CASE("smoke training halves the loss and conditions on width") {
    const DatasetManifest manifest = toy_manifest(20, 61);
    ModelConfig config = ModelConfig::avalon();
    config.epochs = 500;
    config.checkpoint_interval = 500;
    config.learning_rate = 1e-3;
    config.seed = 3;
    TempDir d("smoke");
    std::vector<double> ce;
    const auto written = train(manifest, config, {d.path, true, [&](const EpochLog& e) { ce.push_back(e.ce); }});
    REQUIRE(ce.size() == 500);
    CHECK(ce.front() == doctest::Approx(std::log(3.0)).epsilon(0.1));
    CHECK(ce[199] < 0.5 * ce.front());

    const Checkpoint ckpt = load_checkpoint(written.back());
    Sample s;
    s.size = {6, 8};
    Sample t = s;
    t.size = {7, 8};
    CHECK(single_decode(ckpt.model, s).values != single_decode(ckpt.model, t).values);

    const auto samples = samples_for(manifest, Split::Train, true);
    CHECK(ckpt.model.masked_reconstruction_accuracy(samples) > 0.5);
}
