#include "avalon/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "avalon/bot.hpp"

namespace avalon {

using nn::Tensor;

std::string_view to_string(Variant v) { return v == Variant::Avalon ? "avalon" : "vanilla"; }

std::optional<Variant> parse_variant(std::string_view text) {
    if (text == "avalon") return Variant::Avalon;
    if (text == "vanilla") return Variant::Vanilla;
    return std::nullopt;
}

ModelConfig ModelConfig::avalon() { return ModelConfig{}; }

ModelConfig ModelConfig::vanilla() {
    ModelConfig c;
    c.variant = Variant::Vanilla;
    c.learning_rate = 5e-6;
    return c;
}

void ModelConfig::validate() const {
    if (latent_dim < 1) throw std::invalid_argument("latent_dim must be positive");
    for (int f : encoder_filters) {
        if (f < 1) throw std::invalid_argument("encoder filter counts must be positive");
    }
    if (decoder_filters[0] < 1 || decoder_filters[1] < 1) {
        throw std::invalid_argument("decoder filter counts must be positive");
    }
    if (decoder_filters[2] != kCellKinds) throw std::invalid_argument("decoder must end with 3 filters");
    if (batch_size < 1 || epochs < 0 || checkpoint_interval < 1) {
        throw std::invalid_argument("batch size, epochs and checkpoint interval must be positive");
    }
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
}

std::vector<float> encoder_input(const Sample& sample, Variant variant) {
    const int channels = kCellKinds + 1 + (variant == Variant::Avalon ? 1 : 0);
    std::vector<float> planes(static_cast<std::size_t>(channels) * kCanvasCells, 0.0f);
    const BinaryMask sym = build_symmetry_mask(sample.size, sample.symmetry);
    const BinaryMask area = build_size_mask(sample.size);
    for (int i = 0; i < kCanvasCells; ++i) {
        if (sym.at_index(i)) {
            const int k = static_cast<int>(sample.grid.cells()[i]);
            planes[static_cast<std::size_t>(k) * kCanvasCells + i] = 1.0f;
        }
        planes[static_cast<std::size_t>(kCellKinds) * kCanvasCells + i] = area.at_index(i) ? 1.0f : 0.0f;
        if (variant == Variant::Avalon) {
            planes[static_cast<std::size_t>(kCellKinds + 1) * kCanvasCells + i] =
                static_cast<float>(sample.difficulty);
        }
    }
    return planes;
}

std::vector<float> decoder_condition(LevelSize size, std::optional<double> difficulty) {
    std::vector<float> cond(kWidthClasses + kHeightClasses + (difficulty ? 1 : 0), 0.0f);
    cond[static_cast<std::size_t>(size.width - kMinWidth)] = 1.0f;
    cond[static_cast<std::size_t>(kWidthClasses + size.height - kMinHeight)] = 1.0f;
    if (difficulty) cond.back() = static_cast<float>(*difficulty);
    return cond;
}

namespace {

constexpr int kRows = kCanvasHeight;
constexpr int kCols = kCanvasWidth;

template <typename T>
Tensor<T> reshape(Tensor<T> t, std::vector<int> shape) {
    if (Tensor<T>::count(shape) != t.size()) throw nn::ShapeError("reshape changes the element count");
    t.shape = std::move(shape);
    return t;
}

template <typename T>
struct Activations {
    Tensor<T> x0, a1, h1, a2, h2, a3, h3;
    Tensor<T> mu, logvar, eps, zhat;
    Tensor<T> f, g, t1, u1, t2, u2, logits;
};

}  // namespace

template <typename T>
Cvae<T>::Cvae(const ModelConfig& config, std::uint64_t init_seed) : config_(config) {
    config_.validate();
    const auto& e = config_.encoder_filters;
    const auto& d = config_.decoder_filters;
    const int flat = e[2] * kCanvasCells;
    params_.add("enc.conv1.w", {e[0], config_.encoder_channels(), 3, 3});
    params_.add("enc.conv1.b", {e[0]});
    params_.add("enc.conv2.w", {e[1], e[0], 3, 3});
    params_.add("enc.conv2.b", {e[1]});
    params_.add("enc.conv3.w", {e[2], e[1], 3, 3});
    params_.add("enc.conv3.b", {e[2]});
    params_.add("enc.mu.w", {config_.latent_dim, flat});
    params_.add("enc.mu.b", {config_.latent_dim});
    params_.add("enc.logvar.w", {config_.latent_dim, flat});
    params_.add("enc.logvar.b", {config_.latent_dim});
    params_.add("dec.fc.w", {flat, config_.decoder_input()});
    params_.add("dec.fc.b", {flat});
    params_.add("dec.tconv1.w", {e[2], d[0], 3, 3});
    params_.add("dec.tconv1.b", {d[0]});
    params_.add("dec.tconv2.w", {d[0], d[1], 3, 3});
    params_.add("dec.tconv2.b", {d[1]});
    params_.add("dec.tconv3.w", {d[1], d[2], 3, 3});
    params_.add("dec.tconv3.b", {d[2]});
    Rng rng(init_seed);
    params_.glorot_init(rng);
}

template <typename T>
Tensor<T> Cvae<T>::encoder_batch(std::span<const Sample> samples) const {
    const int n = static_cast<int>(samples.size());
    const int c = config_.encoder_channels();
    Tensor<T> x({n, c, kRows, kCols});
    for (int s = 0; s < n; ++s) {
        const auto planes = encoder_input(samples[s], config_.variant);
        std::copy(planes.begin(), planes.end(), x.data() + static_cast<std::size_t>(s) * planes.size());
    }
    return x;
}

template <typename T>
Tensor<T> Cvae<T>::decoder_batch(std::span<const Sample> samples) const {
    const int n = static_cast<int>(samples.size());
    const int width = config_.decoder_input();
    Tensor<T> zhat({n, width});
    for (int s = 0; s < n; ++s) {
        const auto cond = decoder_condition(
            samples[s].size,
            config_.conditioned_on_difficulty() ? std::optional<double>(samples[s].difficulty) : std::nullopt);
        std::copy(cond.begin(), cond.end(),
                  zhat.data() + static_cast<std::size_t>(s) * width + config_.latent_dim);
    }
    return zhat;
}

template <typename T>
LatentStats<T> Cvae<T>::encode(const Tensor<T>& input) const {
    if (input.shape.size() != 4 || input.dim(1) != config_.encoder_channels()) {
        throw nn::ShapeError("encoder input channel count does not match the variant");
    }
    const auto& P = params_;
    auto p = [&](const char* name) -> const Tensor<T>& { return P.get(name).value; };
    const int n = input.dim(0);
    Tensor<T> h = nn::relu(nn::conv2d(input, p("enc.conv1.w"), p("enc.conv1.b")));
    h = nn::relu(nn::conv2d(h, p("enc.conv2.w"), p("enc.conv2.b")));
    h = nn::relu(nn::conv2d(h, p("enc.conv3.w"), p("enc.conv3.b")));
    const Tensor<T> flat = reshape(std::move(h), {n, config_.encoder_filters[2] * kCanvasCells});
    return {nn::fully_connected(flat, p("enc.mu.w"), p("enc.mu.b")),
            nn::fully_connected(flat, p("enc.logvar.w"), p("enc.logvar.b"))};
}

template <typename T>
Tensor<T> Cvae<T>::decode(const Tensor<T>& zhat) const {
    if (zhat.shape.size() != 2 || zhat.dim(1) != config_.decoder_input()) {
        throw nn::ShapeError("decoder input length does not match the variant");
    }
    const auto& P = params_;
    auto p = [&](const char* name) -> const Tensor<T>& { return P.get(name).value; };
    const int n = zhat.dim(0);
    Tensor<T> g = nn::relu(nn::fully_connected(zhat, p("dec.fc.w"), p("dec.fc.b")));
    g = reshape(std::move(g), {n, config_.encoder_filters[2], kRows, kCols});
    Tensor<T> u = nn::relu(nn::transposed_conv2d(g, p("dec.tconv1.w"), p("dec.tconv1.b")));
    u = nn::relu(nn::transposed_conv2d(u, p("dec.tconv2.w"), p("dec.tconv2.b")));
    return nn::transposed_conv2d(u, p("dec.tconv3.w"), p("dec.tconv3.b"));
}

template <typename T>
LossBreakdown Cvae<T>::forward_backward(std::span<const Sample> samples, Rng& noise, bool accumulate) {
    if (samples.empty()) throw std::invalid_argument("empty batch");
    auto& P = params_;
    auto p = [&](const char* name) -> const Tensor<T>& { return P.get(name).value; };
    auto grad = [&](const char* name) -> Tensor<T>& { return P.get(name).grad; };

    const int n = static_cast<int>(samples.size());
    const int latent = config_.latent_dim;
    const int flat = config_.encoder_filters[2] * kCanvasCells;
    const int width = config_.decoder_input();
    const T inv_n = T(1) / static_cast<T>(n);

    Activations<T> a;
    a.x0 = encoder_batch(samples);
    a.a1 = nn::conv2d(a.x0, p("enc.conv1.w"), p("enc.conv1.b"));
    a.h1 = nn::relu(a.a1);
    a.a2 = nn::conv2d(a.h1, p("enc.conv2.w"), p("enc.conv2.b"));
    a.h2 = nn::relu(a.a2);
    a.a3 = nn::conv2d(a.h2, p("enc.conv3.w"), p("enc.conv3.b"));
    a.h3 = nn::relu(a.a3);
    const Tensor<T> flat_h = reshape(a.h3, {n, flat});
    a.mu = nn::fully_connected(flat_h, p("enc.mu.w"), p("enc.mu.b"));
    a.logvar = nn::fully_connected(flat_h, p("enc.logvar.w"), p("enc.logvar.b"));

    a.zhat = decoder_batch(samples);
    a.eps = Tensor<T>({n, latent});
    for (int s = 0; s < n; ++s) {
        std::vector<T> eps;
        const std::span<const T> mu(a.mu.data() + static_cast<std::size_t>(s) * latent, latent);
        const std::span<const T> lv(a.logvar.data() + static_cast<std::size_t>(s) * latent, latent);
        const auto z = nn::reparameterize<T>(mu, lv, noise, &eps);
        std::copy(z.begin(), z.end(), a.zhat.data() + static_cast<std::size_t>(s) * width);
        std::copy(eps.begin(), eps.end(), a.eps.data() + static_cast<std::size_t>(s) * latent);
    }

    a.f = nn::fully_connected(a.zhat, p("dec.fc.w"), p("dec.fc.b"));
    a.g = reshape(nn::relu(a.f), {n, config_.encoder_filters[2], kRows, kCols});
    a.t1 = nn::transposed_conv2d(a.g, p("dec.tconv1.w"), p("dec.tconv1.b"));
    a.u1 = nn::relu(a.t1);
    a.t2 = nn::transposed_conv2d(a.u1, p("dec.tconv2.w"), p("dec.tconv2.b"));
    a.u2 = nn::relu(a.t2);
    a.logits = nn::transposed_conv2d(a.u2, p("dec.tconv3.w"), p("dec.tconv3.b"));

    LossBreakdown out;
    Tensor<T> dlogits(a.logits.shape);
    Tensor<T> dmu({n, latent});
    Tensor<T> dlogvar({n, latent});
    const std::size_t plane = static_cast<std::size_t>(kCellKinds) * kCanvasCells;
    for (int s = 0; s < n; ++s) {
        const BinaryMask mask = build_symmetry_mask(samples[s].size, samples[s].symmetry);
        const std::span<const T> logits(a.logits.data() + s * plane, plane);
        const auto ce = nn::masked_softmax_cross_entropy<T>(logits, samples[s].grid, mask);
        const std::span<const T> mu(a.mu.data() + static_cast<std::size_t>(s) * latent, latent);
        const std::span<const T> lv(a.logvar.data() + static_cast<std::size_t>(s) * latent, latent);
        const auto kl = nn::kl_standard_normal<T>(mu, lv);
        out.ce += static_cast<double>(ce.loss);
        out.kl += static_cast<double>(kl.loss);
        for (std::size_t i = 0; i < plane; ++i) dlogits[s * plane + i] = ce.grad[i] * inv_n;
        for (int j = 0; j < latent; ++j) {
            dmu[static_cast<std::size_t>(s) * latent + j] = kl.dmu[j] * inv_n;
            dlogvar[static_cast<std::size_t>(s) * latent + j] = kl.dlogvar[j] * inv_n;
        }
    }
    out.ce /= n;
    out.kl /= n;
    out.total = out.ce + out.kl;
    if (!accumulate) return out;

    Tensor<T> du2, dt2, du1, dt1, dg;
    nn::transposed_conv2d_backward(a.u2, p("dec.tconv3.w"), dlogits, &du2, grad("dec.tconv3.w"),
                                   grad("dec.tconv3.b"));
    dt2 = nn::relu_backward(a.t2, du2);
    nn::transposed_conv2d_backward(a.u1, p("dec.tconv2.w"), dt2, &du1, grad("dec.tconv2.w"), grad("dec.tconv2.b"));
    dt1 = nn::relu_backward(a.t1, du1);
    nn::transposed_conv2d_backward(a.g, p("dec.tconv1.w"), dt1, &dg, grad("dec.tconv1.w"), grad("dec.tconv1.b"));
    const Tensor<T> df = nn::relu_backward(a.f, reshape(std::move(dg), {n, flat}));
    Tensor<T> dzhat;
    nn::fully_connected_backward(a.zhat, p("dec.fc.w"), df, &dzhat, grad("dec.fc.w"), grad("dec.fc.b"));

    for (int s = 0; s < n; ++s) {
        for (int j = 0; j < latent; ++j) {
            const std::size_t i = static_cast<std::size_t>(s) * latent + j;
            const T dz = dzhat[static_cast<std::size_t>(s) * width + j];
            dmu[i] += dz;
            dlogvar[i] += dz * a.eps[i] * T(0.5) * std::exp(a.logvar[i] / T(2));
        }
    }

    Tensor<T> dflat_mu, dflat_lv;
    nn::fully_connected_backward(flat_h, p("enc.mu.w"), dmu, &dflat_mu, grad("enc.mu.w"), grad("enc.mu.b"));
    nn::fully_connected_backward(flat_h, p("enc.logvar.w"), dlogvar, &dflat_lv, grad("enc.logvar.w"),
                                 grad("enc.logvar.b"));
    for (std::size_t i = 0; i < dflat_mu.size(); ++i) dflat_mu[i] += dflat_lv[i];
    Tensor<T> dh3 = reshape(std::move(dflat_mu), a.h3.shape);
    Tensor<T> dh2, dh1;
    nn::conv2d_backward(a.h2, p("enc.conv3.w"), nn::relu_backward(a.a3, dh3), &dh2, grad("enc.conv3.w"),
                        grad("enc.conv3.b"));
    nn::conv2d_backward(a.h1, p("enc.conv2.w"), nn::relu_backward(a.a2, dh2), &dh1, grad("enc.conv2.w"),
                        grad("enc.conv2.b"));
    nn::conv2d_backward(a.x0, p("enc.conv1.w"), nn::relu_backward(a.a1, dh1), static_cast<Tensor<T>*>(nullptr), grad("enc.conv1.w"),
                        grad("enc.conv1.b"));
    return out;
}

template <typename T>
double Cvae<T>::masked_reconstruction_accuracy(std::span<const Sample> samples) const {
    if (samples.empty()) return 0.0;
    const LatentStats<T> stats = encode(encoder_batch(samples));
    Tensor<T> zhat = decoder_batch(samples);
    const int latent = config_.latent_dim;
    const int width = config_.decoder_input();
    for (std::size_t s = 0; s < samples.size(); ++s) {
        for (int j = 0; j < latent; ++j) zhat[s * width + j] = stats.mu[s * latent + j];
    }
    const Tensor<T> logits = decode(zhat);
    const std::size_t plane = kCanvasCells;
    long hits = 0;
    long total = 0;
    for (std::size_t s = 0; s < samples.size(); ++s) {
        const BinaryMask mask = build_symmetry_mask(samples[s].size, samples[s].symmetry);
        const T* base = logits.data() + s * kCellKinds * plane;
        for (int i = 0; i < kCanvasCells; ++i) {
            if (!mask.at_index(i)) continue;
            int best = 0;
            for (int k = 1; k < kCellKinds; ++k) {
                if (base[k * plane + i] > base[best * plane + i]) best = k;
            }
            hits += best == static_cast<int>(samples[s].grid.cells()[i]);
            ++total;
        }
    }
    return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

template class Cvae<float>;
template class Cvae<double>;

// ---------------------------------------------------------------------------
// Checkpoints: "AVLNCKPT", u32 version, u64 header length, JSON header, then the
// float32 little-endian payload of every tensor listed in the header, in order.
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'A', 'V', 'L', 'N', 'C', 'K', 'P', 'T'};

nlohmann::json config_to_json(const ModelConfig& c) {
    return {{"variant", to_string(c.variant)},
            {"latent_dim", c.latent_dim},
            {"encoder_filters", c.encoder_filters},
            {"decoder_filters", c.decoder_filters},
            {"learning_rate", c.learning_rate},
            {"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"checkpoint_interval", c.checkpoint_interval},
            {"seed", c.seed}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    const auto variant = parse_variant(j.at("variant").get<std::string>());
    if (!variant) throw std::runtime_error("checkpoint has an unknown variant");
    c.variant = *variant;
    c.latent_dim = j.at("latent_dim").get<int>();
    c.encoder_filters = j.at("encoder_filters").get<std::array<int, 3>>();
    c.decoder_filters = j.at("decoder_filters").get<std::array<int, 3>>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.epochs = j.at("epochs").get<int>();
    c.batch_size = j.at("batch_size").get<int>();
    c.checkpoint_interval = j.at("checkpoint_interval").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

template <typename Int>
void write_le(std::ostream& out, Int value) {
    unsigned char bytes[sizeof(Int)];
    for (std::size_t i = 0; i < sizeof(Int); ++i) bytes[i] = static_cast<unsigned char>(value >> (8 * i));
    out.write(reinterpret_cast<const char*>(bytes), sizeof(Int));
}

template <typename Int>
Int read_le(std::istream& in) {
    unsigned char bytes[sizeof(Int)];
    if (!in.read(reinterpret_cast<char*>(bytes), sizeof(Int))) throw std::runtime_error("truncated checkpoint");
    Int value = 0;
    for (std::size_t i = 0; i < sizeof(Int); ++i) value |= static_cast<Int>(bytes[i]) << (8 * i);
    return value;
}

void write_floats(std::ostream& out, const std::vector<float>& values) {
    for (float v : values) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        write_le(out, bits);
    }
}

void read_floats(std::istream& in, std::vector<float>& values) {
    for (float& v : values) {
        const auto bits = read_le<std::uint32_t>(in);
        std::memcpy(&v, &bits, sizeof v);
    }
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    const auto& params = ckpt.model.params().params();
    nlohmann::json header;
    header["config"] = config_to_json(ckpt.model.config());
    header["epoch"] = ckpt.epoch;
    header["m_min"] = ckpt.m_min;
    header["m_max"] = ckpt.m_max;
    header["adam"] = {{"step", ckpt.adam.step},
                      {"lr", ckpt.adam.hyper.lr},
                      {"beta1", ckpt.adam.hyper.beta1},
                      {"beta2", ckpt.adam.hyper.beta2},
                      {"epsilon", ckpt.adam.hyper.epsilon}};
    const bool with_moments = ckpt.adam.first_moment.size() == params.size();
    header["tensors"] = nlohmann::json::array();
    for (const auto& p : params) {
        header["tensors"].push_back({{"name", p.name}, {"shape", p.value.shape}});
    }
    header["has_moments"] = with_moments;
    const std::string text = header.dump();

    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out.write(kMagic, sizeof kMagic);
        write_le(out, kCheckpointVersion);
        write_le(out, static_cast<std::uint64_t>(text.size()));
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        for (const auto& p : params) write_floats(out, p.value.values);
        if (with_moments) {
            for (const auto& m : ckpt.adam.first_moment) write_floats(out, m.values);
            for (const auto& v : ckpt.adam.second_moment) write_floats(out, v.values);
        }
        if (!out) throw std::runtime_error("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    char magic[sizeof kMagic];
    if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
        throw std::runtime_error(path.string() + " is not a checkpoint");
    }
    const auto version = read_le<std::uint32_t>(in);
    if (version != kCheckpointVersion) {
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    }
    const auto length = read_le<std::uint64_t>(in);
    std::string text(length, '\0');
    if (!in.read(text.data(), static_cast<std::streamsize>(length))) throw std::runtime_error("truncated checkpoint");
    const auto header = nlohmann::json::parse(text);

    Checkpoint ckpt;
    ckpt.model = Cvae<float>(config_from_json(header.at("config")), 0);
    ckpt.epoch = header.at("epoch").get<int>();
    ckpt.m_min = header.at("m_min").get<double>();
    ckpt.m_max = header.at("m_max").get<double>();
    nn::AdamHyper hyper;
    const auto& adam = header.at("adam");
    hyper.lr = adam.at("lr").get<double>();
    hyper.beta1 = adam.at("beta1").get<double>();
    hyper.beta2 = adam.at("beta2").get<double>();
    hyper.epsilon = adam.at("epsilon").get<double>();

    auto& params = ckpt.model.params().params();
    const auto& listing = header.at("tensors");
    if (listing.size() != params.size()) throw std::runtime_error("checkpoint tensor list does not match config");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (listing[i].at("name").get<std::string>() != params[i].name ||
            listing[i].at("shape").get<std::vector<int>>() != params[i].value.shape) {
            throw std::runtime_error("checkpoint tensor " + params[i].name + " does not match config");
        }
        read_floats(in, params[i].value.values);
    }
    ckpt.adam = nn::AdamState<float>::zeros_like(ckpt.model.params(), hyper);
    ckpt.adam.step = adam.at("step").get<std::int64_t>();
    if (header.value("has_moments", false)) {
        for (auto& m : ckpt.adam.first_moment) read_floats(in, m.values);
        for (auto& v : ckpt.adam.second_moment) read_floats(in, v.values);
    }
    return ckpt;
}

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, int epoch) {
    char name[32];
    std::snprintf(name, sizeof name, "ckpt_epoch_%06d.bin", epoch);
    return dir / name;
}

std::vector<std::filesystem::path> list_checkpoints(const std::filesystem::path& dir) {
    std::vector<std::pair<int, std::filesystem::path>> found;
    if (!std::filesystem::exists(dir)) return {};
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        int epoch = 0;
        if (std::sscanf(name.c_str(), "ckpt_epoch_%d.bin", &epoch) == 1 && name.size() == 21 &&
            name.ends_with(".bin")) {
            found.emplace_back(epoch, entry.path());
        }
    }
    std::sort(found.begin(), found.end());
    std::vector<std::filesystem::path> out;
    for (auto& [epoch, p] : found) out.push_back(p);
    return out;
}

std::vector<Sample> samples_for(const DatasetManifest& manifest, Split split, bool with_difficulty) {
    std::vector<Sample> out;
    for (const AnnotatedLevel* level : manifest.split(split)) {
        Sample s;
        s.grid = level->grid;
        s.size = level->size;
        s.symmetry = level->symmetry;
        if (with_difficulty) s.difficulty = normalize_difficulty(level->median_moves, manifest);
        out.push_back(s);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace {

constexpr std::uint64_t kShuffleTag = 0x5348554646ULL;
constexpr std::uint64_t kNoiseTag = 0x4e4f495345ULL;
constexpr std::uint64_t kInitTag = 0x494e4954ULL;

double validation_ce(const Cvae<float>& model, std::span<const Sample> samples) {
    if (samples.empty()) return 0.0;
    const auto stats = model.encode(model.encoder_batch(samples));
    Tensor<float> zhat = model.decoder_batch(samples);
    const int latent = model.config().latent_dim;
    const int width = model.config().decoder_input();
    for (std::size_t s = 0; s < samples.size(); ++s) {
        for (int j = 0; j < latent; ++j) zhat[s * width + j] = stats.mu[s * latent + j];
    }
    const Tensor<float> logits = model.decode(zhat);
    const std::size_t plane = static_cast<std::size_t>(kCellKinds) * kCanvasCells;
    double total = 0.0;
    for (std::size_t s = 0; s < samples.size(); ++s) {
        const BinaryMask mask = build_symmetry_mask(samples[s].size, samples[s].symmetry);
        total += nn::masked_softmax_cross_entropy<float>(std::span<const float>(logits.data() + s * plane, plane),
                                                          samples[s].grid, mask)
                     .loss;
    }
    return total / static_cast<double>(samples.size());
}

std::string log_line(const EpochLog& log) {
    nlohmann::json j{{"epoch", log.epoch}, {"ce", log.ce}, {"kl", log.kl}, {"lr", log.lr}};
    if (log.val_ce) j["val_ce"] = *log.val_ce;
    return j.dump();
}

}  // namespace

std::vector<std::filesystem::path> train(const DatasetManifest& manifest, const ModelConfig& config,
                                         const TrainOptions& options) {
    config.validate();
    const bool conditioned = config.conditioned_on_difficulty();
    if (conditioned) normalize_difficulty(manifest.m_min, manifest);  // throws on a degenerate range
    const std::vector<Sample> train_set = samples_for(manifest, Split::Train, conditioned);
    if (train_set.empty()) throw std::invalid_argument("manifest has no TRAIN levels");
    const std::vector<Sample> val_set = samples_for(manifest, Split::Val, conditioned);

    std::filesystem::create_directories(options.out_dir);
    Checkpoint state;
    state.m_min = manifest.m_min;
    state.m_max = manifest.m_max;
    std::vector<std::filesystem::path> written;
    const auto existing = options.resume ? list_checkpoints(options.out_dir) : std::vector<std::filesystem::path>{};
    if (!existing.empty()) {
        state = load_checkpoint(existing.back());
        ModelConfig stored = state.model.config();
        stored.epochs = config.epochs;
        if (!(stored == config)) {
            throw std::runtime_error("existing checkpoints in " + options.out_dir.string() +
                                     " were trained with a different config");
        }
        written = existing;
        state.model.set_epochs(config.epochs);
    } else {
        state.model = Cvae<float>(config, derive_seed(config.seed, kInitTag));
        state.adam = nn::AdamState<float>::zeros_like(state.model.params(), nn::AdamHyper{config.learning_rate});
    }

    const auto log_path = options.out_dir / "train_log.jsonl";
    if (state.epoch == 0) std::ofstream(log_path, std::ios::trunc);
    std::ofstream log(log_path, std::ios::app);

    std::vector<std::size_t> order(train_set.size());
    std::vector<Sample> batch;
    for (int epoch = state.epoch + 1; epoch <= config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle(derive_seed(derive_seed(config.seed, kShuffleTag), static_cast<std::uint64_t>(epoch)));
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[shuffle.uniform_below(static_cast<std::uint32_t>(i))]);
        }
        Rng noise(derive_seed(derive_seed(config.seed, kNoiseTag), static_cast<std::uint64_t>(epoch)));

        EpochLog entry;
        entry.epoch = epoch;
        entry.lr = config.learning_rate;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            batch.clear();
            for (std::size_t i = start; i < stop; ++i) batch.push_back(train_set[order[i]]);
            const LossBreakdown loss = state.model.forward_backward(batch, noise, true);
            if (!std::isfinite(loss.total)) {
                throw std::runtime_error("non-finite loss at epoch " + std::to_string(epoch) + " (ce " +
                                         std::to_string(loss.ce) + ", kl " + std::to_string(loss.kl) + ")");
            }
            nn::adam_step(state.model.params(), state.adam);
            entry.ce += loss.ce * static_cast<double>(batch.size());
            entry.kl += loss.kl * static_cast<double>(batch.size());
        }
        entry.ce /= static_cast<double>(train_set.size());
        entry.kl /= static_cast<double>(train_set.size());
        state.epoch = epoch;

        const bool checkpoint_now = epoch % config.checkpoint_interval == 0;
        if (checkpoint_now && !val_set.empty()) entry.val_ce = validation_ce(state.model, val_set);
        log << log_line(entry) << '\n';
        if (checkpoint_now) {
            log.flush();
            const auto path = checkpoint_path(options.out_dir, epoch);
            save_checkpoint(state, path);
            written.push_back(path);
        }
        if (options.on_epoch) options.on_epoch(entry);
    }
    return written;
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

LevelGrid generate(const Checkpoint& checkpoint, const ConditionSpec& spec, std::uint64_t seed) {
    const Cvae<float>& model = checkpoint.model;
    const ModelConfig& config = model.config();
    if (!spec.size.valid()) throw std::invalid_argument("size out of range");
    std::optional<double> difficulty;
    if (config.conditioned_on_difficulty()) {
        if (!spec.target_moves) throw std::invalid_argument("model requires a target number of moves");
        const double cap = move_cap_for(kValidMoves);
        if (!(*spec.target_moves >= checkpoint.m_min && *spec.target_moves <= cap)) {
            throw std::invalid_argument("difficulty out of range");
        }
        difficulty = normalize_difficulty(*spec.target_moves, checkpoint.m_min, checkpoint.m_max);
    } else if (spec.target_moves) {
        throw std::invalid_argument("model has no difficulty conditioner");
    }

    Rng rng(seed);
    const auto cond = decoder_condition(spec.size, difficulty);
    Tensor<float> zhat({1, config.decoder_input()});
    for (int j = 0; j < config.latent_dim; ++j) zhat[j] = static_cast<float>(rng.normal());
    std::copy(cond.begin(), cond.end(), zhat.data() + config.latent_dim);
    const Tensor<float> logits = model.decode(zhat);

    LevelGrid raw;
    for (int i = 0; i < kCanvasCells; ++i) {
        int best = 0;
        for (int k = 1; k < kCellKinds; ++k) {
            if (logits[k * kCanvasCells + i] > logits[best * kCanvasCells + i]) best = k;
        }
        raw.set(i % kCanvasWidth, i / kCanvasWidth, static_cast<CellKind>(best));
    }
    return complete_symmetry(raw, spec.size, spec.symmetry);
}

}  // namespace avalon
