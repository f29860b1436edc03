#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "avalon/dataset.hpp"
#include "avalon/grid.hpp"
#include "avalon/neural.hpp"

namespace avalon {

enum class Variant : std::uint8_t { Avalon, Vanilla };

std::string_view to_string(Variant v);
std::optional<Variant> parse_variant(std::string_view text);

inline constexpr int kWidthClasses = kMaxWidth - kMinWidth + 1;    // 6
inline constexpr int kHeightClasses = kMaxHeight - kMinHeight + 1;  // 8

struct ModelConfig {
    Variant variant = Variant::Avalon;
    int latent_dim = 5;
    std::array<int, 3> encoder_filters{16, 32, 64};
    std::array<int, 3> decoder_filters{32, 16, kCellKinds};
    double learning_rate = 1e-5;
    int epochs = 24000;
    int batch_size = 100;
    int checkpoint_interval = 500;
    std::uint64_t seed = 0;

    static ModelConfig avalon();
    static ModelConfig vanilla();

    bool conditioned_on_difficulty() const { return variant == Variant::Avalon; }
    /// 3 masked one-hot planes + size mask (+ difficulty plane for Avalon).
    int encoder_channels() const { return kCellKinds + 1 + (conditioned_on_difficulty() ? 1 : 0); }
    /// [z, h_W, h_H (, d)].
    int decoder_input() const {
        return latent_dim + kWidthClasses + kHeightClasses + (conditioned_on_difficulty() ? 1 : 0);
    }
    /// Throws std::invalid_argument when the shape contract is broken.
    void validate() const;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// One training or inference record, already reduced to what the network sees.
struct Sample {
    LevelGrid grid;
    LevelSize size;
    SymmetryKind symmetry = SymmetryKind::Unknown;
    double difficulty = 0.0;  // normalized, ignored by Vanilla
};

/// Encoder input planes (C x 11 x 9, channel-major): one-hot level masked by the
/// symmetry mask, size mask, and for Avalon a constant difficulty plane.
std::vector<float> encoder_input(const Sample& sample, Variant variant);

/// [h_W, h_H (, d)]: the conditioning tail of the decoder input.
std::vector<float> decoder_condition(LevelSize size, std::optional<double> difficulty);

template <typename T>
struct LatentStats {
    nn::Tensor<T> mu;      // N x latent
    nn::Tensor<T> logvar;  // N x latent
};

struct LossBreakdown {
    double total = 0.0;
    double ce = 0.0;
    double kl = 0.0;
};

template <typename T>
class Cvae {
public:
    Cvae() = default;
    Cvae(const ModelConfig& config, std::uint64_t init_seed);

    const ModelConfig& config() const { return config_; }
    /// Extends or shortens the training budget of a resumed run.
    void set_epochs(int epochs) { config_.epochs = epochs; }
    nn::ParamStore<T>& params() { return params_; }
    const nn::ParamStore<T>& params() const { return params_; }

    /// N x C x 11 x 9 input batch from samples.
    nn::Tensor<T> encoder_batch(std::span<const Sample> samples) const;
    /// N x decoder_input batch of conditions (latent part left zero).
    nn::Tensor<T> decoder_batch(std::span<const Sample> samples) const;

    LatentStats<T> encode(const nn::Tensor<T>& input) const;
    /// N x decoder_input -> N x 3 x 11 x 9 logits.
    nn::Tensor<T> decode(const nn::Tensor<T>& zhat) const;

    /// Mean over the batch of masked CE + KL. When `accumulate` is set the
    /// gradient of that mean is added to the parameter gradients.
    LossBreakdown forward_backward(std::span<const Sample> samples, Rng& noise, bool accumulate);

    /// Per-cell accuracy of argmax(decode([mu, cond])) on symmetry-mask cells.
    double masked_reconstruction_accuracy(std::span<const Sample> samples) const;

    template <typename U>
    Cvae<U> cast() const {
        Cvae<U> out;
        out.config_ = config_;
        out.params_ = params_.template cast<U>();
        return out;
    }

private:
    template <typename>
    friend class Cvae;

    ModelConfig config_;
    nn::ParamStore<T> params_;
};

struct Checkpoint {
    Cvae<float> model;
    nn::AdamState<float> adam;
    int epoch = 0;
    double m_min = 0.0;
    double m_max = 0.0;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// ckpt_epoch_NNNNNN.bin
std::filesystem::path checkpoint_path(const std::filesystem::path& dir, int epoch);
/// Checkpoints found in `dir`, ordered by epoch.
std::vector<std::filesystem::path> list_checkpoints(const std::filesystem::path& dir);

std::vector<Sample> samples_for(const DatasetManifest& manifest, Split split, bool with_difficulty);

struct EpochLog {
    int epoch = 0;
    double ce = 0.0;
    double kl = 0.0;
    double lr = 0.0;
    std::optional<double> val_ce;
};

struct TrainOptions {
    std::filesystem::path out_dir;
    /// Continue from the newest checkpoint in out_dir, if any.
    bool resume = true;
    std::function<void(const EpochLog&)> on_epoch;
};

/// Seeded mini-batch Adam training on the TRAIN split. Writes a checkpoint every
/// checkpoint_interval epochs and a JSON line per epoch to out_dir/train_log.jsonl.
/// Throws std::runtime_error on a non-finite loss.
std::vector<std::filesystem::path> train(const DatasetManifest& manifest, const ModelConfig& config,
                                         const TrainOptions& options);

/// Samples z ~ N(0, I), decodes, takes the per-cell argmax, forces BLOCK outside
/// the requested play area and mirror-completes the requested symmetry.
/// Throws std::invalid_argument for conditioners the checkpoint cannot honour.
LevelGrid generate(const Checkpoint& checkpoint, const ConditionSpec& spec, std::uint64_t seed);

}  // namespace avalon
