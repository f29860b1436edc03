#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "avalon/grid.hpp"
#include "avalon/rng.hpp"

namespace avalon::nn {

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

template <typename T>
struct Tensor {
    std::vector<int> shape;
    std::vector<T> values;

    Tensor() = default;
    explicit Tensor(std::vector<int> dims) : shape(std::move(dims)), values(count(shape), T(0)) {}
    Tensor(std::vector<int> dims, std::vector<T> data) : shape(std::move(dims)), values(std::move(data)) {
        if (values.size() != count(shape)) throw ShapeError("tensor data does not match its shape");
    }

    static std::size_t count(const std::vector<int>& dims) {
        std::size_t n = 1;
        for (int d : dims) {
            if (d <= 0) throw ShapeError("tensor dimensions must be positive");
            n *= static_cast<std::size_t>(d);
        }
        return n;
    }

    std::size_t size() const { return values.size(); }
    int dim(std::size_t i) const { return shape.at(i); }
    T* data() { return values.data(); }
    const T* data() const { return values.data(); }
    T& operator[](std::size_t i) { return values[i]; }
    const T& operator[](std::size_t i) const { return values[i]; }
    void zero() { std::fill(values.begin(), values.end(), T(0)); }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.shape = shape;
        out.values.assign(values.begin(), values.end());
        return out;
    }

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

// ---------------------------------------------------------------------------
// Layers. Image tensors are N x C x H x W, row-major. Every 3x3 (transposed)
// convolution uses stride 1 and zero padding 1, so H and W are preserved.
// Backward functions accumulate into the weight/bias gradients and overwrite dx.
// ---------------------------------------------------------------------------

/// weights: C_out x C_in x 3 x 3, bias: C_out.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weights, const Tensor<T>& bias);

template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& weights, const Tensor<T>& dy, Tensor<T>* dx,
                     Tensor<T>& dweights, Tensor<T>& dbias);

/// weights: C_in x C_out x 3 x 3 (the layout of the convolution it transposes), bias: C_out.
template <typename T>
Tensor<T> transposed_conv2d(const Tensor<T>& x, const Tensor<T>& weights, const Tensor<T>& bias);

template <typename T>
void transposed_conv2d_backward(const Tensor<T>& x, const Tensor<T>& weights, const Tensor<T>& dy,
                                Tensor<T>* dx, Tensor<T>& dweights, Tensor<T>& dbias);

/// x: N x in, weights: out x in, bias: out. Returns N x out.
template <typename T>
Tensor<T> fully_connected(const Tensor<T>& x, const Tensor<T>& weights, const Tensor<T>& bias);

template <typename T>
void fully_connected_backward(const Tensor<T>& x, const Tensor<T>& weights, const Tensor<T>& dy,
                              Tensor<T>* dx, Tensor<T>& dweights, Tensor<T>& dbias);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

/// Gradient through relu given its input; subgradient 0 at 0.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& dy);

// ---------------------------------------------------------------------------
// Losses and sampling.
// ---------------------------------------------------------------------------

template <typename T>
struct LossResult {
    T loss = T(0);
    std::vector<T> grad;
};

/// Per-cell softmax over the class planes of `logits` (K x H x W, K = 3 for a
/// 9x11 level). Loss is the mean negative log-likelihood of `target` over the
/// cells whose mask bit is 1; masked-out cells contribute neither loss nor gradient.
/// Throws std::invalid_argument("empty mask") for an all-zero mask.
template <typename T>
LossResult<T> masked_softmax_cross_entropy(std::span<const T> logits, std::span<const std::uint8_t> target,
                                           std::span<const std::uint8_t> mask);

template <typename T>
LossResult<T> masked_softmax_cross_entropy(std::span<const T> logits, const LevelGrid& target,
                                           const BinaryMask& mask);

template <typename T>
std::vector<T> softmax_cells(std::span<const T> logits, int classes);

template <typename T>
struct KlResult {
    T loss = T(0);
    std::vector<T> dmu;
    std::vector<T> dlogvar;
};

/// KL(N(mu, exp(logvar)) || N(0, I)) = -1/2 sum(1 + logvar - mu^2 - exp(logvar)).
template <typename T>
KlResult<T> kl_standard_normal(std::span<const T> mu, std::span<const T> logvar);

/// z = mu + exp(logvar / 2) * eps with eps ~ N(0, I) drawn from `rng`; `eps`
/// receives the noise for the backward pass.
template <typename T>
std::vector<T> reparameterize(std::span<const T> mu, std::span<const T> logvar, Rng& rng, std::vector<T>* eps);

// ---------------------------------------------------------------------------
// Parameters and optimizer.
// ---------------------------------------------------------------------------

template <typename T>
struct Param {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
};

template <typename T>
class ParamStore {
public:
    Param<T>& add(std::string name, std::vector<int> shape);
    Param<T>& get(const std::string& name);
    const Param<T>& get(const std::string& name) const;
    bool contains(const std::string& name) const;

    std::vector<Param<T>>& params() { return params_; }
    const std::vector<Param<T>>& params() const { return params_; }

    void zero_grad();
    std::size_t parameter_count() const;

    /// Uniform in +-sqrt(6 / (fan_in + fan_out)) for rank >= 2 tensors, zeros for biases.
    void glorot_init(Rng& rng);

    template <typename U>
    ParamStore<U> cast() const {
        ParamStore<U> out;
        for (const auto& p : params_) {
            auto& q = out.add(p.name, p.value.shape);
            q.value = p.value.template cast<U>();
        }
        return out;
    }

private:
    std::vector<Param<T>> params_;
};

struct AdamHyper {
    double lr = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
    AdamHyper hyper;
    std::int64_t step = 0;
    std::vector<Tensor<T>> first_moment;
    std::vector<Tensor<T>> second_moment;

    static AdamState zeros_like(const ParamStore<T>& store, AdamHyper hyper);
};

/// Bias-corrected Adam update of every parameter; gradients are zeroed afterwards.
template <typename T>
void adam_step(ParamStore<T>& params, AdamState<T>& state);

}  // namespace avalon::nn
