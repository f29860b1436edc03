#include "avalon/neural.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

namespace avalon::nn {

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

constexpr int kKernel = 3;
constexpr int kTaps = kKernel * kKernel;

void require(bool ok, const char* what) {
    if (!ok) throw ShapeError(what);
}

template <typename T>
void check_conv_shapes(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    require(x.shape.size() == 4, "convolution input must be N x C x H x W");
    require(w.shape.size() == 4 && w.dim(2) == kKernel && w.dim(3) == kKernel,
            "convolution weights must be C_out x C_in x 3 x 3");
    require(w.dim(1) == x.dim(1), "convolution weights do not match the input channels");
    require(b.shape.size() == 1 && b.dim(0) == w.dim(0), "convolution bias does not match the filters");
}

// Patch matrix: row (c, ky, kx), column (n, y, x); zero outside the image.
template <typename T>
RowMatrix<T> im2col(const Tensor<T>& x) {
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int hw = h * w;
    RowMatrix<T> cols = RowMatrix<T>::Zero(c * kTaps, n * hw);
    for (int ci = 0; ci < c; ++ci) {
        for (int ky = 0; ky < kKernel; ++ky) {
            for (int kx = 0; kx < kKernel; ++kx) {
                T* row = cols.row((ci * kKernel + ky) * kKernel + kx).data();
                for (int s = 0; s < n; ++s) {
                    const T* plane = x.data() + (static_cast<std::size_t>(s) * c + ci) * hw;
                    T* out = row + static_cast<std::size_t>(s) * hw;
                    for (int y = 0; y < h; ++y) {
                        const int sy = y + ky - 1;
                        if (sy < 0 || sy >= h) continue;
                        for (int xx = 0; xx < w; ++xx) {
                            const int sx = xx + kx - 1;
                            if (sx < 0 || sx >= w) continue;
                            out[y * w + xx] = plane[sy * w + sx];
                        }
                    }
                }
            }
        }
    }
    return cols;
}

template <typename T>
void col2im(const RowMatrix<T>& cols, Tensor<T>& dx) {
    const int n = dx.dim(0), c = dx.dim(1), h = dx.dim(2), w = dx.dim(3);
    const int hw = h * w;
    dx.zero();
    for (int ci = 0; ci < c; ++ci) {
        for (int ky = 0; ky < kKernel; ++ky) {
            for (int kx = 0; kx < kKernel; ++kx) {
                const T* row = cols.row((ci * kKernel + ky) * kKernel + kx).data();
                for (int s = 0; s < n; ++s) {
                    T* plane = dx.data() + (static_cast<std::size_t>(s) * c + ci) * hw;
                    const T* in = row + static_cast<std::size_t>(s) * hw;
                    for (int y = 0; y < h; ++y) {
                        const int sy = y + ky - 1;
                        if (sy < 0 || sy >= h) continue;
                        for (int xx = 0; xx < w; ++xx) {
                            const int sx = xx + kx - 1;
                            if (sx < 0 || sx >= w) continue;
                            plane[sy * w + sx] += in[y * w + xx];
                        }
                    }
                }
            }
        }
    }
}

// out[o][i][ky][kx] = w[i][o][2 - ky][2 - kx]
template <typename T>
Tensor<T> flip_transpose(const Tensor<T>& w) {
    const int a = w.dim(0), b = w.dim(1);
    Tensor<T> out({b, a, kKernel, kKernel});
    for (int i = 0; i < a; ++i) {
        for (int o = 0; o < b; ++o) {
            for (int t = 0; t < kTaps; ++t) {
                out[(static_cast<std::size_t>(o) * a + i) * kTaps + t] =
                    w[(static_cast<std::size_t>(i) * b + o) * kTaps + (kTaps - 1 - t)];
            }
        }
    }
    return out;
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weights, const Tensor<T>& bias) {
    check_conv_shapes(x, weights, bias);
    const int n = x.dim(0), h = x.dim(2), w = x.dim(3), c_out = weights.dim(0);
    const int hw = h * w;
    const int k = x.dim(1) * kTaps;
    const RowMatrix<T> cols = im2col(x);
    ConstMatrixMap<T> wmat(weights.data(), c_out, k);
    const RowMatrix<T> product = wmat * cols;
    Tensor<T> y({n, c_out, h, w});
    for (int s = 0; s < n; ++s) {
        for (int o = 0; o < c_out; ++o) {
            const T* src = product.row(o).data() + static_cast<std::size_t>(s) * hw;
            T* dst = y.data() + (static_cast<std::size_t>(s) * c_out + o) * hw;
            for (int p = 0; p < hw; ++p) dst[p] = src[p] + bias[o];
        }
    }
    return y;
}

template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& weights, const Tensor<T>& dy, Tensor<T>* dx,
                     Tensor<T>& dweights, Tensor<T>& dbias) {
    const int n = x.dim(0), h = x.dim(2), w = x.dim(3), c_out = weights.dim(0);
    const int hw = h * w;
    const int k = x.dim(1) * kTaps;
    require(dy.shape == std::vector<int>({n, c_out, h, w}), "conv2d output gradient has the wrong shape");
    require(dweights.shape == weights.shape && dbias.size() == static_cast<std::size_t>(c_out),
            "conv2d gradient buffers have the wrong shape");

    RowMatrix<T> dymat(c_out, static_cast<Eigen::Index>(n) * hw);
    for (int s = 0; s < n; ++s) {
        for (int o = 0; o < c_out; ++o) {
            const T* src = dy.data() + (static_cast<std::size_t>(s) * c_out + o) * hw;
            std::copy(src, src + hw, dymat.row(o).data() + static_cast<std::size_t>(s) * hw);
        }
    }
    const RowMatrix<T> cols = im2col(x);
    MatrixMap<T> dwmat(dweights.data(), c_out, k);
    dwmat.noalias() += dymat * cols.transpose();
    for (int o = 0; o < c_out; ++o) dbias[o] += dymat.row(o).sum();
    if (dx != nullptr) {
        ConstMatrixMap<T> wmat(weights.data(), c_out, k);
        const RowMatrix<T> dcols = wmat.transpose() * dymat;
        *dx = Tensor<T>(x.shape);
        col2im(dcols, *dx);
    }
}

template <typename T>
Tensor<T> transposed_conv2d(const Tensor<T>& x, const Tensor<T>& weights, const Tensor<T>& bias) {
    require(weights.shape.size() == 4 && weights.dim(2) == kKernel && weights.dim(3) == kKernel,
            "transposed convolution weights must be C_in x C_out x 3 x 3");
    require(x.shape.size() == 4 && weights.dim(0) == x.dim(1),
            "transposed convolution weights do not match the input channels");
    return conv2d(x, flip_transpose(weights), bias);
}

template <typename T>
void transposed_conv2d_backward(const Tensor<T>& x, const Tensor<T>& weights, const Tensor<T>& dy,
                                Tensor<T>* dx, Tensor<T>& dweights, Tensor<T>& dbias) {
    require(dweights.shape == weights.shape, "transposed conv gradient buffer has the wrong shape");
    const Tensor<T> flipped = flip_transpose(weights);
    Tensor<T> dflipped(flipped.shape);
    conv2d_backward(x, flipped, dy, dx, dflipped, dbias);
    const Tensor<T> back = flip_transpose(dflipped);
    for (std::size_t i = 0; i < back.size(); ++i) dweights[i] += back[i];
}

template <typename T>
Tensor<T> fully_connected(const Tensor<T>& x, const Tensor<T>& weights, const Tensor<T>& bias) {
    require(x.shape.size() == 2, "fully connected input must be N x in");
    require(weights.shape.size() == 2 && weights.dim(1) == x.dim(1), "fully connected weights do not match input");
    require(bias.shape.size() == 1 && bias.dim(0) == weights.dim(0), "fully connected bias does not match output");
    const int n = x.dim(0), in = x.dim(1), out = weights.dim(0);
    Tensor<T> y({n, out});
    MatrixMap<T> ymat(y.data(), n, out);
    ymat.noalias() = ConstMatrixMap<T>(x.data(), n, in) * ConstMatrixMap<T>(weights.data(), out, in).transpose();
    for (int s = 0; s < n; ++s) {
        for (int o = 0; o < out; ++o) ymat(s, o) += bias[o];
    }
    return y;
}

template <typename T>
void fully_connected_backward(const Tensor<T>& x, const Tensor<T>& weights, const Tensor<T>& dy,
                              Tensor<T>* dx, Tensor<T>& dweights, Tensor<T>& dbias) {
    const int n = x.dim(0), in = x.dim(1), out = weights.dim(0);
    require(dy.shape == std::vector<int>({n, out}), "fully connected output gradient has the wrong shape");
    require(dweights.shape == weights.shape && dbias.size() == static_cast<std::size_t>(out),
            "fully connected gradient buffers have the wrong shape");
    ConstMatrixMap<T> dymat(dy.data(), n, out);
    MatrixMap<T>(dweights.data(), out, in).noalias() += dymat.transpose() * ConstMatrixMap<T>(x.data(), n, in);
    for (int o = 0; o < out; ++o) dbias[o] += dymat.col(o).sum();
    if (dx != nullptr) {
        *dx = Tensor<T>(x.shape);
        MatrixMap<T>(dx->data(), n, in).noalias() = dymat * ConstMatrixMap<T>(weights.data(), out, in);
    }
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    Tensor<T> y = x;
    for (auto& v : y.values) v = v > T(0) ? v : T(0);
    return y;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& dy) {
    require(x.shape == dy.shape, "relu gradient has the wrong shape");
    Tensor<T> dx = dy;
    for (std::size_t i = 0; i < dx.size(); ++i) {
        if (!(x[i] > T(0))) dx[i] = T(0);
    }
    return dx;
}

template <typename T>
std::vector<T> softmax_cells(std::span<const T> logits, int classes) {
    require(classes > 0 && logits.size() % static_cast<std::size_t>(classes) == 0,
            "logits do not split into class planes");
    const std::size_t cells = logits.size() / static_cast<std::size_t>(classes);
    std::vector<T> probs(logits.size());
    for (std::size_t i = 0; i < cells; ++i) {
        T peak = logits[i];
        for (int k = 1; k < classes; ++k) peak = std::max(peak, logits[k * cells + i]);
        T total = T(0);
        for (int k = 0; k < classes; ++k) {
            probs[k * cells + i] = std::exp(logits[k * cells + i] - peak);
            total += probs[k * cells + i];
        }
        for (int k = 0; k < classes; ++k) probs[k * cells + i] /= total;
    }
    return probs;
}

template <typename T>
LossResult<T> masked_softmax_cross_entropy(std::span<const T> logits, std::span<const std::uint8_t> target,
                                           std::span<const std::uint8_t> mask) {
    const std::size_t cells = target.size();
    require(mask.size() == cells && cells > 0 && logits.size() % cells == 0,
            "logits, target and mask sizes disagree");
    const int classes = static_cast<int>(logits.size() / cells);
    std::size_t active = 0;
    for (auto m : mask) active += m != 0;
    if (active == 0) throw std::invalid_argument("empty mask");

    LossResult<T> result;
    result.grad.assign(logits.size(), T(0));
    const T scale = T(1) / static_cast<T>(active);
    for (std::size_t i = 0; i < cells; ++i) {
        if (mask[i] == 0) continue;
        require(target[i] < classes, "target class out of range");
        T peak = logits[i];
        for (int k = 1; k < classes; ++k) peak = std::max(peak, logits[k * cells + i]);
        T total = T(0);
        for (int k = 0; k < classes; ++k) total += std::exp(logits[k * cells + i] - peak);
        const T log_norm = peak + std::log(total);
        result.loss += (log_norm - logits[target[i] * cells + i]) * scale;
        for (int k = 0; k < classes; ++k) {
            const T p = std::exp(logits[k * cells + i] - log_norm);
            result.grad[k * cells + i] = (p - (k == target[i] ? T(1) : T(0))) * scale;
        }
    }
    return result;
}

template <typename T>
LossResult<T> masked_softmax_cross_entropy(std::span<const T> logits, const LevelGrid& target,
                                           const BinaryMask& mask) {
    std::vector<std::uint8_t> codes(kCanvasCells);
    std::vector<std::uint8_t> bits(kCanvasCells);
    for (int i = 0; i < kCanvasCells; ++i) {
        codes[i] = static_cast<std::uint8_t>(target.cells()[i]);
        bits[i] = mask.at_index(i) ? 1 : 0;
    }
    return masked_softmax_cross_entropy<T>(logits, codes, bits);
}

template <typename T>
KlResult<T> kl_standard_normal(std::span<const T> mu, std::span<const T> logvar) {
    require(mu.size() == logvar.size(), "mu and logvar sizes differ");
    KlResult<T> r;
    r.dmu.resize(mu.size());
    r.dlogvar.resize(mu.size());
    for (std::size_t i = 0; i < mu.size(); ++i) {
        const T var = std::exp(logvar[i]);
        r.loss += T(-0.5) * (T(1) + logvar[i] - mu[i] * mu[i] - var);
        r.dmu[i] = mu[i];
        r.dlogvar[i] = T(0.5) * (var - T(1));
    }
    return r;
}

template <typename T>
std::vector<T> reparameterize(std::span<const T> mu, std::span<const T> logvar, Rng& rng, std::vector<T>* eps) {
    require(mu.size() == logvar.size(), "mu and logvar sizes differ");
    std::vector<T> z(mu.size());
    if (eps != nullptr) eps->resize(mu.size());
    for (std::size_t i = 0; i < mu.size(); ++i) {
        const T e = static_cast<T>(rng.normal());
        if (eps != nullptr) (*eps)[i] = e;
        z[i] = mu[i] + std::exp(logvar[i] / T(2)) * e;
    }
    return z;
}

template <typename T>
Param<T>& ParamStore<T>::add(std::string name, std::vector<int> shape) {
    if (contains(name)) throw std::invalid_argument("duplicate parameter " + name);
    Param<T> p{std::move(name), Tensor<T>(shape), Tensor<T>(shape)};
    params_.push_back(std::move(p));
    return params_.back();
}

template <typename T>
Param<T>& ParamStore<T>::get(const std::string& name) {
    for (auto& p : params_) {
        if (p.name == name) return p;
    }
    throw std::out_of_range("no parameter " + name);
}

template <typename T>
const Param<T>& ParamStore<T>::get(const std::string& name) const {
    for (const auto& p : params_) {
        if (p.name == name) return p;
    }
    throw std::out_of_range("no parameter " + name);
}

template <typename T>
bool ParamStore<T>::contains(const std::string& name) const {
    return std::any_of(params_.begin(), params_.end(), [&](const auto& p) { return p.name == name; });
}

template <typename T>
void ParamStore<T>::zero_grad() {
    for (auto& p : params_) p.grad.zero();
}

template <typename T>
std::size_t ParamStore<T>::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
}

template <typename T>
void ParamStore<T>::glorot_init(Rng& rng) {
    for (auto& p : params_) {
        if (p.value.shape.size() < 2) {
            p.value.zero();
            continue;
        }
        std::size_t receptive = 1;
        for (std::size_t d = 2; d < p.value.shape.size(); ++d) receptive *= static_cast<std::size_t>(p.value.dim(d));
        const double fan_out = static_cast<double>(p.value.dim(0) * receptive);
        const double fan_in = static_cast<double>(p.value.dim(1) * receptive);
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        for (auto& v : p.value.values) v = static_cast<T>(rng.uniform(-limit, limit));
    }
}

template <typename T>
AdamState<T> AdamState<T>::zeros_like(const ParamStore<T>& store, AdamHyper hyper) {
    AdamState<T> s;
    s.hyper = hyper;
    for (const auto& p : store.params()) {
        s.first_moment.emplace_back(p.value.shape);
        s.second_moment.emplace_back(p.value.shape);
    }
    return s;
}

template <typename T>
void adam_step(ParamStore<T>& params, AdamState<T>& state) {
    auto& list = params.params();
    require(state.first_moment.size() == list.size() && state.second_moment.size() == list.size(),
            "optimizer state does not match the parameters");
    ++state.step;
    const AdamHyper& h = state.hyper;
    const double correction1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
    const double correction2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
    const T b1 = static_cast<T>(h.beta1), b2 = static_cast<T>(h.beta2);
    const T step_size = static_cast<T>(h.lr / correction1);
    const T root_correction2 = static_cast<T>(std::sqrt(correction2));
    const T eps = static_cast<T>(h.epsilon);
    for (std::size_t pi = 0; pi < list.size(); ++pi) {
        Param<T>& p = list[pi];
        Tensor<T>& m = state.first_moment[pi];
        Tensor<T>& v = state.second_moment[pi];
        require(m.shape == p.value.shape && v.shape == p.value.shape, "optimizer moment shape mismatch");
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const T g = p.grad[i];
            m[i] = b1 * m[i] + (T(1) - b1) * g;
            v[i] = b2 * v[i] + (T(1) - b2) * g * g;
            p.value[i] -= step_size * m[i] / (std::sqrt(v[i]) / root_correction2 + eps);
        }
        p.grad.zero();
    }
}

#define AVALON_NN_INSTANTIATE(T)                                                                              \
    template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                          \
    template void conv2d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tensor<T>*,           \
                                  Tensor<T>&, Tensor<T>&);                                                    \
    template Tensor<T> transposed_conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);               \
    template void transposed_conv2d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,            \
                                             Tensor<T>*, Tensor<T>&, Tensor<T>&);                             \
    template Tensor<T> fully_connected(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                 \
    template void fully_connected_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tensor<T>*,  \
                                           Tensor<T>&, Tensor<T>&);                                           \
    template Tensor<T> relu(const Tensor<T>&);                                                                \
    template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                                     \
    template std::vector<T> softmax_cells(std::span<const T>, int);                                           \
    template LossResult<T> masked_softmax_cross_entropy(std::span<const T>, std::span<const std::uint8_t>,    \
                                                        std::span<const std::uint8_t>);                       \
    template LossResult<T> masked_softmax_cross_entropy(std::span<const T>, const LevelGrid&,                 \
                                                        const BinaryMask&);                                   \
    template KlResult<T> kl_standard_normal(std::span<const T>, std::span<const T>);                          \
    template std::vector<T> reparameterize(std::span<const T>, std::span<const T>, Rng&, std::vector<T>*);    \
    template class ParamStore<T>;                                                                             \
    template struct AdamState<T>;                                                                             \
    template void adam_step(ParamStore<T>&, AdamState<T>&);

AVALON_NN_INSTANTIATE(float)
AVALON_NN_INSTANTIATE(double)

#undef AVALON_NN_INSTANTIATE

}  // namespace avalon::nn
