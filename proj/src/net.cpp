#include "hsitl/net.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <json.hpp>

#include "hsitl/errors.hpp"
#include "hsitl/rng.hpp"

namespace hsitl {

namespace {

constexpr double kBnEpsilon = 1e-5;
constexpr double kBnMomentum = 0.9;

// Index arithmetic matching trainable_tensors() enumeration: per block
// (w, b[, gamma, beta]), then per head layer (w, b).
struct ParamIndex {
    size_t per_block;
    size_t blocks;
    ParamIndex(size_t block_count, bool use_batch_norm)
        : per_block(use_batch_norm ? 4 : 2), blocks(block_count) {}
    size_t block_w(size_t i) const { return i * per_block; }
    size_t block_b(size_t i) const { return i * per_block + 1; }
    size_t block_gamma(size_t i) const { return i * per_block + 2; }
    size_t block_beta(size_t i) const { return i * per_block + 3; }
    size_t head_w(size_t j) const { return blocks * per_block + 2 * j; }
    size_t head_b(size_t j) const { return blocks * per_block + 2 * j + 1; }
};

uint32_t conv_out_extent(uint32_t in, uint32_t k, uint32_t stride) {
    return in < k ? 0 : (in - k) / stride + 1;
}

uint32_t pool_out_extent(uint32_t in, uint32_t k, uint32_t stride) {
    return in < k ? 0 : (in - k) / stride + 1;
}

template <typename T>
void conv_forward(const Matrix<T>& in, uint32_t cin, uint32_t lin, const Tensor<T>& w,
                  const Tensor<T>& b, uint32_t k, uint32_t stride, uint32_t cout, uint32_t lout,
                  Matrix<T>& out) {
    out.resize(in.rows, size_t(cout) * lout);
    for (size_t n = 0; n < in.rows; ++n) {
        const T* x = in.row(n);
        T* y = out.row(n);
        for (uint32_t co = 0; co < cout; ++co) {
            const T* wc = w.v.data() + size_t(co) * cin * k;
            T* yc = y + size_t(co) * lout;
            for (uint32_t t = 0; t < lout; ++t) {
                T acc = b.v[co];
                const T* xt = x + size_t(t) * stride;
                for (uint32_t ci = 0; ci < cin; ++ci) {
                    const T* xc = xt + size_t(ci) * lin;
                    const T* wk = wc + size_t(ci) * k;
                    for (uint32_t kk = 0; kk < k; ++kk) acc += wk[kk] * xc[kk];
                }
                yc[t] = acc;
            }
        }
    }
}

// dW/db/dX of the valid convolution. dX may be null for the first block.
template <typename T>
void conv_backward(const Matrix<T>& in, uint32_t cin, uint32_t lin, const Tensor<T>& w,
                   uint32_t k, uint32_t stride, uint32_t cout, uint32_t lout,
                   const Matrix<T>& dout, Tensor<T>& dw, Tensor<T>& db, Matrix<T>* din) {
    dw = Tensor<T>::zeros(w.shape);
    db = Tensor<T>::zeros({cout});
    if (din) din->resize(in.rows, in.cols);
    for (size_t n = 0; n < in.rows; ++n) {
        const T* x = in.row(n);
        const T* dy = dout.row(n);
        T* dx = din ? din->row(n) : nullptr;
        for (uint32_t co = 0; co < cout; ++co) {
            const T* dyc = dy + size_t(co) * lout;
            const T* wc = w.v.data() + size_t(co) * cin * k;
            T* dwc = dw.v.data() + size_t(co) * cin * k;
            for (uint32_t t = 0; t < lout; ++t) {
                T g = dyc[t];
                if (g == T(0)) continue;
                db.v[co] += g;
                const T* xt = x + size_t(t) * stride;
                for (uint32_t ci = 0; ci < cin; ++ci) {
                    const T* xc = xt + size_t(ci) * lin;
                    T* dwk = dwc + size_t(ci) * k;
                    for (uint32_t kk = 0; kk < k; ++kk) dwk[kk] += g * xc[kk];
                    if (dx) {
                        T* dxc = dx + size_t(ci) * lin + size_t(t) * stride;
                        const T* wk = wc + size_t(ci) * k;
                        for (uint32_t kk = 0; kk < k; ++kk) dxc[kk] += g * wk[kk];
                    }
                }
            }
        }
    }
}

template <typename T>
void fc_forward(const Matrix<T>& in, const DenseParams<T>& layer, Matrix<T>& out) {
    uint32_t n_out = layer.w.shape[0], n_in = layer.w.shape[1];
    out.resize(in.rows, n_out);
    for (size_t n = 0; n < in.rows; ++n) {
        const T* x = in.row(n);
        T* y = out.row(n);
        for (uint32_t o = 0; o < n_out; ++o) {
            const T* wr = layer.w.v.data() + size_t(o) * n_in;
            T acc = layer.b.v[o];
            for (uint32_t i = 0; i < n_in; ++i) acc += wr[i] * x[i];
            y[o] = acc;
        }
    }
}

template <typename T>
void fc_backward(const Matrix<T>& in, const DenseParams<T>& layer, const Matrix<T>& dout,
                 Tensor<T>& dw, Tensor<T>& db, Matrix<T>* din) {
    uint32_t n_out = layer.w.shape[0], n_in = layer.w.shape[1];
    dw = Tensor<T>::zeros(layer.w.shape);
    db = Tensor<T>::zeros({n_out});
    if (din) din->resize(in.rows, n_in);
    for (size_t n = 0; n < in.rows; ++n) {
        const T* x = in.row(n);
        const T* dy = dout.row(n);
        T* dx = din ? din->row(n) : nullptr;
        for (uint32_t o = 0; o < n_out; ++o) {
            T g = dy[o];
            if (g == T(0)) continue;
            db.v[o] += g;
            T* dwr = dw.v.data() + size_t(o) * n_in;
            const T* wr = layer.w.v.data() + size_t(o) * n_in;
            for (uint32_t i = 0; i < n_in; ++i) {
                dwr[i] += g * x[i];
                if (dx) dx[i] += g * wr[i];
            }
        }
    }
}

template <typename T>
void relu_inplace(Matrix<T>& m) {
    for (T& x : m.v)
        if (x < T(0)) x = T(0);
}

// d(post) -> d(pre) through ReLU, using the post-activation values as mask.
template <typename T>
void relu_mask(const Matrix<T>& post, Matrix<T>& grad) {
    for (size_t i = 0; i < grad.v.size(); ++i)
        if (post.v[i] <= T(0)) grad.v[i] = T(0);
}

template <typename T>
void pool_forward(const Matrix<T>& in, uint32_t channels, uint32_t lin, uint32_t k,
                  uint32_t stride, uint32_t lout, Matrix<T>& out, std::vector<uint32_t>& argmax) {
    out.resize(in.rows, size_t(channels) * lout);
    argmax.assign(in.rows * size_t(channels) * lout, 0);
    for (size_t n = 0; n < in.rows; ++n) {
        const T* x = in.row(n);
        T* y = out.row(n);
        uint32_t* am = argmax.data() + n * size_t(channels) * lout;
        for (uint32_t c = 0; c < channels; ++c) {
            const T* xc = x + size_t(c) * lin;
            for (uint32_t t = 0; t < lout; ++t) {
                uint32_t base = t * stride;
                uint32_t best = base;
                T best_v = xc[base];
                for (uint32_t kk = 1; kk < k; ++kk) {
                    // strict > keeps the first maximum on ties
                    if (xc[base + kk] > best_v) {
                        best_v = xc[base + kk];
                        best = base + kk;
                    }
                }
                y[size_t(c) * lout + t] = best_v;
                am[size_t(c) * lout + t] = best;
            }
        }
    }
}

template <typename T>
void pool_backward(const Matrix<T>& dout, uint32_t channels, uint32_t lin, uint32_t lout,
                   const std::vector<uint32_t>& argmax, Matrix<T>& din) {
    din.resize(dout.rows, size_t(channels) * lin);
    for (size_t n = 0; n < dout.rows; ++n) {
        const T* dy = dout.row(n);
        T* dx = din.row(n);
        const uint32_t* am = argmax.data() + n * size_t(channels) * lout;
        for (uint32_t c = 0; c < channels; ++c)
            for (uint32_t t = 0; t < lout; ++t)
                dx[size_t(c) * lin + am[size_t(c) * lout + t]] +=
                    dy[size_t(c) * lout + t];
    }
}

// Train-mode batch norm over channels: normalizes in place (x -> xhat) with
// population statistics of the (rows x extent) slice, optionally folding the
// batch statistics into the running estimates.
template <typename T>
void bn_normalize_batch(Matrix<T>& x, uint32_t channels, uint32_t extent, BlockParams<T>& p,
                        bool update_running, std::vector<T>& inv_std) {
    size_t m = x.rows * size_t(extent);
    inv_std.assign(channels, T(0));
    for (uint32_t c = 0; c < channels; ++c) {
        T mean = T(0);
        for (size_t n = 0; n < x.rows; ++n) {
            const T* xc = x.row(n) + size_t(c) * extent;
            for (uint32_t t = 0; t < extent; ++t) mean += xc[t];
        }
        mean /= T(m);
        T var = T(0);
        for (size_t n = 0; n < x.rows; ++n) {
            const T* xc = x.row(n) + size_t(c) * extent;
            for (uint32_t t = 0; t < extent; ++t) {
                T d = xc[t] - mean;
                var += d * d;
            }
        }
        var /= T(m);
        T is = T(1) / std::sqrt(var + T(kBnEpsilon));
        inv_std[c] = is;
        for (size_t n = 0; n < x.rows; ++n) {
            T* xc = x.row(n) + size_t(c) * extent;
            for (uint32_t t = 0; t < extent; ++t) xc[t] = (xc[t] - mean) * is;
        }
        if (update_running) {
            p.run_mean.v[c] = T(kBnMomentum) * p.run_mean.v[c] + T(1 - kBnMomentum) * mean;
            p.run_var.v[c] = T(kBnMomentum) * p.run_var.v[c] + T(1 - kBnMomentum) * var;
        }
    }
}

// Infer-mode batch norm + affine in one pass: y = gamma * (x-rm)/sqrt(rv+eps) + beta.
template <typename T>
void bn_apply_running(Matrix<T>& x, uint32_t channels, uint32_t extent,
                      const BlockParams<T>& p) {
    for (uint32_t c = 0; c < channels; ++c) {
        T is = T(1) / std::sqrt(p.run_var.v[c] + T(kBnEpsilon));
        T scale = p.gamma.v[c] * is;
        T shift = p.beta.v[c] - p.run_mean.v[c] * scale;
        for (size_t n = 0; n < x.rows; ++n) {
            T* xc = x.row(n) + size_t(c) * extent;
            for (uint32_t t = 0; t < extent; ++t) xc[t] = xc[t] * scale + shift;
        }
    }
}

template <typename T>
void softmax_rows(const Matrix<T>& logits, Matrix<T>& probs) {
    probs.resize(logits.rows, logits.cols);
    for (size_t n = 0; n < logits.rows; ++n) {
        const T* z = logits.row(n);
        T* p = probs.row(n);
        T zmax = z[0];
        for (size_t c = 1; c < logits.cols; ++c) zmax = std::max(zmax, z[c]);
        T sum = T(0);
        for (size_t c = 0; c < logits.cols; ++c) {
            p[c] = std::exp(z[c] - zmax);
            sum += p[c];
        }
        for (size_t c = 0; c < logits.cols; ++c) p[c] /= sum;
    }
}

template <typename T>
double ce_from_logits(const Matrix<T>& logits, const std::vector<int32_t>& labels) {
    double total = 0.0;
    for (size_t n = 0; n < logits.rows; ++n) {
        const T* z = logits.row(n);
        T zmax = z[0];
        for (size_t c = 1; c < logits.cols; ++c) zmax = std::max(zmax, z[c]);
        double sum = 0.0;
        for (size_t c = 0; c < logits.cols; ++c) sum += std::exp(double(z[c] - zmax));
        double lse = double(zmax) + std::log(sum);
        total += lse - double(z[size_t(labels[n])]);
    }
    return total / double(logits.rows);
}

template <typename T>
const Matrix<T>& block_out(const BlockCache<T>& c, bool use_pool) {
    return use_pool ? c.pool_out : c.relu_out;
}

}  // namespace

std::string family_name(Family family) {
    return family == Family::CNN1D ? "cnn1d" : "ptcnn";
}

Family family_from_name(const std::string& name) {
    if (name == "cnn1d") return Family::CNN1D;
    if (name == "ptcnn") return Family::PTCNN;
    throw ConfigError("unknown network family '" + name + "' (expected cnn1d or ptcnn)");
}

ArchitectureConfig ArchitectureConfig::cnn1d(uint32_t blocks, uint32_t class_count,
                                             uint32_t kernels) {
    ArchitectureConfig arch;
    arch.family = Family::CNN1D;
    arch.blocks = blocks;
    arch.kernels = kernels;
    arch.conv_len = 5;
    arch.use_pool = true;
    arch.use_batch_norm = true;
    arch.fc_sizes = {512, 128};
    arch.class_count = class_count;
    return arch;
}

ArchitectureConfig ArchitectureConfig::ptcnn(uint32_t blocks, uint32_t class_count,
                                             uint32_t kernels) {
    ArchitectureConfig arch;
    arch.family = Family::PTCNN;
    arch.blocks = blocks;
    arch.kernels = kernels;
    arch.conv_len = 16;
    arch.use_pool = false;
    arch.use_batch_norm = false;
    arch.fc_sizes = {512, 256, 128};
    arch.class_count = class_count;
    return arch;
}

void ArchitectureConfig::validate() const {
    if (blocks < 1 || blocks > 3) throw ConfigError("arch: blocks must be 1..3");
    if (kernels < 1) throw ConfigError("arch: kernels must be >= 1");
    if (conv_len < 1 || conv_stride < 1) throw ConfigError("arch: conv sizes must be >= 1");
    if (use_pool && (pool_len < 1 || pool_stride < 1))
        throw ConfigError("arch: pool sizes must be >= 1");
    if (class_count < 2) throw ConfigError("arch: need at least 2 classes");
    for (uint32_t s : fc_sizes)
        if (s < 1) throw ConfigError("arch: fc sizes must be >= 1");
}

std::string arch_to_json(const ArchitectureConfig& arch) {
    nlohmann::json j;
    j["family"] = family_name(arch.family);
    j["blocks"] = arch.blocks;
    j["kernels"] = arch.kernels;
    j["conv_len"] = arch.conv_len;
    j["conv_stride"] = arch.conv_stride;
    if (arch.use_pool) {
        j["pool_len"] = arch.pool_len;
        j["pool_stride"] = arch.pool_stride;
    }
    j["batch_norm"] = arch.use_batch_norm;
    j["fc"] = arch.fc_sizes;
    j["classes"] = arch.class_count;
    return j.dump();
}

ArchitectureConfig arch_from_json(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("arch: invalid JSON: ") + e.what());
    }
    if (!j.contains("family")) throw ConfigError("arch: missing 'family'");
    ArchitectureConfig arch = family_from_name(j["family"].get<std::string>()) == Family::CNN1D
                                  ? ArchitectureConfig::cnn1d(1, 2)
                                  : ArchitectureConfig::ptcnn(1, 2);
    static const std::vector<std::string> known = {"family",      "blocks",   "kernels",
                                                   "conv_len",    "conv_stride", "pool_len",
                                                   "pool_stride", "batch_norm",  "fc",
                                                   "classes"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::find(known.begin(), known.end(), it.key()) == known.end())
            throw ConfigError("arch: unknown key '" + it.key() + "'");
    }
    try {
        if (j.contains("blocks")) arch.blocks = j["blocks"].get<uint32_t>();
        if (j.contains("kernels")) arch.kernels = j["kernels"].get<uint32_t>();
        if (j.contains("conv_len")) arch.conv_len = j["conv_len"].get<uint32_t>();
        if (j.contains("conv_stride")) arch.conv_stride = j["conv_stride"].get<uint32_t>();
        if (j.contains("pool_len") || j.contains("pool_stride")) {
            if (!arch.use_pool)
                throw ConfigError("arch: pool settings are not valid for family ptcnn");
            if (j.contains("pool_len")) arch.pool_len = j["pool_len"].get<uint32_t>();
            if (j.contains("pool_stride")) arch.pool_stride = j["pool_stride"].get<uint32_t>();
        }
        if (j.contains("batch_norm")) arch.use_batch_norm = j["batch_norm"].get<bool>();
        if (j.contains("fc")) arch.fc_sizes = j["fc"].get<std::vector<uint32_t>>();
        if (j.contains("classes")) arch.class_count = j["classes"].get<uint32_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("arch: bad field type: ") + e.what());
    }
    return arch;
}

ShapeTrace trace_shapes(const ArchitectureConfig& arch, uint32_t input_bands) {
    ShapeTrace trace;
    trace.extents.push_back(input_bands);
    uint32_t extent = input_bands;
    uint32_t layer = 0;
    for (uint32_t b = 0; b < arch.blocks; ++b) {
        if (extent < arch.conv_len) {
            trace.feasible = false;
            trace.failed_layer = layer;
            trace.reason = "conv of block " + std::to_string(b + 1) + " needs " +
                           std::to_string(arch.conv_len) + " bands, input has " +
                           std::to_string(extent);
            return trace;
        }
        extent = conv_out_extent(extent, arch.conv_len, arch.conv_stride);
        trace.extents.push_back(extent);
        ++layer;
        if (arch.use_pool) {
            uint32_t pooled = pool_out_extent(extent, arch.pool_len, arch.pool_stride);
            if (pooled == 0) {
                trace.feasible = false;
                trace.failed_layer = layer;
                trace.reason = "pool of block " + std::to_string(b + 1) +
                               " would empty the spectral axis";
                return trace;
            }
            extent = pooled;
            trace.extents.push_back(extent);
            ++layer;
        }
    }
    trace.flatten_dim = arch.kernels * extent;
    return trace;
}

ShapeTrace require_feasible(const ArchitectureConfig& arch, uint32_t input_bands) {
    arch.validate();
    ShapeTrace trace = trace_shapes(arch, input_bands);
    if (!trace.feasible)
        throw ConfigError("arch infeasible at " + std::to_string(input_bands) +
                          " bands: " + trace.reason);
    return trace;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(std::vector<uint32_t> shape_in) {
    return filled(std::move(shape_in), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::filled(std::vector<uint32_t> shape_in, T value) {
    Tensor<T> t;
    t.shape = std::move(shape_in);
    size_t n = 1;
    for (uint32_t d : t.shape) n *= d;
    t.v.assign(n, value);
    return t;
}

namespace {

template <typename T>
Tensor<T> he_uniform(std::vector<uint32_t> shape, size_t fan_in, SplitMix64 rng) {
    Tensor<T> t = Tensor<T>::zeros(std::move(shape));
    double limit = std::sqrt(6.0 / double(fan_in));
    for (T& w : t.v) w = T((2.0 * rng.next_unit() - 1.0) * limit);
    return t;
}

}  // namespace

template <typename T>
ModelParams<T> init_params(const ArchitectureConfig& arch, uint32_t input_bands, uint64_t seed) {
    ShapeTrace trace = require_feasible(arch, input_bands);
    ModelParams<T> params;
    params.arch = arch;
    params.input_bands = input_bands;
    SplitMix64 root(seed);
    uint64_t stream = 0;
    uint32_t in_ch = 1;
    for (uint32_t b = 0; b < arch.blocks; ++b) {
        BlockParams<T> block;
        block.w = he_uniform<T>({arch.kernels, in_ch, arch.conv_len},
                                size_t(in_ch) * arch.conv_len, root.substream(stream++));
        block.b = Tensor<T>::zeros({arch.kernels});
        if (arch.use_batch_norm) {
            block.gamma = Tensor<T>::filled({arch.kernels}, T(1));
            block.beta = Tensor<T>::zeros({arch.kernels});
            block.run_mean = Tensor<T>::zeros({arch.kernels});
            block.run_var = Tensor<T>::filled({arch.kernels}, T(1));
        }
        params.blocks.push_back(std::move(block));
        in_ch = arch.kernels;
    }
    uint32_t in_dim = trace.flatten_dim;
    for (uint32_t size : arch.fc_sizes) {
        DenseParams<T> fc;
        fc.w = he_uniform<T>({size, in_dim}, in_dim, root.substream(stream++));
        fc.b = Tensor<T>::zeros({size});
        params.head.push_back(std::move(fc));
        in_dim = size;
    }
    DenseParams<T> out;
    out.w = he_uniform<T>({arch.class_count, in_dim}, in_dim, root.substream(stream++));
    out.b = Tensor<T>::zeros({arch.class_count});
    params.head.push_back(std::move(out));
    return params;
}

template <typename T>
std::vector<TensorRef<T>> trainable_tensors(ModelParams<T>& params) {
    std::vector<TensorRef<T>> refs;
    for (size_t i = 0; i < params.blocks.size(); ++i) {
        auto& b = params.blocks[i];
        std::string prefix = "block" + std::to_string(i);
        refs.push_back({prefix + ".conv.w", true, &b.w});
        refs.push_back({prefix + ".conv.b", true, &b.b});
        if (params.arch.use_batch_norm) {
            refs.push_back({prefix + ".bn.gamma", true, &b.gamma});
            refs.push_back({prefix + ".bn.beta", true, &b.beta});
        }
    }
    for (size_t j = 0; j < params.head.size(); ++j) {
        auto& fc = params.head[j];
        std::string prefix =
            j + 1 == params.head.size() ? std::string("head.out") : "head.fc" + std::to_string(j);
        refs.push_back({prefix + ".w", false, &fc.w});
        refs.push_back({prefix + ".b", false, &fc.b});
    }
    return refs;
}

template <typename T>
const Matrix<T>& forward(ModelParams<T>& params, const Matrix<T>& batch, ForwardOpts opts,
                         ForwardCache<T>& cache) {
    const ArchitectureConfig& arch = params.arch;
    if (batch.cols != params.input_bands)
        throw DataError("forward: batch has " + std::to_string(batch.cols) +
                        " bands, model expects " + std::to_string(params.input_bands));
    if (batch.rows == 0) throw DataError("forward: empty batch");
    cache.blocks.resize(params.blocks.size());
    uint32_t extent = params.input_bands;
    uint32_t in_ch = 1;
    const Matrix<T>* cur = &batch;
    for (size_t i = 0; i < params.blocks.size(); ++i) {
        BlockParams<T>& p = params.blocks[i];
        BlockCache<T>& c = cache.blocks[i];
        uint32_t lc = conv_out_extent(extent, arch.conv_len, arch.conv_stride);
        if (extent < arch.conv_len || lc == 0)
            throw ConfigError("forward: spectral extent exhausted at block " +
                              std::to_string(i + 1));
        c.conv_extent = lc;
        if (arch.use_batch_norm) {
            conv_forward(*cur, in_ch, extent, p.w, p.b, arch.conv_len, arch.conv_stride,
                         arch.kernels, lc, c.xhat);
            if (opts.batch_stats) {
                bn_normalize_batch(c.xhat, arch.kernels, lc, p, opts.update_running, c.inv_std);
                c.relu_out.resize(c.xhat.rows, c.xhat.cols);
                for (uint32_t ch = 0; ch < arch.kernels; ++ch) {
                    T g = p.gamma.v[ch], be = p.beta.v[ch];
                    for (size_t n = 0; n < c.xhat.rows; ++n) {
                        const T* xc = c.xhat.row(n) + size_t(ch) * lc;
                        T* yc = c.relu_out.row(n) + size_t(ch) * lc;
                        for (uint32_t t = 0; t < lc; ++t) yc[t] = g * xc[t] + be;
                    }
                }
            } else {
                bn_apply_running(c.xhat, arch.kernels, lc, p);
                c.relu_out = c.xhat;  // xhat now holds the affine output
            }
        } else {
            conv_forward(*cur, in_ch, extent, p.w, p.b, arch.conv_len, arch.conv_stride,
                         arch.kernels, lc, c.relu_out);
        }
        relu_inplace(c.relu_out);
        if (arch.use_pool) {
            uint32_t lp = pool_out_extent(lc, arch.pool_len, arch.pool_stride);
            if (lp == 0)
                throw ConfigError("forward: pool emptied the spectral axis at block " +
                                  std::to_string(i + 1));
            c.out_extent = lp;
            pool_forward(c.relu_out, arch.kernels, lc, arch.pool_len, arch.pool_stride, lp,
                         c.pool_out, c.pool_idx);
        } else {
            c.out_extent = lc;
        }
        cur = &block_out(c, arch.use_pool);
        extent = c.out_extent;
        in_ch = arch.kernels;
    }

    cache.fc_out.resize(params.head.size() > 0 ? params.head.size() - 1 : 0);
    for (size_t j = 0; j + 1 < params.head.size(); ++j) {
        fc_forward(*cur, params.head[j], cache.fc_out[j]);
        relu_inplace(cache.fc_out[j]);
        cur = &cache.fc_out[j];
    }
    fc_forward(*cur, params.head.back(), cache.logits);
    softmax_rows(cache.logits, cache.probs);
    return cache.probs;
}

template <typename T>
Matrix<T> forward_infer(const ModelParams<T>& params, const Matrix<T>& batch) {
    ForwardCache<T> cache;
    // Infer mode never mutates params; the engine signature is mutable only
    // for the running-stat update path.
    auto& mutable_params = const_cast<ModelParams<T>&>(params);
    forward(mutable_params, batch, ForwardOpts::infer(), cache);
    return std::move(cache.probs);
}

template <typename T>
Matrix<T> extract_features(const ModelParams<T>& params, const Matrix<T>& batch) {
    if (params.blocks.empty()) return batch;
    auto& mutable_params = const_cast<ModelParams<T>&>(params);
    ForwardCache<T> cache;
    // Run the block stack only: replicate the forward walk up to flatten.
    const ArchitectureConfig& arch = params.arch;
    if (batch.cols != params.input_bands)
        throw DataError("extract_features: band mismatch");
    cache.blocks.resize(params.blocks.size());
    uint32_t extent = params.input_bands;
    uint32_t in_ch = 1;
    const Matrix<T>* cur = &batch;
    for (size_t i = 0; i < params.blocks.size(); ++i) {
        BlockParams<T>& p = mutable_params.blocks[i];
        BlockCache<T>& c = cache.blocks[i];
        uint32_t lc = conv_out_extent(extent, arch.conv_len, arch.conv_stride);
        if (extent < arch.conv_len || lc == 0)
            throw ConfigError("extract_features: spectral extent exhausted");
        c.conv_extent = lc;
        conv_forward(*cur, in_ch, extent, p.w, p.b, arch.conv_len, arch.conv_stride, arch.kernels,
                     lc, c.relu_out);
        if (arch.use_batch_norm) bn_apply_running(c.relu_out, arch.kernels, lc, p);
        relu_inplace(c.relu_out);
        if (arch.use_pool) {
            uint32_t lp = pool_out_extent(lc, arch.pool_len, arch.pool_stride);
            c.out_extent = lp;
            pool_forward(c.relu_out, arch.kernels, lc, arch.pool_len, arch.pool_stride, lp,
                         c.pool_out, c.pool_idx);
        } else {
            c.out_extent = lc;
        }
        cur = &block_out(c, arch.use_pool);
        extent = c.out_extent;
        in_ch = arch.kernels;
    }
    return *cur;
}

template <typename T>
double cross_entropy_loss(ModelParams<T>& params, const Matrix<T>& batch,
                          const std::vector<int32_t>& labels, ForwardOpts opts) {
    if (labels.size() != batch.rows) throw DataError("loss: labels/batch size mismatch");
    for (int32_t label : labels)
        if (label < 0 || uint32_t(label) >= params.arch.class_count)
            throw DataError("loss: label out of range");
    ForwardCache<T> cache;
    forward(params, batch, opts, cache);
    return ce_from_logits(cache.logits, labels);
}

template <typename T>
double loss_and_gradients(ModelParams<T>& params, const Matrix<T>& batch,
                          const std::vector<int32_t>& labels, ForwardOpts opts,
                          ForwardCache<T>& cache, GradientSet<T>& grads) {
    if (labels.size() != batch.rows) throw DataError("loss: labels/batch size mismatch");
    for (int32_t label : labels)
        if (label < 0 || uint32_t(label) >= params.arch.class_count)
            throw DataError("loss: label out of range");
    const ArchitectureConfig& arch = params.arch;
    forward(params, batch, opts, cache);
    double loss = ce_from_logits(cache.logits, labels);

    auto refs = trainable_tensors(params);
    ParamIndex index(params.blocks.size(), arch.use_batch_norm);
    grads.assign(refs.size(), {});

    // d(loss)/d(logits) for mean cross-entropy after softmax
    size_t n_rows = batch.rows;
    Matrix<T> dcur(cache.probs.rows, cache.probs.cols);
    for (size_t n = 0; n < n_rows; ++n) {
        const T* p = cache.probs.row(n);
        T* d = dcur.row(n);
        for (size_t c = 0; c < cache.probs.cols; ++c) d[c] = p[c] / T(n_rows);
        d[size_t(labels[n])] -= T(1) / T(n_rows);
    }

    // Head, last layer first.
    const Matrix<T>* flatten =
        params.blocks.empty() ? &batch : &block_out(cache.blocks.back(), arch.use_pool);
    Matrix<T> dprev;
    for (size_t j = params.head.size(); j-- > 0;) {
        const Matrix<T>& input = j == 0 ? *flatten : cache.fc_out[j - 1];
        bool need_dinput = j > 0 || !params.blocks.empty();
        fc_backward(input, params.head[j], dcur, grads[index.head_w(j)], grads[index.head_b(j)],
                    need_dinput ? &dprev : nullptr);
        if (j > 0) {
            relu_mask(cache.fc_out[j - 1], dprev);
            std::swap(dcur, dprev);
        }
    }

    if (params.blocks.empty()) return loss;
    std::swap(dcur, dprev);  // dcur = gradient at the last block output

    for (size_t i = params.blocks.size(); i-- > 0;) {
        BlockParams<T>& p = params.blocks[i];
        BlockCache<T>& c = cache.blocks[i];
        uint32_t lc = c.conv_extent;
        Matrix<T> drelu;
        if (arch.use_pool) {
            pool_backward(dcur, arch.kernels, lc, c.out_extent, c.pool_idx, drelu);
        } else {
            drelu = std::move(dcur);
        }
        relu_mask(c.relu_out, drelu);

        Matrix<T>* dconv = &drelu;
        Matrix<T> dbn;
        if (arch.use_batch_norm) {
            if (!opts.batch_stats)
                throw ConfigError("backward through frozen batch norm is not supported");
            // Fused batch-norm backward over each channel:
            // dx = inv_std/m * (m*dxhat - sum(dxhat) - xhat*sum(dxhat*xhat))
            Tensor<T>& dgamma = grads[index.block_gamma(i)];
            Tensor<T>& dbeta = grads[index.block_beta(i)];
            dgamma = Tensor<T>::zeros({arch.kernels});
            dbeta = Tensor<T>::zeros({arch.kernels});
            dbn.resize(drelu.rows, drelu.cols);
            size_t m = drelu.rows * size_t(lc);
            for (uint32_t ch = 0; ch < arch.kernels; ++ch) {
                T sum_d = T(0), sum_dx = T(0);
                for (size_t n = 0; n < drelu.rows; ++n) {
                    const T* dy = drelu.row(n) + size_t(ch) * lc;
                    const T* xh = c.xhat.row(n) + size_t(ch) * lc;
                    for (uint32_t t = 0; t < lc; ++t) {
                        sum_d += dy[t];
                        sum_dx += dy[t] * xh[t];
                    }
                }
                dgamma.v[ch] = sum_dx;
                dbeta.v[ch] = sum_d;
                T g = p.gamma.v[ch];
                T is = c.inv_std[ch];
                T inv_m = T(1) / T(m);
                for (size_t n = 0; n < drelu.rows; ++n) {
                    const T* dy = drelu.row(n) + size_t(ch) * lc;
                    const T* xh = c.xhat.row(n) + size_t(ch) * lc;
                    T* dx = dbn.row(n) + size_t(ch) * lc;
                    for (uint32_t t = 0; t < lc; ++t)
                        dx[t] = g * is * (dy[t] - inv_m * (sum_d + xh[t] * sum_dx));
                }
            }
            dconv = &dbn;
        }

        const Matrix<T>& input = i == 0 ? batch : block_out(cache.blocks[i - 1], arch.use_pool);
        uint32_t in_ch = i == 0 ? 1 : arch.kernels;
        uint32_t in_extent = i == 0 ? params.input_bands : cache.blocks[i - 1].out_extent;
        Matrix<T> dinput;
        conv_backward(input, in_ch, in_extent, p.w, arch.conv_len, arch.conv_stride, arch.kernels,
                      lc, *dconv, grads[index.block_w(i)], grads[index.block_b(i)],
                      i == 0 ? nullptr : &dinput);
        dcur = std::move(dinput);
    }
    return loss;
}

bool mask_admits(TrainMask mask, bool in_extractor) {
    return mask == TrainMask::All || !in_extractor;
}

template <typename T>
void adam_step(std::vector<TensorRef<T>>& refs, const GradientSet<T>& grads, AdamState<T>& state,
               uint64_t t, const AdamHyper& hyper, TrainMask mask) {
    if (t < 1) throw ConfigError("adam: step index must be >= 1");
    if (grads.size() != refs.size() || state.m.size() != refs.size())
        throw DataError("adam: gradient/state shape mismatch");
    double bc1 = 1.0 - std::pow(hyper.beta1, double(t));
    double bc2 = 1.0 - std::pow(hyper.beta2, double(t));
    for (size_t i = 0; i < refs.size(); ++i) {
        if (!mask_admits(mask, refs[i].in_extractor)) continue;
        Tensor<T>& w = *refs[i].tensor;
        const Tensor<T>& g = grads[i];
        if (g.v.size() != w.v.size()) throw DataError("adam: gradient shape mismatch");
        Tensor<T>& m = state.m[i];
        Tensor<T>& v = state.v[i];
        T b1 = T(hyper.beta1), b2 = T(hyper.beta2);
        for (size_t k = 0; k < w.v.size(); ++k) {
            m.v[k] = b1 * m.v[k] + (T(1) - b1) * g.v[k];
            v.v[k] = b2 * v.v[k] + (T(1) - b2) * g.v[k] * g.v[k];
            double mhat = double(m.v[k]) / bc1;
            double vhat = double(v.v[k]) / bc2;
            w.v[k] = T(double(w.v[k]) -
                       hyper.learning_rate * mhat / (std::sqrt(vhat) + hyper.epsilon));
        }
    }
    state.t = t;
}

template <typename T>
void assemble_batch(const SampleSet& samples, std::span<const size_t> indices, Matrix<T>& batch,
                    std::vector<int32_t>& labels) {
    batch.resize(indices.size(), samples.bands());
    labels.resize(indices.size());
    for (size_t r = 0; r < indices.size(); ++r) {
        auto spec = samples.spectrum(indices[r]);
        T* row = batch.row(r);
        for (size_t b = 0; b < spec.size(); ++b) row[b] = T(spec[b]);
        labels[r] = samples.cls(indices[r]);
    }
}

// The engine is used in 32-bit for training and 64-bit for gradient
// verification; instantiate both.
#define HSITL_INSTANTIATE(T)                                                                     \
    template struct Tensor<T>;                                                                   \
    template ModelParams<T> init_params<T>(const ArchitectureConfig&, uint32_t, uint64_t);       \
    template std::vector<TensorRef<T>> trainable_tensors<T>(ModelParams<T>&);                    \
    template const Matrix<T>& forward<T>(ModelParams<T>&, const Matrix<T>&, ForwardOpts,         \
                                         ForwardCache<T>&);                                      \
    template Matrix<T> forward_infer<T>(const ModelParams<T>&, const Matrix<T>&);                \
    template Matrix<T> extract_features<T>(const ModelParams<T>&, const Matrix<T>&);             \
    template double cross_entropy_loss<T>(ModelParams<T>&, const Matrix<T>&,                     \
                                          const std::vector<int32_t>&, ForwardOpts);             \
    template double loss_and_gradients<T>(ModelParams<T>&, const Matrix<T>&,                     \
                                          const std::vector<int32_t>&, ForwardOpts,              \
                                          ForwardCache<T>&, GradientSet<T>&);                    \
    template void adam_step<T>(std::vector<TensorRef<T>>&, const GradientSet<T>&, AdamState<T>&, \
                               uint64_t, const AdamHyper&, TrainMask);                           \
    template void assemble_batch<T>(const SampleSet&, std::span<const size_t>, Matrix<T>&,       \
                                    std::vector<int32_t>&);

HSITL_INSTANTIATE(float)
HSITL_INSTANTIATE(double)

#undef HSITL_INSTANTIATE

}  // namespace hsitl
