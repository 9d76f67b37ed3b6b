#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hsitl/samples.hpp"

namespace hsitl {

/// Network family. CNN1D stacks conv + batch-norm + max-pool building
/// blocks; PTCNN stacks plain conv layers (no pooling, no batch norm) and a
/// deeper fully-connected head.
enum class Family { CNN1D, PTCNN };

std::string family_name(Family family);
Family family_from_name(const std::string& name);

/// Topology of a spectral classifier: `blocks` feature-extractor stages
/// followed by hidden FC layers and a softmax output layer sized by
/// `class_count`. ReLU activations throughout.
struct ArchitectureConfig {
    Family family = Family::CNN1D;
    uint32_t blocks = 1;
    uint32_t kernels = 200;     // conv output channels per block
    uint32_t conv_len = 5;      // spectral kernel length
    uint32_t conv_stride = 1;
    bool use_pool = true;
    uint32_t pool_len = 2;
    uint32_t pool_stride = 2;
    bool use_batch_norm = true;
    std::vector<uint32_t> fc_sizes = {512, 128};  // hidden layers, before the output layer
    uint32_t class_count = 0;

    static ArchitectureConfig cnn1d(uint32_t blocks, uint32_t class_count,
                                    uint32_t kernels = 200);
    static ArchitectureConfig ptcnn(uint32_t blocks, uint32_t class_count,
                                    uint32_t kernels = 200);
    void validate() const;  // throws ConfigError on nonsense sizes
};

std::string arch_to_json(const ArchitectureConfig& arch);
ArchitectureConfig arch_from_json(const std::string& json_text);

/// Spectral extents through the extractor. `extents` starts at the input
/// band count and appends one entry per conv / pool layer; on infeasible
/// configurations `feasible` is false and `failed_layer` indexes the layer
/// (0-based, in extent order) whose input was too short.
struct ShapeTrace {
    bool feasible = true;
    std::vector<uint32_t> extents;
    uint32_t flatten_dim = 0;
    uint32_t failed_layer = 0;
    std::string reason;
};

ShapeTrace trace_shapes(const ArchitectureConfig& arch, uint32_t input_bands);

/// trace_shapes, throwing ConfigError when infeasible.
ShapeTrace require_feasible(const ArchitectureConfig& arch, uint32_t input_bands);

template <typename T>
struct Tensor {
    std::vector<uint32_t> shape;
    std::vector<T> v;

    size_t size() const { return v.size(); }
    static Tensor zeros(std::vector<uint32_t> shape_in);
    static Tensor filled(std::vector<uint32_t> shape_in, T value);
};

/// Dense row-major matrix; the only batch container the engine uses.
/// Conv activations of shape [N, C, L] are stored with cols = C*L and
/// channel-major layout (index c*L + t) per row.
template <typename T>
struct Matrix {
    size_t rows = 0, cols = 0;
    std::vector<T> v;

    Matrix() = default;
    Matrix(size_t r, size_t c) : rows(r), cols(c), v(r * c, T(0)) {}
    void resize(size_t r, size_t c) {
        rows = r;
        cols = c;
        v.assign(r * c, T(0));
    }
    T* row(size_t r) { return v.data() + r * cols; }
    const T* row(size_t r) const { return v.data() + r * cols; }
    T& at(size_t r, size_t c) { return v[r * cols + c]; }
    T at(size_t r, size_t c) const { return v[r * cols + c]; }
};

template <typename T>
struct BlockParams {
    Tensor<T> w;  // [out_ch, in_ch, k]
    Tensor<T> b;  // [out_ch]
    // batch-norm tensors, present when the architecture uses BN
    Tensor<T> gamma, beta;
    Tensor<T> run_mean, run_var;  // running stats; updated by train-mode forward
};

template <typename T>
struct DenseParams {
    Tensor<T> w;  // [out, in]
    Tensor<T> b;  // [out]
};

/// Trainable state of one network plus the bookkeeping needed to apply it:
/// extractor conv blocks, FC head (hidden layers then output layer last),
/// and the input normalizer fitted alongside training, if any.
template <typename T>
struct ModelParams {
    ArchitectureConfig arch;
    uint32_t input_bands = 0;
    std::vector<BlockParams<T>> blocks;
    std::vector<DenseParams<T>> head;  // fc_sizes layers + softmax output layer
    std::optional<Normalizer> input_norm;
};

/// He-uniform fan-in init for conv/FC weights, zero biases, BN scale 1 /
/// shift 0; a pure function of (arch, input_bands, seed).
template <typename T>
ModelParams<T> init_params(const ArchitectureConfig& arch, uint32_t input_bands, uint64_t seed);

/// Reference to one trainable tensor. Running BN statistics are not listed.
template <typename T>
struct TensorRef {
    std::string name;
    bool in_extractor;
    Tensor<T>* tensor;
};

template <typename T>
std::vector<TensorRef<T>> trainable_tensors(ModelParams<T>& params);

/// Gradients aligned index-for-index with trainable_tensors order.
template <typename T>
using GradientSet = std::vector<Tensor<T>>;

struct ForwardOpts {
    bool batch_stats = false;    // BN normalizes with batch statistics
    bool update_running = false; // fold batch statistics into running stats
    static ForwardOpts train() { return {true, true}; }
    static ForwardOpts infer() { return {false, false}; }
};

template <typename T>
struct BlockCache {
    Matrix<T> xhat;      // BN-normalized pre-affine values
    std::vector<T> inv_std;
    Matrix<T> relu_out;
    Matrix<T> pool_out;
    std::vector<uint32_t> pool_idx;
    uint32_t conv_extent = 0, out_extent = 0;
};

template <typename T>
struct ForwardCache {
    std::vector<BlockCache<T>> blocks;
    std::vector<Matrix<T>> fc_out;  // post-ReLU hidden activations
    Matrix<T> logits;
    Matrix<T> probs;
};

/// Full forward pass; each output row is a softmax distribution. `batch`
/// rows must have input_bands values (extractor inputs) — callers normalize
/// beforehand. Only train-mode calls with update_running touch `params`.
template <typename T>
const Matrix<T>& forward(ModelParams<T>& params, const Matrix<T>& batch, ForwardOpts opts,
                         ForwardCache<T>& cache);

/// Infer-mode convenience overload; `params` is never mutated.
template <typename T>
Matrix<T> forward_infer(const ModelParams<T>& params, const Matrix<T>& batch);

/// Extractor-only infer-mode pass: returns flattened conv features.
template <typename T>
Matrix<T> extract_features(const ModelParams<T>& params, const Matrix<T>& batch);

/// Mean categorical cross-entropy of the batch, computed from
/// log-sum-exp-stabilized logits. Labels must lie in 0..class_count-1.
template <typename T>
double cross_entropy_loss(ModelParams<T>& params, const Matrix<T>& batch,
                          const std::vector<int32_t>& labels, ForwardOpts opts);

/// Loss plus gradients for every trainable tensor.
template <typename T>
double loss_and_gradients(ModelParams<T>& params, const Matrix<T>& batch,
                          const std::vector<int32_t>& labels, ForwardOpts opts,
                          ForwardCache<T>& cache, GradientSet<T>& grads);

/// Which tensors an optimisation step may touch.
enum class TrainMask { All, HeadOnly };

bool mask_admits(TrainMask mask, bool in_extractor);

struct AdamHyper {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
    std::vector<Tensor<T>> m, v;
    uint64_t t = 0;  // completed steps

    template <typename RefT>
    static AdamState init_like(const std::vector<RefT>& refs) {
        AdamState state;
        for (const auto& ref : refs) {
            state.m.push_back(Tensor<T>::zeros(ref.tensor->shape));
            state.v.push_back(Tensor<T>::zeros(ref.tensor->shape));
        }
        return state;
    }
};

/// One bias-corrected ADAM update at step index t (>= 1) over the tensors
/// the mask admits; everything else is left bit-identical.
template <typename T>
void adam_step(std::vector<TensorRef<T>>& refs, const GradientSet<T>& grads, AdamState<T>& state,
               uint64_t t, const AdamHyper& hyper, TrainMask mask);

/// Batch assembly: gathers sample rows (double storage) into a T matrix and
/// a label vector.
template <typename T>
void assemble_batch(const SampleSet& samples, std::span<const size_t> indices, Matrix<T>& batch,
                    std::vector<int32_t>& labels);

}  // namespace hsitl
