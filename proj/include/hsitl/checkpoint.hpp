#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hsitl/net.hpp"

namespace hsitl {

/// Writes an HSIM checkpoint: magic "HSIM", version u8 = 1, a
/// length-prefixed JSON block describing the architecture and input bands,
/// the trainable tensors (name, rank, dims, f32 payload), then optional
/// sections for BN running statistics, the input normalizer, and ADAM
/// optimizer state. Everything little-endian.
void save_model(const ModelParams<float>& params, const std::string& path,
                const AdamState<float>* optimizer = nullptr);

struct LoadedModel {
    ModelParams<float> params;
    std::optional<AdamState<float>> optimizer;
};

LoadedModel load_model(const std::string& path);

/// Byte-exact serialization of the extractor: conv weights/biases and, when
/// present, BN tensors including running statistics. Two models whose
/// extractors are bit-identical produce equal buffers.
std::vector<uint8_t> extractor_bytes(const ModelParams<float>& params);

/// Byte-exact serialization of every tensor in the model.
std::vector<uint8_t> params_bytes(const ModelParams<float>& params);

}  // namespace hsitl
