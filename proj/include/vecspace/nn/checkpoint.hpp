#pragma once

#include "vecspace/nn/models.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace vecspace::nn {

enum class ModelKind : std::uint8_t { Autoencoder = 1, Captioner = 2, Paraphraser = 3 };

std::string_view to_string(ModelKind kind);

inline constexpr std::uint16_t kCheckpointVersion = 1;

struct NamedTensor {
    std::string name;
    Matrix value;
};

// Binary layout, little-endian throughout:
//   "VCS1" | u16 version | u8 kind | u32 tensor count
//   per tensor: u16 name length, name bytes, u8 rank (2), u64 rows, u64 cols
//   u64 parameter count | f64 payload (tensors in table order, row-major)
//   u64 vocabulary hash
struct Checkpoint {
    ModelKind kind = ModelKind::Autoencoder;
    std::uint16_t version = kCheckpointVersion;
    std::vector<NamedTensor> tensors;
    std::uint64_t vocab_hash = 0;
};

std::string serialize(const Checkpoint& ckpt);
Checkpoint deserialize(const std::string& bytes);  // throws std::runtime_error on malformed input

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

Checkpoint to_checkpoint(const Autoencoder& model, std::uint64_t vocab_hash);
Checkpoint to_checkpoint(const Captioner& model, std::uint64_t vocab_hash);
Checkpoint to_checkpoint(const Paraphraser& model, std::uint64_t vocab_hash);

// Rebuild a model from its checkpoint; the architecture follows the stored
// shapes. Throws when the kind, tensor names, or vocabulary hash disagree.
Autoencoder autoencoder_from(const Checkpoint& ckpt);
Captioner captioner_from(const Checkpoint& ckpt, std::uint64_t expected_vocab_hash);
Paraphraser paraphraser_from(const Checkpoint& ckpt, std::uint64_t expected_vocab_hash);

} // namespace vecspace::nn
