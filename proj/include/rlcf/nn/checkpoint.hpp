#ifndef RLCF_NN_CHECKPOINT_HPP_
#define RLCF_NN_CHECKPOINT_HPP_

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>

#include "rlcf/nn/model.hpp"

namespace rlcf::nn {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Named models plus free-form metadata (a JSON string owned by the caller)
// and the serialized RNG state.
struct Checkpoint {
  std::map<std::string, ModelParams> models;
  std::string metadata = "{}";
  std::string rng_state;
  std::uint64_t vocab_hash = 0;  // filled on save, checked on load
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
// Throws CheckpointError on bad magic, version, truncation or a vocabulary
// hash that differs from the running build.
Checkpoint load_checkpoint(const std::filesystem::path& path);

void save_model(const std::filesystem::path& path, const ModelParams& model);
ModelParams load_model(const std::filesystem::path& path);

}  // namespace rlcf::nn

#endif  // RLCF_NN_CHECKPOINT_HPP_
