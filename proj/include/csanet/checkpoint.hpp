#ifndef CSANET_CHECKPOINT_HPP_
#define CSANET_CHECKPOINT_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "csanet/loss.hpp"
#include "csanet/model.hpp"

namespace csanet {

/// Model parameters plus the loss settings they were trained with.
/// On-disk layout is documented in docs/formats.md.
struct Checkpoint {
  ModelParams params;
  LossConfig loss;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
/// Throws IntegrityError on corruption, InputError on shape violations.
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace csanet

#endif  // CSANET_CHECKPOINT_HPP_
