#include "csanet/checkpoint.hpp"

#include "binary_io.hpp"
#include "csanet/errors.hpp"

namespace csanet {

namespace {
constexpr char kMagic[] = "CSACKPT";  // 7 chars + NUL = 8 bytes on disk
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  ckpt.params.validate();
  ckpt.loss.validate();
  const auto& c = ckpt.params.config;
  detail::BinaryWriter w;
  w.bytes(kMagic, sizeof(kMagic));
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint64_t>(c.feature_dim);
  w.put<std::uint64_t>(c.num_subspaces);
  w.put<std::uint64_t>(c.num_categories);
  w.put<std::uint64_t>(c.attention_hidden);
  w.put<std::uint64_t>(c.raw_dim);
  w.put<std::uint8_t>(c.projector == ProjectorMode::Learnable ? 1 : 0);
  w.put<std::uint8_t>(c.normalize ? 1 : 0);
  w.put<std::uint64_t>(c.rng_seed);
  w.put<double>(c.projector_init_scale);
  w.put<double>(ckpt.loss.margin);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(ckpt.loss.aggregation));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(ckpt.loss.distance));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(ckpt.loss.objective));
  const auto& p = ckpt.params;
  w.matrix(p.masks);
  w.matrix(p.attn_w1);
  w.vector(p.attn_b1);
  w.matrix(p.attn_w2);
  w.vector(p.attn_b2);
  w.matrix(p.backbone_proj);
  w.seal();
  return w.buffer();
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  detail::BinaryReader r(bytes, "checkpoint");
  r.verify_seal();
  char magic[sizeof(kMagic)];
  r.bytes(magic, sizeof(magic));
  if (std::string_view(magic, sizeof(magic)) != std::string_view(kMagic, sizeof(kMagic))) {
    throw IntegrityError("checkpoint: bad magic bytes");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw IntegrityError("checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint ckpt;
  auto& c = ckpt.params.config;
  c.feature_dim = r.get<std::uint64_t>();
  c.num_subspaces = r.get<std::uint64_t>();
  c.num_categories = r.get<std::uint64_t>();
  c.attention_hidden = r.get<std::uint64_t>();
  c.raw_dim = r.get<std::uint64_t>();
  c.projector = r.get<std::uint8_t>() ? ProjectorMode::Learnable : ProjectorMode::Identity;
  c.normalize = r.get<std::uint8_t>() != 0;
  c.rng_seed = r.get<std::uint64_t>();
  c.projector_init_scale = r.get<double>();
  ckpt.loss.margin = r.get<double>();
  const auto agg = r.get<std::uint8_t>();
  const auto dist = r.get<std::uint8_t>();
  const auto obj = r.get<std::uint8_t>();
  if (agg > 1 || dist > 1 || obj > 1) throw IntegrityError("checkpoint: bad loss enum");
  ckpt.loss.aggregation = static_cast<Aggregation>(agg);
  ckpt.loss.distance = static_cast<DistanceKind>(dist);
  ckpt.loss.objective = static_cast<LossObjective>(obj);
  auto& p = ckpt.params;
  p.masks = r.matrix();
  p.attn_w1 = r.matrix();
  p.attn_b1 = r.vector();
  p.attn_w2 = r.matrix();
  p.attn_b2 = r.vector();
  p.backbone_proj = r.matrix();
  if (r.remaining() != 0) throw IntegrityError("checkpoint: trailing bytes");
  p.validate();
  ckpt.loss.validate();
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  detail::BinaryWriter w;
  const auto bytes = encode_checkpoint(ckpt);
  w.bytes(bytes.data(), bytes.size());
  w.write_file(path);
}

Checkpoint load_checkpoint(const std::string& path) {
  return decode_checkpoint(detail::BinaryReader::read_file(path));
}

}  // namespace csanet
