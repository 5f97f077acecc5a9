#include <cstring>

#include "binary_io.hpp"
#include "sfdiff/checksum.hpp"
#include "sfdiff/diffusion.hpp"

namespace sfdiff {
namespace {

using detail::ByteReader;
using detail::ByteWriter;

constexpr char kCheckpointMagic[5] = "SFDC";

void put_ints(ByteWriter& w, const std::vector<int>& values) {
  w.put<std::uint32_t>(static_cast<std::uint32_t>(values.size()));
  for (int v : values) w.put<std::uint32_t>(static_cast<std::uint32_t>(v));
}

std::vector<int> get_ints(ByteReader& r) {
  const auto n = r.get<std::uint32_t>();
  if (n > 64) throw IoError("checkpoint: implausible list length");
  std::vector<int> out(n);
  for (auto& v : out) v = static_cast<int>(r.get<std::uint32_t>());
  return out;
}

void put_floats(ByteWriter& w, const std::vector<float>& v) { w.put_bytes(v.data(), v.size() * sizeof(float)); }

std::vector<float> get_floats(ByteReader& r, std::size_t n) {
  if (n > r.remaining() / sizeof(float)) throw IoError("checkpoint: truncated parameter block");
  std::vector<float> v(n);
  r.get_bytes(v.data(), n * sizeof(float));
  return v;
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& c) {
  const auto n = c.parameters.size();
  ByteWriter w;
  w.put_magic(kCheckpointMagic);
  w.put<std::uint32_t>(kCheckpointFormatVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.spec.in_channels));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.spec.image_size));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.spec.base_width));
  put_ints(w, c.spec.channel_mults);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.spec.res_blocks));
  put_ints(w, c.spec.attention_resolutions);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.spec.embedding_dim));
  w.put<std::uint64_t>(c.spec.param_seed);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.schedule_steps));
  w.put(c.beta_min);
  w.put(c.beta_max);
  w.put<std::uint64_t>(c.step);
  w.put<std::uint64_t>(c.training_seed);
  w.put(c.learning_rate);
  w.put<std::uint32_t>(c.batch_size);
  w.put<std::uint32_t>(c.loss_mask == LossMask::ObservedOnly ? 0u : 1u);
  w.put<std::uint32_t>(c.resample_masks ? 1u : 0u);
  w.put<std::uint64_t>(n);
  put_floats(w, c.parameters);
  const bool has_moments = !c.optimizer.first_moment.empty();
  if (has_moments && (c.optimizer.first_moment.size() != n || c.optimizer.second_moment.size() != n))
    throw ContractError("checkpoint: optimizer state length differs from the parameter count");
  w.put<std::uint64_t>(c.optimizer.steps);
  w.put<std::uint32_t>(has_moments ? 1u : 0u);
  if (has_moments) {
    put_floats(w, c.optimizer.first_moment);
    put_floats(w, c.optimizer.second_moment);
  }
  const auto crc = crc64(w.bytes());
  w.put<std::uint64_t>(crc);
  return w.take();
}

std::uint64_t checkpoint_digest(const std::string& bytes) {
  if (bytes.size() < 12) throw IoError("checkpoint: file too short");
  return crc64(std::string_view(bytes).substr(0, bytes.size() - 8));
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 12) throw IoError("checkpoint: file too short");
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + bytes.size() - 8, 8);
  const std::string body = bytes.substr(0, bytes.size() - 8);
  if (crc64(body) != stored) throw IoError("checkpoint: checksum mismatch");

  ByteReader r(body);
  r.expect_magic(kCheckpointMagic);
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointFormatVersion) throw IoError("checkpoint: unsupported format version " + std::to_string(version));
  Checkpoint c;
  c.spec.in_channels = static_cast<int>(r.get<std::uint32_t>());
  c.spec.image_size = static_cast<int>(r.get<std::uint32_t>());
  c.spec.base_width = static_cast<int>(r.get<std::uint32_t>());
  c.spec.channel_mults = get_ints(r);
  c.spec.res_blocks = static_cast<int>(r.get<std::uint32_t>());
  c.spec.attention_resolutions = get_ints(r);
  c.spec.embedding_dim = static_cast<int>(r.get<std::uint32_t>());
  c.spec.param_seed = r.get<std::uint64_t>();
  c.schedule_steps = static_cast<int>(r.get<std::uint32_t>());
  c.beta_min = r.get<double>();
  c.beta_max = r.get<double>();
  c.step = r.get<std::uint64_t>();
  c.training_seed = r.get<std::uint64_t>();
  c.learning_rate = r.get<double>();
  c.batch_size = r.get<std::uint32_t>();
  c.loss_mask = r.get<std::uint32_t>() == 0 ? LossMask::ObservedOnly : LossMask::FullGrid;
  c.resample_masks = r.get<std::uint32_t>() != 0;
  const auto n = r.get<std::uint64_t>();
  c.parameters = get_floats(r, n);
  c.optimizer.steps = r.get<std::uint64_t>();
  c.optimizer.learning_rate = c.learning_rate;
  if (r.get<std::uint32_t>() != 0) {
    c.optimizer.first_moment = get_floats(r, n);
    c.optimizer.second_moment = get_floats(r, n);
  }
  if (r.remaining() != 0) throw IoError("checkpoint: trailing bytes");
  try {
    c.spec.validate();
  } catch (const DomainError& e) {
    throw IoError(std::string("checkpoint: invalid network spec: ") + e.what());
  }
  return c;
}

void write_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  detail::write_file(path, encode_checkpoint(checkpoint));
}

Checkpoint read_checkpoint(const std::string& path) {
  try {
    return decode_checkpoint(detail::read_file(path));
  } catch (const IoError& e) {
    throw IoError(path + ": " + e.what());
  }
}

}  // namespace sfdiff
