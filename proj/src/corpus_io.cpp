#include "json.hpp"

#include "binary_io.hpp"
#include "sfdiff/dataset.hpp"

namespace sfdiff {
namespace {

using detail::ByteReader;
using detail::ByteWriter;
using nlohmann::json;

constexpr char kCorpusMagic[5] = "SFD1";

void put_room(ByteWriter& w, const RoomSpec& room) {
  for (double v : {room.lx, room.ly, room.lz, room.t60, room.source.x, room.source.y, room.source.z,
                   room.speed_of_sound})
    w.put(v);
}

RoomSpec get_room(ByteReader& r) {
  RoomSpec room;
  room.lx = r.get<double>();
  room.ly = r.get<double>();
  room.lz = r.get<double>();
  room.t60 = r.get<double>();
  room.source.x = r.get<double>();
  room.source.y = r.get<double>();
  room.source.z = r.get<double>();
  room.speed_of_sound = r.get<double>();
  return room;
}

// Bit k of the row-major mask is bit (k % 8) of byte k / 8, least significant first.
void put_mask(ByteWriter& w, const ObservationMask& mask) {
  const auto& bits = mask.bits();
  std::vector<std::uint8_t> packed((bits.size() + 7) / 8, 0);
  for (std::size_t k = 0; k < bits.size(); ++k)
    if (bits[k]) packed[k / 8] |= static_cast<std::uint8_t>(1u << (k % 8));
  w.put_bytes(packed.data(), packed.size());
}

ObservationMask get_mask(ByteReader& r, int rows, int cols) {
  Field2D<std::uint8_t> bits(rows, cols, 0);
  std::vector<std::uint8_t> packed((bits.size() + 7) / 8);
  r.get_bytes(packed.data(), packed.size());
  for (std::size_t k = 0; k < bits.size(); ++k) bits[k] = (packed[k / 8] >> (k % 8)) & 1u;
  return ObservationMask(std::move(bits));
}

void put_floats(ByteWriter& w, const Field2D<float>& f) { w.put_bytes(f.storage().data(), f.size() * sizeof(float)); }

Field2D<float> get_floats(ByteReader& r, int rows, int cols) {
  Field2D<float> f(rows, cols);
  r.get_bytes(f.storage().data(), f.size() * sizeof(float));
  return f;
}

}  // namespace

std::string encode_corpus(const std::vector<Sample>& samples) {
  const int rows = samples.empty() ? kGridSize : samples.front().grid.rows;
  const int cols = samples.empty() ? kGridSize : samples.front().grid.cols;
  ByteWriter w;
  w.put_magic(kCorpusMagic);
  w.put<std::uint32_t>(kCorpusFormatVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(rows));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(cols));
  w.put<std::uint64_t>(samples.size());
  for (const auto& s : samples) {
    if (s.grid.rows != rows || s.grid.cols != cols || s.mask.rows() != rows || s.mask.cols() != cols ||
        s.normalized.rows() != rows || s.normalized.cols() != cols || s.magnitude.rows() != rows ||
        s.magnitude.cols() != cols)
      throw ContractError("encode_corpus: samples must share one grid shape");
    put_room(w, s.grid.room);
    w.put(s.grid.z_o);
    w.put(s.frequency_hz);
    w.put(s.scale);
    put_mask(w, s.mask);
    put_floats(w, s.normalized);
    put_floats(w, s.magnitude);
  }
  return w.take();
}

std::vector<Sample> decode_corpus(const std::string& bytes) {
  ByteReader r(bytes);
  r.expect_magic(kCorpusMagic);
  const auto version = r.get<std::uint32_t>();
  if (version != kCorpusFormatVersion) throw IoError("unsupported corpus format version " + std::to_string(version));
  const int rows = static_cast<int>(r.get<std::uint32_t>());
  const int cols = static_cast<int>(r.get<std::uint32_t>());
  if (rows < 2 || cols < 2 || rows > 4096 || cols > 4096) throw IoError("corpus header has an invalid grid shape");
  const auto count = r.get<std::uint64_t>();
  const std::size_t cells = static_cast<std::size_t>(rows) * cols;
  const std::size_t record = 11 * sizeof(double) + (cells + 7) / 8 + 2 * cells * sizeof(float);
  if (count > r.remaining() / record || r.remaining() != count * record)
    throw IoError("corpus size does not match its header sample count");
  std::vector<Sample> samples(count);
  for (auto& s : samples) {
    s.grid.rows = rows;
    s.grid.cols = cols;
    s.grid.room = get_room(r);
    s.grid.z_o = r.get<double>();
    s.frequency_hz = r.get<double>();
    s.scale = r.get<double>();
    s.mask = get_mask(r, rows, cols);
    s.normalized = get_floats(r, rows, cols);
    s.magnitude = get_floats(r, rows, cols);
  }
  return samples;
}

void write_corpus(const std::filesystem::path& path, const std::vector<Sample>& samples) {
  detail::write_file(path.string(), encode_corpus(samples));
}

std::vector<Sample> read_corpus(const std::filesystem::path& path) {
  try {
    return decode_corpus(detail::read_file(path.string()));
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

namespace {

json config_to_json(const DatasetConfig& c) {
  return json{{"area_range", {c.area_min, c.area_max}},
              {"aspect_range", {c.aspect_min, c.aspect_max}},
              {"height_range", {c.height_min, c.height_max}},
              {"plane_height_range", {c.plane_min, c.plane_max}},
              {"frequency_range", {c.freq_min, c.freq_max}},
              {"mic_counts", c.mic_counts},
              {"t60", c.t60},
              {"wall_clearance", c.wall_clearance},
              {"grid", {c.rows, c.cols}},
              {"speed_of_sound", c.speed_of_sound},
              {"mode_margin", c.margin},
              {"allow_out_of_protocol", c.allow_out_of_protocol}};
}

DatasetConfig config_from_json(const json& j) {
  DatasetConfig c;
  auto pair = [&](const char* key, double& lo, double& hi) {
    lo = j.at(key).at(0).get<double>();
    hi = j.at(key).at(1).get<double>();
  };
  pair("area_range", c.area_min, c.area_max);
  pair("aspect_range", c.aspect_min, c.aspect_max);
  pair("height_range", c.height_min, c.height_max);
  pair("plane_height_range", c.plane_min, c.plane_max);
  pair("frequency_range", c.freq_min, c.freq_max);
  c.mic_counts = j.at("mic_counts").get<std::vector<int>>();
  c.t60 = j.at("t60").get<double>();
  c.wall_clearance = j.at("wall_clearance").get<double>();
  c.rows = j.at("grid").at(0).get<int>();
  c.cols = j.at("grid").at(1).get<int>();
  c.speed_of_sound = j.at("speed_of_sound").get<double>();
  c.margin = j.at("mode_margin").get<double>();
  c.allow_out_of_protocol = j.at("allow_out_of_protocol").get<bool>();
  return c;
}

}  // namespace

void write_manifest(const std::filesystem::path& path, const CorpusManifest& m) {
  json j{{"format_version", m.format_version},
         {"kind", m.kind},
         {"sample_count", m.sample_count},
         {"seed", m.seed},
         {"n_rooms", m.n_rooms},
         {"n_freqs", m.n_freqs},
         {"files", m.files},
         {"densities", m.densities},
         {"protocol", config_to_json(m.config)}};
  detail::write_file(path.string(), j.dump(2) + "\n");
}

CorpusManifest read_manifest(const std::filesystem::path& path) {
  try {
    const json j = json::parse(detail::read_file(path.string()));
    CorpusManifest m;
    m.format_version = j.at("format_version").get<std::uint32_t>();
    m.kind = j.at("kind").get<std::string>();
    m.sample_count = j.at("sample_count").get<std::uint64_t>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.n_rooms = j.at("n_rooms").get<std::uint64_t>();
    m.n_freqs = j.at("n_freqs").get<std::uint64_t>();
    m.files = j.at("files").get<std::vector<std::string>>();
    m.densities = j.at("densities").get<std::vector<int>>();
    m.config = config_from_json(j.at("protocol"));
    return m;
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": malformed manifest: " + e.what());
  }
}

}  // namespace sfdiff
