#include "sfot/checkpoint.hpp"

#include <bit>
#include <cstdint>

#include <nlohmann/json.hpp>

#include "sfot/error.hpp"
#include "sfot/text_io.hpp"

namespace sfot::nn {

using nlohmann::json;

namespace {

void put_le64(std::string& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<char>(bits & 0xffu));
    bits >>= 8;
  }
}

double get_le64(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | p[i];
  return std::bit_cast<double>(bits);
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  json header;
  header["format"] = kCheckpointFormat;
  try {
    header["metadata"] = json::parse(ckpt.metadata_json);
  } catch (const json::exception& e) {
    throw InputError(std::string("checkpoint metadata is not JSON: ") + e.what());
  }
  header["tensors"] = json::array();
  std::size_t scalars = 0;
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
    const auto& t = ckpt.params.at(i);
    header["tensors"].push_back({{"name", ckpt.params.name(i)}, {"rows", t.rows()}, {"cols", t.cols()}});
    scalars += t.size();
  }
  header["payload_bytes"] = scalars * 8;

  std::string out = header.dump();
  out.push_back('\n');
  out.reserve(out.size() + scalars * 8);
  for (const auto& t : ckpt.params.values()) {
    for (double v : t.data()) put_le64(out, v);
  }
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  const auto nl = bytes.find('\n');
  if (nl == std::string::npos) throw InputError("checkpoint: missing header line");
  json header;
  try {
    header = json::parse(bytes.substr(0, nl));
  } catch (const json::exception& e) {
    throw InputError(std::string("checkpoint: malformed header: ") + e.what());
  }
  if (header.value("format", "") != kCheckpointFormat) throw InputError("checkpoint: unknown format");

  Checkpoint ckpt;
  ckpt.metadata_json = header.at("metadata").dump();
  const auto payload_bytes = header.at("payload_bytes").get<std::size_t>();
  const std::size_t payload_start = nl + 1;
  if (bytes.size() - payload_start != payload_bytes) throw InputError("checkpoint: payload size mismatch");

  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + payload_start);
  std::size_t consumed = 0;
  for (const auto& t : header.at("tensors")) {
    const auto rows = t.at("rows").get<std::size_t>();
    const auto cols = t.at("cols").get<std::size_t>();
    if ((consumed + rows * cols) * 8 > payload_bytes) throw InputError("checkpoint: tensor table exceeds payload");
    std::vector<double> data(rows * cols);
    for (auto& v : data) {
      v = get_le64(p + consumed * 8);
      ++consumed;
    }
    ckpt.params.add(t.at("name").get<std::string>(), Tensor2(rows, cols, std::move(data)));
  }
  if (consumed * 8 != payload_bytes) throw InputError("checkpoint: payload larger than tensor table");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  text::write_file_atomic(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return deserialize_checkpoint(text::read_file(path)); }

}  // namespace sfot::nn
