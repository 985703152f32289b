#include "sase/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "sase/error.hpp"

namespace sase {

namespace {

constexpr char kMagic[] = "SASE1";
constexpr std::size_t kMagicLength = 5;

static_assert(std::endian::native == std::endian::little,
              "checkpoint encoding assumes a little-endian host");

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const std::string& in, std::size_t pos) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  }
  return v;
}

std::uint64_t element_bytes(DType dtype) { return dtype == DType::f32 ? 4 : 8; }

struct Parsed {
  std::vector<CheckpointEntry> entries;
  std::size_t data_start = 0;
};

Parsed parse(const std::string& blob) {
  if (blob.size() < kMagicLength + 8 || blob.compare(0, kMagicLength, kMagic) != 0) {
    throw ConfigError("checkpoint: bad magic (expected SASE1)");
  }
  const std::uint64_t length = get_u64(blob, kMagicLength);
  const std::size_t start = kMagicLength + 8;
  if (length > blob.size() - start) throw ConfigError("checkpoint: truncated manifest");
  Parsed p;
  p.data_start = start + length;
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(blob.substr(start, length));
    for (const auto& t : manifest.at("tensors")) {
      CheckpointEntry e;
      e.name = t.at("name").get<std::string>();
      e.shape = Shape(t.at("shape").get<std::vector<std::int64_t>>());
      e.dtype = parse_dtype(t.at("dtype").get<std::string>());
      e.kind = t.at("kind").get<std::string>() == "buffer" ? ParamKind::buffer
                                                           : ParamKind::trainable;
      e.offset = t.at("offset").get<std::uint64_t>();
      e.bytes = t.at("bytes").get<std::uint64_t>();
      if (e.bytes != static_cast<std::uint64_t>(e.shape.numel()) * element_bytes(e.dtype)) {
        throw ConfigError("checkpoint: size of '" + e.name + "' disagrees with its shape");
      }
      if (e.offset + e.bytes > blob.size() - p.data_start) {
        throw ConfigError("checkpoint: data of '" + e.name + "' is truncated");
      }
      p.entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("checkpoint: malformed manifest: ") + ex.what());
  }
  return p;
}

}  // namespace

std::string encode_checkpoint(const ParamStore& store) {
  nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
  std::string data;
  for (const auto& e : store.entries()) {
    const Tensor& t = e.tensor;
    const std::uint64_t offset = data.size();
    for (double v : t.data()) {
      if (t.dtype() == DType::f32) {
        const float f = static_cast<float>(v);
        data.append(reinterpret_cast<const char*>(&f), sizeof f);
      } else {
        data.append(reinterpret_cast<const char*>(&v), sizeof v);
      }
    }
    nlohmann::ordered_json row;
    row["name"] = e.name;
    row["shape"] = t.shape().dims();
    row["dtype"] = to_string(t.dtype());
    row["kind"] = e.kind == ParamKind::buffer ? "buffer" : "trainable";
    row["offset"] = offset;
    row["bytes"] = data.size() - offset;
    tensors.push_back(std::move(row));
  }
  nlohmann::ordered_json manifest;
  manifest["tensors"] = std::move(tensors);
  const std::string text = manifest.dump();
  std::string out(kMagic, kMagicLength);
  put_u64(out, text.size());
  out += text;
  out += data;
  return out;
}

void save_checkpoint(const std::string& path, const ParamStore& store) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write checkpoint '" + path + "'");
  const std::string blob = encode_checkpoint(store);
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
}

std::vector<CheckpointEntry> read_checkpoint_manifest(const std::string& blob) {
  return parse(blob).entries;
}

void decode_checkpoint(const std::string& blob, const ParamStore& store) {
  const Parsed p = parse(blob);
  std::set<std::string> seen;
  for (const auto& e : p.entries) {
    const NamedTensor* target = store.find(e.name);
    if (!target) throw ConfigError("checkpoint: model has no tensor '" + e.name + "'");
    Tensor t = target->tensor;
    if (t.shape() != e.shape || t.dtype() != e.dtype) {
      throw ConfigError("checkpoint: '" + e.name + "' is " + e.shape.to_string() + " " +
                        to_string(e.dtype) + ", model expects " + t.shape().to_string() + " " +
                        to_string(t.dtype()));
    }
    auto dst = t.mutable_data();
    const char* src = blob.data() + p.data_start + e.offset;
    for (std::size_t i = 0; i < dst.size(); ++i) {
      if (e.dtype == DType::f32) {
        float f;
        std::memcpy(&f, src + 4 * i, 4);
        dst[i] = f;
      } else {
        std::memcpy(&dst[i], src + 8 * i, 8);
      }
    }
    seen.insert(e.name);
  }
  for (const auto& e : store.entries()) {
    if (!seen.count(e.name)) throw ConfigError("checkpoint: missing tensor '" + e.name + "'");
  }
}

void load_checkpoint(const std::string& path, const ParamStore& store) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read checkpoint '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  decode_checkpoint(buf.str(), store);
}

}  // namespace sase
