#include "mlcap/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "json.hpp"
#include "mlcap/errors.hpp"

namespace mlcap {
namespace {

using nlohmann::json;

constexpr std::string_view kMagic = "MLCAP1";

void put_u64(std::string& out, std::uint64_t value) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64(std::string_view bytes) {
  std::uint64_t value = 0;
  for (int i = 0; i < 8; ++i) {
    value |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i])) << (8 * i);
  }
  return value;
}

json dims_json(const ModelDims& d) {
  return {{"vocab", d.vocab}, {"embed", d.embed}, {"hidden", d.hidden}, {"feature", d.feature}};
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  ckpt.params.validate();
  if (ckpt.vocab.size() != ckpt.params.dims.vocab) {
    throw DimensionError("checkpoint vocabulary has " + std::to_string(ckpt.vocab.size()) +
                         " tokens but the model expects " +
                         std::to_string(ckpt.params.dims.vocab));
  }
  json header;
  header["format"] = std::string(kMagic);
  header["version"] = ckpt.version;
  header["dims"] = dims_json(ckpt.params.dims);
  header["vocab"] = {{"languages", ckpt.vocab.languages()},
                     {"tokens", ckpt.vocab.surface_tokens()}};
  json arrays = json::array();
  const auto tensors = ckpt.params.tensors();
  for (std::size_t i = 0; i < ModelParams::kCount; ++i) {
    arrays.push_back({{"name", ModelParams::kNames[i]}, {"shape", tensors[i]->shape()}});
  }
  header["arrays"] = std::move(arrays);
  header["config"] = json::parse(ckpt.config_json);
  header["epoch"] = ckpt.epoch;
  const std::string text = header.dump();

  std::string out(kMagic);
  put_u64(out, text.size());
  out += text;
  for (const ad::Tensor* t : tensors) {
    for (double x : t->data()) put_u64(out, std::bit_cast<std::uint64_t>(x));
  }
  return out;
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
  if (bytes.size() < kMagic.size() + 8 || bytes.substr(0, kMagic.size()) != kMagic) {
    throw DataError("not an MLCAP1 checkpoint (bad magic)");
  }
  const std::uint64_t header_len = get_u64(bytes.substr(kMagic.size(), 8));
  std::size_t offset = kMagic.size() + 8;
  if (header_len > bytes.size() - offset) throw DataError("checkpoint truncated inside header");

  json header;
  try {
    header = json::parse(bytes.substr(offset, header_len));
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  offset += header_len;

  Checkpoint ckpt;
  try {
    ckpt.version = header.at("version").get<int>();
    if (ckpt.version != Checkpoint::kVersion) {
      throw DataError("checkpoint version " + std::to_string(ckpt.version) +
                      " is not supported (expected " +
                      std::to_string(Checkpoint::kVersion) + ")");
    }
    const json& d = header.at("dims");
    ModelDims dims{d.at("vocab").get<std::size_t>(), d.at("embed").get<std::size_t>(),
                   d.at("hidden").get<std::size_t>(), d.at("feature").get<std::size_t>()};
    ckpt.vocab = Vocabulary::from_parts(
        header.at("vocab").at("languages").get<std::vector<std::string>>(),
        header.at("vocab").at("tokens").get<std::vector<std::string>>());
    if (ckpt.vocab.size() != dims.vocab) {
      throw DataError("checkpoint vocabulary size disagrees with dims");
    }
    ckpt.params = zero_params(dims);

    const json& arrays = header.at("arrays");
    if (!arrays.is_array() || arrays.size() != ModelParams::kCount) {
      throw DataError("checkpoint must list exactly " +
                      std::to_string(ModelParams::kCount) + " arrays");
    }
    auto tensors = ckpt.params.tensors();
    for (std::size_t i = 0; i < ModelParams::kCount; ++i) {
      const auto name = arrays[i].at("name").get<std::string>();
      const auto shape = arrays[i].at("shape").get<ad::Shape>();
      if (name != ModelParams::kNames[i]) {
        throw DataError("checkpoint array " + std::to_string(i) + " is '" + name +
                        "', expected '" + std::string(ModelParams::kNames[i]) + "'");
      }
      if (shape != tensors[i]->shape()) {
        throw DataError("checkpoint array " + name + " has shape " +
                        ad::shape_string(shape) + " but dims imply " +
                        ad::shape_string(tensors[i]->shape()));
      }
      auto data = tensors[i]->data();
      if ((bytes.size() - offset) / 8 < data.size()) {
        throw DataError("checkpoint truncated inside array " + name);
      }
      for (double& x : data) {
        x = std::bit_cast<double>(get_u64(bytes.substr(offset, 8)));
        offset += 8;
      }
    }
    ckpt.config_json = header.at("config").dump();
    ckpt.epoch = header.at("epoch").get<std::size_t>();
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed checkpoint header: ") + e.what());
  } catch (const ContractError& e) {
    throw DataError(std::string("invalid checkpoint contents: ") + e.what());
  }
  if (offset != bytes.size()) throw DataError("checkpoint has trailing bytes");
  ckpt.params.validate();
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  const std::string bytes = serialize_checkpoint(checkpoint);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace mlcap
