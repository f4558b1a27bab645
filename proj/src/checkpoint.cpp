#include "wsss/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "wsss/error.hpp"

namespace wsss {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'W', 'S', 'S', 'S', 'C', 'K', 'P', 'T'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& what) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("truncated checkpoint while reading " + what);
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const std::string& config_text,
                     const ParamList& params) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp.string());
    out.write(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint64_t>(out, config_text.size());
    out.write(config_text.data(), static_cast<std::streamsize>(config_text.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
    for (const auto& [name, t] : params) {
      put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
      for (std::size_t d : t.shape()) put<std::uint64_t>(out, d);
      const auto v = t.values();
      out.write(reinterpret_cast<const char*>(v.data()),
                static_cast<std::streamsize>(v.size() * sizeof(double)));
    }
    if (!out) throw IoError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

CheckpointData read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError(path.string() + " is not a checkpoint file");
  }
  const auto version = get<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  }
  CheckpointData data;
  const auto cfg_len = get<std::uint64_t>(in, "config length");
  data.config_text.resize(cfg_len);
  in.read(data.config_text.data(), static_cast<std::streamsize>(cfg_len));
  if (!in) throw IoError("truncated checkpoint config");
  const auto count = get<std::uint32_t>(in, "tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = get<std::uint32_t>(in, "name length");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto rank = get<std::uint32_t>(in, "rank of " + name);
    Shape shape(rank);
    for (auto& d : shape) d = get<std::uint64_t>(in, "shape of " + name);
    std::vector<double> values(shape_numel(shape));
    in.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(double)));
    if (!in) throw IoError("truncated values for " + name);
    data.tensors.emplace_back(name, Tensor::from(shape, std::move(values)));
  }
  return data;
}

void load_into(const CheckpointData& data, const ParamList& params) {
  std::map<std::string, const Tensor*> stored;
  for (const auto& [name, t] : data.tensors) stored[name] = &t;
  if (stored.size() != params.size()) {
    throw DataError("checkpoint holds " + std::to_string(stored.size()) +
                    " tensors, model expects " + std::to_string(params.size()));
  }
  for (const auto& [name, param] : params) {
    const auto it = stored.find(name);
    if (it == stored.end()) throw DataError("checkpoint is missing tensor " + name);
    if (it->second->shape() != param.shape()) {
      throw DataError("checkpoint tensor " + name + " has shape " +
                      shape_str(it->second->shape()) + ", model expects " +
                      shape_str(param.shape()));
    }
    Tensor target = param;
    const auto src = it->second->values();
    std::copy(src.begin(), src.end(), target.mutable_values().begin());
  }
}

}  // namespace wsss
