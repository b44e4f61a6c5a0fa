#include <cstring>
#include <fstream>

#include "ftcnn/error.hpp"
#include "ftcnn/experiment.hpp"

namespace ftcnn {

namespace {

constexpr char kMagic[4] = {'F', 'T', 'C', 'K'};

}  // namespace

std::uint64_t specHash(const ArchitectureSpec& spec) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : formatArchitectureTable(spec)) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

void saveCheckpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  checkCompatible(ckpt.net, ckpt.spec);
  nlohmann::json header{{"architecture", formatArchitectureTable(ckpt.spec)},
                        {"specHash", specHash(ckpt.spec)},
                        {"iteration", ckpt.iteration},
                        {"epoch", ckpt.epoch},
                        {"validationAuc", ckpt.validationAuc},
                        {"layers", nlohmann::json::array()}};
  for (const auto& l : ckpt.net.layers) header["layers"].push_back(l.name);
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& l : ckpt.net.layers) {
    writeBinary(out, l.weights);
    writeBinary(out, l.bias);
  }
  if (!out) throw IoError("failed writing " + path.string());
}

Checkpoint loadCheckpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  char magic[4];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
    throw IoError(path.string() + " is not a checkpoint");
  }
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || len > (1u << 26)) throw IoError("bad checkpoint header length in " + path.string());
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw IoError("truncated checkpoint header in " + path.string());

  Checkpoint ckpt;
  std::vector<std::string> names;
  std::uint64_t storedHash = 0;
  try {
    const auto header = nlohmann::json::parse(text);
    ckpt.spec = parseArchitectureTable(header.at("architecture").get<std::string>());
    storedHash = header.at("specHash").get<std::uint64_t>();
    ckpt.iteration = header.at("iteration").get<std::uint64_t>();
    ckpt.epoch = header.at("epoch").get<std::size_t>();
    ckpt.validationAuc = header.at("validationAuc").get<double>();
    names = header.at("layers").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed checkpoint header in " + path.string() + ": " + e.what());
  }
  if (storedHash != specHash(ckpt.spec)) {
    throw InferenceError("checkpoint " + path.string() + " has a stale architecture hash");
  }
  for (const auto& name : names) {
    LayerParams l;
    l.name = name;
    l.weights = readBinary(in);
    l.bias = readBinary(in);
    ckpt.net.layers.push_back(std::move(l));
  }
  checkCompatible(ckpt.net, ckpt.spec);
  return ckpt;
}

}  // namespace ftcnn
