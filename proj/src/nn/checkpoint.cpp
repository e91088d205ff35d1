#include "uavsim/nn/checkpoint.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace uavsim::nn {

namespace {
constexpr const char* kMagic = "uavnn-checkpoint";
constexpr const char* kVersion = "v1";
}  // namespace

const Tensor& Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw DataError("checkpoint: missing tensor " + name);
}

void save_checkpoint(const std::filesystem::path& path,
                     const Checkpoint& ckpt) {
  if (ckpt.arch.find('\n') != std::string::npos)
    throw ConfigError("checkpoint arch string must be a single line");
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out << kMagic << " " << kVersion << "\n";
    out << "arch " << ckpt.arch << "\n";
    out << "tensors " << ckpt.tensors.size() << "\n";
    char buf[64];
    for (const auto& [name, t] : ckpt.tensors) {
      out << "tensor " << name << " " << t.rank();
      for (std::size_t d : t.shape) out << " " << d;
      out << "\n";
      for (std::size_t i = 0; i < t.data.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%a", t.data[i]);
        out << buf << ((i + 1) % 8 == 0 ? '\n' : ' ');
      }
      if (t.data.size() % 8 != 0) out << "\n";
    }
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::string magic, version;
  in >> magic >> version;
  if (magic != kMagic || version != kVersion)
    throw DataError("not a " + std::string(kVersion) + " checkpoint: " +
                    path.string());
  std::string tag;
  in >> tag;
  if (tag != "arch") throw DataError("checkpoint: expected arch line");
  Checkpoint ckpt;
  std::getline(in, ckpt.arch);
  if (!ckpt.arch.empty() && ckpt.arch.front() == ' ')
    ckpt.arch.erase(ckpt.arch.begin());

  std::size_t count = 0;
  in >> tag >> count;
  if (tag != "tensors") throw DataError("checkpoint: expected tensors line");
  for (std::size_t ti = 0; ti < count; ++ti) {
    std::string name;
    std::size_t rank = 0;
    in >> tag >> name >> rank;
    if (tag != "tensor") throw DataError("checkpoint: expected tensor header");
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) in >> d;
    Tensor t = Tensor::zeros(shape);
    for (double& v : t.data) {
      std::string tok;
      in >> tok;
      v = std::strtod(tok.c_str(), nullptr);
    }
    if (!in) throw DataError("checkpoint truncated: " + path.string());
    ckpt.tensors.emplace_back(std::move(name), std::move(t));
  }
  return ckpt;
}

}  // namespace uavsim::nn
