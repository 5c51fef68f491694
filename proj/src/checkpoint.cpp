#include "rsd/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace rsd {

namespace {

constexpr char kMagic[7] = {'R', 'S', 'D', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

void save_checkpoint(const std::string& path, const std::string& arch_text,
                     const Vec& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("save_checkpoint: cannot open " + path);
  os.write(kMagic, 7);
  std::uint32_t v = kVersion;
  os.write(reinterpret_cast<const char*>(&v), 4);
  const auto alen = static_cast<std::uint32_t>(arch_text.size());
  os.write(reinterpret_cast<const char*>(&alen), 4);
  os.write(arch_text.data(), alen);
  const auto n = static_cast<std::uint64_t>(params.size());
  os.write(reinterpret_cast<const char*>(&n), 8);
  std::vector<float> buf(params.size());
  for (Eigen::Index i = 0; i < params.size(); ++i)
    buf[i] = static_cast<float>(params[i]);
  os.write(reinterpret_cast<const char*>(buf.data()),
           static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!os) throw IoError("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("load_checkpoint: cannot open " + path);
  char magic[7];
  is.read(magic, 7);
  if (!is || std::memcmp(magic, kMagic, 7) != 0)
    throw FormatError(path + ": bad checkpoint magic at offset 0");
  std::uint32_t version = 0;
  is.read(reinterpret_cast<char*>(&version), 4);
  if (!is || version != kVersion)
    throw FormatError(path + ": unsupported checkpoint version");
  std::uint32_t alen = 0;
  is.read(reinterpret_cast<char*>(&alen), 4);
  if (!is) throw FormatError(path + ": truncated arch length at offset 11");
  std::string arch(alen, '\0');
  is.read(arch.data(), alen);
  if (!is) throw FormatError(path + ": truncated arch text");
  std::uint64_t n = 0;
  is.read(reinterpret_cast<char*>(&n), 8);
  if (!is) throw FormatError(path + ": truncated parameter count");
  std::vector<float> buf(n);
  is.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(n * sizeof(float)));
  if (!is)
    throw FormatError(path + ": truncated parameter payload at offset " +
                      std::to_string(is.tellg()));
  Checkpoint c;
  c.arch_text = std::move(arch);
  c.params.resize(static_cast<Eigen::Index>(n));
  for (std::uint64_t i = 0; i < n; ++i)
    c.params[static_cast<Eigen::Index>(i)] = buf[i];
  return c;
}

void save_net(const std::string& path, const PredictorNet& net) {
  save_checkpoint(path, net.spec().str(), net.params());
}

PredictorNet load_net(const std::string& path) {
  Checkpoint c = load_checkpoint(path);
  PredictorNet net(ArchSpec::parse(c.arch_text), /*init_seed=*/0);
  if (net.params().size() != c.params.size())
    throw FormatError(path + ": parameter count does not match architecture");
  net.params() = c.params;
  return net;
}

void save_disc(const std::string& path, const DiscriminatorHead& disc) {
  save_checkpoint(path, disc.arch_text(), disc.params());
}

DiscriminatorHead load_disc(const std::string& path) {
  Checkpoint c = load_checkpoint(path);
  std::istringstream is(c.arch_text);
  std::string tag;
  is >> tag;
  if (tag != "disc")
    throw FormatError(path + ": not a discriminator checkpoint");
  Shape feat;
  NetKind kind = NetKind::kConv;
  std::string tok;
  while (is >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw FormatError(path + ": bad arch token");
    const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
    if (key == "kind")
      kind = val == "conv" ? NetKind::kConv : NetKind::kMlp;
    else if (key == "featc")
      feat.c = std::stoi(val);
    else if (key == "feath")
      feat.h = std::stoi(val);
    else if (key == "featw")
      feat.w = std::stoi(val);
    else
      throw FormatError(path + ": unknown disc arch key " + key);
  }
  DiscriminatorHead d(feat, kind, 0);
  if (d.params().size() != c.params.size())
    throw FormatError(path + ": parameter count does not match architecture");
  d.params() = c.params;
  return d;
}

}  // namespace rsd

namespace rsd {

namespace {

constexpr char kStateMagic[7] = {'R', 'S', 'D', 'S', 'T', 'A', 'T'};

void write_str(std::ofstream& os, const std::string& s) {
  const auto n = static_cast<std::uint32_t>(s.size());
  os.write(reinterpret_cast<const char*>(&n), 4);
  os.write(s.data(), n);
}

std::string read_str(std::ifstream& is, const std::string& path) {
  std::uint32_t n = 0;
  is.read(reinterpret_cast<char*>(&n), 4);
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) throw FormatError(path + ": truncated state string");
  return s;
}

}  // namespace

void save_state_blob(const std::string& path, const StateBlob& blob) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("save_state_blob: cannot open " + path);
  os.write(kStateMagic, 7);
  std::uint32_t n = static_cast<std::uint32_t>(blob.tensors.size());
  os.write(reinterpret_cast<const char*>(&n), 4);
  for (const auto& [name, v] : blob.tensors) {
    write_str(os, name);
    const auto sz = static_cast<std::uint64_t>(v.size());
    os.write(reinterpret_cast<const char*>(&sz), 8);
    os.write(reinterpret_cast<const char*>(v.data()),
             static_cast<std::streamsize>(sz * sizeof(double)));
  }
  n = static_cast<std::uint32_t>(blob.counters.size());
  os.write(reinterpret_cast<const char*>(&n), 4);
  for (const auto& [name, c] : blob.counters) {
    write_str(os, name);
    const auto v = static_cast<std::int64_t>(c);
    os.write(reinterpret_cast<const char*>(&v), 8);
  }
  if (!os) throw IoError("save_state_blob: write failed for " + path);
}

StateBlob load_state_blob(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("load_state_blob: cannot open " + path);
  char magic[7];
  is.read(magic, 7);
  if (!is || std::memcmp(magic, kStateMagic, 7) != 0)
    throw FormatError(path + ": bad state magic");
  StateBlob blob;
  std::uint32_t n = 0;
  is.read(reinterpret_cast<char*>(&n), 4);
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::string name = read_str(is, path);
    std::uint64_t sz = 0;
    is.read(reinterpret_cast<char*>(&sz), 8);
    Vec v(static_cast<Eigen::Index>(sz));
    is.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(sz * sizeof(double)));
    if (!is) throw FormatError(path + ": truncated state tensor " + name);
    blob.tensors[name] = std::move(v);
  }
  is.read(reinterpret_cast<char*>(&n), 4);
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::string name = read_str(is, path);
    std::int64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 8);
    if (!is) throw FormatError(path + ": truncated state counter " + name);
    blob.counters[name] = static_cast<long>(v);
  }
  return blob;
}

}  // namespace rsd
