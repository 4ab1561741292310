#include "mtlink/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace mtlink {

namespace {

constexpr char kMagic[4] = {'M', 'T', 'L', 'K'};

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void write_string(std::ostream& out, const std::string& s) {
  write_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw IoError("checkpoint: truncated file");
  return v;
}

std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw IoError("checkpoint: truncated file");
  return v;
}

std::string read_string(std::istream& in) {
  const std::uint64_t n = read_u64(in);
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw IoError("checkpoint: truncated file");
  return s;
}

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

double Checkpoint::scalar(const std::string& name) const {
  const Tensor* t = find(name);
  if (t == nullptr) throw IoError("checkpoint: missing entry '" + name + "'");
  return t->item();
}

void Checkpoint::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write(kMagic, 4);
  write_u32(out, kFormatVersion);
  write_string(out, config.to_string());
  write_u64(out, tensors.size());
  for (const auto& [name, t] : tensors) {
    write_string(out, name);
    write_u32(out, static_cast<std::uint32_t>(t.shape().size()));
    for (std::size_t d : t.shape()) write_u64(out, d);
    const auto v = t.values();
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  if (!out) throw IoError("write failed: " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw IoError("checkpoint: bad magic in " + path);
  const std::uint32_t version = read_u32(in);
  if (version != kFormatVersion)
    throw IoError("checkpoint: unsupported format version " + std::to_string(version));

  Checkpoint ck;
  ck.config = KvConfig::from_string(read_string(in));
  const std::uint64_t count = read_u64(in);
  ck.tensors.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = read_string(in);
    const std::uint32_t ndim = read_u32(in);
    Shape shape(ndim);
    for (auto& d : shape) d = read_u64(in);
    std::vector<double> data(shape_size(shape));
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (!in) throw IoError("checkpoint: truncated tensor data in " + path);
    ck.tensors.push_back({name, Tensor::from(std::move(shape), std::move(data))});
  }
  return ck;
}

}  // namespace mtlink
