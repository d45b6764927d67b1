#include "pyraflow/flowio.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "pyraflow/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "flow/weight file I/O assumes a little-endian host");

namespace pyraflow {

namespace {

constexpr float kFloMagic = 202021.25f; // reads as "PIEH" in ASCII

std::ifstream open_in(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "' for reading");
  return f;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  return f;
}

template <typename T>
T read_pod(std::istream& f, const std::string& path, const char* what) {
  T v;
  if (!f.read(reinterpret_cast<char*>(&v), sizeof(T)))
    throw IoError("'" + path + "': truncated while reading " + what);
  return v;
}

template <typename T>
void write_pod(std::ostream& f, const T& v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

} // namespace

Tensor read_flo(const std::string& path) {
  std::ifstream f = open_in(path);
  const float magic = read_pod<float>(f, path, "magic");
  if (magic != kFloMagic)
    throw IoError("'" + path + "': bad magic (not a .flo flow file)");
  const int32_t w = read_pod<int32_t>(f, path, "width");
  const int32_t h = read_pod<int32_t>(f, path, "height");
  if (w < 1 || h < 1)
    throw IoError("'" + path + "': invalid extents " + std::to_string(w) + "x" +
                  std::to_string(h));
  std::vector<float> interleaved(static_cast<size_t>(w) * h * 2);
  if (!f.read(reinterpret_cast<char*>(interleaved.data()),
              static_cast<std::streamsize>(interleaved.size() * sizeof(float))))
    throw IoError("'" + path + "': truncated payload (expected " +
                  std::to_string(interleaved.size() * sizeof(float)) + " data bytes)");
  Tensor flow(Shape{2, h, w});
  const int64_t plane = static_cast<int64_t>(h) * w;
  for (int64_t i = 0; i < plane; ++i) {
    flow.data()[i] = interleaved[static_cast<size_t>(2 * i)];
    flow.data()[plane + i] = interleaved[static_cast<size_t>(2 * i + 1)];
  }
  return flow;
}

void write_flo(const std::string& path, const Tensor& flow) {
  if (flow.rank() != 3 || flow.channels() != 2)
    throw ShapeError("write_flo: flow must be (2,H,W), got " + shape_str(flow.shape()));
  std::ofstream f = open_out(path);
  write_pod(f, kFloMagic);
  write_pod(f, static_cast<int32_t>(flow.width()));
  write_pod(f, static_cast<int32_t>(flow.height()));
  const int64_t plane = static_cast<int64_t>(flow.height()) * flow.width();
  for (int64_t i = 0; i < plane; ++i) {
    write_pod(f, flow.data()[i]);
    write_pod(f, flow.data()[plane + i]);
  }
  if (!f) throw IoError("write failed for '" + path + "'");
}

ModelWeights read_weights(const std::string& path) {
  std::ifstream f = open_in(path);
  char magic[4];
  if (!f.read(magic, 4) || std::memcmp(magic, "LFNW", 4) != 0)
    throw IoError("'" + path + "': bad magic (not a weight file)");
  const uint32_t version = read_pod<uint32_t>(f, path, "version");
  if (version != kWeightFileVersion)
    throw IoError("'" + path + "': unsupported weight file version " + std::to_string(version));
  const uint32_t count = read_pod<uint32_t>(f, path, "entry count");
  ModelWeights w;
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t name_len = read_pod<uint32_t>(f, path, "name length");
    if (name_len == 0 || name_len > 4096)
      throw IoError("'" + path + "': implausible name length " + std::to_string(name_len));
    std::string name(name_len, '\0');
    if (!f.read(name.data(), name_len)) throw IoError("'" + path + "': truncated name");
    const uint32_t rank = read_pod<uint32_t>(f, path, "rank");
    if (rank == 0 || rank > 8)
      throw IoError("'" + path + "': implausible rank " + std::to_string(rank));
    Shape shape(rank);
    int64_t numel = 1;
    for (uint32_t d = 0; d < rank; ++d) {
      const uint32_t e = read_pod<uint32_t>(f, path, "extent");
      if (e == 0) throw IoError("'" + path + "': zero extent in entry '" + name + "'");
      shape[d] = static_cast<int>(e);
      numel *= e;
    }
    std::vector<float> values(static_cast<size_t>(numel));
    if (!f.read(reinterpret_cast<char*>(values.data()),
                static_cast<std::streamsize>(values.size() * sizeof(float))))
      throw IoError("'" + path + "': truncated values for entry '" + name + "'");
    if (w.has(name)) throw IoError("'" + path + "': duplicate entry '" + name + "'");
    w.add(name, Tensor(std::move(shape), std::move(values)));
  }
  return w;
}

void write_weights(const std::string& path, const ModelWeights& w) {
  std::ofstream f = open_out(path);
  f.write("LFNW", 4);
  write_pod(f, kWeightFileVersion);
  write_pod(f, static_cast<uint32_t>(w.count()));
  for (const auto& name : w.names()) {
    const Tensor& t = w.at(name);
    write_pod(f, static_cast<uint32_t>(name.size()));
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod(f, static_cast<uint32_t>(t.rank()));
    for (int d = 0; d < t.rank(); ++d) write_pod(f, static_cast<uint32_t>(t.dim(d)));
    f.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(float)));
  }
  if (!f) throw IoError("write failed for '" + path + "'");
}

} // namespace pyraflow
