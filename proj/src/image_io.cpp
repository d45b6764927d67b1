#include "pyraflow/image_io.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>

#include "pyraflow/errors.hpp"

namespace pyraflow {

namespace {

const unsigned char kPngSignature[8] = {137, 80, 78, 71, 13, 10, 26, 10};

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "' for reading");
  f.seekg(0, std::ios::end);
  const std::streamoff n = f.tellg();
  f.seekg(0);
  std::vector<unsigned char> data(static_cast<size_t>(n));
  if (n > 0 && !f.read(reinterpret_cast<char*>(data.data()), n))
    throw IoError("read failed for '" + path + "'");
  return data;
}

uint32_t be32(const unsigned char* p) {
  return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
         (static_cast<uint32_t>(p[2]) << 8) | static_cast<uint32_t>(p[3]);
}

void put_be32(std::vector<unsigned char>& out, uint32_t v) {
  out.push_back(static_cast<unsigned char>(v >> 24));
  out.push_back(static_cast<unsigned char>(v >> 16));
  out.push_back(static_cast<unsigned char>(v >> 8));
  out.push_back(static_cast<unsigned char>(v));
}

Tensor bytes_to_tensor(const std::vector<unsigned char>& pixels, int channels, int h, int w) {
  Tensor out(Shape{3, h, w});
  const int64_t plane = static_cast<int64_t>(h) * w;
  for (int64_t i = 0; i < plane; ++i) {
    const unsigned char* px = pixels.data() + i * channels;
    for (int c = 0; c < 3; ++c) {
      const unsigned char v = channels == 1 ? px[0] : px[c];
      out.data()[c * plane + i] = static_cast<float>(v) / 255.0f;
    }
  }
  return out;
}

int paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  return pb <= pc ? b : c;
}

Tensor decode_png(const std::string& path, const std::vector<unsigned char>& data) {
  size_t pos = 8;
  int width = 0, height = 0, bit_depth = 0, color_type = 0, channels = 0;
  bool have_ihdr = false;
  std::vector<unsigned char> idat;
  while (pos + 8 <= data.size()) {
    const uint32_t len = be32(data.data() + pos);
    if (pos + 12 + len > data.size())
      throw IoError("'" + path + "': truncated PNG chunk");
    const char* type = reinterpret_cast<const char*>(data.data() + pos + 4);
    const unsigned char* body = data.data() + pos + 8;
    const uint32_t crc_stored = be32(body + len);
    const uint32_t crc_calc = static_cast<uint32_t>(
        crc32(crc32(0, reinterpret_cast<const Bytef*>(type), 4), body, len));
    if (crc_stored != crc_calc) throw IoError("'" + path + "': PNG chunk CRC mismatch");

    if (std::memcmp(type, "IHDR", 4) == 0) {
      if (len != 13) throw IoError("'" + path + "': malformed IHDR");
      width = static_cast<int>(be32(body));
      height = static_cast<int>(be32(body + 4));
      bit_depth = body[8];
      color_type = body[9];
      if (body[10] != 0 || body[11] != 0)
        throw IoError("'" + path + "': unsupported PNG compression/filter method");
      if (body[12] != 0) throw IoError("'" + path + "': interlaced PNG not supported");
      if (bit_depth != 8)
        throw IoError("'" + path + "': unsupported PNG bit depth " + std::to_string(bit_depth));
      switch (color_type) {
        case 0: channels = 1; break;
        case 2: channels = 3; break;
        case 6: channels = 4; break;
        default:
          throw IoError("'" + path + "': unsupported PNG color type " +
                        std::to_string(color_type));
      }
      if (width < 1 || height < 1) throw IoError("'" + path + "': invalid PNG extents");
      have_ihdr = true;
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), body, body + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      break;
    }
    pos += 12 + len;
  }
  if (!have_ihdr || idat.empty()) throw IoError("'" + path + "': missing PNG IHDR/IDAT");

  const size_t stride = static_cast<size_t>(width) * channels;
  std::vector<unsigned char> raw((stride + 1) * static_cast<size_t>(height));
  uLongf raw_len = static_cast<uLongf>(raw.size());
  const int zres = uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size()));
  if (zres != Z_OK || raw_len != raw.size())
    throw IoError("'" + path + "': PNG pixel data failed to inflate");

  std::vector<unsigned char> pixels(stride * static_cast<size_t>(height));
  const int bpp = channels;
  for (int y = 0; y < height; ++y) {
    const unsigned char filter = raw[(stride + 1) * static_cast<size_t>(y)];
    const unsigned char* src = raw.data() + (stride + 1) * static_cast<size_t>(y) + 1;
    unsigned char* dst = pixels.data() + stride * static_cast<size_t>(y);
    const unsigned char* up = y > 0 ? dst - stride : nullptr;
    for (size_t x = 0; x < stride; ++x) {
      const int a = x >= static_cast<size_t>(bpp) ? dst[x - bpp] : 0;
      const int b = up ? up[x] : 0;
      const int c = (up && x >= static_cast<size_t>(bpp)) ? up[x - bpp] : 0;
      int v = src[x];
      switch (filter) {
        case 0: break;
        case 1: v += a; break;
        case 2: v += b; break;
        case 3: v += (a + b) / 2; break;
        case 4: v += paeth(a, b, c); break;
        default: throw IoError("'" + path + "': unknown PNG scanline filter");
      }
      dst[x] = static_cast<unsigned char>(v & 0xff);
    }
  }
  return bytes_to_tensor(pixels, channels, height, width);
}

Tensor decode_ppm(const std::string& path, const std::vector<unsigned char>& data) {
  size_t pos = 2; // past "P6"
  auto skip_space = [&] {
    for (;;) {
      while (pos < data.size() && std::isspace(data[pos])) ++pos;
      if (pos < data.size() && data[pos] == '#') {
        while (pos < data.size() && data[pos] != '\n') ++pos;
      } else {
        return;
      }
    }
  };
  auto read_int = [&](const char* what) {
    skip_space();
    if (pos >= data.size() || !std::isdigit(data[pos]))
      throw IoError("'" + path + "': malformed PPM header (" + what + ")");
    int v = 0;
    while (pos < data.size() && std::isdigit(data[pos])) v = v * 10 + (data[pos++] - '0');
    return v;
  };
  const int w = read_int("width");
  const int h = read_int("height");
  const int maxval = read_int("maxval");
  if (w < 1 || h < 1) throw IoError("'" + path + "': invalid PPM extents");
  if (maxval != 255)
    throw IoError("'" + path + "': unsupported PPM maxval " + std::to_string(maxval));
  ++pos; // single whitespace after maxval
  const size_t need = static_cast<size_t>(w) * h * 3;
  if (data.size() - pos < need) throw IoError("'" + path + "': truncated PPM pixel data");
  std::vector<unsigned char> pixels(data.begin() + static_cast<std::ptrdiff_t>(pos),
                                    data.begin() + static_cast<std::ptrdiff_t>(pos + need));
  return bytes_to_tensor(pixels, 3, h, w);
}

void check_rgb(const Tensor& image, const char* what) {
  if (image.rank() != 3 || image.channels() != 3)
    throw ShapeError(std::string(what) + ": image must be (3,H,W), got " +
                     shape_str(image.shape()));
}

unsigned char to_byte(float v) {
  const float s = std::round(v * 255.0f);
  return static_cast<unsigned char>(s < 0 ? 0 : (s > 255 ? 255 : s));
}

} // namespace

Tensor read_image(const std::string& path) {
  const std::vector<unsigned char> data = read_file(path);
  if (data.size() >= 8 && std::memcmp(data.data(), kPngSignature, 8) == 0)
    return decode_png(path, data);
  if (data.size() >= 2 && data[0] == 'P' && data[1] == '6') return decode_ppm(path, data);
  throw IoError("'" + path + "': unsupported image format (PNG or binary PPM expected)");
}

void write_image_png(const std::string& path, const Tensor& image) {
  check_rgb(image, "write_image_png");
  const int h = image.height(), w = image.width();
  const int64_t plane = static_cast<int64_t>(h) * w;
  const size_t stride = static_cast<size_t>(w) * 3;
  std::vector<unsigned char> raw((stride + 1) * static_cast<size_t>(h));
  for (int y = 0; y < h; ++y) {
    unsigned char* row = raw.data() + (stride + 1) * static_cast<size_t>(y);
    row[0] = 0; // filter: none
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        row[1 + 3 * x + c] = to_byte(image.data()[c * plane + static_cast<int64_t>(y) * w + x]);
  }
  uLongf comp_cap = compressBound(static_cast<uLong>(raw.size()));
  std::vector<unsigned char> comp(comp_cap);
  if (compress2(comp.data(), &comp_cap, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw IoError("PNG compression failed for '" + path + "'");
  comp.resize(comp_cap);

  std::vector<unsigned char> out(kPngSignature, kPngSignature + 8);
  auto chunk = [&out](const char* type, const std::vector<unsigned char>& body) {
    put_be32(out, static_cast<uint32_t>(body.size()));
    const size_t type_at = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), body.begin(), body.end());
    const uint32_t crc = static_cast<uint32_t>(
        crc32(0, out.data() + type_at, static_cast<uInt>(4 + body.size())));
    put_be32(out, crc);
  };
  std::vector<unsigned char> ihdr;
  put_be32(ihdr, static_cast<uint32_t>(w));
  put_be32(ihdr, static_cast<uint32_t>(h));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(2);  // color type: RGB
  ihdr.push_back(0);  // compression
  ihdr.push_back(0);  // filter
  ihdr.push_back(0);  // no interlace
  chunk("IHDR", ihdr);
  chunk("IDAT", comp);
  chunk("IEND", {});

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write failed for '" + path + "'");
}

void write_image_ppm(const std::string& path, const Tensor& image) {
  check_rgb(image, "write_image_ppm");
  const int h = image.height(), w = image.width();
  const int64_t plane = static_cast<int64_t>(h) * w;
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f << "P6\n" << w << " " << h << "\n255\n";
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        const unsigned char b = to_byte(image.data()[c * plane + static_cast<int64_t>(y) * w + x]);
        f.write(reinterpret_cast<const char*>(&b), 1);
      }
  if (!f) throw IoError("write failed for '" + path + "'");
}

} // namespace pyraflow
