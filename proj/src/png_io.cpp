#include "picd/png_io.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace picd {

namespace {

void fail(const std::string& what) { throw std::runtime_error(what); }

void put32(std::vector<uint8_t>& out, uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(uint8_t((v >> s) & 0xff));
}

uint32_t get32(const uint8_t* p) {
  return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | p[3];
}

void put_chunk(std::vector<uint8_t>& out, const char type[4],
               const std::vector<uint8_t>& payload) {
  put32(out, uint32_t(payload.size()));
  const size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), payload.begin(), payload.end());
  const uint32_t crc = uint32_t(
      ::crc32(0, out.data() + start, uInt(out.size() - start)));
  put32(out, crc);
}

std::vector<uint8_t> zlib_deflate(const std::vector<uint8_t>& raw) {
  uLongf bound = compressBound(uLong(raw.size()));
  std::vector<uint8_t> out(bound);
  if (compress2(out.data(), &bound, raw.data(), uLong(raw.size()), 6) != Z_OK)
    fail("png: deflate failed");
  out.resize(bound);
  return out;
}

std::vector<uint8_t> zlib_inflate(const std::vector<uint8_t>& comp, size_t expect) {
  std::vector<uint8_t> out(expect);
  uLongf n = uLongf(expect);
  const int rc = uncompress(out.data(), &n, comp.data(), uLong(comp.size()));
  if (rc != Z_OK || n != expect) fail("png: inflate failed");
  return out;
}

uint8_t paeth(uint8_t a, uint8_t b, uint8_t c) {
  const int p = int(a) + int(b) - int(c);
  const int pa = std::abs(p - int(a));
  const int pb = std::abs(p - int(b));
  const int pc = std::abs(p - int(c));
  if (pa <= pb && pa <= pc) return a;
  return pb <= pc ? b : c;
}

}  // namespace

std::vector<uint8_t> png_encode(const Tensorf& img) {
  if (img.rank() != 3 || (img.dim(0) != 1 && img.dim(0) != 3))
    fail("png: image must be {1,H,W} or {3,H,W}");
  const int ch = img.dim(0), h = img.dim(1), w = img.dim(2);
  if (h <= 0 || w <= 0) fail("png: empty image");

  std::vector<uint8_t> raw;
  raw.reserve(size_t(h) * (size_t(w) * size_t(ch) + 1));
  for (int y = 0; y < h; ++y) {
    raw.push_back(0);  // filter type: none
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        float v = img(c, y, x);
        v = v < 0.f ? 0.f : (v > 1.f ? 1.f : v);
        raw.push_back(uint8_t(std::lround(v * 255.0f)));
      }
  }

  std::vector<uint8_t> out = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  std::vector<uint8_t> ihdr;
  put32(ihdr, uint32_t(w));
  put32(ihdr, uint32_t(h));
  ihdr.push_back(8);                        // bit depth
  ihdr.push_back(ch == 1 ? 0 : 2);          // color type
  ihdr.push_back(0);                        // compression
  ihdr.push_back(0);                        // filter method
  ihdr.push_back(0);                        // no interlace
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", zlib_deflate(raw));
  put_chunk(out, "IEND", {});
  return out;
}

void write_png(const std::string& path, const Tensorf& img) {
  write_file(path, png_encode(img));
}

Tensorf png_decode(const uint8_t* data, size_t size) {
  if (size < 8 || std::memcmp(data, "\x89PNG\r\n\x1a\n", 8) != 0)
    fail("png: bad signature");
  size_t pos = 8;
  int w = 0, h = 0, ch = 0;
  std::vector<uint8_t> idat;
  bool saw_end = false;
  while (pos + 8 <= size && !saw_end) {
    const uint32_t len = get32(data + pos);
    if (pos + 12 + len > size) fail("png: truncated chunk");
    const char* type = reinterpret_cast<const char*>(data + pos + 4);
    const uint8_t* payload = data + pos + 8;
    if (std::memcmp(type, "IHDR", 4) == 0) {
      if (len != 13) fail("png: bad IHDR");
      w = int(get32(payload));
      h = int(get32(payload + 4));
      if (payload[8] != 8) fail("png: only 8-bit depth supported");
      switch (payload[9]) {
        case 0: ch = 1; break;
        case 2: ch = 3; break;
        case 4: ch = 2; break;
        case 6: ch = 4; break;
        default: fail("png: unsupported color type");
      }
      if (payload[12] != 0) fail("png: interlaced files not supported");
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), payload, payload + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      saw_end = true;
    }
    pos += 12 + len;
  }
  if (w <= 0 || h <= 0 || ch == 0) fail("png: missing IHDR");
  if (idat.empty()) fail("png: missing IDAT");

  const size_t stride = size_t(w) * size_t(ch);
  std::vector<uint8_t> raw = zlib_inflate(idat, size_t(h) * (stride + 1));

  // Undo per-scanline filtering in place into `pix`.
  std::vector<uint8_t> pix(size_t(h) * stride);
  for (int y = 0; y < h; ++y) {
    const uint8_t filter = raw[size_t(y) * (stride + 1)];
    const uint8_t* src = raw.data() + size_t(y) * (stride + 1) + 1;
    uint8_t* dst = pix.data() + size_t(y) * stride;
    const uint8_t* up = y > 0 ? dst - stride : nullptr;
    for (size_t i = 0; i < stride; ++i) {
      const uint8_t a = i >= size_t(ch) ? dst[i - size_t(ch)] : 0;
      const uint8_t b = up ? up[i] : 0;
      const uint8_t c = (up && i >= size_t(ch)) ? up[i - size_t(ch)] : 0;
      int v = src[i];
      switch (filter) {
        case 0: break;
        case 1: v += a; break;
        case 2: v += b; break;
        case 3: v += (int(a) + int(b)) / 2; break;
        case 4: v += paeth(a, b, c); break;
        default: fail("png: unknown filter type");
      }
      dst[i] = uint8_t(v & 0xff);
    }
  }

  const int out_ch = ch >= 3 ? 3 : 1;
  Tensorf img({out_ch, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < out_ch; ++c)
        img(c, y, x) = float(pix[size_t(y) * stride + size_t(x) * size_t(ch) + size_t(c)]) / 255.0f;
  return img;
}

Tensorf read_png(const std::string& path) {
  const std::vector<uint8_t> data = read_file(path);
  return png_decode(data.data(), data.size());
}

uint32_t crc32_of(const std::vector<uint8_t>& data) {
  return uint32_t(::crc32(0, data.data(), uInt(data.size())));
}

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail("io: cannot open " + path);
  f.seekg(0, std::ios::end);
  std::vector<uint8_t> data(size_t(f.tellg()));
  f.seekg(0);
  f.read(reinterpret_cast<char*>(data.data()), std::streamsize(data.size()));
  if (!f) fail("io: cannot read " + path);
  return data;
}

void write_file(const std::string& path, const std::vector<uint8_t>& data) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail("io: cannot open " + path + " for writing");
  f.write(reinterpret_cast<const char*>(data.data()), std::streamsize(data.size()));
  if (!f) fail("io: cannot write " + path);
}

}  // namespace picd
