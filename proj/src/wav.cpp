#include "davse/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace davse {

namespace {

void put_u32(std::vector<uint8_t>& b, uint32_t v) {
  b.push_back(v & 0xff);
  b.push_back((v >> 8) & 0xff);
  b.push_back((v >> 16) & 0xff);
  b.push_back((v >> 24) & 0xff);
}

void put_u16(std::vector<uint8_t>& b, uint16_t v) {
  b.push_back(v & 0xff);
  b.push_back((v >> 8) & 0xff);
}

uint32_t get_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

uint16_t get_u16(const uint8_t* p) {
  return static_cast<uint16_t>(p[0]) | (static_cast<uint16_t>(p[1]) << 8);
}

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw std::runtime_error("wav: " + path + ": " + what);
}

}  // namespace

dsp::Waveform read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open");
  std::vector<uint8_t> buf((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
  if (buf.size() < 44) fail(path, "truncated header");
  if (std::memcmp(buf.data(), "RIFF", 4) != 0 || std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
    fail(path, "not a RIFF/WAVE file");

  int sample_rate = 0;
  int channels = 0;
  int bits = 0;
  size_t data_off = 0;
  size_t data_len = 0;
  size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const char* id = reinterpret_cast<const char*>(buf.data() + pos);
    const uint32_t sz = get_u32(buf.data() + pos + 4);
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (pos + 8 + 16 > buf.size()) fail(path, "truncated fmt chunk");
      const uint8_t* f = buf.data() + pos + 8;
      const uint16_t fmt = get_u16(f);
      channels = get_u16(f + 2);
      sample_rate = static_cast<int>(get_u32(f + 4));
      bits = get_u16(f + 14);
      if (fmt != 1) fail(path, "only PCM supported");
    } else if (std::memcmp(id, "data", 4) == 0) {
      data_off = pos + 8;
      data_len = sz;
    }
    pos += 8 + sz + (sz & 1);
  }
  if (sample_rate == 0) fail(path, "missing fmt chunk");
  if (data_off == 0) fail(path, "missing data chunk");
  if (channels != 1) fail(path, "only mono supported");
  if (bits != 16) fail(path, "only 16-bit PCM supported");
  if (data_off + data_len > buf.size()) fail(path, "data chunk exceeds file size");

  dsp::Waveform w;
  w.sample_rate = sample_rate;
  const size_t n = data_len / 2;
  w.samples.resize(n);
  for (size_t i = 0; i < n; ++i) {
    const int16_t s = static_cast<int16_t>(get_u16(buf.data() + data_off + 2 * i));
    w.samples[i] = static_cast<double>(s) / 32768.0;
  }
  return w;
}

void write_wav(const std::string& path, const dsp::Waveform& w) {
  const uint32_t n = static_cast<uint32_t>(w.samples.size());
  std::vector<uint8_t> b;
  b.reserve(44 + 2 * n);
  b.insert(b.end(), {'R', 'I', 'F', 'F'});
  put_u32(b, 36 + 2 * n);
  b.insert(b.end(), {'W', 'A', 'V', 'E'});
  b.insert(b.end(), {'f', 'm', 't', ' '});
  put_u32(b, 16);
  put_u16(b, 1);  // PCM
  put_u16(b, 1);  // mono
  put_u32(b, static_cast<uint32_t>(w.sample_rate));
  put_u32(b, static_cast<uint32_t>(w.sample_rate) * 2);
  put_u16(b, 2);
  put_u16(b, 16);
  b.insert(b.end(), {'d', 'a', 't', 'a'});
  put_u32(b, 2 * n);
  for (uint32_t i = 0; i < n; ++i) {
    double x = std::clamp(w.samples[i], -1.0, 32767.0 / 32768.0);
    const int16_t s = static_cast<int16_t>(std::lrint(x * 32768.0));
    put_u16(b, static_cast<uint16_t>(s));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(path, "cannot open for writing");
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  if (!out) fail(path, "write failed");
}

}  // namespace davse
