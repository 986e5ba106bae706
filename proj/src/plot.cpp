#include "davse/plot.hpp"

#include <zlib.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace davse::plot {

namespace {

void put_u32be(std::string& s, uint32_t v) {
  s.push_back(static_cast<char>((v >> 24) & 0xff));
  s.push_back(static_cast<char>((v >> 16) & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
  s.push_back(static_cast<char>(v & 0xff));
}

void write_chunk(std::ofstream& f, const char type[4], const std::string& data) {
  std::string out;
  put_u32be(out, static_cast<uint32_t>(data.size()));
  out.append(type, 4);
  out += data;
  uint32_t crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(out.data() + 4), out.size() - 4);
  put_u32be(out, crc);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

// 5x7 glyphs, one row per byte (low 5 bits). Covers what report labels use.
struct Glyph {
  char ch;
  uint8_t rows[7];
};

const Glyph kFont[] = {
    {' ', {0, 0, 0, 0, 0, 0, 0}},
    {'-', {0x00, 0x00, 0x00, 0x1f, 0x00, 0x00, 0x00}},
    {'_', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1f}},
    {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0c, 0x0c}},
    {',', {0x00, 0x00, 0x00, 0x00, 0x0c, 0x04, 0x08}},
    {'(', {0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02}},
    {')', {0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08}},
    {'/', {0x01, 0x01, 0x02, 0x04, 0x08, 0x10, 0x10}},
    {':', {0x00, 0x0c, 0x0c, 0x00, 0x0c, 0x0c, 0x00}},
    {'%', {0x19, 0x19, 0x02, 0x04, 0x08, 0x13, 0x13}},
    {'+', {0x00, 0x04, 0x04, 0x1f, 0x04, 0x04, 0x00}},
    {'=', {0x00, 0x00, 0x1f, 0x00, 0x1f, 0x00, 0x00}},
    {'0', {0x0e, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0e}},
    {'1', {0x04, 0x0c, 0x04, 0x04, 0x04, 0x04, 0x0e}},
    {'2', {0x0e, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1f}},
    {'3', {0x1f, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0e}},
    {'4', {0x02, 0x06, 0x0a, 0x12, 0x1f, 0x02, 0x02}},
    {'5', {0x1f, 0x10, 0x1e, 0x01, 0x01, 0x11, 0x0e}},
    {'6', {0x06, 0x08, 0x10, 0x1e, 0x11, 0x11, 0x0e}},
    {'7', {0x1f, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
    {'8', {0x0e, 0x11, 0x11, 0x0e, 0x11, 0x11, 0x0e}},
    {'9', {0x0e, 0x11, 0x11, 0x0f, 0x01, 0x02, 0x0c}},
    {'A', {0x0e, 0x11, 0x11, 0x1f, 0x11, 0x11, 0x11}},
    {'B', {0x1e, 0x11, 0x11, 0x1e, 0x11, 0x11, 0x1e}},
    {'C', {0x0e, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0e}},
    {'D', {0x1c, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1c}},
    {'E', {0x1f, 0x10, 0x10, 0x1e, 0x10, 0x10, 0x1f}},
    {'F', {0x1f, 0x10, 0x10, 0x1e, 0x10, 0x10, 0x10}},
    {'G', {0x0e, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0f}},
    {'H', {0x11, 0x11, 0x11, 0x1f, 0x11, 0x11, 0x11}},
    {'I', {0x0e, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0e}},
    {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0c}},
    {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}},
    {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1f}},
    {'M', {0x11, 0x1b, 0x15, 0x15, 0x11, 0x11, 0x11}},
    {'N', {0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11}},
    {'O', {0x0e, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0e}},
    {'P', {0x1e, 0x11, 0x11, 0x1e, 0x10, 0x10, 0x10}},
    {'Q', {0x0e, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0d}},
    {'R', {0x1e, 0x11, 0x11, 0x1e, 0x14, 0x12, 0x11}},
    {'S', {0x0f, 0x10, 0x10, 0x0e, 0x01, 0x01, 0x1e}},
    {'T', {0x1f, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
    {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0e}},
    {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0a, 0x04}},
    {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x1b, 0x11}},
    {'X', {0x11, 0x11, 0x0a, 0x04, 0x0a, 0x11, 0x11}},
    {'Y', {0x11, 0x11, 0x0a, 0x04, 0x04, 0x04, 0x04}},
    {'Z', {0x1f, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1f}},
};

const uint8_t* glyph_rows(char c) {
  const char u = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  for (const auto& g : kFont)
    if (g.ch == u) return g.rows;
  return kFont[0].rows;  // unknown -> blank
}

struct Canvas {
  int w, h;
  std::vector<uint8_t> rgb;

  Canvas(int width, int height, uint8_t bg = 255)
      : w(width), h(height),
        rgb(static_cast<size_t>(width) * height * 3, bg) {}

  void set(int x, int y, uint8_t r, uint8_t g, uint8_t b) {
    if (x < 0 || y < 0 || x >= w || y >= h) return;
    uint8_t* p = &rgb[(static_cast<size_t>(y) * w + x) * 3];
    p[0] = r;
    p[1] = g;
    p[2] = b;
  }

  void fill_rect(int x0, int y0, int x1, int y1, uint8_t r, uint8_t g, uint8_t b) {
    for (int y = std::max(0, y0); y <= std::min(h - 1, y1); ++y)
      for (int x = std::max(0, x0); x <= std::min(w - 1, x1); ++x) set(x, y, r, g, b);
  }

  void hline(int x0, int x1, int y, uint8_t r, uint8_t g, uint8_t b) {
    fill_rect(x0, y, x1, y, r, g, b);
  }

  void vline(int x, int y0, int y1, uint8_t r, uint8_t g, uint8_t b) {
    fill_rect(x, y0, x, y1, r, g, b);
  }

  void text(int x, int y, const std::string& s, uint8_t r = 0, uint8_t g = 0,
            uint8_t b = 0) {
    for (size_t i = 0; i < s.size(); ++i) {
      const uint8_t* rows = glyph_rows(s[i]);
      const int gx = x + static_cast<int>(i) * 6;
      for (int ry = 0; ry < 7; ++ry)
        for (int rx = 0; rx < 5; ++rx)
          if (rows[ry] & (1 << (4 - rx))) set(gx + rx, y + ry, r, g, b);
    }
  }

  static int text_width(const std::string& s) {
    return static_cast<int>(s.size()) * 6 - 1;
  }
};

struct Color {
  uint8_t r, g, b;
};

const Color kPalette[] = {
    {66, 133, 244}, {219, 68, 55},   {244, 180, 0},  {15, 157, 88},
    {171, 71, 188}, {0, 172, 193},   {255, 112, 67}, {94, 110, 125},
    {63, 81, 181},  {139, 195, 74},
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace

void write_png_rgb(const std::string& path, int w, int h,
                   const std::vector<uint8_t>& rgb) {
  if (rgb.size() != static_cast<size_t>(w) * h * 3)
    throw std::invalid_argument("write_png_rgb: buffer size mismatch");
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write plot: " + path);
  static const uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  f.write(reinterpret_cast<const char*>(sig), 8);

  std::string ihdr;
  put_u32be(ihdr, static_cast<uint32_t>(w));
  put_u32be(ihdr, static_cast<uint32_t>(h));
  ihdr.push_back(8);                          // bit depth
  ihdr.push_back(2);                          // truecolor
  ihdr.push_back(0);                          // compression
  ihdr.push_back(0);                          // filter
  ihdr.push_back(0);                          // no interlace
  write_chunk(f, "IHDR", ihdr);

  // raw scanlines, each prefixed with filter byte 0
  std::string raw;
  raw.reserve(static_cast<size_t>(h) * (1 + static_cast<size_t>(w) * 3));
  for (int y = 0; y < h; ++y) {
    raw.push_back('\0');
    raw.append(reinterpret_cast<const char*>(&rgb[static_cast<size_t>(y) * w * 3]),
               static_cast<size_t>(w) * 3);
  }
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::string idat(bound, '\0');
  if (compress2(reinterpret_cast<Bytef*>(idat.data()), &bound,
                reinterpret_cast<const Bytef*>(raw.data()),
                static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw std::runtime_error("png compression failed: " + path);
  idat.resize(bound);
  write_chunk(f, "IDAT", idat);
  write_chunk(f, "IEND", "");
  if (!f) throw std::runtime_error("short write on plot: " + path);
}

void bar_chart(const std::string& path, const std::string& title,
               const std::string& y_label,
               const std::vector<std::string>& group_labels,
               const std::vector<Series>& series) {
  if (group_labels.empty() || series.empty())
    throw std::invalid_argument("bar_chart: need at least one group and one series");
  for (const auto& s : series)
    if (s.values.size() != group_labels.size())
      throw std::invalid_argument("bar_chart: series length mismatch");

  const int ng = static_cast<int>(group_labels.size());
  const int ns = static_cast<int>(series.size());
  const int bar_w = 16, bar_gap = 2, group_gap = 28;
  const int group_w = ns * bar_w + (ns - 1) * bar_gap;
  const int ml = 64, mr = 16, mt = 28, mb = 40;
  const int plot_w = ng * group_w + (ng + 1) * group_gap;
  int legend_w = 0;
  for (const auto& s : series)
    legend_w = std::max(legend_w, Canvas::text_width(s.label));
  legend_w += 22;
  const int W = std::max(ml + plot_w + mr + legend_w + 10, 420);
  const int plot_h = 240;
  const int legend_h = ns * 12 + 4;
  const int H = mt + std::max(plot_h, legend_h) + mb;

  double lo = 0.0, hi = 0.0;
  for (const auto& s : series)
    for (double v : s.values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  if (hi == lo) hi = lo + 1.0;
  const double pad = 0.08 * (hi - lo);
  hi += pad;
  if (lo < 0.0) lo -= pad;

  Canvas cv(W, H);
  const int px0 = ml, px1 = ml + plot_w;
  const int py0 = mt, py1 = mt + plot_h;
  auto ymap = [&](double v) {
    return py1 - static_cast<int>(std::lround((v - lo) / (hi - lo) * plot_h));
  };

  // frame, ticks, zero line
  cv.hline(px0, px1, py1, 0, 0, 0);
  cv.vline(px0, py0, py1, 0, 0, 0);
  for (int t = 0; t <= 4; ++t) {
    const double v = lo + (hi - lo) * t / 4.0;
    const int y = ymap(v);
    cv.hline(px0 - 3, px0, y, 0, 0, 0);
    cv.hline(px0 + 1, px1, y, 230, 230, 230);
    const std::string lbl = fmt(v);
    cv.text(px0 - 6 - Canvas::text_width(lbl), y - 3, lbl);
  }
  if (lo < 0.0 && hi > 0.0) cv.hline(px0, px1, ymap(0.0), 120, 120, 120);

  // bars and group labels
  for (int g = 0; g < ng; ++g) {
    const int gx = px0 + group_gap + g * (group_w + group_gap);
    for (int s = 0; s < ns; ++s) {
      const Color c = kPalette[s % (sizeof(kPalette) / sizeof(kPalette[0]))];
      const double v = series[static_cast<size_t>(s)].values[static_cast<size_t>(g)];
      const int x0 = gx + s * (bar_w + bar_gap);
      const int yz = ymap(std::clamp(0.0, lo, hi));  // bar anchor at the zero line
      const int yv = ymap(v);
      cv.fill_rect(x0, std::min(yv, yz), x0 + bar_w - 1, std::max(yv, yz), c.r, c.g,
                   c.b);
    }
    const std::string& lbl = group_labels[static_cast<size_t>(g)];
    cv.text(gx + group_w / 2 - Canvas::text_width(lbl) / 2, py1 + 8, lbl);
  }

  // title, y label, legend
  cv.text(px0, 8, title);
  cv.text(px0, py1 + 22, y_label);
  const int lx = px1 + 14;
  for (int s = 0; s < ns; ++s) {
    const Color c = kPalette[s % (sizeof(kPalette) / sizeof(kPalette[0]))];
    const int ly = py0 + s * 12;
    cv.fill_rect(lx, ly, lx + 8, ly + 8, c.r, c.g, c.b);
    cv.text(lx + 12, ly + 1, series[static_cast<size_t>(s)].label);
  }

  write_png_rgb(path, W, H, cv.rgb);
}

}  // namespace davse::plot
