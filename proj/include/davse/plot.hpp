#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace davse::plot {

// One bar per group for a single legend entry.
struct Series {
  std::string label;
  std::vector<double> values;
};

// Minimal truecolor PNG writer (8-bit RGB, zlib-compressed scanlines).
void write_png_rgb(const std::string& path, int w, int h,
                   const std::vector<uint8_t>& rgb);

// Grouped bar chart: one cluster per group label, one bar per series within
// each cluster, bars anchored at the zero line (negative values grow down).
void bar_chart(const std::string& path, const std::string& title,
               const std::string& y_label,
               const std::vector<std::string>& group_labels,
               const std::vector<Series>& series);

}  // namespace davse::plot
