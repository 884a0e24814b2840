// Copyright 2026 The ego2exo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace ide {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Planar 3 x H x W image in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> data;

  Image() = default;
  Image(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(3) * h * w, 0.0f) {}
  float& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  float at(int c, int y, int x) const { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
};

// Binary P6, maxval 255. Values are clamped to [0,1] and rounded to nearest.
void write_ppm(const std::string& path, const Image& img);
Image read_ppm(const std::string& path);

// 8-bit round trip: what a frame looks like after write_ppm + read_ppm.
void quantize_inplace(Image& img);

}  // namespace ide
