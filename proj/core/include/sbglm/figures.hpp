#pragma once

#include <sbglm/mesh.hpp>
#include <sbglm/types.hpp>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace sbglm {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

/// 8-bit RGB raster written as binary PPM (P6).
class Image {
 public:
  Image(int width, int height, Rgb fill = {255, 255, 255});

  int width() const { return width_; }
  int height() const { return height_; }
  Rgb at(int x, int y) const;
  void set(int x, int y, Rgb c);
  void fill_rect(int x0, int y0, int x1, int y1, Rgb c);

  std::string ppm() const;
  void write_ppm(const std::string& path) const;

 private:
  int width_, height_;
  std::vector<std::uint8_t> rgb_;
};

/// Blue-white-red palette on [-limit, limit].
Rgb diverging(double value, double limit);

/// Activation colours for thresholds 0, 0.5 and 1.
inline constexpr std::array<Rgb, 3> kActivationColors{{{0xFF, 0xD2, 0x7F}, {0xFF, 0x00, 0x00}, {0xA0, 0x20, 0xF0}}};

/// Field rendered over the mesh with linear interpolation. Planar meshes use
/// x/y; surfaces use a longitude/latitude projection. limit <= 0 uses max |v|.
Image field_heatmap(const TriangularMesh& mesh, const Eigen::Ref<const Vector>& values, double limit = 0.0,
                    int width = 512);

/// Vertex sets for increasing thresholds; each vertex takes the colour of the
/// highest set containing it. A legend strip is drawn along the top edge.
Image activation_map(const TriangularMesh& mesh, const std::vector<std::vector<bool>>& sets,
                     const std::vector<Rgb>& colors = {kActivationColors.begin(), kActivationColors.end()},
                     int width = 512);

/// Grouped bars: rows are groups, columns series.
Image bar_chart(const Matrix& values, int width = 640, int height = 360);

/// Box plots (median, quartiles, range); boxes are drawn in order and
/// coloured by index modulo `series`.
Image box_plot(const std::vector<std::vector<double>>& samples, int series = 2, int width = 640, int height = 360);

}  // namespace sbglm
