#include <sbglm/figures.hpp>

#include <sbglm/error.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

namespace sbglm {

namespace {

constexpr Rgb kWhite{255, 255, 255};
constexpr Rgb kMeshGray{200, 200, 200};
constexpr Rgb kAxis{40, 40, 40};
constexpr std::array<Rgb, 4> kSeries{{{0x1F, 0x77, 0xB4}, {0xD6, 0x27, 0x28}, {0x2C, 0xA0, 0x2C}, {0x94, 0x67, 0xBD}}};

struct Layout {
  std::vector<double> px, py;  // pixel coordinates per vertex
  int width = 0, height = 0;
  bool lonlat = false;
};

Layout layout(const TriangularMesh& mesh, int width, int top) {
  const auto& v = mesh.vertices();
  Layout l;
  const Index n = mesh.n();
  l.px.resize(n);
  l.py.resize(n);
  const double zspan = v.col(2).maxCoeff() - v.col(2).minCoeff();
  const double xyspan = std::max(v.col(0).maxCoeff() - v.col(0).minCoeff(), v.col(1).maxCoeff() - v.col(1).minCoeff());
  l.lonlat = zspan > 1e-9 * std::max(1.0, xyspan);
  std::vector<double> u(n), w(n);
  for (Index i = 0; i < n; ++i) {
    if (l.lonlat) {
      const Eigen::Vector3d c = v.row(i).transpose() - v.colwise().mean().transpose();
      u[i] = std::atan2(c.y(), c.x());
      w[i] = std::asin(std::clamp(c.z() / std::max(c.norm(), 1e-300), -1.0, 1.0));
    } else {
      u[i] = v(i, 0);
      w[i] = v(i, 1);
    }
  }
  const double umin = *std::min_element(u.begin(), u.end()), umax = *std::max_element(u.begin(), u.end());
  const double wmin = *std::min_element(w.begin(), w.end()), wmax = *std::max_element(w.begin(), w.end());
  const int margin = 8;
  const double scale = (width - 2 * margin) / std::max(umax - umin, 1e-12);
  l.width = width;
  l.height = top + 2 * margin + static_cast<int>(std::ceil((wmax - wmin) * scale));
  for (Index i = 0; i < n; ++i) {
    l.px[i] = margin + (u[i] - umin) * scale;
    l.py[i] = top + margin + (wmax - w[i]) * scale;  // y axis points up
  }
  return l;
}

// Calls shade(x, y, b0, b1, b2) for pixels inside triangle t.
template <class Shade>
void raster(const TriangularMesh& mesh, const Layout& l, Index t, Shade&& shade) {
  const auto tri = mesh.triangles().row(t);
  const int a = tri[0], b = tri[1], c = tri[2];
  if (l.lonlat) {
    const double span = std::max({l.px[a], l.px[b], l.px[c]}) - std::min({l.px[a], l.px[b], l.px[c]});
    if (span > 0.5 * l.width) return;  // wraps around the seam
  }
  const double x0 = l.px[a], y0 = l.py[a], x1 = l.px[b], y1 = l.py[b], x2 = l.px[c], y2 = l.py[c];
  const double det = (y1 - y2) * (x0 - x2) + (x2 - x1) * (y0 - y2);
  if (std::abs(det) < 1e-12) return;
  const int xa = std::max(0, static_cast<int>(std::floor(std::min({x0, x1, x2}))));
  const int xb = std::min(l.width - 1, static_cast<int>(std::ceil(std::max({x0, x1, x2}))));
  const int ya = std::max(0, static_cast<int>(std::floor(std::min({y0, y1, y2}))));
  const int yb = std::min(l.height - 1, static_cast<int>(std::ceil(std::max({y0, y1, y2}))));
  for (int y = ya; y <= yb; ++y) {
    for (int x = xa; x <= xb; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      const double b0 = ((y1 - y2) * (px - x2) + (x2 - x1) * (py - y2)) / det;
      const double b1 = ((y2 - y0) * (px - x2) + (x0 - x2) * (py - y2)) / det;
      const double b2 = 1.0 - b0 - b1;
      const double eps = -1e-9;
      if (b0 >= eps && b1 >= eps && b2 >= eps) shade(x, y, b0, b1, b2);
    }
  }
}

double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const std::size_t i = static_cast<std::size_t>(std::floor(pos));
  const std::size_t j = std::min(v.size() - 1, i + 1);
  return v[i] + (pos - static_cast<double>(i)) * (v[j] - v[i]);
}

}  // namespace

Image::Image(int width, int height, Rgb fill) : width_(width), height_(height) {
  if (width < 1 || height < 1) throw DomainError("Image: dimensions must be positive");
  rgb_.resize(static_cast<std::size_t>(width) * height * 3);
  for (std::size_t i = 0; i < rgb_.size(); i += 3) {
    rgb_[i] = fill.r;
    rgb_[i + 1] = fill.g;
    rgb_[i + 2] = fill.b;
  }
}

Rgb Image::at(int x, int y) const {
  const std::size_t i = (static_cast<std::size_t>(y) * width_ + x) * 3;
  return {rgb_[i], rgb_[i + 1], rgb_[i + 2]};
}

void Image::set(int x, int y, Rgb c) {
  if (x < 0 || y < 0 || x >= width_ || y >= height_) return;
  const std::size_t i = (static_cast<std::size_t>(y) * width_ + x) * 3;
  rgb_[i] = c.r;
  rgb_[i + 1] = c.g;
  rgb_[i + 2] = c.b;
}

void Image::fill_rect(int x0, int y0, int x1, int y1, Rgb c) {
  for (int y = std::max(0, y0); y < std::min(height_, y1); ++y) {
    for (int x = std::max(0, x0); x < std::min(width_, x1); ++x) set(x, y, c);
  }
}

std::string Image::ppm() const {
  std::string out = "P6\n" + std::to_string(width_) + " " + std::to_string(height_) + "\n255\n";
  out.append(reinterpret_cast<const char*>(rgb_.data()), rgb_.size());
  return out;
}

void Image::write_ppm(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open '" + path + "' for writing");
  const std::string data = ppm();
  f.write(data.data(), static_cast<std::streamsize>(data.size()));
}

Rgb diverging(double value, double limit) {
  const double t = limit > 0.0 ? std::clamp(value / limit, -1.0, 1.0) : 0.0;
  auto mix = [](double a, double b, double s) { return static_cast<std::uint8_t>(std::lround(a + (b - a) * s)); };
  if (t >= 0.0) return {mix(255, 178, t), mix(255, 24, t), mix(255, 43, t)};
  return {mix(255, 33, -t), mix(255, 102, -t), mix(255, 172, -t)};
}

Image field_heatmap(const TriangularMesh& mesh, const Eigen::Ref<const Vector>& values, double limit, int width) {
  if (values.size() != mesh.n()) throw DimensionError("field_heatmap: values do not match the mesh");
  if (limit <= 0.0) limit = values.size() ? values.cwiseAbs().maxCoeff() : 1.0;
  const Layout l = layout(mesh, width, 0);
  Image img(l.width, l.height, kWhite);
  for (Index t = 0; t < mesh.num_triangles(); ++t) {
    const auto tri = mesh.triangles().row(t);
    raster(mesh, l, t, [&](int x, int y, double b0, double b1, double b2) {
      img.set(x, y, diverging(b0 * values[tri[0]] + b1 * values[tri[1]] + b2 * values[tri[2]], limit));
    });
  }
  return img;
}

Image activation_map(const TriangularMesh& mesh, const std::vector<std::vector<bool>>& sets,
                     const std::vector<Rgb>& colors, int width) {
  if (colors.size() < sets.size()) throw DimensionError("activation_map: fewer colours than threshold sets");
  const Index n = mesh.n();
  std::vector<int> level(static_cast<std::size_t>(n), -1);
  for (std::size_t s = 0; s < sets.size(); ++s) {
    if (static_cast<Index>(sets[s].size()) != n) throw DimensionError("activation_map: set does not match the mesh");
    for (Index v = 0; v < n; ++v) {
      if (sets[s][v]) level[v] = static_cast<int>(s);
    }
  }
  const int top = 24;
  const Layout l = layout(mesh, width, top);
  Image img(l.width, l.height, kWhite);
  for (std::size_t s = 0; s < sets.size(); ++s) {
    const int x0 = 8 + static_cast<int>(s) * 28;
    img.fill_rect(x0, 6, x0 + 20, 18, colors[s]);
  }
  for (Index t = 0; t < mesh.num_triangles(); ++t) {
    const auto tri = mesh.triangles().row(t);
    raster(mesh, l, t, [&](int x, int y, double b0, double b1, double b2) {
      const int corner = b0 >= b1 && b0 >= b2 ? 0 : (b1 >= b2 ? 1 : 2);
      const int lev = level[tri[corner]];
      img.set(x, y, lev < 0 ? kMeshGray : colors[lev]);
    });
  }
  return img;
}

Image bar_chart(const Matrix& values, int width, int height) {
  Image img(width, height, kWhite);
  const int left = 30, bottom = height - 20, top = 10;
  img.fill_rect(left, top, left + 1, bottom + 1, kAxis);
  img.fill_rect(left, bottom, width - 10, bottom + 1, kAxis);
  if (values.size() == 0) return img;
  const double vmax = std::max(values.maxCoeff(), 1e-300);
  const int groups = static_cast<int>(values.rows()), series = static_cast<int>(values.cols());
  const double gw = static_cast<double>(width - left - 20) / groups;
  const double bw = gw * 0.8 / series;
  for (int g = 0; g < groups; ++g) {
    for (int s = 0; s < series; ++s) {
      const double v = std::max(0.0, values(g, s));
      const int x0 = left + 5 + static_cast<int>(g * gw + s * bw);
      const int h = static_cast<int>(std::lround(v / vmax * (bottom - top)));
      img.fill_rect(x0, bottom - h, x0 + std::max(1, static_cast<int>(bw) - 1), bottom, kSeries[s % kSeries.size()]);
    }
  }
  return img;
}

Image box_plot(const std::vector<std::vector<double>>& samples, int series, int width, int height) {
  Image img(width, height, kWhite);
  const int left = 30, bottom = height - 20, top = 10;
  img.fill_rect(left, top, left + 1, bottom + 1, kAxis);
  img.fill_rect(left, bottom, width - 10, bottom + 1, kAxis);
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& s : samples) {
    for (double v : s) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (!(hi > lo)) {
    lo = std::isfinite(lo) ? lo - 1.0 : 0.0;
    hi = lo + 2.0;
  }
  auto ypix = [&](double v) { return bottom - static_cast<int>(std::lround((v - lo) / (hi - lo) * (bottom - top))); };
  const double bw = static_cast<double>(width - left - 20) / std::max<std::size_t>(1, samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].empty()) continue;
    const Rgb c = kSeries[(i % static_cast<std::size_t>(std::max(1, series))) % kSeries.size()];
    const int x0 = left + 5 + static_cast<int>(i * bw), x1 = x0 + std::max(3, static_cast<int>(bw * 0.7));
    const int xm = (x0 + x1) / 2;
    const int q1 = ypix(quantile(samples[i], 0.25)), q3 = ypix(quantile(samples[i], 0.75));
    const int med = ypix(quantile(samples[i], 0.5));
    const int mn = ypix(quantile(samples[i], 0.0)), mx = ypix(quantile(samples[i], 1.0));
    img.fill_rect(xm, mx, xm + 1, mn + 1, kAxis);
    img.fill_rect(x0, q3, x1, q1 + 1, c);
    img.fill_rect(x0, med, x1, med + 1, kAxis);
  }
  return img;
}

}  // namespace sbglm
