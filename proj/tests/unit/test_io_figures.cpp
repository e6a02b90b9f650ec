#include <doctest.h>

#include <sbglm/error.hpp>
#include <sbglm/figures.hpp>
#include <sbglm/io.hpp>
#include <sbglm/simulator.hpp>

#include <filesystem>
#include <set>
#include <sstream>

using namespace sbglm;

namespace {

std::set<std::uint32_t> colours(const Image& img, int y0 = 0) {
  std::set<std::uint32_t> out;
  for (int y = y0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const Rgb c = img.at(x, y);
      out.insert((std::uint32_t(c.r) << 16) | (std::uint32_t(c.g) << 8) | c.b);
    }
  }
  return out;
}

std::uint32_t pack(Rgb c) { return (std::uint32_t(c.r) << 16) | (std::uint32_t(c.g) << 8) | c.b; }

}  // namespace

TEST_CASE("csv: round trip preserves every bit") {
  Matrix m = Matrix::Random(7, 3);
  m(0, 0) = 1e-300;
  m(1, 1) = -123456789.123456789;
  std::stringstream ss;
  io::write_csv(ss, m, {"a", "b", "c"});
  std::vector<std::string> header;
  const Matrix back = io::read_csv(ss, &header);
  CHECK(header == std::vector<std::string>{"a", "b", "c"});
  CHECK((back.array() == m.array()).all());

  std::stringstream plain;
  io::write_csv(plain, Matrix::Ones(1, 2));
  CHECK(plain.str().rfind("c0,c1\n", 0) == 0);
}

TEST_CASE("csv: malformed input reports the line") {
  std::stringstream ragged("x,y\n1,2\n3\n");
  try {
    io::read_csv(ragged);
    FAIL("expected an error");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("3") != std::string::npos);
  }
  std::stringstream junk("x\nabc\n");
  CHECK_THROWS_AS(io::read_csv(junk), InputError);
  CHECK_THROWS(io::read_csv(std::string("/nonexistent/file.csv")));
}

TEST_CASE("design files: shared and per-location layouts") {
  const auto dir = std::filesystem::temp_directory_path() / "sbglm_io_test";
  std::filesystem::create_directories(dir);
  const Matrix shared = Matrix::Random(10, 2);
  io::write_csv((dir / "shared.csv").string(), shared);
  const Design a = io::read_design((dir / "shared.csv").string(), 2, 3);
  CHECK(a.is_shared());
  CHECK((a.at(1) - shared).cwiseAbs().maxCoeff() == 0.0);

  const Matrix per = Matrix::Random(10, 6);
  io::write_csv((dir / "per.csv").string(), per);
  const Design b = io::read_design((dir / "per.csv").string(), 2, 3);
  CHECK_FALSE(b.is_shared());
  CHECK((b.at(2) - per.middleCols(4, 2)).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(io::read_design((dir / "per.csv").string(), 4, 3), InputError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("theta json round trip") {
  const Hyperparameters t{{0.25, 3.0}, {0.01, 0.5}, 1.25};
  const std::string js = io::theta_to_json(t);
  CHECK(js.find("tau") != std::string::npos);
  const Hyperparameters u = io::theta_from_json(js);
  CHECK(u.kappa2 == t.kappa2);
  CHECK(u.phi == t.phi);
  CHECK(u.sigma2 == t.sigma2);
  CHECK_THROWS(io::theta_from_json("{\"kappa2\": [1]}"));
}

TEST_CASE("activation map: empty sets draw only the legend") {
  const TriangularMesh mesh = grid_mesh(10, 10, 2.0);
  const std::vector<std::vector<bool>> none(3, std::vector<bool>(mesh.n(), false));
  const Image img = activation_map(mesh, none);
  const auto all = colours(img);
  for (const Rgb& c : kActivationColors) CHECK(all.count(pack(c)) == 1);
  // Below the legend strip no activation colour appears.
  const auto body = colours(img, img.height() / 8);
  for (const Rgb& c : kActivationColors) CHECK(body.count(pack(c)) == 0);

  std::vector<std::vector<bool>> some = none;
  for (Index v = 0; v < 50; ++v) some[0][v] = true;
  for (Index v = 0; v < 20; ++v) some[2][v] = true;
  const auto lit = colours(activation_map(mesh, some), img.height() / 8);
  CHECK(lit.count(pack(kActivationColors[0])) == 1);
  CHECK(lit.count(pack(kActivationColors[2])) == 1);
  CHECK(lit.count(pack(kActivationColors[1])) == 0);
}

TEST_CASE("heatmaps: identical fields give identical bytes") {
  const TriangularMesh mesh = grid_mesh(12, 9, 2.0);
  const Vector truth = Vector::LinSpaced(mesh.n(), -2.0, 2.0);
  const Vector estimate = truth;
  const std::string a = field_heatmap(mesh, truth, 2.0).ppm();
  const std::string b = field_heatmap(mesh, estimate, 2.0).ppm();
  CHECK(a == b);
  CHECK(a.rfind("P6\n", 0) == 0);
  const std::string c = field_heatmap(mesh, truth.reverse(), 2.0).ppm();
  CHECK(a != c);
  const TriangularMesh sphere = icosphere(2, 20.0);
  const Vector z = sphere.vertices().col(2);
  CHECK(field_heatmap(sphere, z).ppm() == field_heatmap(sphere, z).ppm());
}

TEST_CASE("palette and charts") {
  CHECK(diverging(0.0, 1.0) == Rgb{255, 255, 255});
  CHECK(diverging(1.0, 1.0).r > diverging(1.0, 1.0).b);
  CHECK(diverging(-1.0, 1.0).b > diverging(-1.0, 1.0).r);
  CHECK(diverging(5.0, 1.0) == diverging(1.0, 1.0));
  Matrix v(3, 2);
  v << 1, 2, 3, 4, 5, 6;
  const Image bars = bar_chart(v);
  CHECK(bars.width() == 640);
  CHECK(bars.ppm() == bar_chart(v).ppm());
  CHECK(colours(bars).size() > 2);
  const Image box = box_plot({{1, 2, 3, 4}, {2, 3, 4, 9}, {0.5}, {}});
  CHECK(box.ppm() == box_plot({{1, 2, 3, 4}, {2, 3, 4, 9}, {0.5}, {}}).ppm());
  Image img(4, 3);
  img.set(1, 2, Rgb{1, 2, 3});
  CHECK(img.at(1, 2) == Rgb{1, 2, 3});
  CHECK(img.ppm().size() == std::string("P6\n4 3\n255\n").size() + 36);
}
