#include "resdepth/camera.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace resdepth {

namespace {

constexpr double kDeg = M_PI / 180.0;

Eigen::Vector2d lean_from_angles(double azimuth_deg, double off_nadir_deg) {
  const double t = std::tan(off_nadir_deg * kDeg);
  return {t * std::sin(azimuth_deg * kDeg), t * std::cos(azimuth_deg * kDeg)};
}

Eigen::Matrix2d frame_rotation(double deg) {
  const double c = std::cos(deg * kDeg), s = std::sin(deg * kDeg);
  Eigen::Matrix2d r;
  r << c, s, -s, c;
  return r;
}

}  // namespace

Eigen::Vector3d AffineCamera::ray_direction() const {
  Eigen::Vector3d n = A.row(0).transpose().cross(A.row(1).transpose());
  const double len = n.norm();
  if (!(len > 0.0)) throw std::invalid_argument("AffineCamera: rank(A) < 2");
  n /= len;
  if (n.z() < 0.0) n = -n;
  return n;
}

Eigen::Vector2d AffineCamera::lean() const {
  const Eigen::Matrix2d axy = A.leftCols<2>();
  return -axy.inverse() * A.col(2);
}

Eigen::Vector2d AffineCamera::ground_point(double u, double v) const {
  const Eigen::Matrix2d axy = A.leftCols<2>();
  return axy.inverse() * (Eigen::Vector2d(u, v) - b);
}

double AffineCamera::geometric_off_nadir_deg() const {
  const Eigen::Vector3d d = ray_direction();
  return std::acos(std::clamp(d.z(), -1.0, 1.0)) / kDeg;
}

void AffineCamera::validate() const {
  Eigen::JacobiSVD<Eigen::Matrix<double, 2, 3>> svd(A);
  const auto s = svd.singularValues();
  if (!(s(1) > 1e-12 * std::max(1.0, s(0)))) throw std::invalid_argument("AffineCamera: rank(A) < 2");
  if (std::abs(A.leftCols<2>().determinant()) < 1e-12)
    throw std::invalid_argument("AffineCamera: rays are horizontal");
  if (width < 1 || height < 1) throw std::invalid_argument("AffineCamera: empty image size");
  if (std::abs(sun_direction.norm() - 1.0) > 1e-9)
    throw std::invalid_argument("AffineCamera: sun_direction must be a unit vector");
  if (std::abs(geometric_off_nadir_deg() - off_nadir_deg) > 1e-6)
    throw std::invalid_argument("AffineCamera: off_nadir_deg disagrees with projection matrix");
}

AffineCamera make_affine_camera(double azimuth_deg, double off_nadir_deg, double gsd,
                                const Eigen::Vector2d& origin, int width, int height,
                                double frame_rotation_deg) {
  if (!(gsd > 0.0)) throw std::invalid_argument("make_affine_camera: gsd must be positive");
  if (!(off_nadir_deg >= 0.0 && off_nadir_deg < 89.0))
    throw std::invalid_argument("make_affine_camera: off-nadir must be in [0, 89) degrees");
  const Eigen::Matrix2d r = frame_rotation(frame_rotation_deg);
  const Eigen::Vector2d t = lean_from_angles(azimuth_deg, off_nadir_deg);
  AffineCamera cam;
  cam.A.leftCols<2>() = r / gsd;
  cam.A.col(2) = -r * t / gsd;
  cam.b = -r * origin / gsd - Eigen::Vector2d::Constant(0.5);
  cam.azimuth_deg = azimuth_deg;
  cam.off_nadir_deg = off_nadir_deg;
  cam.width = width;
  cam.height = height;
  return cam;
}

Eigen::Vector3d sun_vector(double azimuth_deg, double elevation_deg) {
  const double ce = std::cos(elevation_deg * kDeg);
  return {ce * std::sin(azimuth_deg * kDeg), ce * std::cos(azimuth_deg * kDeg),
          std::sin(elevation_deg * kDeg)};
}

double intersection_angle_deg(const AffineCamera& a, const AffineCamera& b) {
  const double c = std::clamp(a.ray_direction().dot(b.ray_direction()), -1.0, 1.0);
  return std::acos(c) / kDeg;
}

std::pair<AffineCamera, AffineCamera> rectify_pair(const AffineCamera& a, const AffineCamera& b,
                                                   const GridGeometry& grid, double z_lo,
                                                   double z_hi, double gsd,
                                                   double reference_height) {
  if (!(gsd > 0.0)) throw std::invalid_argument("rectify_pair: gsd must be positive");
  const Eigen::Vector2d ta = a.lean();
  const Eigen::Vector2d tb = b.lean();
  const Eigen::Vector2d dt = tb - ta;
  Eigen::Matrix2d r = Eigen::Matrix2d::Identity();
  if (dt.norm() > 1e-12) {
    const Eigen::Vector2d e = dt.normalized();
    r << e.x(), e.y(), -e.y(), e.x();
  }

  // Bounding box of the scene volume in the rotated ground frame, both views.
  Eigen::Vector2d lo = Eigen::Vector2d::Constant(std::numeric_limits<double>::infinity());
  Eigen::Vector2d hi = -lo;
  const double xs[2] = {grid.origin_x, grid.origin_x + grid.extent_x()};
  const double ys[2] = {grid.origin_y, grid.origin_y + grid.extent_y()};
  for (double x : xs)
    for (double y : ys)
      for (double z : {z_lo, z_hi})
        for (const Eigen::Vector2d& t : {ta, tb}) {
          const Eigen::Vector2d p = r * (Eigen::Vector2d(x, y) - z * t);
          lo = lo.cwiseMin(p);
          hi = hi.cwiseMax(p);
        }
  const int width = static_cast<int>(std::ceil((hi.x() - lo.x()) / gsd));
  const int height = static_cast<int>(std::ceil((hi.y() - lo.y()) / gsd));

  auto rebuild = [&](const AffineCamera& src, const Eigen::Vector2d& t) {
    AffineCamera cam = src;
    cam.A.leftCols<2>() = r / gsd;
    cam.A.col(2) = -r * t / gsd;
    cam.b = -lo / gsd - Eigen::Vector2d::Constant(0.5);
    cam.width = width;
    cam.height = height;
    return cam;
  };
  AffineCamera ra = rebuild(a, ta);
  AffineCamera rb = rebuild(b, tb);
  // Zero disparity at the reference height: u_a - u_b = c * (Z - z_ref).
  const double c = ra.A(0, 2) - rb.A(0, 2);
  rb.b(0) += c * reference_height;
  return {ra, rb};
}

namespace {

nlohmann::json camera_to_json(const AffineCamera& c) {
  nlohmann::json j;
  j["A"] = {{c.A(0, 0), c.A(0, 1), c.A(0, 2)}, {c.A(1, 0), c.A(1, 1), c.A(1, 2)}};
  j["b"] = {c.b(0), c.b(1)};
  j["sun_direction"] = {c.sun_direction(0), c.sun_direction(1), c.sun_direction(2)};
  j["azimuth_deg"] = c.azimuth_deg;
  j["off_nadir_deg"] = c.off_nadir_deg;
  j["timestamp_days"] = c.timestamp_days;
  j["width"] = c.width;
  j["height"] = c.height;
  return j;
}

AffineCamera camera_from_json(const nlohmann::json& j) {
  AffineCamera c;
  for (int r = 0; r < 2; ++r)
    for (int k = 0; k < 3; ++k) c.A(r, k) = j.at("A").at(r).at(k).get<double>();
  for (int r = 0; r < 2; ++r) c.b(r) = j.at("b").at(r).get<double>();
  for (int r = 0; r < 3; ++r) c.sun_direction(r) = j.at("sun_direction").at(r).get<double>();
  c.azimuth_deg = j.at("azimuth_deg").get<double>();
  c.off_nadir_deg = j.at("off_nadir_deg").get<double>();
  c.timestamp_days = j.at("timestamp_days").get<double>();
  c.width = j.at("width").get<int>();
  c.height = j.at("height").get<int>();
  return c;
}

}  // namespace

std::string cameras_to_json(const std::vector<AffineCamera>& cams) {
  nlohmann::json j;
  j["cameras"] = nlohmann::json::array();
  for (const auto& c : cams) j["cameras"].push_back(camera_to_json(c));
  return j.dump(2);
}

std::vector<AffineCamera> cameras_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  std::vector<AffineCamera> cams;
  for (const auto& c : j.at("cameras")) cams.push_back(camera_from_json(c));
  return cams;
}

void write_cameras(const std::string& path, const std::vector<AffineCamera>& cams) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << cameras_to_json(cams) << "\n";
}

std::vector<AffineCamera> read_cameras(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return cameras_from_json(ss.str());
}

}  // namespace resdepth
