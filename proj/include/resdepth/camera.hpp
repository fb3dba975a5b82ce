#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "resdepth/raster.hpp"

namespace resdepth {

/// Parallel-projection sensor: pixel = A * (X, Y, Z) + b.
///
/// Pixel coordinates follow the raster convention (integer values are pixel
/// centers). The one-dimensional null space of A is the viewing-ray
/// direction, identical for every pixel.
struct AffineCamera {
  Eigen::Matrix<double, 2, 3> A = Eigen::Matrix<double, 2, 3>::Zero();
  Eigen::Vector2d b = Eigen::Vector2d::Zero();
  /// Unit vector pointing from the scene toward the sun.
  Eigen::Vector3d sun_direction = Eigen::Vector3d::UnitZ();
  double azimuth_deg = 0.0;
  double off_nadir_deg = 0.0;
  double timestamp_days = 0.0;
  int width = 0;
  int height = 0;

  Eigen::Vector2d project(const Eigen::Vector3d& p) const { return A * p + b; }

  /// Unit ray direction pointing up toward the sensor (positive z).
  Eigen::Vector3d ray_direction() const;

  /// Horizontal ground displacement per meter of height: a point (X, Y, Z)
  /// images like the ground point (X, Y) - Z * lean().
  Eigen::Vector2d lean() const;

  /// Ground point (Z = 0) seen at pixel (u, v).
  Eigen::Vector2d ground_point(double u, double v) const;

  /// Angle between the viewing ray and the vertical, computed from A.
  double geometric_off_nadir_deg() const;

  /// Throws when rank(A) < 2, the image size is empty, the sun vector is not
  /// unit length or the stored off-nadir angle disagrees with A.
  void validate() const;
};

/// Camera whose ray has the given azimuth (clockwise from north) and
/// off-nadir angle. The image frame is the ground plane rotated by
/// frame_rotation_deg, sampled at gsd meters per pixel, with pixel (0, 0)
/// centered on ground point origin + gsd/2.
AffineCamera make_affine_camera(double azimuth_deg, double off_nadir_deg, double gsd,
                                const Eigen::Vector2d& origin, int width, int height,
                                double frame_rotation_deg = 0.0);

/// Unit vector toward the sun from its azimuth and elevation angles.
Eigen::Vector3d sun_vector(double azimuth_deg, double elevation_deg);

/// Angle between the two viewing rays, in degrees.
double intersection_angle_deg(const AffineCamera& a, const AffineCamera& b);

/// Re-expresses two cameras in a shared image frame whose u axis is the
/// parallax direction, so that corresponding points differ only in u. The
/// frame covers the grid extent for heights in [z_lo, z_hi]. Viewing
/// directions, sun and metadata are preserved. For identical rays the frame
/// is north-up.
std::pair<AffineCamera, AffineCamera> rectify_pair(const AffineCamera& a, const AffineCamera& b,
                                                   const GridGeometry& grid, double z_lo,
                                                   double z_hi, double gsd,
                                                   double reference_height = 0.0);

std::string cameras_to_json(const std::vector<AffineCamera>& cams);
std::vector<AffineCamera> cameras_from_json(const std::string& text);
void write_cameras(const std::string& path, const std::vector<AffineCamera>& cams);
std::vector<AffineCamera> read_cameras(const std::string& path);

}  // namespace resdepth
