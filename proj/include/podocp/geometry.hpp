#pragma once

#include "podocp/common.hpp"

#include <array>
#include <filesystem>
#include <iosfwd>
#include <vector>

/// Bifurcation template, boundary tags and the piecewise-affine stretch.
///
/// Reference template (all lengths dimensionless):
///   - channel        [0, 4] x [0, 2], inlet at x1 = 0
///   - crotch point   X = (4 + sqrt(2) - 1, 1)
///   - junction       triangles (M, D, X) and (M, A, X) with A = (4, 0),
///                    M = (4, 1), D = (4, 2)
///   - upper branch   parallelogram spanned by X -> D and 3 (1, 1)/sqrt(2)
///   - lower branch   parallelogram spanned by X -> A and 3 (1, -1)/sqrt(2)
///   - control        the two branch end segments (length sqrt(4 - 2 sqrt(2)))
///   - observation    vertical line x1 = 2 across the channel
/// Each branch has perpendicular width 1 and axis length 3.
namespace podocp::geometry {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

enum class BoundaryTag : int { Inlet = 0, Wall = 1, Control = 2 };

std::string_view to_string(BoundaryTag tag);

struct Facet {
  std::array<int, 2> v;
  BoundaryTag tag;
};

/// Subdomain labels. Only the channel is stretched by mu2.
enum Region : int { Channel = 0, Junction = 1, UpperBranch = 2, LowerBranch = 3 };
inline constexpr int kRegionCount = 4;

struct BifurcationTemplate {
  static constexpr double channel_length = 4.0;
  static constexpr double channel_height = 2.0;
  static constexpr double branch_length = 3.0;
  static constexpr double branch_width = 1.0;
  static constexpr double observation_x = 2.0;
};

struct Mesh {
  std::vector<Point> vertices;
  std::vector<std::array<int, 3>> triangles;
  std::vector<int> subdomain;
  std::vector<Facet> boundary_facets;
  /// Interior facets of the observation line; not part of the boundary.
  std::vector<std::array<int, 2>> observation_facets;
  /// Maximum edge length.
  double h = 0.0;

  double signed_area(int t) const;
  double area() const;
  double min_angle_degrees() const;
  double tagged_length(BoundaryTag tag) const;
  double observation_length() const;
  bool has_tag(BoundaryTag tag) const;
};

double max_edge_length(const Mesh& mesh);

/// Elements across the branch width for a target size h (ceil(1/h)).
int resolution_for(double h);

/// Structured triangulation of the bifurcation template.
/// Throws InvalidArgument for h <= 0 and MeshResolutionError when a branch
/// width would hold fewer than two elements (h > 0.5).
Mesh build_bifurcation_mesh(double h);

/// Union-jack triangulation of a rectangle with nx x ny cells. The left side
/// is tagged Inlet, the right side Control, top and bottom Wall.
Mesh build_rectangle_mesh(double x0, double x1, double y0, double y1, int nx, int ny);

struct AffinePiece {
  Eigen::Matrix2d linear = Eigen::Matrix2d::Identity();
  Eigen::Vector2d translation = Eigen::Vector2d::Zero();
};

/// Piecewise-affine map from the reference template to Omega(mu2).
struct GeometricMap {
  double mu2 = 1.0;
  std::array<AffinePiece, kRegionCount> pieces;

  Point apply(const Point& p, int region) const;
  double jacobian_determinant(int region) const;
  Eigen::Matrix2d inverse_transpose(int region) const;
};

/// Stretches the channel length by mu2 and translates everything downstream.
/// Values outside [1, 2] are permitted but reported through warn().
GeometricMap stretch_map(double mu2);

/// Multipliers of the reference-domain operator pieces under the stretch.
struct GeometryFactors {
  double mass_stretched = 1.0;
  double stiffness_xx_stretched = 1.0;
  double stiffness_yy_stretched = 1.0;
  double divergence_x_stretched = 1.0;
  double divergence_y_stretched = 1.0;
  double rest = 1.0;

  std::vector<double> as_vector() const;
};

GeometryFactors affine_geometry_factors(double mu2);

/// Moves every vertex with the map of the region it belongs to.
Mesh deform(const Mesh& mesh, const GeometricMap& map);

/// Legacy ASCII VTK unstructured grid: triangles plus tagged line cells.
void write_vtk(const Mesh& mesh, const std::filesystem::path& path);

/// Plain-text dump used by fixtures; read_text restores it exactly.
void write_text(const Mesh& mesh, std::ostream& out);
Mesh read_text(std::istream& in);

}  // namespace podocp::geometry
