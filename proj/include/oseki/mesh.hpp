#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include "oseki/core.hpp"

namespace oseki::fem {

/// Uniform grid on (0, length) with `interior` unknowns; boundary nodes 0 and
/// interior + 1 carry homogeneous Dirichlet values.
struct Grid1D {
    Index interior = 64;
    double length = 3.14159265358979323846;

    double h() const { return length / static_cast<double>(interior + 1); }
    double node(Index i) const { return static_cast<double>(i) * h(); } // i in [0, interior+1]
    /// Interior node coordinates, shape interior x 1.
    MatrixXd interior_points() const;
};

/// Triangulation of a planar domain with P1 nodes.
struct Mesh2D {
    MatrixXd nodes;                          // N x 2
    std::vector<bool> boundary;              // N flags
    std::vector<std::array<int, 3>> triangles; // counter-clockwise node triples

    Index node_count() const { return nodes.rows(); }
    Index interior_count() const;
    Index boundary_count() const { return node_count() - interior_count(); }
    /// interior_index()[global] = position among interior nodes, or -1.
    std::vector<int> interior_index() const;
    /// Coordinates of interior nodes in global order, shape n_interior x 2.
    MatrixXd interior_points() const;
    double triangle_area(std::size_t t) const;
};

/// Bowyer-Watson Delaunay triangulation of a point set; returns triangles
/// covering the convex hull in counter-clockwise orientation.
std::vector<std::array<int, 3>> delaunay(const MatrixXd &points);

/// cells x cells squares of (0,1)^2, each split along the (0,0)-(1,1)
/// diagonal direction; symmetric under (x, y) -> (y, x).
Mesh2D structured_unit_square(int cells);

/**
 * The fixed experiment mesh of (0,1)^2: 40 boundary nodes at spacing 0.1 and
 * 95 interior nodes in ten staggered rows (alternately 10 and 9 nodes),
 * Delaunay triangulated. Interior nodes come first.
 */
Mesh2D default_mesh_2d();

/// Uniform red refinement (every triangle split into four).
Mesh2D refine(const Mesh2D &mesh);

/// Structural checks: positive areas, boundary nodes on the unit square
/// boundary, interior nodes in at least three triangles. Throws on failure.
void validate_unit_square_mesh(const Mesh2D &mesh);

/**
 * Plain-text mesh format:
 *
 *     # comment lines
 *     nodes <N>
 *     <index> <x> <y> <boundary 0|1>     (N lines)
 *     triangles <T>
 *     <a> <b> <c>                          (T lines, 0-based node indices)
 */
void write_mesh(std::ostream &out, const Mesh2D &mesh);
Mesh2D read_mesh(std::istream &in);
Mesh2D read_mesh_file(const std::string &path);

/// Uniform random points in (0,1)^2, `count` of them, from `seed`.
MatrixXd random_unit_square_points(Index count, std::uint64_t seed);

/// One point per line: "x y" (2D) or "x" (1D); '#' starts a comment line.
void write_points(std::ostream &out, const MatrixXd &points);
MatrixXd read_points(std::istream &in, Index dim);
MatrixXd read_points_file(const std::string &path, Index dim);

} // namespace oseki::fem
