#include "oseki/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace oseki::fem {

MatrixXd Grid1D::interior_points() const {
    MatrixXd pts(interior, 1);
    for (Index i = 0; i < interior; ++i) pts(i, 0) = node(i + 1);
    return pts;
}

Index Mesh2D::interior_count() const {
    return static_cast<Index>(std::count(boundary.begin(), boundary.end(), false));
}

std::vector<int> Mesh2D::interior_index() const {
    std::vector<int> idx(boundary.size(), -1);
    int next = 0;
    for (std::size_t i = 0; i < boundary.size(); ++i) {
        if (!boundary[i]) idx[i] = next++;
    }
    return idx;
}

MatrixXd Mesh2D::interior_points() const {
    MatrixXd pts(interior_count(), 2);
    Index row = 0;
    for (Index i = 0; i < node_count(); ++i) {
        if (!boundary[static_cast<std::size_t>(i)]) pts.row(row++) = nodes.row(i);
    }
    return pts;
}

double Mesh2D::triangle_area(std::size_t t) const {
    const auto &tri = triangles[t];
    const Eigen::Vector2d a = nodes.row(tri[0]).transpose();
    const Eigen::Vector2d b = nodes.row(tri[1]).transpose();
    const Eigen::Vector2d c = nodes.row(tri[2]).transpose();
    return 0.5 * ((b.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (b.y() - a.y()));
}

namespace {

double orient(const Eigen::Vector2d &a, const Eigen::Vector2d &b, const Eigen::Vector2d &c) {
    return (b.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (b.y() - a.y());
}

// > 0 when d lies strictly inside the circumcircle of the ccw triangle abc.
double incircle(const Eigen::Vector2d &a, const Eigen::Vector2d &b, const Eigen::Vector2d &c,
                const Eigen::Vector2d &d) {
    const double adx = a.x() - d.x(), ady = a.y() - d.y();
    const double bdx = b.x() - d.x(), bdy = b.y() - d.y();
    const double cdx = c.x() - d.x(), cdy = c.y() - d.y();
    const double ad = adx * adx + ady * ady;
    const double bd = bdx * bdx + bdy * bdy;
    const double cd = cdx * cdx + cdy * cdy;
    return adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx);
}

} // namespace

std::vector<std::array<int, 3>> delaunay(const MatrixXd &points) {
    require(points.cols() == 2 && points.rows() >= 3, "delaunay: need at least three 2D points");
    const int n = static_cast<int>(points.rows());

    const Eigen::Vector2d lo = points.colwise().minCoeff().transpose();
    const Eigen::Vector2d hi = points.colwise().maxCoeff().transpose();
    const double span = std::max((hi - lo).maxCoeff(), 1e-12);
    const Eigen::Vector2d mid = 0.5 * (lo + hi);

    std::vector<Eigen::Vector2d> pts(static_cast<std::size_t>(n) + 3);
    for (int i = 0; i < n; ++i) pts[static_cast<std::size_t>(i)] = points.row(i).transpose();
    const double big = 1e3 * span;
    pts[static_cast<std::size_t>(n)] = mid + Eigen::Vector2d(-big, -big);
    pts[static_cast<std::size_t>(n) + 1] = mid + Eigen::Vector2d(big, -big);
    pts[static_cast<std::size_t>(n) + 2] = mid + Eigen::Vector2d(0.0, big);

    std::vector<std::array<int, 3>> tris{{n, n + 1, n + 2}};
    // Relative tolerance for the in-circle predicate on the unit of span^4.
    const double eps = 1e-12 * span * span * span * span;

    for (int p = 0; p < n; ++p) {
        const auto &pt = pts[static_cast<std::size_t>(p)];
        std::vector<std::array<int, 3>> keep;
        std::map<std::pair<int, int>, int> edge_count;
        std::vector<std::pair<int, int>> edges;
        for (const auto &t : tris) {
            if (incircle(pts[t[0]], pts[t[1]], pts[t[2]], pt) > eps) {
                for (int e = 0; e < 3; ++e) {
                    const int a = t[e], b = t[(e + 1) % 3];
                    const auto key = std::minmax(a, b);
                    if (edge_count[{key.first, key.second}]++ == 0) edges.emplace_back(a, b);
                }
            } else {
                keep.push_back(t);
            }
        }
        for (const auto &[a, b] : edges) {
            const auto key = std::minmax(a, b);
            if (edge_count[{key.first, key.second}] != 1) continue;
            std::array<int, 3> t{a, b, p};
            if (orient(pts[a], pts[b], pt) < 0.0) std::swap(t[0], t[1]);
            keep.push_back(t);
        }
        tris = std::move(keep);
    }

    std::vector<std::array<int, 3>> out;
    for (const auto &t : tris) {
        if (t[0] < n && t[1] < n && t[2] < n) out.push_back(t);
    }
    std::sort(out.begin(), out.end());
    return out;
}

Mesh2D structured_unit_square(int cells) {
    require(cells >= 2, "structured_unit_square: need at least 2 cells per side");
    const int m = cells + 1;
    // Interior nodes first, then boundary nodes, each in row-major order.
    std::vector<int> id(static_cast<std::size_t>(m * m), -1);
    Mesh2D mesh;
    mesh.nodes.resize(m * m, 2);
    mesh.boundary.assign(static_cast<std::size_t>(m * m), false);
    int next = 0;
    for (int pass = 0; pass < 2; ++pass) {
        for (int j = 0; j < m; ++j) {
            for (int i = 0; i < m; ++i) {
                const bool on_boundary = i == 0 || j == 0 || i == cells || j == cells;
                if (on_boundary != (pass == 1)) continue;
                id[static_cast<std::size_t>(j * m + i)] = next;
                mesh.nodes(next, 0) = static_cast<double>(i) / cells;
                mesh.nodes(next, 1) = static_cast<double>(j) / cells;
                mesh.boundary[static_cast<std::size_t>(next)] = on_boundary;
                ++next;
            }
        }
    }
    auto at = [&](int i, int j) { return id[static_cast<std::size_t>(j * m + i)]; };
    for (int j = 0; j < cells; ++j) {
        for (int i = 0; i < cells; ++i) {
            mesh.triangles.push_back({at(i, j), at(i + 1, j), at(i + 1, j + 1)});
            mesh.triangles.push_back({at(i, j), at(i + 1, j + 1), at(i, j + 1)});
        }
    }
    return mesh;
}

Mesh2D default_mesh_2d() {
    std::vector<Eigen::Vector2d> interior;
    for (int row = 1; row <= 10; ++row) {
        const double y = row / 11.0;
        if (row % 2 == 1) {
            for (int i = 1; i <= 10; ++i) interior.emplace_back((i - 0.5) / 10.0, y);
        } else {
            for (int i = 1; i <= 9; ++i) interior.emplace_back(i / 10.0, y);
        }
    }
    std::vector<Eigen::Vector2d> boundary;
    for (int i = 0; i < 10; ++i) boundary.emplace_back(i / 10.0, 0.0);       // bottom
    for (int i = 0; i < 10; ++i) boundary.emplace_back(1.0, i / 10.0);       // right
    for (int i = 10; i > 0; --i) boundary.emplace_back(i / 10.0, 1.0);       // top
    for (int i = 10; i > 0; --i) boundary.emplace_back(0.0, i / 10.0);       // left

    Mesh2D mesh;
    const Index n = static_cast<Index>(interior.size() + boundary.size());
    mesh.nodes.resize(n, 2);
    Index row = 0;
    for (const auto &p : interior) mesh.nodes.row(row++) = p.transpose();
    for (const auto &p : boundary) mesh.nodes.row(row++) = p.transpose();
    mesh.boundary.assign(interior.size(), false);
    mesh.boundary.resize(static_cast<std::size_t>(n), true);
    mesh.triangles = delaunay(mesh.nodes);
    return mesh;
}

Mesh2D refine(const Mesh2D &mesh) {
    Mesh2D out;
    std::vector<Eigen::Vector2d> pts;
    std::vector<bool> flags = mesh.boundary;
    for (Index i = 0; i < mesh.node_count(); ++i) pts.emplace_back(mesh.nodes.row(i).transpose());

    std::map<std::pair<int, int>, int> midpoint;
    std::map<std::pair<int, int>, int> edge_uses;
    for (const auto &t : mesh.triangles) {
        for (int e = 0; e < 3; ++e) {
            const auto key = std::minmax(t[e], t[(e + 1) % 3]);
            ++edge_uses[{key.first, key.second}];
        }
    }
    auto mid = [&](int a, int b) {
        const auto key = std::minmax(a, b);
        const std::pair<int, int> k{key.first, key.second};
        auto it = midpoint.find(k);
        if (it != midpoint.end()) return it->second;
        const int id = static_cast<int>(pts.size());
        pts.push_back(0.5 * (pts[static_cast<std::size_t>(a)] + pts[static_cast<std::size_t>(b)]));
        // an edge used by one triangle lies on the boundary
        flags.push_back(edge_uses[k] == 1);
        midpoint.emplace(k, id);
        return id;
    };
    for (const auto &t : mesh.triangles) {
        const int ab = mid(t[0], t[1]), bc = mid(t[1], t[2]), ca = mid(t[2], t[0]);
        out.triangles.push_back({t[0], ab, ca});
        out.triangles.push_back({ab, t[1], bc});
        out.triangles.push_back({ca, bc, t[2]});
        out.triangles.push_back({ab, bc, ca});
    }
    out.nodes.resize(static_cast<Index>(pts.size()), 2);
    for (std::size_t i = 0; i < pts.size(); ++i) out.nodes.row(static_cast<Index>(i)) = pts[i].transpose();
    out.boundary = std::move(flags);
    return out;
}

void validate_unit_square_mesh(const Mesh2D &mesh) {
    require(mesh.nodes.cols() == 2, "mesh: nodes must be 2D");
    require(mesh.boundary.size() == static_cast<std::size_t>(mesh.node_count()),
            "mesh: one boundary flag per node required");
    std::vector<int> incidence(static_cast<std::size_t>(mesh.node_count()), 0);
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        for (int v : mesh.triangles[t]) {
            require(v >= 0 && v < mesh.node_count(), "mesh: triangle references unknown node");
            ++incidence[static_cast<std::size_t>(v)];
        }
        require(mesh.triangle_area(t) > 0.0, "mesh: triangle with non-positive area");
    }
    constexpr double tol = 1e-12;
    for (Index i = 0; i < mesh.node_count(); ++i) {
        const double x = mesh.nodes(i, 0), y = mesh.nodes(i, 1);
        const bool on_edge = std::abs(x) < tol || std::abs(y) < tol || std::abs(x - 1) < tol ||
                             std::abs(y - 1) < tol;
        if (mesh.boundary[static_cast<std::size_t>(i)]) {
            require(on_edge, "mesh: boundary node off the domain boundary");
        } else {
            require(!on_edge && x > 0 && x < 1 && y > 0 && y < 1, "mesh: interior node outside domain");
            require(incidence[static_cast<std::size_t>(i)] >= 3,
                    "mesh: interior node in fewer than three triangles");
        }
    }
    double area = 0.0;
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) area += mesh.triangle_area(t);
    require(std::abs(area - 1.0) < 1e-10, "mesh: triangles do not cover the unit square");
}

void write_mesh(std::ostream &out, const Mesh2D &mesh) {
    out << "# oseki P1 triangle mesh, format version 1\n";
    out << "nodes " << mesh.node_count() << "\n";
    out << std::setprecision(17);
    for (Index i = 0; i < mesh.node_count(); ++i) {
        out << i << ' ' << mesh.nodes(i, 0) << ' ' << mesh.nodes(i, 1) << ' '
            << (mesh.boundary[static_cast<std::size_t>(i)] ? 1 : 0) << "\n";
    }
    out << "triangles " << mesh.triangles.size() << "\n";
    for (const auto &t : mesh.triangles) out << t[0] << ' ' << t[1] << ' ' << t[2] << "\n";
}

namespace {

bool next_content_line(std::istream &in, std::string &line) {
    while (std::getline(in, line)) {
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        return true;
    }
    return false;
}

} // namespace

Mesh2D read_mesh(std::istream &in) {
    std::string line, tag;
    Mesh2D mesh;
    require(next_content_line(in, line), "mesh: missing node header");
    std::istringstream header(line);
    Index n = 0;
    header >> tag >> n;
    require(header && tag == "nodes" && n > 0, "mesh: malformed node header");
    mesh.nodes.resize(n, 2);
    mesh.boundary.assign(static_cast<std::size_t>(n), false);
    for (Index i = 0; i < n; ++i) {
        require(next_content_line(in, line), "mesh: truncated node list");
        std::istringstream row(line);
        Index idx = -1;
        int flag = 0;
        row >> idx >> mesh.nodes(i, 0) >> mesh.nodes(i, 1) >> flag;
        require(row && idx == i && (flag == 0 || flag == 1), "mesh: malformed node line: " + line);
        mesh.boundary[static_cast<std::size_t>(i)] = flag == 1;
    }
    require(next_content_line(in, line), "mesh: missing triangle header");
    std::istringstream theader(line);
    std::size_t t = 0;
    theader >> tag >> t;
    require(theader && tag == "triangles" && t > 0, "mesh: malformed triangle header");
    for (std::size_t k = 0; k < t; ++k) {
        require(next_content_line(in, line), "mesh: truncated triangle list");
        std::istringstream row(line);
        std::array<int, 3> tri{};
        row >> tri[0] >> tri[1] >> tri[2];
        require(static_cast<bool>(row), "mesh: malformed triangle line: " + line);
        for (int v : tri) require(v >= 0 && v < n, "mesh: triangle references unknown node");
        mesh.triangles.push_back(tri);
    }
    return mesh;
}

Mesh2D read_mesh_file(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open mesh file: " + path);
    return read_mesh(in);
}

MatrixXd random_unit_square_points(Index count, std::uint64_t seed) {
    Rng rng(seed);
    MatrixXd pts(count, 2);
    for (Index i = 0; i < count; ++i) {
        pts(i, 0) = rng.uniform();
        pts(i, 1) = rng.uniform();
    }
    return pts;
}

void write_points(std::ostream &out, const MatrixXd &points) {
    out << std::setprecision(17);
    for (Index i = 0; i < points.rows(); ++i) {
        for (Index d = 0; d < points.cols(); ++d) out << (d ? " " : "") << points(i, d);
        out << "\n";
    }
}

MatrixXd read_points(std::istream &in, Index dim) {
    std::vector<double> values;
    std::string line;
    Index rows = 0;
    while (next_content_line(in, line)) {
        std::istringstream row(line);
        for (Index d = 0; d < dim; ++d) {
            double v = 0.0;
            row >> v;
            require(static_cast<bool>(row), "points: malformed line: " + line);
            values.push_back(v);
        }
        ++rows;
    }
    MatrixXd pts(rows, dim);
    for (Index i = 0; i < rows; ++i)
        for (Index d = 0; d < dim; ++d) pts(i, d) = values[static_cast<std::size_t>(i * dim + d)];
    return pts;
}

MatrixXd read_points_file(const std::string &path, Index dim) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open points file: " + path);
    return read_points(in, dim);
}

} // namespace oseki::fem
