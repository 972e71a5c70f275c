#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace calderon {

using Complex = std::complex<double>;

inline constexpr int kMaxDim = 3;

/// Lattice coordinate in units of h/2 along each axis. Unused axes stay 0.
using Coord = std::array<int, kMaxDim>;

/// Physical position; unused axes stay 0.
using Point = std::array<double, kMaxDim>;

/// Cartesian grid of the unit cube with N interior points per axis.
struct GridSpec {
    int d = 0;
    int N = 0;

    [[nodiscard]] double h() const { return 1.0 / static_cast<double>(N + 1); }
    /// Largest lattice coordinate (the face x_k = 1) in half-steps.
    [[nodiscard]] int top() const { return 2 * (N + 1); }

    friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

/// Throws std::invalid_argument for d outside [1,3] or N < 2.
GridSpec build_grid(int d, int N);

enum class SetKind {
    Primal,         // interior points
    Closure,        // interior plus all face points
    Lattice,        // full Cartesian grid including edges and corners
    Staggered,      // one or two axes shifted by h/2
    AxisClosure,    // interior extended by one point along a single axis
    Face,           // one face, or both faces of an axis
    Boundary,       // union of all faces
    Window,         // box-shaped subset of one face
    Derived         // anything produced by set algebra
};

std::string to_string(SetKind kind);

/// Sorted, duplicate-free set of lattice nodes with O(1) membership lookup.
class NodeSet {
public:
    NodeSet(GridSpec spec, SetKind kind, std::vector<Coord> nodes,
            std::vector<int> axes = {}, int sign = 0);

    [[nodiscard]] const GridSpec& spec() const { return spec_; }
    [[nodiscard]] SetKind kind() const { return kind_; }
    [[nodiscard]] std::span<const int> axes() const { return axes_; }
    [[nodiscard]] int sign() const { return sign_; }
    [[nodiscard]] std::span<const Coord> nodes() const { return nodes_; }
    [[nodiscard]] std::size_t size() const { return nodes_.size(); }
    [[nodiscard]] bool empty() const { return nodes_.empty(); }
    [[nodiscard]] const Coord& node(std::size_t i) const { return nodes_[i]; }

    [[nodiscard]] std::optional<std::size_t> find(const Coord& c) const;
    [[nodiscard]] bool contains(const Coord& c) const { return find(c).has_value(); }

    /// Surface sets integrate with weight h^{d-1}, everything else with h^d.
    [[nodiscard]] bool is_surface() const;
    [[nodiscard]] double weight() const;

    [[nodiscard]] Point position(std::size_t i) const;

    /// Structural equality: same grid and same node list (kind tags ignored).
    [[nodiscard]] bool same_nodes(const NodeSet& other) const;

private:
    [[nodiscard]] std::optional<std::size_t> slot(const Coord& c) const;

    GridSpec spec_;
    SetKind kind_;
    std::vector<int> axes_;
    int sign_ = 0;
    std::vector<Coord> nodes_;
    int lo_ = 0;
    int extent_ = 0;
    std::vector<int> lookup_;
};

using NodeSetPtr = std::shared_ptr<const NodeSet>;

Point to_point(const GridSpec& spec, const Coord& c);

// Set algebra on raw node lists. Results are sorted and deduplicated.
std::vector<Coord> shifted(std::span<const Coord> nodes, int axis, int dir, int amount = 1);
std::vector<Coord> star(std::span<const Coord> nodes, int axis);
std::vector<Coord> set_union(std::span<const Coord> a, std::span<const Coord> b);
std::vector<Coord> set_difference(std::span<const Coord> a, std::span<const Coord> b);
std::vector<Coord> set_intersection(std::span<const Coord> a, std::span<const Coord> b);
void normalize(std::vector<Coord>& nodes);

NodeSetPtr make_set(const GridSpec& spec, SetKind kind, std::vector<Coord> nodes,
                    std::vector<int> axes = {}, int sign = 0);

/// Canonical node sets of one grid, built once and shared read-only.
class Mesh {
public:
    static std::shared_ptr<const Mesh> build(const GridSpec& spec);

    [[nodiscard]] const GridSpec& spec() const { return spec_; }
    [[nodiscard]] int d() const { return spec_.d; }
    [[nodiscard]] int N() const { return spec_.N; }
    [[nodiscard]] double h() const { return spec_.h(); }

    [[nodiscard]] const NodeSetPtr& primal() const { return primal_; }
    [[nodiscard]] const NodeSetPtr& closure() const { return closure_; }
    [[nodiscard]] const NodeSetPtr& boundary() const { return boundary_; }
    [[nodiscard]] const NodeSetPtr& lattice() const { return lattice_; }
    /// Interior shifted by h/2 along k.
    [[nodiscard]] const NodeSetPtr& staggered(int k) const;
    /// Shifted along k and j; k == j gives the axis closure.
    [[nodiscard]] const NodeSetPtr& staggered(int k, int j) const;
    [[nodiscard]] const NodeSetPtr& axis_closure(int k) const { return staggered(k, k); }
    /// Both faces orthogonal to axis k.
    [[nodiscard]] const NodeSetPtr& face(int k) const;
    /// Face with outward normal sign (+1 at x_k = 1, -1 at x_k = 0).
    [[nodiscard]] const NodeSetPtr& face(int k, int sign) const;

private:
    explicit Mesh(const GridSpec& spec);
    void check_axis(int k) const;

    GridSpec spec_;
    NodeSetPtr primal_, closure_, boundary_, lattice_;
    std::vector<NodeSetPtr> single_;      // d
    std::vector<NodeSetPtr> staggered_;   // d*d, index k*d+j
    std::vector<NodeSetPtr> face_;        // d
    std::vector<NodeSetPtr> face_signed_; // 2d, index 2k + (sign>0)
};

using MeshPtr = std::shared_ptr<const Mesh>;

/// Generic constructor by kind. Axes are 0-based; Face takes an optional sign.
NodeSetPtr node_set(const Mesh& mesh, SetKind kind, std::span<const int> axes = {}, int sign = 0);

/// Box window on face (axis, sign): nodes whose other coordinates lie in [lo, hi].
NodeSetPtr window(const Mesh& mesh, int axis, int sign, const Point& lo, const Point& hi);

/// The literal per-axis closure construction (shifts of the axis closure by
/// +-h along every other axis). Kept only to document that it depends on the
/// chosen axis in d = 3 and contains cube edges; the mesh uses the
/// axis-independent union of axis closures instead.
std::vector<Coord> literal_closure(const GridSpec& spec, int k);

/// Outward normal on both faces of axis k, decided by staggered-set membership.
struct NormalField {
    NodeSetPtr faces;
    std::vector<int> values;
};

NormalField normals(const Mesh& mesh, int k);

/// Complex-valued function on a node set.
class GridField {
public:
    GridField() = default;
    GridField(NodeSetPtr support, std::vector<Complex> values);

    static GridField zeros(NodeSetPtr support);
    static GridField constant(NodeSetPtr support, Complex c);
    static GridField from_function(NodeSetPtr support,
                                   const std::function<Complex(const Point&)>& fn);

    [[nodiscard]] const NodeSet& support() const { return *support_; }
    [[nodiscard]] const NodeSetPtr& support_ptr() const { return support_; }
    [[nodiscard]] std::size_t size() const { return values_.size(); }
    [[nodiscard]] std::span<const Complex> values() const { return values_; }
    [[nodiscard]] std::span<Complex> values() { return values_; }

    Complex& operator[](std::size_t i) { return values_[i]; }
    const Complex& operator[](std::size_t i) const { return values_[i]; }

    /// Throws std::out_of_range if c is not in the support.
    [[nodiscard]] Complex at(const Coord& c) const;
    [[nodiscard]] std::optional<Complex> try_at(const Coord& c) const;

    /// Every target node must be present in this field's support.
    [[nodiscard]] GridField restrict_to(const NodeSetPtr& target) const;
    /// Target values come from this field where present, zero elsewhere.
    [[nodiscard]] GridField extend_by_zero(const NodeSetPtr& target) const;

    [[nodiscard]] double max_abs() const;
    [[nodiscard]] bool is_real(double tol = 0.0) const;

    GridField& operator+=(const GridField& o);
    GridField& operator-=(const GridField& o);
    GridField& operator*=(const GridField& o);
    GridField& operator*=(Complex c);

private:
    NodeSetPtr support_;
    std::vector<Complex> values_;
};

GridField operator+(GridField a, const GridField& b);
GridField operator-(GridField a, const GridField& b);
GridField operator*(GridField a, const GridField& b);
GridField operator*(Complex c, GridField a);
GridField operator*(GridField a, Complex c);

/// Throws std::invalid_argument when supports differ.
void require_same_support(const GridField& a, const GridField& b, const char* what);
bool same_support(const NodeSet& a, const NodeSet& b);

/// Discrete integral with h^d (volume sets) or h^{d-1} (surface sets) weight.
Complex integrate(const GridField& field);

/// Discrete L^2 norm on the field's own support.
double l2_norm(const GridField& field);

}  // namespace calderon
