#include "calderon/grid.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace calderon {

GridSpec build_grid(int d, int N) {
    if (d < 1 || d > kMaxDim) {
        throw std::invalid_argument("build_grid: dimension must be 1, 2 or 3, got " +
                                    std::to_string(d));
    }
    if (N < 2) {
        throw std::invalid_argument("build_grid: need at least 2 interior points per axis, got " +
                                    std::to_string(N));
    }
    return GridSpec{d, N};
}

std::string to_string(SetKind kind) {
    switch (kind) {
        case SetKind::Primal: return "primal";
        case SetKind::Closure: return "closure";
        case SetKind::Lattice: return "lattice";
        case SetKind::Staggered: return "staggered";
        case SetKind::AxisClosure: return "axis-closure";
        case SetKind::Face: return "face";
        case SetKind::Boundary: return "boundary";
        case SetKind::Window: return "window";
        case SetKind::Derived: return "derived";
    }
    return "unknown";
}

Point to_point(const GridSpec& spec, const Coord& c) {
    Point p{0.0, 0.0, 0.0};
    const double half = 0.5 * spec.h();
    for (int k = 0; k < spec.d; ++k) p[k] = c[k] * half;
    return p;
}

void normalize(std::vector<Coord>& nodes) {
    std::sort(nodes.begin(), nodes.end());
    nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
}

std::vector<Coord> shifted(std::span<const Coord> nodes, int axis, int dir, int amount) {
    std::vector<Coord> out(nodes.begin(), nodes.end());
    for (auto& c : out) c[axis] += dir * amount;
    normalize(out);
    return out;
}

std::vector<Coord> star(std::span<const Coord> nodes, int axis) {
    return set_union(shifted(nodes, axis, +1), shifted(nodes, axis, -1));
}

std::vector<Coord> set_union(std::span<const Coord> a, std::span<const Coord> b) {
    std::vector<Coord> out;
    out.reserve(a.size() + b.size());
    std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

std::vector<Coord> set_difference(std::span<const Coord> a, std::span<const Coord> b) {
    std::vector<Coord> out;
    std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

std::vector<Coord> set_intersection(std::span<const Coord> a, std::span<const Coord> b) {
    std::vector<Coord> out;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

// ---------------------------------------------------------------------------
// NodeSet

NodeSet::NodeSet(GridSpec spec, SetKind kind, std::vector<Coord> nodes, std::vector<int> axes,
                 int sign)
    : spec_(spec), kind_(kind), axes_(std::move(axes)), sign_(sign), nodes_(std::move(nodes)) {
    normalize(nodes_);
    // Sets never reach further than a few half-steps outside the closed cube.
    lo_ = -6;
    extent_ = spec_.top() + 13;
    std::size_t total = 1;
    for (int k = 0; k < spec_.d; ++k) total *= static_cast<std::size_t>(extent_);
    lookup_.assign(total, -1);
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        auto s = slot(nodes_[i]);
        if (!s) throw std::out_of_range("NodeSet: node outside the supported lattice window");
        lookup_[*s] = static_cast<int>(i);
    }
}

std::optional<std::size_t> NodeSet::slot(const Coord& c) const {
    std::size_t idx = 0;
    for (int k = 0; k < spec_.d; ++k) {
        const int v = c[k] - lo_;
        if (v < 0 || v >= extent_) return std::nullopt;
        idx = idx * static_cast<std::size_t>(extent_) + static_cast<std::size_t>(v);
    }
    return idx;
}

std::optional<std::size_t> NodeSet::find(const Coord& c) const {
    auto s = slot(c);
    if (!s) return std::nullopt;
    const int i = lookup_[*s];
    if (i < 0) return std::nullopt;
    return static_cast<std::size_t>(i);
}

bool NodeSet::is_surface() const {
    return kind_ == SetKind::Face || kind_ == SetKind::Boundary || kind_ == SetKind::Window;
}

double NodeSet::weight() const {
    const int power = is_surface() ? spec_.d - 1 : spec_.d;
    return std::pow(spec_.h(), power);
}

Point NodeSet::position(std::size_t i) const { return to_point(spec_, nodes_[i]); }

bool NodeSet::same_nodes(const NodeSet& other) const {
    return spec_ == other.spec_ && nodes_ == other.nodes_;
}

NodeSetPtr make_set(const GridSpec& spec, SetKind kind, std::vector<Coord> nodes,
                    std::vector<int> axes, int sign) {
    return std::make_shared<const NodeSet>(spec, kind, std::move(nodes), std::move(axes), sign);
}

// ---------------------------------------------------------------------------
// Mesh

namespace {

std::vector<Coord> interior_nodes(const GridSpec& spec) {
    std::vector<Coord> out;
    Coord c{0, 0, 0};
    const int n = spec.N;
    std::size_t total = 1;
    for (int k = 0; k < spec.d; ++k) total *= static_cast<std::size_t>(n);
    out.reserve(total);
    for (std::size_t flat = 0; flat < total; ++flat) {
        std::size_t rem = flat;
        for (int k = spec.d - 1; k >= 0; --k) {
            c[k] = 2 * (1 + static_cast<int>(rem % static_cast<std::size_t>(n)));
            rem /= static_cast<std::size_t>(n);
        }
        out.push_back(c);
    }
    normalize(out);
    return out;
}

std::vector<Coord> lattice_nodes(const GridSpec& spec) {
    std::vector<Coord> out;
    const int n = spec.N + 2;
    std::size_t total = 1;
    for (int k = 0; k < spec.d; ++k) total *= static_cast<std::size_t>(n);
    out.reserve(total);
    Coord c{0, 0, 0};
    for (std::size_t flat = 0; flat < total; ++flat) {
        std::size_t rem = flat;
        for (int k = spec.d - 1; k >= 0; --k) {
            c[k] = 2 * static_cast<int>(rem % static_cast<std::size_t>(n));
            rem /= static_cast<std::size_t>(n);
        }
        out.push_back(c);
    }
    normalize(out);
    return out;
}

}  // namespace

Mesh::Mesh(const GridSpec& spec) : spec_(build_grid(spec.d, spec.N)) {
    const int d = spec_.d;
    auto interior = interior_nodes(spec_);
    primal_ = make_set(spec_, SetKind::Primal, interior);
    lattice_ = make_set(spec_, SetKind::Lattice, lattice_nodes(spec_));

    staggered_.resize(static_cast<std::size_t>(d * d));
    std::vector<std::vector<Coord>> single(static_cast<std::size_t>(d));
    single_.resize(static_cast<std::size_t>(d));
    for (int k = 0; k < d; ++k) {
        single[k] = star(interior, k);
        single_[k] = make_set(spec_, SetKind::Staggered, single[k], {k});
    }
    for (int k = 0; k < d; ++k) {
        for (int j = 0; j < d; ++j) {
            auto nodes = star(single[k], j);
            const SetKind kind = (k == j) ? SetKind::AxisClosure : SetKind::Staggered;
            std::vector<int> axes = (k == j) ? std::vector<int>{k} : std::vector<int>{k, j};
            staggered_[k * d + j] = make_set(spec_, kind, std::move(nodes), std::move(axes));
        }
    }

    std::vector<Coord> closure_nodes = interior;
    std::vector<Coord> boundary_nodes;
    face_.resize(static_cast<std::size_t>(d));
    face_signed_.resize(static_cast<std::size_t>(2 * d));
    for (int k = 0; k < d; ++k) {
        const auto& axis_closure = staggered_[k * d + k]->nodes();
        auto faces = set_difference(axis_closure, interior);
        std::vector<Coord> minus, plus;
        for (const auto& c : faces) (c[k] == 0 ? minus : plus).push_back(c);
        face_[k] = make_set(spec_, SetKind::Face, faces, {k}, 0);
        face_signed_[2 * k] = make_set(spec_, SetKind::Face, minus, {k}, -1);
        face_signed_[2 * k + 1] = make_set(spec_, SetKind::Face, plus, {k}, +1);
        closure_nodes = set_union(closure_nodes, axis_closure);
        boundary_nodes = set_union(boundary_nodes, faces);
    }
    closure_ = make_set(spec_, SetKind::Closure, std::move(closure_nodes));
    boundary_ = make_set(spec_, SetKind::Boundary, std::move(boundary_nodes));
}

std::shared_ptr<const Mesh> Mesh::build(const GridSpec& spec) {
    return std::shared_ptr<const Mesh>(new Mesh(spec));
}

void Mesh::check_axis(int k) const {
    if (k < 0 || k >= spec_.d) {
        throw std::out_of_range("Mesh: axis " + std::to_string(k) + " outside [0, " +
                                std::to_string(spec_.d) + ")");
    }
}

const NodeSetPtr& Mesh::staggered(int k) const {
    check_axis(k);
    return single_[static_cast<std::size_t>(k)];
}

const NodeSetPtr& Mesh::staggered(int k, int j) const {
    check_axis(k);
    check_axis(j);
    return staggered_[static_cast<std::size_t>(k * spec_.d + j)];
}

const NodeSetPtr& Mesh::face(int k) const {
    check_axis(k);
    return face_[static_cast<std::size_t>(k)];
}

const NodeSetPtr& Mesh::face(int k, int sign) const {
    check_axis(k);
    if (sign != 1 && sign != -1) throw std::invalid_argument("Mesh::face: sign must be +1 or -1");
    return face_signed_[static_cast<std::size_t>(2 * k + (sign > 0 ? 1 : 0))];
}

// ---------------------------------------------------------------------------
// Set constructors

NodeSetPtr node_set(const Mesh& mesh, SetKind kind, std::span<const int> axes, int sign) {
    auto need_axes = [&](std::size_t n) {
        if (axes.size() != n) {
            throw std::invalid_argument("node_set: " + to_string(kind) + " needs " +
                                        std::to_string(n) + " axis index(es), got " +
                                        std::to_string(axes.size()));
        }
    };
    switch (kind) {
        case SetKind::Primal: return mesh.primal();
        case SetKind::Closure: return mesh.closure();
        case SetKind::Lattice: return mesh.lattice();
        case SetKind::Boundary: return mesh.boundary();
        case SetKind::Staggered:
            if (axes.size() == 1) return mesh.staggered(axes[0]);
            need_axes(2);
            return mesh.staggered(axes[0], axes[1]);
        case SetKind::AxisClosure:
            need_axes(1);
            return mesh.axis_closure(axes[0]);
        case SetKind::Face:
            need_axes(1);
            return sign == 0 ? mesh.face(axes[0]) : mesh.face(axes[0], sign);
        case SetKind::Window:
        case SetKind::Derived:
            break;
    }
    throw std::invalid_argument("node_set: kind " + to_string(kind) + " has no canonical form");
}

NodeSetPtr window(const Mesh& mesh, int axis, int sign, const Point& lo, const Point& hi) {
    const auto& face = mesh.face(axis, sign);
    constexpr double slack = 1e-12;
    std::vector<Coord> keep;
    for (std::size_t i = 0; i < face->size(); ++i) {
        const Point p = face->position(i);
        bool inside = true;
        for (int k = 0; k < mesh.d() && inside; ++k) {
            if (k == axis) continue;
            inside = p[k] >= lo[k] - slack && p[k] <= hi[k] + slack;
        }
        if (inside) keep.push_back(face->node(i));
    }
    return make_set(mesh.spec(), SetKind::Window, std::move(keep), {axis}, sign);
}

std::vector<Coord> literal_closure(const GridSpec& spec, int k) {
    auto mesh = Mesh::build(spec);
    const auto base = mesh->axis_closure(k)->nodes();
    // With d = 1 there is no transverse axis and the union is empty; fall back
    // to the axis closure, which is the only sensible reading.
    if (spec.d == 1) return {base.begin(), base.end()};
    std::vector<Coord> out;
    for (int j = 0; j < spec.d; ++j) {
        if (j == k) continue;
        out = set_union(out, shifted(base, j, +1, 2));
        out = set_union(out, shifted(base, j, -1, 2));
    }
    return out;
}

NormalField normals(const Mesh& mesh, int k) {
    NormalField field{mesh.face(k), {}};
    const auto& stag = *mesh.staggered(k);
    field.values.reserve(field.faces->size());
    for (const auto& x : field.faces->nodes()) {
        Coord below = x, above = x;
        below[k] -= 1;
        above[k] += 1;
        const bool in_below = stag.contains(below);
        const bool in_above = stag.contains(above);
        if (in_below && !in_above) {
            field.values.push_back(+1);
        } else if (!in_below && in_above) {
            field.values.push_back(-1);
        } else {
            throw std::logic_error("normals: face node with ambiguous orientation");
        }
    }
    return field;
}

// ---------------------------------------------------------------------------
// GridField

GridField::GridField(NodeSetPtr support, std::vector<Complex> values)
    : support_(std::move(support)), values_(std::move(values)) {
    if (!support_) throw std::invalid_argument("GridField: null support");
    if (values_.size() != support_->size()) {
        throw std::invalid_argument("GridField: " + std::to_string(values_.size()) +
                                    " values for " + std::to_string(support_->size()) + " nodes");
    }
}

GridField GridField::zeros(NodeSetPtr support) {
    const std::size_t n = support->size();
    return GridField(std::move(support), std::vector<Complex>(n));
}

GridField GridField::constant(NodeSetPtr support, Complex c) {
    const std::size_t n = support->size();
    return GridField(std::move(support), std::vector<Complex>(n, c));
}

GridField GridField::from_function(NodeSetPtr support,
                                   const std::function<Complex(const Point&)>& fn) {
    std::vector<Complex> values(support->size());
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = fn(support->position(i));
    return GridField(std::move(support), std::move(values));
}

Complex GridField::at(const Coord& c) const {
    auto v = try_at(c);
    if (!v) throw std::out_of_range("GridField::at: node not in support");
    return *v;
}

std::optional<Complex> GridField::try_at(const Coord& c) const {
    auto i = support_->find(c);
    if (!i) return std::nullopt;
    return values_[*i];
}

GridField GridField::restrict_to(const NodeSetPtr& target) const {
    std::vector<Complex> out(target->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = at(target->node(i));
    return GridField(target, std::move(out));
}

GridField GridField::extend_by_zero(const NodeSetPtr& target) const {
    std::vector<Complex> out(target->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = try_at(target->node(i)).value_or(0.0);
    return GridField(target, std::move(out));
}

double GridField::max_abs() const {
    double m = 0.0;
    for (const auto& v : values_) m = std::max(m, std::abs(v));
    return m;
}

bool GridField::is_real(double tol) const {
    return std::all_of(values_.begin(), values_.end(),
                       [tol](const Complex& v) { return std::abs(v.imag()) <= tol; });
}

bool same_support(const NodeSet& a, const NodeSet& b) { return &a == &b || a.same_nodes(b); }

void require_same_support(const GridField& a, const GridField& b, const char* what) {
    if (!same_support(a.support(), b.support())) {
        throw std::invalid_argument(std::string(what) + ": field supports differ (" +
                                    to_string(a.support().kind()) + " vs " +
                                    to_string(b.support().kind()) + ")");
    }
}

GridField& GridField::operator+=(const GridField& o) {
    require_same_support(*this, o, "GridField +=");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += o.values_[i];
    return *this;
}

GridField& GridField::operator-=(const GridField& o) {
    require_same_support(*this, o, "GridField -=");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= o.values_[i];
    return *this;
}

GridField& GridField::operator*=(const GridField& o) {
    require_same_support(*this, o, "GridField *=");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] *= o.values_[i];
    return *this;
}

GridField& GridField::operator*=(Complex c) {
    for (auto& v : values_) v *= c;
    return *this;
}

GridField operator+(GridField a, const GridField& b) { return a += b; }
GridField operator-(GridField a, const GridField& b) { return a -= b; }
GridField operator*(GridField a, const GridField& b) { return a *= b; }
GridField operator*(Complex c, GridField a) { return a *= c; }
GridField operator*(GridField a, Complex c) { return a *= c; }

Complex integrate(const GridField& field) {
    Complex sum = 0.0;
    for (const auto& v : field.values()) sum += v;
    return field.support().weight() * sum;
}

double l2_norm(const GridField& field) {
    double sum = 0.0;
    for (const auto& v : field.values()) sum += std::norm(v);
    return std::sqrt(field.support().weight() * sum);
}

}  // namespace calderon
