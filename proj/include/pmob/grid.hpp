#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pmob {

struct GridMismatchError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Uniform periodic grid on the unit torus, dim in {1, 2}. Cell p has
/// coordinates x_i = index_i * spacing with spacing = 1/n per direction.
struct TorusGrid {
    int dim = 1;
    int points_per_dim = 1;

    TorusGrid() = default;
    TorusGrid(int dim_, int n) : dim(dim_), points_per_dim(n) {
        if (dim < 1 || dim > 2) throw std::invalid_argument("TorusGrid: dim must be 1 or 2");
        if (n < 3) throw std::invalid_argument("TorusGrid: need at least 3 points per dim");
    }

    double spacing() const { return 1.0 / points_per_dim; }
    int total_points() const { return dim == 1 ? points_per_dim : points_per_dim * points_per_dim; }
    double cell_volume() const { return dim == 1 ? spacing() : spacing() * spacing(); }

    int wrap(int i) const {
        const int n = points_per_dim;
        i %= n;
        return i < 0 ? i + n : i;
    }
    int index(int ix, int iy = 0) const {
        return dim == 1 ? wrap(ix) : wrap(ix) * points_per_dim + wrap(iy);
    }
    std::array<double, 2> coords(int p) const {
        if (dim == 1) return {p * spacing(), 0.0};
        return {(p / points_per_dim) * spacing(), (p % points_per_dim) * spacing()};
    }

    bool operator==(const TorusGrid& o) const {
        return dim == o.dim && points_per_dim == o.points_per_dim;
    }
};

/// One real value per grid point; value-semantic.
class Field {
public:
    Field() = default;
    explicit Field(const TorusGrid& g, double fill = 0.0)
        : grid_(g), values_(static_cast<size_t>(g.total_points()), fill) {}
    Field(const TorusGrid& g, std::vector<double> values) : grid_(g), values_(std::move(values)) {
        if (static_cast<int>(values_.size()) != g.total_points())
            throw std::invalid_argument("Field: value count does not match grid");
    }

    const TorusGrid& grid() const { return grid_; }
    int size() const { return static_cast<int>(values_.size()); }
    double& operator[](int p) { return values_[static_cast<size_t>(p)]; }
    double operator[](int p) const { return values_[static_cast<size_t>(p)]; }
    double& at(int ix, int iy = 0) { return values_[static_cast<size_t>(grid_.index(ix, iy))]; }
    double at(int ix, int iy = 0) const { return values_[static_cast<size_t>(grid_.index(ix, iy))]; }
    std::span<const double> values() const { return values_; }
    std::span<double> values() { return values_; }

    bool all_finite() const;

private:
    TorusGrid grid_;
    std::vector<double> values_;
};

/// dim Fields on a common grid, one per direction.
class VectorField {
public:
    VectorField() = default;
    explicit VectorField(const TorusGrid& g) : grid_(g) {
        for (int i = 0; i < g.dim; ++i) comps_.emplace_back(g);
    }

    const TorusGrid& grid() const { return grid_; }
    int dim() const { return static_cast<int>(comps_.size()); }
    Field& component(int i) { return comps_[static_cast<size_t>(i)]; }
    const Field& component(int i) const { return comps_[static_cast<size_t>(i)]; }

private:
    TorusGrid grid_;
    std::vector<Field> comps_;
};

// Finite-difference calculus. The compact laplacian is the 3/5-point stencil;
// gradient/divergence are centered 2h differences, an exactly adjoint pair on
// the torus (discrete summation by parts holds to rounding).
Field laplacian(const Field& f);
VectorField gradient(const Field& f);
Field divergence(const VectorField& F);

double inner(const Field& f, const Field& g);  // h^d * sum f*g
double mean(const Field& f);
double l1_norm(const Field& f);
double l2_norm(const Field& f);
double lp_norm_p(const Field& f, double p);  // h^d * sum |f|^p  (p-th power, no root)
double max_abs(const Field& f);

/// Cyclic shift by whole cells: result(i) = f(i - k) with periodic wrap.
Field shifted(const Field& f, int kx, int ky = 0);

// Serialization: flat row-major CSV (one value per line) and a binary format
// with a small header; both described in docs/FORMATS.md.
void write_field_csv(const Field& f, std::ostream& out);
Field read_field_csv(std::istream& in, const TorusGrid& expected);
void write_field_binary(const Field& f, std::ostream& out);
Field read_field_binary(std::istream& in);

void save_field(const Field& f, const std::string& path);  // dispatch on .csv / .f64
Field load_field(const std::string& path, const TorusGrid& expected);

}  // namespace pmob
