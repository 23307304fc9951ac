#include "pmob/grid.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "pmob/numerics.hpp"

namespace pmob {

bool Field::all_finite() const {
    for (double v : values_)
        if (!std::isfinite(v)) return false;
    return true;
}

namespace {
void require_same_grid(const TorusGrid& a, const TorusGrid& b, const char* op) {
    if (!(a == b)) throw GridMismatchError(std::string(op) + ": fields live on different grids");
}
}  // namespace

Field laplacian(const Field& f) {
    const TorusGrid& g = f.grid();
    const int n = g.points_per_dim;
    const double inv_h2 = 1.0 / (g.spacing() * g.spacing());
    Field out(g);
    if (g.dim == 1) {
        for (int i = 0; i < n; ++i) {
            const int im = i == 0 ? n - 1 : i - 1;
            const int ip = i == n - 1 ? 0 : i + 1;
            out[i] = (f[ip] - 2.0 * f[i] + f[im]) * inv_h2;
        }
    } else {
        for (int ix = 0; ix < n; ++ix) {
            const int xm = ix == 0 ? n - 1 : ix - 1;
            const int xp = ix == n - 1 ? 0 : ix + 1;
            for (int iy = 0; iy < n; ++iy) {
                const int ym = iy == 0 ? n - 1 : iy - 1;
                const int yp = iy == n - 1 ? 0 : iy + 1;
                out.at(ix, iy) = (f.at(xp, iy) + f.at(xm, iy) + f.at(ix, yp) + f.at(ix, ym) -
                                  4.0 * f.at(ix, iy)) *
                                 inv_h2;
            }
        }
    }
    return out;
}

VectorField gradient(const Field& f) {
    const TorusGrid& g = f.grid();
    const int n = g.points_per_dim;
    const double inv_2h = 1.0 / (2.0 * g.spacing());
    VectorField out(g);
    if (g.dim == 1) {
        Field& d = out.component(0);
        for (int i = 0; i < n; ++i) {
            const int im = i == 0 ? n - 1 : i - 1;
            const int ip = i == n - 1 ? 0 : i + 1;
            d[i] = (f[ip] - f[im]) * inv_2h;
        }
    } else {
        Field& dx = out.component(0);
        Field& dy = out.component(1);
        for (int ix = 0; ix < n; ++ix) {
            const int xm = ix == 0 ? n - 1 : ix - 1;
            const int xp = ix == n - 1 ? 0 : ix + 1;
            for (int iy = 0; iy < n; ++iy) {
                const int ym = iy == 0 ? n - 1 : iy - 1;
                const int yp = iy == n - 1 ? 0 : iy + 1;
                dx.at(ix, iy) = (f.at(xp, iy) - f.at(xm, iy)) * inv_2h;
                dy.at(ix, iy) = (f.at(ix, yp) - f.at(ix, ym)) * inv_2h;
            }
        }
    }
    return out;
}

Field divergence(const VectorField& F) {
    const TorusGrid& g = F.grid();
    const int n = g.points_per_dim;
    const double inv_2h = 1.0 / (2.0 * g.spacing());
    Field out(g);
    if (g.dim == 1) {
        const Field& u = F.component(0);
        for (int i = 0; i < n; ++i) {
            const int im = i == 0 ? n - 1 : i - 1;
            const int ip = i == n - 1 ? 0 : i + 1;
            out[i] = (u[ip] - u[im]) * inv_2h;
        }
    } else {
        const Field& u = F.component(0);
        const Field& v = F.component(1);
        for (int ix = 0; ix < n; ++ix) {
            const int xm = ix == 0 ? n - 1 : ix - 1;
            const int xp = ix == n - 1 ? 0 : ix + 1;
            for (int iy = 0; iy < n; ++iy) {
                const int ym = iy == 0 ? n - 1 : iy - 1;
                const int yp = iy == n - 1 ? 0 : iy + 1;
                out.at(ix, iy) =
                    (u.at(xp, iy) - u.at(xm, iy) + v.at(ix, yp) - v.at(ix, ym)) * inv_2h;
            }
        }
    }
    return out;
}

double inner(const Field& f, const Field& g) {
    require_same_grid(f.grid(), g.grid(), "inner");
    CompensatedSum s;
    const int n = f.size();
    for (int p = 0; p < n; ++p) s.add(f[p] * g[p]);
    return f.grid().cell_volume() * s.value();
}

double mean(const Field& f) {
    CompensatedSum s;
    for (double v : f.values()) s.add(v);
    return s.value() / f.size();
}

double l1_norm(const Field& f) {
    CompensatedSum s;
    for (double v : f.values()) s.add(std::abs(v));
    return f.grid().cell_volume() * s.value();
}

double l2_norm(const Field& f) {
    CompensatedSum s;
    for (double v : f.values()) s.add(v * v);
    return std::sqrt(f.grid().cell_volume() * s.value());
}

double lp_norm_p(const Field& f, double p) {
    CompensatedSum s;
    for (double v : f.values()) s.add(std::pow(std::abs(v), p));
    return f.grid().cell_volume() * s.value();
}

double max_abs(const Field& f) {
    double m = 0.0;
    for (double v : f.values()) m = std::max(m, std::abs(v));
    return m;
}

Field shifted(const Field& f, int kx, int ky) {
    const TorusGrid& g = f.grid();
    Field out(g);
    const int n = g.points_per_dim;
    if (g.dim == 1) {
        for (int i = 0; i < n; ++i) out[i] = f[g.wrap(i - kx)];
    } else {
        for (int ix = 0; ix < n; ++ix)
            for (int iy = 0; iy < n; ++iy) out.at(ix, iy) = f[g.index(ix - kx, iy - ky)];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Serialization

void write_field_csv(const Field& f, std::ostream& out) {
    char buf[40];
    for (double v : f.values()) {
        std::snprintf(buf, sizeof(buf), "%.17g\n", v);
        out << buf;
    }
}

Field read_field_csv(std::istream& in, const TorusGrid& expected) {
    std::vector<double> vals;
    vals.reserve(static_cast<size_t>(expected.total_points()));
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        vals.push_back(std::stod(line));
    }
    return Field(expected, std::move(vals));
}

namespace {
constexpr char kFieldMagic[4] = {'P', 'M', 'B', 'F'};
constexpr std::uint32_t kFieldVersion = 1;
}  // namespace

void write_field_binary(const Field& f, std::ostream& out) {
    out.write(kFieldMagic, 4);
    const std::uint32_t header[3] = {kFieldVersion, static_cast<std::uint32_t>(f.grid().dim),
                                     static_cast<std::uint32_t>(f.grid().points_per_dim)};
    out.write(reinterpret_cast<const char*>(header), sizeof(header));
    out.write(reinterpret_cast<const char*>(f.values().data()),
              static_cast<std::streamsize>(f.size() * sizeof(double)));
}

Field read_field_binary(std::istream& in) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kFieldMagic, 4) != 0)
        throw std::runtime_error("read_field_binary: bad magic");
    std::uint32_t header[3];
    in.read(reinterpret_cast<char*>(header), sizeof(header));
    if (!in || header[0] != kFieldVersion)
        throw std::runtime_error("read_field_binary: unsupported version");
    TorusGrid g(static_cast<int>(header[1]), static_cast<int>(header[2]));
    std::vector<double> vals(static_cast<size_t>(g.total_points()));
    in.read(reinterpret_cast<char*>(vals.data()),
            static_cast<std::streamsize>(vals.size() * sizeof(double)));
    if (!in) throw std::runtime_error("read_field_binary: truncated payload");
    return Field(g, std::move(vals));
}

void save_field(const Field& f, const std::string& path) {
    const bool csv = path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0;
    std::ofstream out(path, csv ? std::ios::out : std::ios::out | std::ios::binary);
    if (!out) throw std::runtime_error("save_field: cannot open " + path);
    if (csv) {
        write_field_csv(f, out);
    } else {
        write_field_binary(f, out);
    }
}

Field load_field(const std::string& path, const TorusGrid& expected) {
    const bool csv = path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0;
    std::ifstream in(path, csv ? std::ios::in : std::ios::in | std::ios::binary);
    if (!in) throw std::runtime_error("load_field: cannot open " + path);
    Field f = csv ? read_field_csv(in, expected) : read_field_binary(in);
    if (!(f.grid() == expected))
        throw GridMismatchError("load_field: stored grid does not match expectation");
    return f;
}

}  // namespace pmob
