#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

namespace fracrec {

using cplx = std::complex<double>;

// Uniform tensor grid on a square (or interval when dims[1] == 1) centered at
// `center`. Node (i,j) sits at center + h*(i - (m-1)/2, j - (m2-1)/2).
struct TangentialGrid {
    std::array<double, 2> center{0.0, 0.0};
    double h = 0.0;
    std::array<int, 2> dims{0, 1};

    int count() const { return dims[0] * dims[1]; }
    std::size_t index(int i, int j) const {
        return static_cast<std::size_t>(i) * dims[1] + j;
    }
    std::array<double, 2> point(int i, int j) const {
        return {center[0] + h * (i - 0.5 * (dims[0] - 1)),
                center[1] + h * (j - 0.5 * (dims[1] - 1))};
    }
    double half_width(int axis) const { return 0.5 * h * (dims[axis] - 1); }
    bool same_layout(const TangentialGrid& o) const {
        return dims == o.dims && std::fabs(h - o.h) < 1e-15 &&
               std::fabs(center[0] - o.center[0]) < 1e-15 &&
               std::fabs(center[1] - o.center[1]) < 1e-15;
    }
};

// Complex grid function on a TangentialGrid. Values outside the grid are
// treated as zero by the difference operators (fields here are compactly
// supported strictly inside the box).
struct CGrid {
    TangentialGrid grid;
    std::vector<cplx> v;

    CGrid() = default;
    explicit CGrid(const TangentialGrid& g) : grid(g), v(g.count(), cplx(0.0)) {}

    cplx at(int i, int j) const {
        if (i < 0 || j < 0 || i >= grid.dims[0] || j >= grid.dims[1]) return cplx(0.0);
        return v[grid.index(i, j)];
    }
    cplx& ref(int i, int j) { return v[grid.index(i, j)]; }

    // Bilinear interpolation; zero outside.
    cplx interpolate(double x, double y) const {
        double fi = (x - grid.center[0]) / grid.h + 0.5 * (grid.dims[0] - 1);
        double fj = grid.dims[1] == 1
                        ? 0.0
                        : (y - grid.center[1]) / grid.h + 0.5 * (grid.dims[1] - 1);
        int i = static_cast<int>(std::floor(fi));
        int j = static_cast<int>(std::floor(fj));
        double a = fi - i, b = fj - j;
        return (1 - a) * (1 - b) * at(i, j) + a * (1 - b) * at(i + 1, j) +
               (1 - a) * b * at(i, j + 1) + a * b * at(i + 1, j + 1);
    }

    double max_abs() const {
        double m = 0.0;
        for (const auto& z : v) m = std::max(m, std::abs(z));
        return m;
    }
};

namespace fd {

// 4th-order centered first derivative along `axis`.
inline CGrid deriv(const CGrid& f, int axis) {
    CGrid r(f.grid);
    const double c = 1.0 / (12.0 * f.grid.h);
    for (int i = 0; i < f.grid.dims[0]; ++i)
        for (int j = 0; j < f.grid.dims[1]; ++j) {
            int di = axis == 0 ? 1 : 0, dj = axis == 1 ? 1 : 0;
            r.ref(i, j) = c * (-f.at(i + 2 * di, j + 2 * dj) + 8.0 * f.at(i + di, j + dj) -
                               8.0 * f.at(i - di, j - dj) + f.at(i - 2 * di, j - 2 * dj));
        }
    return r;
}

// 4th-order centered second derivative along `axis`.
inline CGrid deriv2(const CGrid& f, int axis) {
    CGrid r(f.grid);
    const double c = 1.0 / (12.0 * f.grid.h * f.grid.h);
    for (int i = 0; i < f.grid.dims[0]; ++i)
        for (int j = 0; j < f.grid.dims[1]; ++j) {
            int di = axis == 0 ? 1 : 0, dj = axis == 1 ? 1 : 0;
            r.ref(i, j) = c * (-f.at(i + 2 * di, j + 2 * dj) + 16.0 * f.at(i + di, j + dj) -
                               30.0 * f.at(i, j) + 16.0 * f.at(i - di, j - dj) -
                               f.at(i - 2 * di, j - 2 * dj));
        }
    return r;
}

inline CGrid mixed(const CGrid& f) { return deriv(deriv(f, 0), 1); }

} // namespace fd

} // namespace fracrec
