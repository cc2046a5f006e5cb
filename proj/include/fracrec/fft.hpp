// Minimal iterative radix-2 FFT used for the spectral preconditioner and the
// discrete H^s proxy norm.  Sizes must be powers of two.
#pragma once

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace fracrec::fft {

using cplx = std::complex<double>;

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// in-place transform with stride; sign = -1 forward, +1 inverse (unscaled)
inline void transform(cplx* a, std::size_t n, std::ptrdiff_t stride, int sign) {
    if (!is_pow2(n)) throw std::invalid_argument("fft: length must be a power of two");
    // bit reversal
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i * stride], a[j * stride]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = sign * 2.0 * M_PI / static_cast<double>(len);
        const cplx wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            cplx w(1.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                cplx u = a[(i + k) * stride];
                cplx v = a[(i + k + len / 2) * stride] * w;
                a[(i + k) * stride] = u + v;
                a[(i + k + len / 2) * stride] = u - v;
                w *= wl;
            }
        }
    }
}

inline void forward(std::vector<cplx>& a) { transform(a.data(), a.size(), 1, -1); }
inline void inverse(std::vector<cplx>& a) {
    transform(a.data(), a.size(), 1, +1);
    const double inv = 1.0 / static_cast<double>(a.size());
    for (auto& v : a) v *= inv;
}

// 2-D transform of an nx-by-ny plane stored row-major (x fastest)
inline void forward2(cplx* a, std::size_t nx, std::size_t ny) {
    for (std::size_t j = 0; j < ny; ++j) transform(a + j * nx, nx, 1, -1);
    for (std::size_t i = 0; i < nx; ++i)
        transform(a + i, ny, static_cast<std::ptrdiff_t>(nx), -1);
}
inline void inverse2(cplx* a, std::size_t nx, std::size_t ny) {
    for (std::size_t j = 0; j < ny; ++j) transform(a + j * nx, nx, 1, +1);
    for (std::size_t i = 0; i < nx; ++i)
        transform(a + i, ny, static_cast<std::ptrdiff_t>(nx), +1);
    const double inv = 1.0 / static_cast<double>(nx * ny);
    for (std::size_t i = 0; i < nx * ny; ++i) a[i] *= inv;
}

}  // namespace fracrec::fft
