#pragma once

// Randomized comparison of the closed-form circulant Hessian spectrum against
// explicitly constructed and finite-difference Hessians.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "cdnn/diagnostics.hpp"
#include "cdnn/random.hpp"

namespace cdnn {

// Largest eigenvalue gap, scaled by the largest reference magnitude. Small
// eigenvalues are compared on the scale of the spectrum rather than their own.
inline double spectral_deviation(std::span<const double> a, std::span<const double> ref) {
    if (a.size() != ref.size()) throw std::invalid_argument("spectral_deviation: length mismatch");
    double scale = 0.0, gap = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        scale = std::max(scale, std::abs(ref[i]));
        gap = std::max(gap, std::abs(a[i] - ref[i]));
    }
    return scale > 0.0 ? gap / scale : gap;
}

struct ClosedFormTrial {
    std::size_t block = 0;
    std::size_t trial = 0;
    double explicit_deviation = 0.0;  // closed form vs dft of the explicit Hessian
    double jacobi_deviation = 0.0;    // closed form vs Jacobi on the explicit Hessian
    double fd_deviation = 0.0;        // closed form vs Jacobi on the finite-difference Hessian
    double circulant_deviation = 0.0;
};

struct ClosedFormReport {
    double tolerance = 1e-8;
    double fd_tolerance = 1e-4;
    double circulant_tolerance = 1e-12;
    std::vector<ClosedFormTrial> trials;
    double max_explicit_deviation = 0.0;
    double max_fd_deviation = 0.0;
    double max_circulant_deviation = 0.0;

    bool passed() const {
        return !trials.empty() && max_explicit_deviation < tolerance && max_fd_deviation < fd_tolerance &&
               max_circulant_deviation <= circulant_tolerance;
    }
};

inline ClosedFormReport verify_closed_form_spectrum(const std::vector<std::size_t>& blocks, std::size_t trials,
                                                    std::uint64_t seed) {
    if (blocks.empty() || trials == 0) throw std::invalid_argument("verify_closed_form_spectrum: nothing to run");
    ClosedFormReport rep;
    Rng rng(seed, Stream::synthetic);
    for (std::size_t b : blocks) {
        if (b == 0) throw std::invalid_argument("verify_closed_form_spectrum: block size must be positive");
        for (std::size_t t = 0; t < trials; ++t) {
            RealVector c(b), x(b), target(b);
            for (std::size_t k = 0; k < b; ++k) {
                c[k] = rng.normal();
                x[k] = rng.normal();
                target[k] = rng.normal();
            }
            const LayerSpectrum closed = hessian_spectrum_closed_form(Matrix(1, b, x), b);
            const BruteForceHessian bf = hessian_brute_force(c, x, target);
            ClosedFormTrial tr{b, t};
            tr.explicit_deviation = spectral_deviation(closed.eigenvalues, bf.eigenvalues);
            tr.jacobi_deviation = spectral_deviation(closed.eigenvalues, bf.jacobi_eigenvalues);
            tr.fd_deviation = spectral_deviation(closed.eigenvalues, bf.fd_eigenvalues);
            double hmax = 0.0;
            for (double v : bf.hessian.data()) hmax = std::max(hmax, std::abs(v));
            tr.circulant_deviation = bf.circulant_deviation / std::max(1.0, hmax);
            rep.max_explicit_deviation =
                std::max({rep.max_explicit_deviation, tr.explicit_deviation, tr.jacobi_deviation});
            rep.max_fd_deviation = std::max(rep.max_fd_deviation, tr.fd_deviation);
            rep.max_circulant_deviation = std::max(rep.max_circulant_deviation, tr.circulant_deviation);
            rep.trials.push_back(tr);
        }
    }
    return rep;
}

}  // namespace cdnn
