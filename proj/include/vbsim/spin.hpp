#pragma once

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace vbsim {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;

/// A spin species identified by twice its quantum number, so half-integer
/// spins stay exact in the type: S=1 <-> two_s=2, I=1/2 <-> two_s=1.
struct SpinSpec {
    int two_s = 1;

    explicit SpinSpec(int two_s_in) : two_s(two_s_in) {
        if (two_s < 1) throw std::invalid_argument("SpinSpec: two_s must be >= 1");
    }

    double s() const { return 0.5 * static_cast<double>(two_s); }
    int dimension() const { return two_s + 1; }
};

struct SpinOperators {
    ComplexMatrix sx, sy, sz, splus, sminus;
};

/// Angular momentum matrices for one spin in units of hbar = 1, in the
/// |m> basis ordered m = +s ... -s (row/column 0 is m = +s).
inline SpinOperators spin_operators(const SpinSpec& spec) {
    const int dim = spec.dimension();
    const double s = spec.s();

    SpinOperators ops;
    ops.sz = ComplexMatrix::Zero(dim, dim);
    ops.splus = ComplexMatrix::Zero(dim, dim);
    for (int i = 0; i < dim; ++i) {
        const double m = s - i;
        ops.sz(i, i) = m;
        // S+|m> = sqrt(s(s+1) - m(m+1)) |m+1>, and |m+1> sits at row i-1.
        if (i > 0) ops.splus(i - 1, i) = std::sqrt(s * (s + 1.0) - m * (m + 1.0));
    }
    ops.sminus = ops.splus.adjoint();
    ops.sx = 0.5 * (ops.splus + ops.sminus);
    ops.sy = Complex(0.0, -0.5) * (ops.splus - ops.sminus);
    return ops;
}

/// Ordered tensor-product space; by convention the electron spin is factor 0
/// and nuclear sites follow in lattice order.
struct CompositeSpace {
    std::vector<SpinSpec> factors;

    int dim() const {
        int d = 1;
        for (const auto& f : factors) d *= f.dimension();
        return d;
    }
};

inline ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b) {
    ComplexMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

/// Lifts a single-site operator to the composite space:
/// identity (x) ... (x) op (x) ... (x) identity, with op at position `site`.
inline ComplexMatrix embed(const ComplexMatrix& op, std::size_t site, const CompositeSpace& space) {
    if (site >= space.factors.size())
        throw std::invalid_argument("embed: site " + std::to_string(site) + " out of range (" +
                                    std::to_string(space.factors.size()) + " factors)");
    const int site_dim = space.factors[site].dimension();
    if (op.rows() != site_dim || op.cols() != site_dim)
        throw std::invalid_argument("embed: operator is " + std::to_string(op.rows()) + "x" +
                                    std::to_string(op.cols()) + " but site " + std::to_string(site) +
                                    " has dimension " + std::to_string(site_dim));

    ComplexMatrix acc = ComplexMatrix::Identity(1, 1);
    for (std::size_t k = 0; k < space.factors.size(); ++k) {
        if (k == site) {
            acc = kron(acc, op);
        } else {
            const int d = space.factors[k].dimension();
            acc = kron(acc, ComplexMatrix::Identity(d, d));
        }
    }
    return acc;
}

}  // namespace vbsim
