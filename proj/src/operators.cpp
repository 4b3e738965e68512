#include "spinchain/operators.hpp"

namespace spinchain {

Matrix single_spin_operator(int n_spins, int index, Axis axis) {
    if (index < 0 || index >= n_spins)
        throw std::out_of_range("spin index " + std::to_string(index) + " out of range");
    const std::size_t dim = std::size_t{1} << n_spins;
    const std::size_t mask = spin_mask(n_spins, index);
    Matrix m = Matrix::Zero(dim, dim);
    for (std::size_t b = 0; b < dim; ++b) {
        const bool up = (b & mask) == 0;
        switch (axis) {
            case Axis::X:
                m(b ^ mask, b) = 0.5;
                break;
            case Axis::Y:
                // <down|Iy|up> = +i/2, <up|Iy|down> = -i/2
                m(b ^ mask, b) = up ? Complex(0.0, 0.5) : Complex(0.0, -0.5);
                break;
            case Axis::Z:
                m(b, b) = up ? 0.5 : -0.5;
                break;
            case Axis::Plus:
                if (!up) m(b ^ mask, b) = 1.0;
                break;
            case Axis::Minus:
                if (up) m(b ^ mask, b) = 1.0;
                break;
        }
    }
    return m;
}

Matrix total_spin_operator(int n_spins, Axis axis, std::span<const int> subset) {
    const std::size_t dim = std::size_t{1} << n_spins;
    Matrix sum = Matrix::Zero(dim, dim);
    if (subset.empty()) {
        for (int i = 0; i < n_spins; ++i) sum += single_spin_operator(n_spins, i, axis);
    } else {
        for (int i : subset) sum += single_spin_operator(n_spins, i, axis);
    }
    return sum;
}

RealVector single_spin_z_diagonal(int n_spins, int index) {
    if (index < 0 || index >= n_spins)
        throw std::out_of_range("spin index " + std::to_string(index) + " out of range");
    const std::size_t dim = std::size_t{1} << n_spins;
    const std::size_t mask = spin_mask(n_spins, index);
    RealVector d(dim);
    for (std::size_t b = 0; b < dim; ++b) d(b) = (b & mask) ? -0.5 : 0.5;
    return d;
}

RealVector total_z_diagonal(int n_spins, std::span<const int> subset) {
    const std::size_t dim = std::size_t{1} << n_spins;
    RealVector d = RealVector::Zero(dim);
    if (subset.empty()) {
        for (std::size_t b = 0; b < dim; ++b) d(b) = total_mz(n_spins, b);
    } else {
        for (int i : subset) d += single_spin_z_diagonal(n_spins, i);
    }
    return d;
}

double hermiticity_defect(const Matrix& m) {
    return (m - m.adjoint()).cwiseAbs().maxCoeff();
}

double unitarity_defect(const Matrix& u) {
    Matrix id = Matrix::Identity(u.rows(), u.cols());
    return (u.adjoint() * u - id).cwiseAbs().maxCoeff();
}

double commutator_norm(const Matrix& a, const Matrix& b) {
    return (a * b - b * a).cwiseAbs().maxCoeff();
}

}  // namespace spinchain
