#include <complex>

#include "opflab/network.hpp"

namespace opflab {

AdmittanceMatrix build_admittance(const NetworkCase& net) {
    using cplx = std::complex<double>;
    const auto n = static_cast<Eigen::Index>(net.bus_count());
    Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n, n);

    for (const auto& br : net.branches) {
        const cplx series = 1.0 / cplx(br.r, br.x);
        const cplx charging(0.0, br.b_shunt / 2.0);
        const auto f = static_cast<Eigen::Index>(br.from);
        const auto t = static_cast<Eigen::Index>(br.to);
        y(f, f) += (series + charging) / (br.tap * br.tap);
        y(t, t) += series + charging;
        y(f, t) -= series / br.tap;
        y(t, f) -= series / br.tap;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& bus = net.buses[static_cast<std::size_t>(i)];
        y(i, i) += cplx(bus.g_shunt, bus.b_shunt);
    }
    return {y.real(), y.imag()};
}

Matrix build_dc_susceptance(const NetworkCase& net) {
    const auto n = static_cast<Eigen::Index>(net.bus_count());
    Matrix bdc = Matrix::Zero(n, n);
    for (const auto& br : net.branches) {
        const auto f = static_cast<Eigen::Index>(br.from);
        const auto t = static_cast<Eigen::Index>(br.to);
        bdc(f, t) -= 1.0 / br.x;
        bdc(t, f) -= 1.0 / br.x;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        double off = 0.0;
        for (Eigen::Index m = 0; m < n; ++m) {
            if (m != i) off += bdc(i, m);
        }
        bdc(i, i) = -off;
    }
    return bdc;
}

}  // namespace opflab
