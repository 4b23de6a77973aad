#include "l1mpc/model.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/MatrixFunctions>

namespace l1mpc {

namespace {

constexpr double kPsdTol = 1e-10;
constexpr double kSymTol = 1e-12;

bool is_symmetric(const Mat& M, double tol) {
    return (M - M.transpose()).cwiseAbs().maxCoeff() <= tol;
}

void require_psd(const Mat& M, const char* name) {
    if (M.rows() != M.cols() || !is_symmetric(M, kSymTol)) {
        throw NotPsd(std::string(name) + " must be square symmetric");
    }
    if (M.rows() == 0) return;
    Eigen::SelfAdjointEigenSolver<Mat> es(M, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -kPsdTol) {
        throw NotPsd(std::string(name) + " has eigenvalue below -1e-10");
    }
}

}  // namespace

double TankParams::tau(int i) const {
    return (At / a[static_cast<std::size_t>(i)]) * std::sqrt(2.0 * x_eq(i) / g);
}

void validate_params(const TankParams& p) {
    for (double ai : p.a) {
        if (!(ai > 0.0)) throw Error("outlet cross-section must be positive");
    }
    if (!(p.At > 0.0) || !(p.k1 > 0.0) || !(p.k2 > 0.0) || !(p.g > 0.0)) {
        throw Error("tank area, pump gains and gravity must be positive");
    }
    if (!(p.gamma1 > 0.0 && p.gamma1 < 1.0) || !(p.gamma2 > 0.0 && p.gamma2 < 1.0)) {
        throw Error("valve parameters must lie strictly in (0, 1)");
    }
    for (int i = 0; i < 4; ++i) {
        if (!(p.x_eq(i) > 0.0) || !(p.tau(i) > 0.0)) {
            throw Error("operating levels and time constants must be positive");
        }
    }
}

void validate_system(const StageSystem& sys) {
    const Index n = sys.A.rows();
    const Index l = sys.B.cols();
    if (n < 1 || sys.A.cols() != n) throw DimensionMismatch("A");
    if (l < 1 || sys.B.rows() != n) throw DimensionMismatch("B");
    if (sys.C.rows() > 0 ? sys.C.cols() != n : sys.C.cols() != 0 && sys.C.cols() != n) {
        throw DimensionMismatch("C");
    }
    if (sys.D.rows() != sys.C.rows() || (sys.D.rows() > 0 && sys.D.cols() != l)) {
        throw DimensionMismatch("D");
    }
    if (sys.E.rows() > 0 ? sys.E.cols() != n : sys.E.cols() != 0 && sys.E.cols() != n) {
        throw DimensionMismatch("E");
    }
    if (sys.F.rows() != sys.E.rows() || (sys.F.rows() > 0 && sys.F.cols() != l)) {
        throw DimensionMismatch("F");
    }
}

void validate_instance(const ProblemInstance& inst) {
    validate_system(inst.system);
    const Index n = inst.system.n();
    if (inst.horizon < 1) throw Error("horizon must be >= 1");
    if (inst.Qterm.rows() != n || inst.Qterm.cols() != n) throw DimensionMismatch("Qterm");
    require_psd(inst.Qterm, "Qterm");
    if (inst.x0.size() != n) throw DimensionMismatch("x0");
    if (!(inst.lambda >= 0.0)) throw Error("lambda must be >= 0");
    if (!(inst.rho > 0.0)) throw Error("rho must be > 0");
    if (!(inst.alpha >= 1.0 && inst.alpha < 2.0)) throw Error("alpha must lie in [1, 2)");
    if (!(inst.eps_abs > 0.0) || !(inst.eps_rel > 0.0)) throw Error("tolerances must be > 0");
    if (inst.max_iter < 0) throw Error("max_iter must be >= 0");
}

std::pair<Mat, Mat> discretize_zoh(const Mat& Ac, const Mat& Bc, double T) {
    const Index n = Ac.rows();
    const Index l = Bc.cols();
    if (Ac.cols() != n) throw DimensionMismatch("Ac");
    if (Bc.rows() != n) throw DimensionMismatch("Bc");
    if (!(T > 0.0)) throw Error("sample time must be > 0");

    Mat block = Mat::Zero(n + l, n + l);
    block.topLeftCorner(n, n) = Ac * T;
    block.topRightCorner(n, l) = Bc * T;
    const Mat expm = block.exp();
    if (!expm.allFinite()) throw NonFinite("matrix exponential overflowed");
    return {expm.topLeftCorner(n, n), expm.topRightCorner(n, l)};
}

TankLinearModel quadruple_tank_continuous(const TankParams& p) {
    validate_params(p);
    TankLinearModel m;
    m.Ac = Mat::Zero(4, 4);
    for (int i = 0; i < 4; ++i) m.Ac(i, i) = -1.0 / p.tau(i);
    m.Ac(0, 2) = 1.0 / p.tau(2);
    m.Ac(1, 3) = 1.0 / p.tau(3);

    m.Bc = Mat::Zero(4, 2);
    m.Bc(0, 0) = p.gamma1 * p.k1 / p.At;
    m.Bc(1, 1) = p.gamma2 * p.k2 / p.At;
    m.Bc(2, 1) = (1.0 - p.gamma2) * p.k2 / p.At;
    m.Bc(3, 0) = (1.0 - p.gamma1) * p.k1 / p.At;

    m.C = Mat::Zero(2, 4);
    m.C(0, 0) = 1.0;
    m.C(1, 1) = 1.0;
    return m;
}

Mat symmetric_factor(const Mat& Q) {
    if (Q.rows() != Q.cols() || !is_symmetric(Q, kSymTol)) {
        throw NotPsd("weight matrix must be square symmetric");
    }
    const Index n = Q.rows();
    if (n == 0) return Q;

    const bool diagonal = (Q - Mat(Q.diagonal().asDiagonal())).cwiseAbs().maxCoeff() == 0.0;
    if (diagonal) {
        if (Q.diagonal().minCoeff() < -kPsdTol) throw NotPsd("weight has eigenvalue below -1e-10");
        return Q.diagonal().cwiseMax(0.0).cwiseSqrt().asDiagonal();
    }
    Eigen::SelfAdjointEigenSolver<Mat> es(Q);
    if (es.eigenvalues().minCoeff() < -kPsdTol) throw NotPsd("weight has eigenvalue below -1e-10");
    const Vec clamped = es.eigenvalues().cwiseMax(0.0);
    return clamped.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

AugmentedSystem augment_delta_u(const Mat& A, const Mat& B, const Mat& Q, const Mat& Qbar) {
    const Index n = A.rows();
    const Index l = B.cols();
    if (A.cols() != n) throw DimensionMismatch("A");
    if (B.rows() != n) throw DimensionMismatch("B");
    if (Q.rows() != n || Q.cols() != n) throw DimensionMismatch("Q");
    if (Qbar.rows() != n || Qbar.cols() != n) throw DimensionMismatch("Qbar");
    require_psd(Qbar, "Qbar");
    const Mat c = symmetric_factor(Q);  // throws NotPsd

    AugmentedSystem aug;
    aug.base.A = Mat::Zero(n + l, n + l);
    aug.base.A.topLeftCorner(n, n) = A;
    aug.base.A.topRightCorner(n, l) = B;
    aug.base.A.bottomRightCorner(l, l) = Mat::Identity(l, l);

    aug.base.B = Mat::Zero(n + l, l);
    aug.base.B.topRows(n) = B;
    aug.base.B.bottomRows(l) = Mat::Identity(l, l);

    aug.base.C = Mat::Zero(n, n + l);
    aug.base.C.leftCols(n) = c;
    aug.base.D = Mat::Zero(n, l);
    aug.base.E = Mat::Zero(l, n + l);
    aug.base.F = Mat::Identity(l, l);

    aug.Qterm_aug = Mat::Zero(n + l, n + l);
    aug.Qterm_aug.topLeftCorner(n, n) = Qbar;
    aug.u_prev_offset = n;
    aug.u_prev_size = l;
    return aug;
}

}  // namespace l1mpc
