#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <memory>
#include <optional>
#include <vector>

#include "kf/expr.hpp"
#include "kf/integrate.hpp"
#include "kf/log.hpp"
#include "kf/types.hpp"

namespace kf {

enum class SystemKind { flow, map };

/// Immutable handle to an evaluable dynamical system: a vector field
/// integrated with DOP853, or a discrete map iterated exactly.
class FlowHandle {
public:
    FlowHandle(FieldProgram program, SystemKind kind, IntegratorSettings settings = {})
        : prog_(std::make_shared<const FieldProgram>(std::move(program))),
          kind_(kind), set_(settings) {
        if (set_.rtol <= 0 || set_.atol <= 0)
            throw Error(ErrKind::invalid_input, "integrator tolerances must be positive");
    }

    int dimension() const { return prog_->dimension(); }
    SystemKind kind() const { return kind_; }
    bool is_map() const { return kind_ == SystemKind::map; }
    const FieldProgram& program() const { return *prog_; }
    const IntegratorSettings& settings() const { return set_; }

    FlowHandle with_settings(IntegratorSettings s) const {
        FlowHandle h(*this);
        h.set_ = s;
        return h;
    }

    /// Vector field / map image at a point.
    Vec field(const Vec& x) const {
        std::vector<double> xv(x.data(), x.data() + x.size());
        auto f = prog_->eval(std::span<const double>(xv.data(), xv.size()));
        return Eigen::Map<const Vec>(f.data(), static_cast<long>(f.size()));
    }

private:
    std::shared_ptr<const FieldProgram> prog_;
    SystemKind kind_;
    IntegratorSettings set_;
};

namespace detail {

inline long checked_integer_time(double t) {
    double r = std::round(t);
    if (std::abs(t - r) > 1e-9)
        throw Error(ErrKind::invalid_input, "discrete systems expose only integer times");
    return static_cast<long>(r);
}

}  // namespace detail

/// State of the system after time t (adaptive RK for flows, exact iteration
/// for maps).  Backward integration is allowed but logged as suspect.
inline Vec flow_to(const FlowHandle& h, const Vec& x, double t) {
    if (h.is_map()) {
        long n = detail::checked_integer_time(t);
        if (n < 0)
            throw Error(ErrKind::invalid_input, "negative iterate of a discrete map");
        std::vector<double> state(x.data(), x.data() + x.size());
        for (long i = 0; i < n; ++i)
            state = h.program().eval(std::span<const double>(state.data(), state.size()));
        return Eigen::Map<const Vec>(state.data(), static_cast<long>(state.size()));
    }
    if (t < 0) log_debug("flow_to: backward integration requested (t < 0)");
    std::vector<double> y(x.data(), x.data() + x.size());
    if (t != 0.0) {
        auto rhs = [&](const std::vector<double>& s, std::vector<double>& ds) {
            ds = h.program().eval(std::span<const double>(s.data(), s.size()));
        };
        integrate_ode<double>(rhs, y, 0.0, t, h.settings());
    }
    return Eigen::Map<const Vec>(y.data(), static_cast<long>(y.size()));
}

/// Observer-driven integration over [0, t] with dense output segments.
inline void flow_observe(const FlowHandle& h, const Vec& x, double t,
                         const std::function<bool(double, const DenseSegment<double>&)>& obs) {
    if (h.is_map())
        throw Error(ErrKind::invalid_input, "dense observation requires a continuous-time system");
    std::vector<double> y(x.data(), x.data() + x.size());
    auto rhs = [&](const std::vector<double>& s, std::vector<double>& ds) {
        ds = h.program().eval(std::span<const double>(s.data(), s.size()));
    };
    integrate_ode<double>(rhs, y, 0.0, t, h.settings(), true, &obs);
}

/// Order-k Taylor expansion of the time-t map about x0, via jet transport:
/// the state is a MapJet seeded with identity jets and the RHS is the field
/// evaluated in jet arithmetic.
inline RMapJet time_map_jet(const FlowHandle& h, const Vec& x0, double t, int order) {
    const int n = h.dimension();
    if (x0.size() != n)
        throw Error(ErrKind::invalid_input, "time_map_jet: dimension mismatch");
    std::vector<RJet> seeds;
    seeds.reserve(n);
    for (int i = 0; i < n; ++i) seeds.push_back(RJet::variable(n, order, i, x0[i]));
    if (h.is_map()) {
        long it = detail::checked_integer_time(t);
        if (it < 0) throw Error(ErrKind::invalid_input, "negative iterate of a discrete map");
        std::vector<RJet> state = seeds;
        for (long j = 0; j < it; ++j)
            state = h.program().eval<RJet>(std::span<const RJet>(state.data(), state.size()),
                                           state[0]);
        return RMapJet(std::move(state));
    }
    std::vector<RJet> y = seeds;
    auto rhs = [&](const std::vector<RJet>& s, std::vector<RJet>& ds) {
        ds = h.program().eval<RJet>(std::span<const RJet>(s.data(), s.size()), s[0]);
    };
    if (t != 0.0) kf::integrate_ode<RJet>(rhs, y, 0.0, t, h.settings());
    return RMapJet(std::move(y));
}

/// Time-one map expansion at a fixed point (jet transport); for maps this is
/// simply the program's own jet.
inline RMapJet time_one_map_jet(const FlowHandle& h, const Vec& x0, int order,
                                double fixed_tol = 1e-7) {
    Vec img = h.is_map() ? Vec(flow_to(h, x0, 1.0)) : h.field(x0);
    double resid = h.is_map() ? (img - x0).cwiseAbs().maxCoeff() : img.cwiseAbs().maxCoeff();
    if (resid > fixed_tol)
        throw Error(ErrKind::invalid_input,
                    "time_one_map_jet: base point is not fixed (residual " +
                        std::to_string(resid) + ")");
    if (h.is_map()) {
        std::vector<double> base(x0.data(), x0.data() + x0.size());
        return field_jet(h.program(), std::span<const double>(base.data(), base.size()), order);
    }
    return time_map_jet(h, x0, 1.0, order);
}

/// First-order block of a map jet as a dense matrix.
inline Mat jet_linear_part(const RMapJet& mj) {
    const int n = mj.dim();
    const int m = mj.outputs();
    Mat J(m, n);
    for (int p = 0; p < m; ++p)
        for (int v = 0; v < n; ++v) J(p, v) = mj[p][1 + v];
    return J;
}

struct FixedPointData {
    Vec x0;
    Mat jacobian;             // D_{x0} Phi^1
    double newton_residual = 0.0;
};

/// Unit 2-norm with the largest-modulus entry made positive (deterministic
/// representative of a direction).
inline void normalize_direction(Vec& v) {
    double nrm = v.norm();
    if (nrm == 0.0) return;
    v /= nrm;
    int imax = 0;
    for (int i = 1; i < v.size(); ++i)
        if (std::abs(v[i]) > std::abs(v[imax])) imax = i;
    if (v[imax] < 0) v = -v;
}

namespace detail {

inline Mat field_jacobian(const FlowHandle& h, const Vec& x) {
    std::vector<double> base(x.data(), x.data() + x.size());
    auto mj = field_jet(h.program(), std::span<const double>(base.data(), base.size()), 1);
    return jet_linear_part(mj);
}

// residual whose root we seek: f(x) for flows, F(x) - x for maps
inline Vec root_residual(const FlowHandle& h, const Vec& x) {
    if (h.is_map()) return Vec(flow_to(h, x, 1.0)) - x;
    return h.field(x);
}

inline Mat root_jacobian(const FlowHandle& h, const Vec& x) {
    Mat J = field_jacobian(h, x);
    if (h.is_map()) J -= Mat::Identity(x.size(), x.size());
    return J;
}

inline std::optional<Vec> damped_newton(const FlowHandle& h, Vec x, double tol, int max_iter) {
    for (int it = 0; it < max_iter; ++it) {
        Vec r = root_residual(h, x);
        double rn = r.cwiseAbs().maxCoeff();
        if (rn <= tol) return x;
        Mat J = root_jacobian(h, x);
        Eigen::FullPivLU<Mat> lu(J);
        if (!lu.isInvertible()) return std::nullopt;
        Vec dx = lu.solve(-r);
        double step = 1.0;
        for (int ls = 0; ls < 30; ++ls) {
            Vec xt = x + step * dx;
            double rt = root_residual(h, xt).cwiseAbs().maxCoeff();
            if (rt < rn || rt <= tol) {
                x = xt;
                break;
            }
            step *= 0.5;
            if (ls == 29) x = x + step * dx;
        }
        if (!x.allFinite()) return std::nullopt;
    }
    Vec r = root_residual(h, x);
    if (r.cwiseAbs().maxCoeff() <= tol) return x;
    return std::nullopt;
}

}  // namespace detail

/// Damped Newton for the attracting fixed point; roots that fail the sink
/// test are discarded and the search restarts from a forward-relaxed guess.
inline FixedPointData find_fixed_point(const FlowHandle& h, const Vec& guess,
                                       double tol = 1e-12, int max_iter = 60) {
    Vec start = guess;
    for (int attempt = 0; attempt < 8; ++attempt) {
        auto root = detail::damped_newton(h, start, tol, max_iter);
        if (root) {
            Mat J1 = jet_linear_part(time_one_map_jet(h, *root, 1, 1e-5));
            double rho = Eigen::EigenSolver<Mat>(J1, false).eigenvalues().cwiseAbs().maxCoeff();
            if (rho < 1.0) {
                FixedPointData out;
                out.x0 = *root;
                out.jacobian = J1;
                out.newton_residual = detail::root_residual(h, *root).cwiseAbs().maxCoeff();
                return out;
            }
            log_info("find_fixed_point: rejected non-sink root (spectral radius " +
                     std::to_string(rho) + ")");
        }
        // relax toward the attractor along the forward orbit and retry
        start = flow_to(h, start, h.is_map() ? static_cast<double>(1 << attempt)
                                             : std::pow(2.0, attempt));
        if (!start.allFinite())
            throw Error(ErrKind::solver_failure, "find_fixed_point: forward orbit escaped");
    }
    throw Error(ErrKind::non_convergence, "find_fixed_point: Newton did not locate a sink");
}

struct LimitCycle {
    Vec x0;                       // anchor point on the cycle
    double tau = 0.0;             // period
    Mat monodromy;                // D_{x0} Phi^tau
    Mat stable_basis;             // n x (n-1), spans E^s_{x0}
    std::vector<cplx> floquet_multipliers;  // nontrivial, |.| < 1
    std::vector<cplx> floquet_exponents;    // principal log / tau
    cplx trivial_multiplier{1.0, 0.0};
    std::vector<std::string> notes;
};

/// Newton shooting on (x, tau) with a phase hyperplane through the current
/// iterate orthogonal to the field; monodromy filled by first-order jet
/// transport over [0, tau].
inline LimitCycle find_periodic_orbit(const FlowHandle& h, const Vec& guess, double period_guess,
                                      double tol = 1e-11, int max_iter = 40) {
    if (h.is_map())
        throw Error(ErrKind::invalid_input, "periodic-orbit search requires a continuous-time system");
    const int n = h.dimension();
    Vec x = guess;
    double tau = period_guess;
    if (tau <= 0) throw Error(ErrKind::invalid_input, "period guess must be positive");

    double resid = std::numeric_limits<double>::infinity();
    for (int it = 0; it < max_iter; ++it) {
        RMapJet mj = time_map_jet(h, x, tau, 1);
        Vec phix(n);
        for (int i = 0; i < n; ++i) phix[i] = mj[i].value();
        Vec r = phix - x;
        resid = r.cwiseAbs().maxCoeff();
        if (resid <= tol) break;
        Mat M = jet_linear_part(mj);
        Vec fx = h.field(x);
        Vec fphi = h.field(phix);
        Mat J(n + 1, n + 1);
        J.topLeftCorner(n, n) = M - Mat::Identity(n, n);
        J.topRightCorner(n, 1) = fphi;
        J.bottomLeftCorner(1, n) = fx.transpose();
        J(n, n) = 0.0;
        Vec rhs(n + 1);
        rhs.head(n) = -r;
        rhs[n] = 0.0;
        Eigen::FullPivLU<Mat> lu(J);
        if (!lu.isInvertible())
            throw Error(ErrKind::solver_failure, "shooting Jacobian is singular");
        Vec delta = lu.solve(rhs);
        double damp = 1.0;
        if (std::abs(delta[n]) > 0.5 * tau) damp = 0.5 * tau / std::abs(delta[n]);
        x += damp * delta.head(n);
        tau += damp * delta[n];
        if (tau <= 0 || !x.allFinite())
            throw Error(ErrKind::solver_failure, "shooting iterate left the admissible region");
    }
    if (resid > tol)
        throw Error(ErrKind::non_convergence,
                    "periodic-orbit shooting did not converge (residual " +
                        std::to_string(resid) + ")");

    LimitCycle cyc;
    cyc.x0 = x;
    cyc.tau = tau;
    cyc.monodromy = jet_linear_part(time_map_jet(h, x, tau, 1));

    Eigen::EigenSolver<Mat> es(cyc.monodromy);
    if (es.info() != Eigen::Success)
        throw Error(ErrKind::solver_failure, "monodromy eigensolver failed");
    CVec vals = es.eigenvalues();
    CMat vecs = es.eigenvectors();

    int triv = 0;
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
        double d = std::abs(vals[i] - cplx(1.0, 0.0));
        if (d < best) {
            best = d;
            triv = i;
        }
    }
    if (best > 1e-5)
        throw Error(ErrKind::solver_failure,
                    "monodromy lacks a unit multiplier (closest defect " + std::to_string(best) + ")");
    cyc.trivial_multiplier = vals[triv];

    // real basis for the invariant complement from the nontrivial eigenvectors
    cyc.stable_basis = Mat(n, n - 1);
    int col = 0;
    std::vector<int> used(n, 0);
    used[triv] = 1;
    for (int i = 0; i < n; ++i) {
        if (used[i]) continue;
        cplx lam = vals[i];
        if (std::abs(lam) >= 1.0)
            throw Error(ErrKind::hypothesis_violation,
                        "nontrivial Floquet multiplier with modulus >= 1: cycle not hyperbolic-attracting");
        cyc.floquet_multipliers.push_back(lam);
        if (std::abs(lam.imag()) < 1e-12 * std::max(1.0, std::abs(lam.real()))) {
            Vec v = vecs.col(i).real();
            if (v.norm() < 1e-12) v = vecs.col(i).imag();
            normalize_direction(v);
            cyc.stable_basis.col(col++) = v;
            if (lam.real() < 0)
                cyc.notes.push_back("negative real multiplier: exponent branch has imaginary part pi/tau");
            used[i] = 1;
        } else {
            // find and consume the conjugate partner
            int partner = -1;
            for (int j = i + 1; j < n; ++j)
                if (!used[j] && std::abs(vals[j] - std::conj(lam)) <
                                    1e-8 * std::max(1.0, std::abs(lam)))
                    partner = partner < 0 ? j : partner;
            if (partner < 0)
                throw Error(ErrKind::solver_failure, "unpaired complex Floquet multiplier");
            Vec vr = vecs.col(i).real(), vi = vecs.col(i).imag();
            normalize_direction(vr);
            normalize_direction(vi);
            cyc.stable_basis.col(col++) = vr;
            if (col < n - 1) cyc.stable_basis.col(col++) = vi;
            cyc.floquet_multipliers.push_back(std::conj(lam));
            used[i] = used[partner] = 1;
        }
    }
    for (const cplx& lam : cyc.floquet_multipliers)
        cyc.floquet_exponents.push_back(std::log(lam) / tau);  // principal branch
    return cyc;
}

}  // namespace kf
