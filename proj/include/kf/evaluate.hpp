#pragma once

#include <algorithm>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

#include "kf/factor.hpp"
#include "kf/flow.hpp"
#include "kf/parallel.hpp"

namespace kf {

struct ConvergencePolicy {
    double dt = 1.0;                     // refinement step (integer for maps)
    double tol = 1e-9;                   // Cauchy gap tolerance, relative to 1+|psi|
    int max_steps = 200;
    double divergence_threshold = 1e8;
};

struct EvalResult {
    CVec value;
    int steps_used = 0;
    bool converged = false;
    double cauchy_gap = 0.0;
    bool flagged_divergent = false;
    std::vector<cplx> history_tail;      // first component of the last iterates
};

/// A polynomial factor bound to its flow with a convergence policy; turns
/// the approximate factor into the exact one pointwise via the iterate
/// psi_j = e^{-t_j A} P(Phi^{t_j}(x)).
class EigenfunctionModel {
public:
    EigenfunctionModel(PolynomialFactor factor, FlowHandle flow, ConvergencePolicy policy = {})
        : factor_(std::move(factor)), flow_(std::move(flow)), policy_(policy) {
        if (factor_.n() != flow_.dimension())
            throw Error(ErrKind::invalid_input, "model: factor and flow dimension mismatch");
        if (flow_.is_map() && std::abs(policy_.dt - std::round(policy_.dt)) > 1e-9)
            throw Error(ErrKind::invalid_input, "model: map refinement step must be an integer");
        if (policy_.dt <= 0)
            throw Error(ErrKind::invalid_input, "model: refinement step must be positive");
        step_propagator_ = back_propagator(policy_.dt);
    }

    const PolynomialFactor& factor() const { return factor_; }
    const FlowHandle& flow() const { return flow_; }
    const ConvergencePolicy& policy() const { return policy_; }

    /// e^{-tA} (flows) or (e^A)^{-t} with integer t (maps).
    CMat back_propagator(double t) const {
        if (flow_.is_map()) {
            long steps = detail::checked_integer_time(t);
            CMat inv = factor_.a_matrix().inverse();
            CMat acc = CMat::Identity(factor_.m(), factor_.m());
            long a = std::labs(steps);
            for (long i = 0; i < a; ++i) acc = acc * (steps >= 0 ? inv : factor_.a_matrix());
            return acc;
        }
        return MatrixExponential(factor_.a_matrix()).at(-t);
    }

    /// e^{+tA} (flows) or (e^A)^t (maps).
    CMat forward_propagator(double t) const { return back_propagator(-t); }

    const CMat& step_propagator() const { return step_propagator_; }

private:
    PolynomialFactor factor_;
    FlowHandle flow_;
    ConvergencePolicy policy_;
    CMat step_propagator_;
};

/// Refinement iterate with convergence control and the three-strike
/// divergence rule; never throws on divergence (see refine_at).
inline EvalResult try_refine_at(const EigenfunctionModel& model, const Vec& x) {
    const auto& pol = model.policy();
    const auto& factor = model.factor();
    EvalResult out;
    Vec xc = x;
    CVec psi = factor.eval(xc);
    CMat e = CMat::Identity(factor.m(), factor.m());
    double min_gap = std::numeric_limits<double>::infinity();
    double prev_gap = std::numeric_limits<double>::infinity();
    int strikes = 0;
    std::deque<cplx> tail{psi.size() ? psi[0] : cplx{}};

    auto push_tail = [&](const CVec& v) {
        tail.push_back(v.size() ? v[0] : cplx{});
        if (tail.size() > 8) tail.pop_front();
    };

    for (int j = 1; j <= pol.max_steps; ++j) {
        try {
            xc = flow_to(model.flow(), xc, pol.dt);
        } catch (const Error&) {
            out.flagged_divergent = true;
            break;
        }
        e = model.step_propagator() * e;
        CVec next = e * factor.eval(xc);
        push_tail(next);
        out.steps_used = j;
        if (!next.allFinite()) {
            out.value = psi;
            out.flagged_divergent = true;
            break;
        }
        double gap = (next - psi).norm();
        out.cauchy_gap = gap;
        out.value = next;
        if (gap <= pol.tol * (1.0 + next.norm())) {
            out.converged = true;
            psi = next;
            break;
        }
        if (next.norm() > pol.divergence_threshold) {
            out.flagged_divergent = true;
            psi = next;
            break;
        }
        if (gap > prev_gap && gap > 10.0 * min_gap) {
            if (++strikes >= 3) {
                out.flagged_divergent = true;
                psi = next;
                break;
            }
        } else {
            strikes = 0;
        }
        min_gap = std::min(min_gap, gap);
        prev_gap = gap;
        psi = next;
    }
    if (out.value.size() == 0) out.value = psi;
    out.history_tail.assign(tail.begin(), tail.end());
    return out;
}

/// As try_refine_at, but a divergence verdict raises DivergenceDetected with
/// the iterate history tail.
inline EvalResult refine_at(const EigenfunctionModel& model, const Vec& x) {
    EvalResult r = try_refine_at(model, x);
    if (r.flagged_divergent) {
        std::ostringstream msg;
        msg << "refinement diverged after " << r.steps_used
            << " steps (last gap " << r.cauchy_gap << ")";
        throw DivergenceDetected(msg.str(), r.history_tail);
    }
    return r;
}

/// Finite-horizon Laplace average (1/(T-burn_in)) \int e^{-mu t} P(Phi^t x) dt
/// by composite Simpson quadrature on the integrator's dense output.  The
/// paper's estimator is the burn_in = 0 case; a positive burn-in discards
/// the transient and converges at the rate of the refinement iterate.
inline cplx laplace_average_at(const EigenfunctionModel& model, const Vec& x, cplx mu, double t_end,
                               double quad_step, double burn_in = 0.0) {
    if (model.flow().is_map())
        throw Error(ErrKind::invalid_input, "laplace average requires a continuous-time system");
    if (model.factor().m() != 1)
        throw Error(ErrKind::invalid_input, "laplace average is defined for scalar factors");
    if (!(t_end > burn_in) || quad_step <= 0)
        throw Error(ErrKind::invalid_input, "laplace average: need T > burn_in and a positive step");

    long nseg = std::max<long>(2, static_cast<long>(std::ceil((t_end - burn_in) / quad_step)));
    if (nseg % 2) ++nseg;
    const double h = (t_end - burn_in) / static_cast<double>(nseg);
    std::vector<cplx> g(nseg + 1);
    std::vector<char> have(nseg + 1, 0);
    const double thresh = model.policy().divergence_threshold;

    auto integrand = [&](double t, const Vec& state) {
        cplx val = model.factor().eval(state)[0] * std::exp(-mu * t);
        if (!std::isfinite(val.real()) || !std::isfinite(val.imag()) || std::abs(val) > thresh)
            throw DivergenceDetected("laplace average integrand exceeded the divergence threshold",
                                     {val});
        return val;
    };

    std::function<bool(double, const DenseSegment<double>&)> obs =
        [&](double, const DenseSegment<double>& seg) {
            long lo = static_cast<long>(std::ceil((seg.t0 - burn_in) / h - 1e-12));
            long hi = static_cast<long>(std::floor((seg.t1 - burn_in) / h + 1e-12));
            for (long i = std::max<long>(lo, 0); i <= std::min(hi, nseg); ++i) {
                if (have[i]) continue;
                double t = burn_in + i * h;
                auto st = seg.eval(t);
                g[i] = integrand(t, Eigen::Map<const Vec>(st.data(), static_cast<long>(st.size())));
                have[i] = 1;
            }
            return true;
        };
    flow_observe(model.flow(), x, t_end, obs);
    for (long i = 0; i <= nseg; ++i)
        if (!have[i])
            throw Error(ErrKind::solver_failure, "laplace average: quadrature node not covered");

    cplx acc = g[0] + g[nseg];
    for (long i = 1; i < nseg; ++i) acc += g[i] * (i % 2 ? 4.0 : 2.0);
    return acc * (h / 3.0) / (t_end - burn_in);
}

/// max over samples of ||psi(Phi^t x) - e^{tA} psi(x)|| with psi from
/// refine_at; fractional t exercises the flow-case semiconjugacy.
inline double semiconjugacy_residual(const EigenfunctionModel& model,
                                     const std::vector<Vec>& samples, double t) {
    CMat fwd = model.forward_propagator(t);
    double worst = 0.0;
    for (const Vec& x : samples) {
        CVec a = refine_at(model, Vec(flow_to(model.flow(), x, t))).value;
        CVec b = fwd * refine_at(model, x).value;
        worst = std::max(worst, (a - b).cwiseAbs().maxCoeff());
    }
    return worst;
}

struct GridSpec {
    Vec lo, hi;
    std::vector<int> counts;

    std::size_t total() const {
        std::size_t t = 1;
        for (int c : counts) t *= static_cast<std::size_t>(c);
        return t;
    }
};

struct GridRecord {
    Vec x;
    CVec value;
    bool converged = false;
    int steps = 0;
};

namespace detail {

/// Grid index tuples in graded lexicographic order (degree ascending, first
/// index descending within a degree) — the library's deterministic row order.
inline std::vector<std::vector<int>> grid_order(const std::vector<int>& counts) {
    std::vector<std::vector<int>> idx;
    std::vector<int> cur(counts.size(), 0);
    std::function<void(std::size_t)> rec = [&](std::size_t pos) {
        if (pos == counts.size()) {
            idx.push_back(cur);
            return;
        }
        for (int i = 0; i < counts[pos]; ++i) {
            cur[pos] = i;
            rec(pos + 1);
        }
    };
    rec(0);
    std::stable_sort(idx.begin(), idx.end(), [](const auto& a, const auto& b) {
        int sa = std::accumulate(a.begin(), a.end(), 0);
        int sb = std::accumulate(b.begin(), b.end(), 0);
        if (sa != sb) return sa < sb;
        return a > b;  // first index descending within a degree
    });
    return idx;
}

}  // namespace detail

/// Evaluate the model on each grid node (parallel over nodes); per-node
/// failures are recorded in the converged flag, never fatal.
inline std::vector<GridRecord> grid_eval(const EigenfunctionModel& model, const GridSpec& grid,
                                         int threads = 1) {
    const int n = model.factor().n();
    if (static_cast<int>(grid.counts.size()) != n || grid.lo.size() != n || grid.hi.size() != n)
        throw Error(ErrKind::invalid_input, "grid spec dimension mismatch");
    for (int c : grid.counts)
        if (c < 1) throw Error(ErrKind::invalid_input, "grid counts must be >= 1");

    auto order = detail::grid_order(grid.counts);
    std::vector<GridRecord> out(order.size());
    parallel_for(order.size(), threads, [&](std::size_t i) {
        Vec x(n);
        for (int d = 0; d < n; ++d) {
            double f = grid.counts[d] == 1
                           ? 0.0
                           : static_cast<double>(order[i][d]) / (grid.counts[d] - 1);
            x[d] = grid.lo[d] + f * (grid.hi[d] - grid.lo[d]);
        }
        GridRecord rec;
        rec.x = x;
        EvalResult r = try_refine_at(model, x);
        rec.value = r.value;
        rec.converged = r.converged;
        rec.steps = r.steps_used;
        out[i] = std::move(rec);
    });
    return out;
}

namespace detail {

inline void write_g17(std::ostream& os, double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    os << buf;
}

}  // namespace detail

/// Comma-separated table: x1..xn, re_1..re_m, im_1..im_m, abs_1..abs_m,
/// converged (0/1), steps.  Extra per-row columns may be appended through
/// `extra` (used by the cycle module for the phase).
inline void write_grid_table(std::ostream& os, const std::vector<GridRecord>& recs, int n, int m,
                             const std::vector<std::string>& extra_headers = {},
                             const std::vector<std::vector<double>>& extra = {}) {
    for (int i = 0; i < n; ++i) os << "x" << (i + 1) << ",";
    for (int i = 0; i < m; ++i) os << "re_" << (i + 1) << ",";
    for (int i = 0; i < m; ++i) os << "im_" << (i + 1) << ",";
    for (int i = 0; i < m; ++i) os << "abs_" << (i + 1) << ",";
    os << "converged,steps";
    for (const auto& h : extra_headers) os << "," << h;
    os << "\n";
    for (std::size_t r = 0; r < recs.size(); ++r) {
        const auto& rec = recs[r];
        for (int i = 0; i < n; ++i) {
            detail::write_g17(os, rec.x[i]);
            os << ",";
        }
        for (int i = 0; i < m; ++i) {
            detail::write_g17(os, rec.value[i].real());
            os << ",";
        }
        for (int i = 0; i < m; ++i) {
            detail::write_g17(os, rec.value[i].imag());
            os << ",";
        }
        for (int i = 0; i < m; ++i) {
            detail::write_g17(os, std::abs(rec.value[i]));
            os << ",";
        }
        os << (rec.converged ? 1 : 0) << "," << rec.steps;
        if (!extra.empty()) {
            for (double v : extra[r]) {
                os << ",";
                detail::write_g17(os, v);
            }
        }
        os << "\n";
    }
}

}  // namespace kf
