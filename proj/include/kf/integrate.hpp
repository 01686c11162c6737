#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <vector>

#include "kf/jet.hpp"

namespace kf {

struct IntegratorSettings {
    double rtol = 1e-10;
    double atol = 1e-12;
    double max_step = std::numeric_limits<double>::infinity();
    long max_steps = 1000000;
};

namespace detail {

// Error-norm accumulation treats every scalar coefficient of the state as a
// component, so jet transport integrates each Taylor order to tolerance.
struct ErrAcc {
    double err3 = 0.0, err5 = 0.0;
    long n = 0;
    void add(double e3, double e5, double sc) {
        double a = e3 / sc, b = e5 / sc;
        err3 += a * a;
        err5 += b * b;
        ++n;
    }
};

inline void accumulate_error(double e3, double e5, double y0, double y1,
                             double atol, double rtol, ErrAcc& acc) {
    double sc = atol + rtol * std::max(std::abs(y0), std::abs(y1));
    acc.add(std::abs(e3), std::abs(e5), sc);
}

inline void accumulate_error(const std::complex<double>& e3, const std::complex<double>& e5,
                             const std::complex<double>& y0, const std::complex<double>& y1,
                             double atol, double rtol, ErrAcc& acc) {
    double sc = atol + rtol * std::max(std::abs(y0), std::abs(y1));
    acc.add(std::abs(e3), std::abs(e5), sc);
}

template <typename S>
void accumulate_error(const Jet<S>& e3, const Jet<S>& e5, const Jet<S>& y0,
                      const Jet<S>& y1, double atol, double rtol, ErrAcc& acc) {
    for (std::size_t r = 0; r < e3.size(); ++r)
        accumulate_error(e3[r], e5[r], y0[r], y1[r], atol, rtol, acc);
}

inline void state_fill_like(double& out, const double&) { out = 0.0; }
inline void state_fill_like(std::complex<double>& out, const std::complex<double>&) { out = {}; }
template <typename S>
void state_fill_like(Jet<S>& out, const Jet<S>& like) {
    out = Jet<S>(like.table_ptr());
}

inline void state_add_scaled(double& y, const double& k, double a) { y += a * k; }
inline void state_add_scaled(std::complex<double>& y, const std::complex<double>& k, double a) {
    y += a * k;
}
template <typename S>
void state_add_scaled(Jet<S>& y, const Jet<S>& k, double a) {
    y.add_scaled(k, a);
}

inline bool state_finite(double v) { return std::isfinite(v); }
inline bool state_finite(const std::complex<double>& v) {
    return std::isfinite(v.real()) && std::isfinite(v.imag());
}
template <typename S>
bool state_finite(const Jet<S>& v) {
    return std::isfinite(v.max_abs());
}

// DOP853 coefficients (Hairer, Norsett & Wanner, Solving ODEs I).
namespace dop853c {
constexpr double c2 = 0.526001519587677318785587544488e-01;
constexpr double c3 = 0.789002279381515978178381316732e-01;
constexpr double c4 = 0.118350341907227396726757197510e+00;
constexpr double c5 = 0.281649658092772603273242802490e+00;
constexpr double c6 = 0.333333333333333333333333333333e+00;
constexpr double c7 = 0.25e+00;
constexpr double c8 = 0.307692307692307692307692307692e+00;
constexpr double c9 = 0.651282051282051282051282051282e+00;
constexpr double c10 = 0.6e+00;
constexpr double c11 = 0.857142857142857142857142857142e+00;
constexpr double c14 = 0.1e+00;
constexpr double c15 = 0.2e+00;
constexpr double c16 = 0.777777777777777777777777777778e+00;

constexpr double a21 = 5.26001519587677318785587544488e-2;
constexpr double a31 = 1.97250569845378994544595329183e-2;
constexpr double a32 = 5.91751709536136983633785987549e-2;
constexpr double a41 = 2.95875854768068491816892993775e-2;
constexpr double a43 = 8.87627564304205475450678981324e-2;
constexpr double a51 = 2.41365134159266685502369798665e-1;
constexpr double a53 = -8.84549479328286085344864962717e-1;
constexpr double a54 = 9.24834003261792003115737966543e-1;
constexpr double a61 = 3.7037037037037037037037037037e-2;
constexpr double a64 = 1.70828608729473871279604482173e-1;
constexpr double a65 = 1.25467687566822425016691814123e-1;
constexpr double a71 = 3.7109375e-2;
constexpr double a74 = 1.70252211019544039314978060272e-1;
constexpr double a75 = 6.02165389804559606850219397283e-2;
constexpr double a76 = -1.7578125e-2;
constexpr double a81 = 3.70920001185047927108779319836e-2;
constexpr double a84 = 1.70383925712239993810214054705e-1;
constexpr double a85 = 1.07262030446373284651809199168e-1;
constexpr double a86 = -1.53194377486244017527936158236e-2;
constexpr double a87 = 8.27378916381402288758473766002e-3;
constexpr double a91 = 6.24110958716075717114429577812e-1;
constexpr double a94 = -3.36089262944694129406857109825e0;
constexpr double a95 = -8.68219346841726006818189891453e-1;
constexpr double a96 = 2.75920996994467083049415600797e1;
constexpr double a97 = 2.01540675504778934086186788979e1;
constexpr double a98 = -4.34898841810699588477366255144e1;
constexpr double a101 = 4.77662536438264365890433908527e-1;
constexpr double a104 = -2.48811461997166764192642586468e0;
constexpr double a105 = -5.90290826836842996371446475743e-1;
constexpr double a106 = 2.12300514481811942347288949897e1;
constexpr double a107 = 1.52792336328824235832596922938e1;
constexpr double a108 = -3.32882109689848629194453265587e1;
constexpr double a109 = -2.03312017085086261358222928593e-2;
constexpr double a111 = -9.3714243008598732571704021658e-1;
constexpr double a114 = 5.18637242884406370830023853209e0;
constexpr double a115 = 1.09143734899672957818500254654e0;
constexpr double a116 = -8.14978701074692612513997267357e0;
constexpr double a117 = -1.85200656599969598641566180701e1;
constexpr double a118 = 2.27394870993505042818970056734e1;
constexpr double a119 = 2.49360555267965238987089396762e0;
constexpr double a1110 = -3.0467644718982195003823669022e0;
constexpr double a121 = 2.27331014751653820792359768449e0;
constexpr double a124 = -1.05344954667372501984066689879e1;
constexpr double a125 = -2.00087205822486249909675718444e0;
constexpr double a126 = -1.79589318631187989172765950534e1;
constexpr double a127 = 2.79488845294199600508499808837e1;
constexpr double a128 = -2.85899827713502369474065508674e0;
constexpr double a129 = -8.87285693353062954433549289258e0;
constexpr double a1210 = 1.23605671757943030647266201528e1;
constexpr double a1211 = 6.43392746015763530355970484046e-1;

constexpr double b1 = 5.42937341165687622380535766363e-2;
constexpr double b6 = 4.45031289275240888144113950566e0;
constexpr double b7 = 1.89151789931450038304281599044e0;
constexpr double b8 = -5.8012039600105847814672114227e0;
constexpr double b9 = 3.1116436695781989440891606237e-1;
constexpr double b10 = -1.52160949662516078556178806805e-1;
constexpr double b11 = 2.01365400804030348374776537501e-1;
constexpr double b12 = 4.47106157277725905176885569043e-2;

constexpr double bhh1 = 0.244094488188976377952755905512e+00;
constexpr double bhh2 = 0.733846688281611857341361741547e+00;
constexpr double bhh3 = 0.220588235294117647058823529412e-01;

constexpr double er1 = 0.1312004499419488073250102996e-01;
constexpr double er6 = -0.1225156446376204440720569753e+01;
constexpr double er7 = -0.4957589496572501915214079952e+00;
constexpr double er8 = 0.1664377182454986536961530415e+01;
constexpr double er9 = -0.3503288487499736816886487290e+00;
constexpr double er10 = 0.3341791187130174790297318841e+00;
constexpr double er11 = 0.8192320648511571246570742613e-01;
constexpr double er12 = -0.2235530786388629525884427845e-01;

// stages 14-16 (dense output only)
constexpr double a141 = 5.61675022830479523392909219681e-2;
constexpr double a147 = 2.53500210216624811088794765333e-1;
constexpr double a148 = -2.46239037470802489917441475441e-1;
constexpr double a149 = -1.24191423263816360469010140626e-1;
constexpr double a1410 = 1.5329179827876569731206322685e-1;
constexpr double a1411 = 8.20105229563468988491666602057e-3;
constexpr double a1412 = 7.56789766054569976138603589584e-3;
constexpr double a1413 = -8.298e-3;
constexpr double a151 = 3.18346481635021405060768473261e-2;
constexpr double a156 = 2.83009096723667755288322961402e-2;
constexpr double a157 = 5.35419883074385676223797384372e-2;
constexpr double a158 = -5.49237485713909884646569340306e-2;
constexpr double a1511 = -1.08347328697249322858509316994e-4;
constexpr double a1512 = 3.82571090835658412954920192323e-4;
constexpr double a1513 = -3.40465008687404560802977114492e-4;
constexpr double a1514 = 1.41312443674632500278074618366e-1;
constexpr double a161 = -4.28896301583791923408573538692e-1;
constexpr double a166 = -4.69762141536116384314449447206e0;
constexpr double a167 = 7.68342119606259904184240953878e0;
constexpr double a168 = 4.06898981839711007970213554331e0;
constexpr double a169 = 3.56727187455281109270669543021e-1;
constexpr double a1613 = -1.39902416515901462129418009734e-3;
constexpr double a1614 = 2.9475147891527723389556272149e0;
constexpr double a1615 = -9.15095847217987001081870187138e0;

constexpr double d41 = -0.84289382761090128651353491142e+01;
constexpr double d46 = 0.56671495351937776962531783590e+00;
constexpr double d47 = -0.30689499459498916912797304727e+01;
constexpr double d48 = 0.23846676565120698287728149680e+01;
constexpr double d49 = 0.21170345824450282767155149946e+01;
constexpr double d410 = -0.87139158377797299206789907490e+00;
constexpr double d411 = 0.22404374302607882758541771650e+01;
constexpr double d412 = 0.63157877876946881815570249290e+00;
constexpr double d413 = -0.88990336451333310820698117400e-01;
constexpr double d414 = 0.18148505520854727256656404962e+02;
constexpr double d415 = -0.91946323924783554000451984436e+01;
constexpr double d416 = -0.44360363875948939664310572000e+01;
constexpr double d51 = 0.10427508642579134603413151009e+02;
constexpr double d56 = 0.24228349177525818288430175319e+03;
constexpr double d57 = 0.16520045171727028198505394887e+03;
constexpr double d58 = -0.37454675472269020279518312152e+03;
constexpr double d59 = -0.22113666853125306036270938578e+02;
constexpr double d510 = 0.77334326684722638389603898808e+01;
constexpr double d511 = -0.30674084731089398182061213626e+02;
constexpr double d512 = -0.93321305264302278729567221706e+01;
constexpr double d513 = 0.15697238121770843886131091075e+02;
constexpr double d514 = -0.31139403219565177677282850411e+02;
constexpr double d515 = -0.93529243588444783865713862664e+01;
constexpr double d516 = 0.35816841486394083752465898540e+02;
constexpr double d61 = 0.19985053242002433820987653617e+02;
constexpr double d66 = -0.38703730874935176555105901742e+03;
constexpr double d67 = -0.18917813819516756882830838328e+03;
constexpr double d68 = 0.52780815920542364900561016686e+03;
constexpr double d69 = -0.11573902539959630126141871134e+02;
constexpr double d610 = 0.68812326946963000169666922661e+01;
constexpr double d611 = -0.10006050966910838403183860980e+01;
constexpr double d612 = 0.77771377980534432092869265740e+00;
constexpr double d613 = -0.27782057523535084065932004339e+01;
constexpr double d614 = -0.60196695231264120758267380846e+02;
constexpr double d615 = 0.84320405506677161018159903784e+02;
constexpr double d616 = 0.11992291136182789328035130030e+02;
constexpr double d71 = -0.25693933462703749003312586129e+02;
constexpr double d76 = -0.15418974869023643374053993627e+03;
constexpr double d77 = -0.23152937917604549567536039109e+03;
constexpr double d78 = 0.35763911791061412378285349910e+03;
constexpr double d79 = 0.93405324183624310003907691704e+02;
constexpr double d710 = -0.37458323136451633156875139351e+02;
constexpr double d711 = 0.10409964950896230045147246184e+03;
constexpr double d712 = 0.29840293426660503123344363579e+02;
constexpr double d713 = -0.43533456590011143754432175058e+02;
constexpr double d714 = 0.96324553959188282948394950600e+02;
constexpr double d715 = -0.39177261675615439165231486172e+02;
constexpr double d716 = -0.14972683625798562581422125276e+03;
}  // namespace dop853c

}  // namespace detail

/// Dense-output interpolant for one accepted step [t0, t1].
template <typename S>
struct DenseSegment {
    double t0 = 0.0, t1 = 0.0;
    std::vector<S> r1, r2, r3, r4, r5, r6, r7, r8;

    std::vector<S> eval(double t) const {
        const double h = t1 - t0;
        const double s = (t - t0) / h;
        const double s1 = 1.0 - s;
        std::vector<S> out(r1.size());
        for (std::size_t i = 0; i < out.size(); ++i) {
            S acc = r8[i];
            acc *= s;
            acc += r7[i];
            acc *= s1;
            acc += r6[i];
            acc *= s;
            acc += r5[i];
            acc *= s1;
            acc += r4[i];
            acc *= s;
            acc += r3[i];
            acc *= s1;
            acc += r2[i];
            acc *= s;
            acc += r1[i];
            out[i] = acc;
        }
        return out;
    }
};

/// Adaptive 8th-order Dormand-Prince integrator, generic over the scalar
/// type of the state (double for point orbits, Jet<double> for jet
/// transport of variational/Taylor data).
///
/// rhs: (const std::vector<S>& y, std::vector<S>& dydt)
/// observer (optional): called after each accepted step; return false to stop.
template <typename S, typename Rhs>
class Dop853 {
public:
    Dop853(Rhs rhs, IntegratorSettings settings) : rhs_(std::move(rhs)), set_(settings) {}

    /// Integrate y from t0 to t1 in place.  If `observer` is non-null it is
    /// invoked after each accepted step with the dense segment (when
    /// want_dense) or an empty segment.
    void integrate(std::vector<S>& y, double t0, double t1, bool want_dense = false,
                   const std::function<bool(double, const DenseSegment<S>&)>* observer = nullptr) {
        using namespace detail::dop853c;
        if (t1 == t0) return;
        const double dir = t1 > t0 ? 1.0 : -1.0;
        const std::size_t n = y.size();
        auto blank = [&](std::vector<S>& v) {
            v.resize(n);
            for (std::size_t i = 0; i < n; ++i) detail::state_fill_like(v[i], y[0]);
        };
        std::vector<S> k1, k2, k3, k4, k5, k6, k7, k8, k9, k10, k11, k12, k13, yw, y1;
        for (auto* v : {&k1, &k2, &k3, &k4, &k5, &k6, &k7, &k8, &k9, &k10, &k11, &k12, &k13, &yw, &y1})
            blank(*v);

        double t = t0;
        rhs_(y, k1);
        double h = dir * initial_step(y, k1, t0, t1);
        long nstep = 0;
        bool last = false;

        while (!last) {
            if (++nstep > set_.max_steps)
                throw Error(ErrKind::non_convergence, "integrator exceeded max step count");
            if (std::abs(h) > set_.max_step) h = dir * set_.max_step;
            if ((t + h - t1) * dir >= 0.0) {
                h = t1 - t;
                last = true;
            }
            if (std::abs(h) <= std::abs(t) * 1e-15 + 1e-300)
                throw Error(ErrKind::solver_failure, "integrator step size underflow");

            auto stage = [&](std::vector<S>& out,
                             std::initializer_list<std::pair<double, const std::vector<S>*>> terms) {
                out = y;
                for (const auto& [a, k] : terms)
                    for (std::size_t i = 0; i < n; ++i)
                        detail::state_add_scaled(out[i], (*k)[i], h * a);
            };

            stage(yw, {{a21, &k1}});
            rhs_(yw, k2);
            stage(yw, {{a31, &k1}, {a32, &k2}});
            rhs_(yw, k3);
            stage(yw, {{a41, &k1}, {a43, &k3}});
            rhs_(yw, k4);
            stage(yw, {{a51, &k1}, {a53, &k3}, {a54, &k4}});
            rhs_(yw, k5);
            stage(yw, {{a61, &k1}, {a64, &k4}, {a65, &k5}});
            rhs_(yw, k6);
            stage(yw, {{a71, &k1}, {a74, &k4}, {a75, &k5}, {a76, &k6}});
            rhs_(yw, k7);
            stage(yw, {{a81, &k1}, {a84, &k4}, {a85, &k5}, {a86, &k6}, {a87, &k7}});
            rhs_(yw, k8);
            stage(yw, {{a91, &k1}, {a94, &k4}, {a95, &k5}, {a96, &k6}, {a97, &k7}, {a98, &k8}});
            rhs_(yw, k9);
            stage(yw, {{a101, &k1}, {a104, &k4}, {a105, &k5}, {a106, &k6}, {a107, &k7},
                       {a108, &k8}, {a109, &k9}});
            rhs_(yw, k10);
            stage(yw, {{a111, &k1}, {a114, &k4}, {a115, &k5}, {a116, &k6}, {a117, &k7},
                       {a118, &k8}, {a119, &k9}, {a1110, &k10}});
            rhs_(yw, k11);
            stage(yw, {{a121, &k1}, {a124, &k4}, {a125, &k5}, {a126, &k6}, {a127, &k7},
                       {a128, &k8}, {a129, &k9}, {a1210, &k10}, {a1211, &k11}});
            rhs_(yw, k12);

            stage(y1, {{b1, &k1}, {b6, &k6}, {b7, &k7}, {b8, &k8}, {b9, &k9}, {b10, &k10},
                       {b11, &k11}, {b12, &k12}});

            // embedded 5th/3rd order error estimate (Hairer's combination)
            detail::ErrAcc acc;
            for (std::size_t i = 0; i < n; ++i) {
                S e5 = k1[i] * er1;
                detail::state_add_scaled(e5, k6[i], er6);
                detail::state_add_scaled(e5, k7[i], er7);
                detail::state_add_scaled(e5, k8[i], er8);
                detail::state_add_scaled(e5, k9[i], er9);
                detail::state_add_scaled(e5, k10[i], er10);
                detail::state_add_scaled(e5, k11[i], er11);
                detail::state_add_scaled(e5, k12[i], er12);
                S e3 = k1[i] * (b1 - bhh1);
                detail::state_add_scaled(e3, k6[i], b6);
                detail::state_add_scaled(e3, k7[i], b7);
                detail::state_add_scaled(e3, k8[i], b8);
                detail::state_add_scaled(e3, k9[i], b9 - bhh2);
                detail::state_add_scaled(e3, k10[i], b10);
                detail::state_add_scaled(e3, k11[i], b11);
                detail::state_add_scaled(e3, k12[i], b12 - bhh3);
                detail::accumulate_error(e3, e5, y[i], y1[i], set_.atol, set_.rtol, acc);
            }
            double deno = acc.err5 + 0.01 * acc.err3;
            if (deno <= 0.0) deno = 1.0;
            double err = std::abs(h) * acc.err5 / std::sqrt(static_cast<double>(acc.n) * deno);

            static constexpr double expo1 = 1.0 / 8.0;
            static constexpr double safe = 0.9, fac1 = 1.0 / 3.0, fac2 = 6.0;
            double fac11 = std::pow(err, expo1);

            if (err <= 1.0) {
                // accept
                for (std::size_t i = 0; i < n; ++i)
                    if (!detail::state_finite(y1[i]))
                        throw Error(ErrKind::solver_failure, "integrator produced non-finite state");
                rhs_(y1, k13);
                if (observer) {
                    DenseSegment<S> seg;
                    seg.t0 = t;
                    seg.t1 = t + h;
                    if (want_dense)
                        build_dense(seg, y, y1, h, t, k1, k6, k7, k8, k9, k10, k11, k12, k13);
                    if (!(*observer)(t + h, seg)) {
                        y = y1;
                        return;
                    }
                }
                t += h;
                y = y1;
                std::swap(k1, k13);
                if (!last) {
                    double fac = std::max(1.0 / fac2, std::min(1.0 / fac1, fac11 / safe));
                    h /= fac;
                }
            } else {
                last = false;
                double fac = std::max(1.0 / fac2, fac11 / safe);
                h /= fac;
            }
        }
    }

private:
    double initial_step(const std::vector<S>& y, const std::vector<S>& f0, double t0, double t1) {
        // conservative first guess; the controller adapts quickly
        double dnf = 0.0, dny = 0.0;
        detail::ErrAcc a0, a1;
        for (std::size_t i = 0; i < y.size(); ++i) {
            detail::accumulate_error(f0[i], f0[i], y[i], y[i], set_.atol, set_.rtol, a0);
            detail::accumulate_error(y[i], y[i], y[i], y[i], set_.atol, set_.rtol, a1);
        }
        dnf = a0.err5;
        dny = a1.err5;
        double h;
        if (dnf <= 1e-10 || dny <= 1e-10) h = 1e-6;
        else h = std::sqrt(dny / dnf) * 0.01;
        h = std::min(h, std::abs(t1 - t0));
        h = std::min(h, set_.max_step);
        return h;
    }

    void build_dense(DenseSegment<S>& seg, const std::vector<S>& y, const std::vector<S>& y1,
                     double h, double t, const std::vector<S>& k1, const std::vector<S>& k6,
                     const std::vector<S>& k7, const std::vector<S>& k8, const std::vector<S>& k9,
                     const std::vector<S>& k10, const std::vector<S>& k11,
                     const std::vector<S>& k12, const std::vector<S>& k13) {
        using namespace detail::dop853c;
        const std::size_t n = y.size();
        seg.r1 = y;
        seg.r2.resize(n);
        seg.r3.resize(n);
        seg.r4.resize(n);
        seg.r5.resize(n);
        seg.r6.resize(n);
        seg.r7.resize(n);
        seg.r8.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            S ydiff = y1[i] - y[i];
            seg.r2[i] = ydiff;
            S bspl = k1[i] * h - ydiff;
            seg.r3[i] = bspl;
            S r4 = ydiff - k13[i] * h - bspl;
            seg.r4[i] = r4;
        }
        auto comb = [&](std::vector<S>& out, double w1, double w6, double w7, double w8,
                        double w9, double w10, double w11, double w12, double w13) {
            for (std::size_t i = 0; i < n; ++i) {
                S acc = k1[i] * w1;
                detail::state_add_scaled(acc, k6[i], w6);
                detail::state_add_scaled(acc, k7[i], w7);
                detail::state_add_scaled(acc, k8[i], w8);
                detail::state_add_scaled(acc, k9[i], w9);
                detail::state_add_scaled(acc, k10[i], w10);
                detail::state_add_scaled(acc, k11[i], w11);
                detail::state_add_scaled(acc, k12[i], w12);
                detail::state_add_scaled(acc, k13[i], w13);
                out[i] = acc;
            }
        };
        comb(seg.r5, d41, d46, d47, d48, d49, d410, d411, d412, d413);
        comb(seg.r6, d51, d56, d57, d58, d59, d510, d511, d512, d513);
        comb(seg.r7, d61, d66, d67, d68, d69, d610, d611, d612, d613);
        comb(seg.r8, d71, d76, d77, d78, d79, d710, d711, d712, d713);

        // three extra stages for the order-7 interpolant
        std::vector<S> ks(n), k14(n), k15(n), k16(n);
        auto stage_extra = [&](std::vector<S>& out,
                               std::initializer_list<std::pair<double, const std::vector<S>*>> terms) {
            out = y;
            for (const auto& [a, k] : terms)
                for (std::size_t i = 0; i < n; ++i)
                    detail::state_add_scaled(out[i], (*k)[i], h * a);
        };
        (void)t;
        stage_extra(ks, {{a141, &k1}, {a147, &k7}, {a148, &k8}, {a149, &k9}, {a1410, &k10},
                         {a1411, &k11}, {a1412, &k12}, {a1413, &k13}});
        rhs_(ks, k14);
        stage_extra(ks, {{a151, &k1}, {a156, &k6}, {a157, &k7}, {a158, &k8}, {a1511, &k11},
                         {a1512, &k12}, {a1513, &k13}, {a1514, &k14}});
        rhs_(ks, k15);
        stage_extra(ks, {{a161, &k1}, {a166, &k6}, {a167, &k7}, {a168, &k8}, {a169, &k9},
                         {a1613, &k13}, {a1614, &k14}, {a1615, &k15}});
        rhs_(ks, k16);
        for (std::size_t i = 0; i < n; ++i) {
            detail::state_add_scaled(seg.r5[i], k14[i], d414);
            detail::state_add_scaled(seg.r5[i], k15[i], d415);
            detail::state_add_scaled(seg.r5[i], k16[i], d416);
            detail::state_add_scaled(seg.r6[i], k14[i], d514);
            detail::state_add_scaled(seg.r6[i], k15[i], d515);
            detail::state_add_scaled(seg.r6[i], k16[i], d516);
            detail::state_add_scaled(seg.r7[i], k14[i], d614);
            detail::state_add_scaled(seg.r7[i], k15[i], d615);
            detail::state_add_scaled(seg.r7[i], k16[i], d616);
            detail::state_add_scaled(seg.r8[i], k14[i], d714);
            detail::state_add_scaled(seg.r8[i], k15[i], d715);
            detail::state_add_scaled(seg.r8[i], k16[i], d716);
            seg.r5[i] *= h;
            seg.r6[i] *= h;
            seg.r7[i] *= h;
            seg.r8[i] *= h;
        }
    }

    Rhs rhs_;
    IntegratorSettings set_;
};

template <typename S, typename Rhs>
void integrate_ode(Rhs&& rhs, std::vector<S>& y, double t0, double t1,
                   const IntegratorSettings& settings, bool want_dense = false,
                   const std::function<bool(double, const DenseSegment<S>&)>* observer = nullptr) {
    Dop853<S, std::decay_t<Rhs>> stepper(std::forward<Rhs>(rhs), settings);
    stepper.integrate(y, t0, t1, want_dense, observer);
}

}  // namespace kf
