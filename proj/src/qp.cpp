#include "flexcoord/qp.hpp"

#include "flexcoord/core.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <limits>

namespace flexcoord::qp {

namespace {

using Vec = Eigen::VectorXd;
using SpMat = Eigen::SparseMatrix<double>;

double inf_norm(const Vec& v) { return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>(); }

// Reduced problem over the non-fixed variables.
struct Reduced {
    std::vector<std::size_t> free_index;  // reduced -> original column
    Vec q, c, lo, hi;
    std::vector<bool> has_lo, has_hi;
    SpMat a;  // rows: kept equality rows only
    Vec b;
    bool inconsistent = false;
};

Reduced reduce(const BoxQp& p) {
    const std::size_t n = p.n_vars();
    Reduced r;
    std::vector<long> map(n, -1);
    Vec fixed_x = Vec::Zero(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        if (p.lower[i] == p.upper[i]) {
            fixed_x[static_cast<Eigen::Index>(i)] = p.lower[i];
        } else {
            map[i] = static_cast<long>(r.free_index.size());
            r.free_index.push_back(i);
        }
    }
    const auto nf = static_cast<Eigen::Index>(r.free_index.size());
    r.q.resize(nf);
    r.c.resize(nf);
    r.lo.resize(nf);
    r.hi.resize(nf);
    r.has_lo.resize(static_cast<std::size_t>(nf));
    r.has_hi.resize(static_cast<std::size_t>(nf));
    for (Eigen::Index k = 0; k < nf; ++k) {
        const std::size_t i = r.free_index[static_cast<std::size_t>(k)];
        r.q[k] = p.hessian[i];
        r.c[k] = p.linear[i];
        r.lo[k] = p.lower[i];
        r.hi[k] = p.upper[i];
        r.has_lo[static_cast<std::size_t>(k)] = std::isfinite(p.lower[i]);
        r.has_hi[static_cast<std::size_t>(k)] = std::isfinite(p.upper[i]);
    }

    const SpMat& a = p.eq_matrix;
    const Eigen::Index m = a.rows();
    Vec rhs(m);
    for (Eigen::Index row = 0; row < m; ++row) rhs[row] = p.eq_rhs[static_cast<std::size_t>(row)];
    rhs -= a * fixed_x;

    std::vector<Eigen::Triplet<double>> triplets;
    std::vector<int> row_nnz(static_cast<std::size_t>(m), 0);
    for (Eigen::Index col = 0; col < a.outerSize(); ++col) {
        for (SpMat::InnerIterator it(a, col); it; ++it) {
            const long k = map[static_cast<std::size_t>(it.col())];
            if (k >= 0 && it.value() != 0.0) ++row_nnz[static_cast<std::size_t>(it.row())];
        }
    }
    std::vector<long> row_map(static_cast<std::size_t>(m), -1);
    Eigen::Index kept = 0;
    for (Eigen::Index row = 0; row < m; ++row) {
        if (row_nnz[static_cast<std::size_t>(row)] > 0) {
            row_map[static_cast<std::size_t>(row)] = kept++;
        } else if (std::abs(rhs[row]) > 1e-12 * (1.0 + rhs.lpNorm<Eigen::Infinity>())) {
            r.inconsistent = true;
        }
    }
    for (Eigen::Index col = 0; col < a.outerSize(); ++col) {
        for (SpMat::InnerIterator it(a, col); it; ++it) {
            const long k = map[static_cast<std::size_t>(it.col())];
            const long row = row_map[static_cast<std::size_t>(it.row())];
            if (k >= 0 && row >= 0 && it.value() != 0.0) triplets.emplace_back(row, k, it.value());
        }
    }
    r.a.resize(kept, nf);
    r.a.setFromTriplets(triplets.begin(), triplets.end());
    r.a.makeCompressed();
    r.b.resize(kept);
    for (Eigen::Index row = 0; row < m; ++row) {
        if (row_map[static_cast<std::size_t>(row)] >= 0) r.b[row_map[static_cast<std::size_t>(row)]] = rhs[row];
    }
    return r;
}

// A stalled solve is still accepted when its best iterate is within this
// factor of every tolerance.
constexpr double kAcceptableMerit = 100.0;

// Static regularization of the augmented Newton matrix.
constexpr double kBaseShift = 1e-11;
constexpr double kMaxShift = 1e-5;


// Bound slacks are carried alongside x rather than recomputed as x - lo,
// which cancels to zero once x sits within rounding distance of a bound.
struct Iterate {
    Vec x, y, zl, zu, sl, su;
};

struct Direction {
    Vec dx, dy, dzl, dzu;
};

// Newton systems are solved on the quasi-definite augmented matrix
//   [ Q + D + rho   A^T    ]
//   [ A            -delta  ]
// rather than on A (Q + D)^-1 A^T, whose conditioning collapses once barrier
// weights spread over many orders of magnitude. The static shifts keep the
// LDL^T factor stable; refinement against the unshifted system removes them.
class Newton {
public:
    explicit Newton(const Reduced& r) : r_(r), at_(r.a.transpose()) {
        at_.makeCompressed();
        const Eigen::Index nf = r.q.size();
        const Eigen::Index m = r.a.rows();
        std::vector<Eigen::Triplet<double>> entries;
        entries.reserve(static_cast<std::size_t>(nf + m + r.a.nonZeros()));
        for (Eigen::Index i = 0; i < nf; ++i) entries.emplace_back(i, i, 1.0);
        for (Eigen::Index j = 0; j < r.a.outerSize(); ++j) {
            for (SpMat::InnerIterator e(r.a, j); e; ++e) entries.emplace_back(nf + e.row(), e.col(), e.value());
        }
        for (Eigen::Index k = 0; k < m; ++k) entries.emplace_back(nf + k, nf + k, -1.0);
        kkt_.resize(nf + m, nf + m);
        kkt_.setFromTriplets(entries.begin(), entries.end());
        kkt_.makeCompressed();
        diag_slot_.resize(static_cast<std::size_t>(nf));
        for (Eigen::Index i = 0; i < nf; ++i) {
            // column i starts with its diagonal entry in the lower triangle
            diag_slot_[static_cast<std::size_t>(i)] = kkt_.outerIndexPtr()[i];
        }
    }

    bool factorize(const Vec& diag, double shift) {
        diag_ = diag;
        for (std::size_t i = 0; i < diag_slot_.size(); ++i) {
            kkt_.valuePtr()[diag_slot_[i]] = diag[static_cast<Eigen::Index>(i)] + shift;
        }
        const Eigen::Index nf = diag.size();
        for (Eigen::Index k = nf; k < kkt_.outerSize(); ++k) kkt_.valuePtr()[kkt_.outerIndexPtr()[k]] = -shift;
        if (!analyzed_) {
            ldlt_.analyzePattern(kkt_);
            analyzed_ = true;
        }
        ldlt_.factorize(kkt_);
        return ldlt_.info() == Eigen::Success;
    }

    // Solves (Q + D) dx - A^T dy = rhs_x, A dx = rhs_y. False if the
    // factor produced non-finite values.
    bool solve(const Vec& rhs_x, const Vec& rhs_y, Vec& dx, Vec& dy) const {
        const Eigen::Index nf = rhs_x.size();
        const Eigen::Index m = rhs_y.size();
        Vec rhs(nf + m);
        rhs << rhs_x, rhs_y;
        Vec sol = ldlt_.solve(rhs);
        double last = std::numeric_limits<double>::infinity();
        const double scale = 1.0 + inf_norm(rhs);
        for (int refine = 0; refine < kRefinements; ++refine) {
            const Vec res = rhs - apply(sol);
            const double norm = inf_norm(res);
            if (norm <= 1e-15 * scale || norm >= 0.5 * last) break;
            last = norm;
            sol += ldlt_.solve(res);
        }
        dx = sol.head(nf);
        dy = -sol.tail(m);
        return sol.allFinite();
    }

    const SpMat& at() const { return at_; }

private:
    static constexpr int kRefinements = 6;

    Vec apply(const Vec& v) const {
        const Eigen::Index nf = diag_.size();
        Vec out(v.size());
        out.head(nf) = diag_.cwiseProduct(v.head(nf)) + at_ * v.tail(v.size() - nf);
        out.tail(v.size() - nf) = r_.a * v.head(nf);
        return out;
    }

    const Reduced& r_;
    SpMat at_;
    SpMat kkt_;
    std::vector<Eigen::Index> diag_slot_;
    Vec diag_;
    Eigen::SimplicialLDLT<SpMat, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt_;
    bool analyzed_ = false;
};

double max_step(const Vec& v, const Vec& dv, const std::vector<bool>& active) {
    double alpha = 1.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (!active[static_cast<std::size_t>(i)]) continue;
        if (dv[i] < 0.0) alpha = std::min(alpha, -v[i] / dv[i]);
    }
    return alpha;
}

}  // namespace

double objective(const BoxQp& problem, const std::vector<double>& x) {
    double f = 0.0;
    for (std::size_t i = 0; i < problem.n_vars(); ++i) {
        f += 0.5 * problem.hessian[i] * x[i] * x[i] + problem.linear[i] * x[i];
    }
    return f;
}

Result solve(const BoxQp& problem, const Settings& settings) {
    const std::size_t n = problem.n_vars();
    if (problem.linear.size() != n || problem.lower.size() != n || problem.upper.size() != n ||
        static_cast<std::size_t>(problem.eq_matrix.cols()) != n ||
        static_cast<std::size_t>(problem.eq_matrix.rows()) != problem.n_eq()) {
        throw SolverError("qp: inconsistent problem dimensions");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (problem.lower[i] > problem.upper[i]) throw SolverError("qp: empty bound interval");
        if (!(problem.hessian[i] > 0.0) && !std::isfinite(problem.lower[i]) && !std::isfinite(problem.upper[i])) {
            throw SolverError("qp: variable without curvature or bounds");
        }
    }

    const Reduced r = reduce(problem);
    const Eigen::Index nf = r.q.size();
    const Eigen::Index m = r.a.rows();

    std::size_t n_bounds = 0;
    for (Eigen::Index i = 0; i < nf; ++i) {
        n_bounds += r.has_lo[static_cast<std::size_t>(i)] + r.has_hi[static_cast<std::size_t>(i)];
    }

    Iterate it;
    it.x.resize(nf);
    it.y = Vec::Zero(m);
    it.zl = Vec::Zero(nf);
    it.zu = Vec::Zero(nf);
    for (Eigen::Index i = 0; i < nf; ++i) {
        const bool lo = r.has_lo[static_cast<std::size_t>(i)];
        const bool hi = r.has_hi[static_cast<std::size_t>(i)];
        if (lo && hi) it.x[i] = 0.5 * (r.lo[i] + r.hi[i]);
        else if (lo) it.x[i] = r.lo[i] + 1.0;
        else if (hi) it.x[i] = r.hi[i] - 1.0;
        else it.x[i] = 0.0;
        if (lo) it.zl[i] = 1.0;
        if (hi) it.zu[i] = 1.0;
    }

    Newton newton(r);
    const double b_scale = 1.0 + inf_norm(r.b);
    const double c_scale = 1.0 + inf_norm(r.c);

    it.sl.resize(nf);
    it.su.resize(nf);
    for (Eigen::Index i = 0; i < nf; ++i) {
        it.sl[i] = r.has_lo[static_cast<std::size_t>(i)] ? it.x[i] - r.lo[i] : 1.0;
        it.su[i] = r.has_hi[static_cast<std::size_t>(i)] ? r.hi[i] - it.x[i] : 1.0;
    }
    Vec& sl = it.sl;
    Vec& su = it.su;

    Result result;
    Certificate cert;
    Iterate best = it;
    Certificate best_cert;
    double best_merit = std::numeric_limits<double>::infinity();
    int best_iter = 0;
    int iter = 0;
    bool converged = false;
    for (; iter <= settings.max_iterations; ++iter) {
        const Vec rp = r.a * it.x - r.b;
        const Vec rd = r.q.cwiseProduct(it.x) + r.c - newton.at() * it.y - it.zl + it.zu;
        double comp = 0.0;
        for (Eigen::Index i = 0; i < nf; ++i) comp += sl[i] * it.zl[i] + su[i] * it.zu[i];
        // slack entries of absent bounds carry zero duals, so they add nothing
        const double mu = n_bounds > 0 ? comp / static_cast<double>(n_bounds) : 0.0;
        const double obj = 0.5 * it.x.dot(r.q.cwiseProduct(it.x)) + r.c.dot(it.x);

        cert.primal_residual = inf_norm(rp) / b_scale;
        cert.dual_residual = inf_norm(rd) / c_scale;
        cert.complementarity = mu;
        cert.duality_gap = comp;

        if (!std::isfinite(obj) || !std::isfinite(comp) || !std::isfinite(cert.primal_residual) ||
            !std::isfinite(cert.dual_residual)) {
            break;
        }
        // Near a degenerate optimum the Newton solves lose accuracy and the
        // primal residual can drift upward, so remember the best iterate.
        const double merit = std::max({cert.primal_residual / settings.primal_tol, cert.dual_residual / settings.dual_tol,
                                       comp / (settings.gap_tol * std::max(1.0, std::abs(obj)))});
        if (merit < best_merit) {
            best_merit = merit;
            best = it;
            best_cert = cert;
            best_iter = iter;
        }
        if (merit <= 1.0) {
            converged = true;
            break;
        }
        if (iter == settings.max_iterations) break;

        Vec diag = r.q;
        for (Eigen::Index i = 0; i < nf; ++i) {
            if (r.has_lo[static_cast<std::size_t>(i)]) diag[i] += it.zl[i] / sl[i];
            if (r.has_hi[static_cast<std::size_t>(i)]) diag[i] += it.zu[i] / su[i];
        }
        auto direction = [&](const Vec& rcl, const Vec& rcu, Direction& d) {
            Vec rhs_x = -rd;
            for (Eigen::Index i = 0; i < nf; ++i) {
                if (r.has_lo[static_cast<std::size_t>(i)]) rhs_x[i] += rcl[i] / sl[i];
                if (r.has_hi[static_cast<std::size_t>(i)]) rhs_x[i] -= rcu[i] / su[i];
            }
            if (!newton.solve(rhs_x, -rp, d.dx, d.dy)) return false;
            d.dzl = Vec::Zero(nf);
            d.dzu = Vec::Zero(nf);
            for (Eigen::Index i = 0; i < nf; ++i) {
                if (r.has_lo[static_cast<std::size_t>(i)]) d.dzl[i] = (rcl[i] - it.zl[i] * d.dx[i]) / sl[i];
                if (r.has_hi[static_cast<std::size_t>(i)]) d.dzu[i] = (rcu[i] + it.zu[i] * d.dx[i]) / su[i];
            }
            return d.dzl.allFinite() && d.dzu.allFinite();
        };
        auto step_length = [&](const Direction& d) {
            const Vec dsu = -d.dx;
            double a = max_step(sl, d.dx, r.has_lo);
            a = std::min(a, max_step(su, dsu, r.has_hi));
            a = std::min(a, max_step(it.zl, d.dzl, r.has_lo));
            a = std::min(a, max_step(it.zu, d.dzu, r.has_hi));
            return a;
        };
        auto predictor_corrector = [&](Direction& step) {
            Vec rcl = Vec::Zero(nf), rcu = Vec::Zero(nf);
            for (Eigen::Index i = 0; i < nf; ++i) {
                rcl[i] = -sl[i] * it.zl[i];
                rcu[i] = -su[i] * it.zu[i];
            }
            Direction aff;
            if (!direction(rcl, rcu, aff)) return false;
            if (n_bounds == 0) {
                step = aff;
                return true;
            }
            const double a_aff = step_length(aff);
            double comp_aff = 0.0;
            for (Eigen::Index i = 0; i < nf; ++i) {
                if (r.has_lo[static_cast<std::size_t>(i)])
                    comp_aff += (sl[i] + a_aff * aff.dx[i]) * (it.zl[i] + a_aff * aff.dzl[i]);
                if (r.has_hi[static_cast<std::size_t>(i)])
                    comp_aff += (su[i] - a_aff * aff.dx[i]) * (it.zu[i] + a_aff * aff.dzu[i]);
            }
            const double mu_aff = comp_aff / static_cast<double>(n_bounds);
            const double sigma = std::pow(std::clamp(mu_aff / mu, 0.0, 1.0), 3);
            for (Eigen::Index i = 0; i < nf; ++i) {
                if (r.has_lo[static_cast<std::size_t>(i)])
                    rcl[i] = sigma * mu - sl[i] * it.zl[i] - aff.dx[i] * aff.dzl[i];
                if (r.has_hi[static_cast<std::size_t>(i)])
                    rcu[i] = sigma * mu - su[i] * it.zu[i] + aff.dx[i] * aff.dzu[i];
            }
            return direction(rcl, rcu, step);
        };

        // A breakdown of the factor is retried with heavier static shifts.
        Direction step;
        bool have_step = false;
        for (double shift = kBaseShift; shift <= kMaxShift && !have_step; shift *= 100.0) {
            have_step = newton.factorize(diag, shift) && predictor_corrector(step);
        }
        if (!have_step) break;
        const double tau = std::max(0.99, 1.0 - 10.0 * mu);
        const double alpha = n_bounds > 0 ? std::min(1.0, tau * step_length(step)) : 1.0;
        it.x += alpha * step.dx;
        it.y += alpha * step.dy;
        it.zl += alpha * step.dzl;
        it.zu += alpha * step.dzu;
        for (Eigen::Index i = 0; i < nf; ++i) {
            if (r.has_lo[static_cast<std::size_t>(i)]) sl[i] += alpha * step.dx[i];
            if (r.has_hi[static_cast<std::size_t>(i)]) su[i] -= alpha * step.dx[i];
        }
        if (n_bounds > 0 && alpha < 1e-12) break;
    }

    if (!converged && best_merit <= kAcceptableMerit) converged = true;
    if (!converged || best_merit < std::numeric_limits<double>::infinity()) {
        it = best;
        cert = best_cert;
        iter = best_iter;
    }

    result.x.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (problem.lower[i] == problem.upper[i]) result.x[i] = problem.lower[i];
    }
    for (Eigen::Index k = 0; k < nf; ++k) {
        const std::size_t i = r.free_index[static_cast<std::size_t>(k)];
        result.x[i] = std::clamp(it.x[k], problem.lower[i], problem.upper[i]);
    }
    result.eq_dual.assign(it.y.data(), it.y.data() + it.y.size());
    result.objective = objective(problem, result.x);
    result.iterations = iter;
    result.converged = converged && !r.inconsistent;
    result.certificate = cert;
    return result;
}

}  // namespace flexcoord::qp
