#include "mfgtorus/inverse_flow.hpp"

#include <cmath>

namespace mfg {

namespace {

Mat jacobian_at(const CharacteristicField& field, const CoefficientTriple& triple, int k,
                const TorusPoint& x) {
    return sigma1_jacobians(field, triple, x, field.setup.cfg.fd_step_q)[k];
}

}  // namespace

InverseResult invert_flow_with_trajectory(const CharacteristicField& field,
                                          const CoefficientTriple& triple, int k,
                                          const TorusPoint& q, const TorusPoint* initial_guess) {
    const auto& cfg = field.setup.cfg;
    const auto d = static_cast<Eigen::Index>(q.dim());
    TorusPoint x = initial_guess ? *initial_guess : q;

    PointTrajectory traj = solve_frozen(field, triple, x);
    Vec r = min_displacement(traj.sigma1[k], q).components;
    double res = norm2(r);
    Mat jac;
    Eigen::PartialPivLU<Mat> lu;
    bool have_jac = false;
    double prev_res = std::numeric_limits<double>::infinity();

    for (int it = 0; it < cfg.newton_max_iters; ++it) {
        if (res <= cfg.newton_tol) return {x, std::move(traj)};
        if (!have_jac || res > 0.5 * prev_res) {
            // (re)build the chord Jacobian when progress stalls
            jac = jacobian_at(field, triple, k, x);
            if (!(std::abs(jac.determinant()) > 1e-14))
                throw InversionError("invert_flow: singular Jacobian of Sigma^1");
            lu.compute(jac);
            have_jac = true;
        }
        Eigen::VectorXd rv(d);
        for (Eigen::Index i = 0; i < d; ++i) rv(i) = r[i];
        Eigen::VectorXd step = lu.solve(rv);
        Vec xc = x.coords;
        for (Eigen::Index i = 0; i < d; ++i) xc[i] += step(i);
        x = wrap(xc);
        traj = solve_frozen(field, triple, x);
        prev_res = res;
        r = min_displacement(traj.sigma1[k], q).components;
        res = norm2(r);
    }
    if (res <= cfg.newton_tol) return {x, std::move(traj)};
    throw InversionError("invert_flow: Newton iteration did not converge (grid too coarse or T too large)");
}

TorusPoint invert_flow(const CharacteristicField& field, const CoefficientTriple& triple, int k,
                       const TorusPoint& q, const TorusPoint* initial_guess) {
    return invert_flow_with_trajectory(field, triple, k, q, initial_guess).label;
}

JacobianAudit audit_jacobians(const std::vector<Mat>& jacobians, std::size_t d) {
    JacobianAudit audit;
    audit.min_det = std::numeric_limits<double>::infinity();
    for (const auto& j : jacobians) {
        double det = j.determinant();
        audit.min_det = std::min(audit.min_det, det);
        if (std::abs(det) > 1e-300)
            audit.max_inverse_norm =
                std::max(audit.max_inverse_norm, j.inverse().operatorNorm());
        else
            audit.max_inverse_norm = std::numeric_limits<double>::infinity();
    }
    if (!(audit.min_det > 0.5)) audit.flags.push_back("det_below_half");
    double cap = 4.0 * std::pow(1.0 + std::sqrt(static_cast<double>(d)),
                                static_cast<double>(d) - 1.0);
    if (!(audit.max_inverse_norm < cap)) audit.flags.push_back("inverse_norm_above_cap");
    return audit;
}

JacobianAudit jacobian_audit(const CharacteristicField& field, const CoefficientTriple& triple,
                             int k) {
    std::vector<Mat> jacobians;
    const auto& pts =
        field.setup.queries.empty() ? field.setup.mu.particles : field.setup.queries;
    jacobians.reserve(pts.size());
    for (const auto& x : pts) jacobians.push_back(jacobian_at(field, triple, k, x));
    return audit_jacobians(jacobians, field.setup.mu.dim());
}

Vec vee_field(const CharacteristicField& field, const CoefficientTriple& triple, int k,
              const TorusPoint& q) {
    auto inv = invert_flow_with_trajectory(field, triple, k, q);
    return inv.trajectory.sigma2[k];
}

LabelMarcher::LabelMarcher(const CharacteristicField& field, const CoefficientTriple& triple,
                           TorusPoint target)
    : field_(field), triple_(triple), target_(std::move(target)), label_(target_) {}

const PointTrajectory& LabelMarcher::at(int k) {
    const auto& cfg = field_.setup.cfg;
    const auto d = static_cast<Eigen::Index>(target_.dim());
    if (!have_traj_) {
        traj_ = solve_frozen(field_, triple_, label_);
        have_traj_ = true;
    }
    Vec r = min_displacement(traj_.sigma1[k], target_).components;
    double res = norm2(r);
    double prev = std::numeric_limits<double>::infinity();
    for (int it = 0; res > cfg.newton_tol; ++it) {
        if (it >= cfg.newton_max_iters)
            throw InversionError("LabelMarcher: Newton iteration did not converge");
        if (!have_jac_ || res > 0.5 * prev) {
            Mat jac = sigma1_jacobians(field_, triple_, label_, cfg.fd_step_q)[k];
            if (!(std::abs(jac.determinant()) > 1e-14))
                throw InversionError("LabelMarcher: singular Jacobian of Sigma^1");
            lu_.compute(jac);
            have_jac_ = true;
        }
        Eigen::VectorXd rv(d);
        for (Eigen::Index i = 0; i < d; ++i) rv(i) = r[i];
        Eigen::VectorXd step = lu_.solve(rv);
        Vec xc = label_.coords;
        for (Eigen::Index i = 0; i < d; ++i) xc[i] += step(i);
        label_ = wrap(xc);
        traj_ = solve_frozen(field_, triple_, label_);
        prev = res;
        r = min_displacement(traj_.sigma1[k], target_).components;
        res = norm2(r);
    }
    return traj_;
}

}  // namespace mfg
