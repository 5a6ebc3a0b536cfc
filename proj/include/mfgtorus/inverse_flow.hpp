#pragma once

#include "mfgtorus/characteristics.hpp"

namespace mfg {

// Newton inversion of q -> Sigma^1_t(q) at grid time index k: returns x with
// torus_dist(Sigma^1_t(x), q) <= newton_tol. The residual is the wrapped
// displacement and the initial guess defaults to q itself (Sigma^1 is close
// to the identity for small T). Throws InversionError on a singular Jacobian
// or stalled iteration.
TorusPoint invert_flow(const CharacteristicField& field, const CoefficientTriple& triple, int k,
                       const TorusPoint& q, const TorusPoint* initial_guess = nullptr);

// Inversion that also returns the full characteristic through the label, so
// callers get Sigma^2 along the inverse at no extra cost.
struct InverseResult {
    TorusPoint label;          // X_t(q)
    PointTrajectory trajectory;  // characteristic through the label
};
InverseResult invert_flow_with_trajectory(const CharacteristicField& field,
                                          const CoefficientTriple& triple, int k,
                                          const TorusPoint& q,
                                          const TorusPoint* initial_guess = nullptr);

// Finite-difference Jacobians of Sigma^1_t over the tracked query points:
// minimum determinant, maximum norm of the inverse, and flags when the
// observed values leave (1/2, ...) x (..., 4 (1+sqrt(d))^{d-1}).
struct JacobianAudit {
    double min_det = 0.0;
    double max_inverse_norm = 0.0;
    std::vector<std::string> flags;
};
JacobianAudit jacobian_audit(const CharacteristicField& field, const CoefficientTriple& triple,
                             int k);
// Audit of externally supplied Jacobians (used to exercise the flag logic).
JacobianAudit audit_jacobians(const std::vector<Mat>& jacobians, std::size_t d);

// momentum-in-space field: V(t,q) = Sigma^2_t(X_t(q)).
Vec vee_field(const CharacteristicField& field, const CoefficientTriple& triple, int k,
              const TorusPoint& q);

// Inverts the flow through one fixed target point at many grid times,
// reusing the frozen characteristic between calls: the trajectory from the
// previous slice already gives the residual at the next one, and the chord
// Jacobian is only rebuilt when Newton stalls. Cheapest when consecutive
// calls use nearby k.
class LabelMarcher {
  public:
    LabelMarcher(const CharacteristicField& field, const CoefficientTriple& triple,
                 TorusPoint target);
    // characteristic through X_{t_k}(target)
    const PointTrajectory& at(int k);
    const TorusPoint& label() const { return label_; }

  private:
    const CharacteristicField& field_;
    const CoefficientTriple& triple_;
    TorusPoint target_;
    TorusPoint label_;
    PointTrajectory traj_;
    Eigen::PartialPivLU<Mat> lu_;
    bool have_jac_ = false;
    bool have_traj_ = false;
};

}  // namespace mfg
