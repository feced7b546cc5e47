"""Estimator-style wrappers around the functional API.

The wrappers hold hyperparameters in ``__init__`` (so ``get_params`` and
``set_params`` work as in scikit-learn), do all work in ``fit`` and store
results in trailing-underscore attributes.  Inputs are grid objects rather
than sample matrices, so these are not drop-in scikit-learn estimators.
"""

from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .gamma_limit import RecoveryContext, sweep
from .smoothing import regularize_general, smooth_plan
from .transport import offdiag_radius, solve_mmot
from .validation import check_density, check_plan


def _check_fitted(est, attr):
    if not hasattr(est, attr):
        raise NotFittedError(f"{type(est).__name__} is not fitted yet; call fit first")


class CoulombTransport(BaseEstimator):
    """Optimal Coulomb transport plan for a density.

    Attributes
    ----------
    solution_ : PlanSolution
    plan_ : ProductField
    cost_ : float
    alpha_ : float or None
        Certified off-diagonal radius of every optimal plan.
    """

    def __init__(self, N=2, method="exact-lp", diagonal="forbid", alpha=None, eta=(1e-1, 3e-2, 1e-2),
                 tol=1e-8, max_iter=5000, cap=None):
        self.N = N
        self.method = method
        self.diagonal = diagonal
        self.alpha = alpha
        self.eta = eta
        self.tol = tol
        self.max_iter = max_iter
        self.cap = cap

    def fit(self, rho, y=None):
        check_density(rho)
        self.solution_ = solve_mmot(rho, self.N, self.method, diagonal=self.diagonal, alpha=self.alpha,
                                    eta=self.eta, tol=self.tol, max_iter=self.max_iter, cap=self.cap)
        self.plan_ = self.solution_.plan
        self.cost_ = self.solution_.cost
        self.alpha_ = offdiag_radius(rho, self.N)
        return self

    def transform(self, rho=None):
        _check_fitted(self, "plan_")
        return self.plan_


class PlanSmoother(BaseEstimator):
    """Mollify a plan and restore its marginals at width ``eps``.

    With ``strip_radius`` set, plans touching the diagonal go through the
    strip replacement first.
    """

    def __init__(self, eps, strip_radius=None):
        self.eps = eps
        self.strip_radius = strip_radius

    def fit(self, plan, rho):
        check_plan(plan)
        check_density(rho)
        if self.strip_radius is None:
            self.smoothed_ = smooth_plan(plan, rho, self.eps)
        else:
            self.smoothed_ = regularize_general(plan, rho, self.strip_radius, self.eps)
        return self

    def transform(self, plan=None):
        _check_fitted(self, "smoothed_")
        return self.smoothed_.p_restored

    def fit_transform(self, plan, rho):
        return self.fit(plan, rho).transform()


class RecoverySweep(BaseEstimator):
    """hbar-sweep of the Hohenberg-Kohn upper bound for one density."""

    def __init__(self, hbars, statistics="bosonic", N=2, method=None, aux="trig"):
        self.hbars = hbars
        self.statistics = statistics
        self.N = N
        self.method = method
        self.aux = aux

    def fit(self, rho, y=None):
        check_density(rho)
        self.context_ = RecoveryContext(rho, self.N, method=self.method, aux=self.aux)
        self.report_ = sweep(rho, list(self.hbars), self.statistics, self.N, context=self.context_)
        return self

    def score(self, rho=None, y=None):
        """Negative final gap, so larger is better."""
        _check_fitted(self, "report_")
        return -float(self.report_.gaps[-1])
