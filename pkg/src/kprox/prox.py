"""Proximal update of the particle density values.

One physical step advances the cloud's density values by a contractive
fixed-point recursion on two positive N-vectors (y, z): the Gibbs
kernel of the pairwise ground cost couples the previous cloud (rows)
to the advanced cloud (columns), the dissipative factor
zeta = exp(-F(eta) - 1) enters the z-update, and the converged output
is z * (kernel^T y).

The kernel rows are shifted by their row-minimum cost before
exponentiating. The fixed point maps exactly onto the unshifted one
(y absorbs the row scaling; z, kernel^T y, and the output are all
unchanged), while the shift guarantees every row has a unit maximum
entry, so large cost scales cannot underflow a whole row to zero.

Columns are a different matter: when the cost scale is much larger
than the entropic weight, kernel^T y can underflow to zero for a
column (an advanced particle farther than float range from every
mass-carrying source in shifted cost). Such columns never feed back
into the loop, because a zero column cannot influence kernel @ z, so
they are skipped in the z-update and patched after convergence by
evaluating z * (kernel^T y) for just those columns in log space. A
patched value that is still below the float range comes out as an
exact zero; zero-valued particles keep moving with the cloud and
regain positive values once their columns re-acquire representable
couplings.
"""

from __future__ import annotations

import time as _time
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from .errors import NumericalUnderflow
from .kernels import cost_matrix_numpy, gibbs_rowshift
from .network import ReducedNetwork
from .transform import TransformSpec, grad_U, potential_F

if TYPE_CHECKING:  # pragma: no cover
    from .dynamics import Ensemble

# Velocity-residual weight in the ground cost. The discretization this
# recursion derives from fixes it at 12; it is not tunable, but lives
# here in one place rather than as a magic number in two formulas.
GROUND_COST_VELOCITY_WEIGHT = 12.0


@dataclass(frozen=True)
class ProxConfig:
    """Parameters of one proximal update."""

    h: float = 1e-3
    epsilon: float = 0.05
    delta: float = 1e-3
    l_max: int = 300

    def __post_init__(self):
        if self.h <= 0 or self.epsilon <= 0 or self.delta <= 0:
            raise ValueError("h, epsilon, delta must be positive")
        if self.l_max < 1:
            raise ValueError("l_max must be >= 1")

    @property
    def exponent(self) -> float:
        """Power applied in the z-update: 1/(1 + 2 epsilon / h)."""
        return 1.0 / (1.0 + 2.0 * self.epsilon / self.h)


@dataclass
class ProxInternals:
    """Exit-state of the fixed point, for stationarity checks.

    ``alive`` marks columns whose kernel^T y is representable at exit;
    z entries outside it are stale (their true values only exist in
    log space).
    """

    y: np.ndarray
    z: np.ndarray
    kernel: np.ndarray
    zeta: np.ndarray
    alive: np.ndarray


@dataclass
class ProxReport:
    iterations: int
    residual_y: float
    residual_z: float
    converged: bool
    wall_seconds: float
    internals: ProxInternals | None = None


def ground_cost(xi, eta, xi_bar, eta_bar, grad_u_at_xi, upsilon, h: float) -> float:
    """Pairwise transport cost between (xi, eta) and (xi_bar, eta_bar).

    Two weighted quadratic residuals: the velocity increment against
    the drift impulse, and the mismatch of the two difference quotients
    (xi_bar - xi)/h and (eta_bar - eta)/h. The cost-matrix builder
    reproduces exactly this through a scaled feature embedding.
    """
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    xi_bar = np.asarray(xi_bar, dtype=float)
    eta_bar = np.asarray(eta_bar, dtype=float)
    upsilon = np.asarray(upsilon, dtype=float)
    r1 = eta_bar - eta + h * upsilon * np.asarray(grad_u_at_xi, dtype=float)
    r2 = (xi_bar - xi) / h - (eta_bar - eta) / h
    w = 1.0 / upsilon
    return float((w * r1 * r1).sum() + GROUND_COST_VELOCITY_WEIGHT * (w * r2 * r2).sum())


def _feature_clouds(
    states_prev: np.ndarray,
    states_next: np.ndarray,
    net: ReducedNetwork,
    spec: TransformSpec,
    h: float,
):
    """Embed both clouds so the cost matrix is plain squared distance.

    Velocity block: sqrt(w) * (eta - h Upsilon grad U) on the previous
    cloud against sqrt(w) * eta_bar on the advanced cloud. Position
    block: sqrt(12 w) * (xi - eta) / h on both clouds.
    """
    n = net.n
    xi_p, eta_p = states_prev[:, :n], states_prev[:, n:]
    xi_n, eta_n = states_next[:, :n], states_next[:, n:]
    w = 1.0 / spec.upsilon_diag
    sw = np.sqrt(w)
    svw = np.sqrt(GROUND_COST_VELOCITY_WEIGHT * w)
    gu = grad_U(xi_p, net, spec)  # one gradient evaluation per previous particle
    vel_prev = sw * (eta_p - h * spec.upsilon_diag * gu)
    vel_next = sw * eta_n
    pos_prev = svw * (xi_p - eta_p) / h
    pos_next = svw * (xi_n - eta_n) / h
    feat_prev = np.concatenate([vel_prev, pos_prev], axis=1)
    feat_next = np.concatenate([vel_next, pos_next], axis=1)
    return feat_prev, feat_next


def build_cost_matrix(
    ens_prev: "Ensemble",
    ens_next: "Ensemble",
    net: ReducedNetwork,
    spec: TransformSpec,
    h: float,
) -> np.ndarray:
    """N x N ground-cost matrix, previous cloud on rows."""
    feat_prev, feat_next = _feature_clouds(ens_prev.states, ens_next.states, net, spec, h)
    return cost_matrix_numpy(feat_prev, feat_next)


def _patch_dead_columns(
    values_next: np.ndarray,
    dead: np.ndarray,
    feat_prev: np.ndarray,
    feat_next: np.ndarray,
    row_min: np.ndarray,
    y: np.ndarray,
    zeta: np.ndarray,
    cfg: ProxConfig,
):
    """Evaluate z * (kernel^T y) in log space for underflowed columns.

    The row shift cancels identically inside kernel^T y, so shifted
    logs plus the loop's y give the exact unshifted column sums. The
    result may round to an exact zero; that is the closest double to
    the true value.
    """
    two_eps = 2.0 * cfg.epsilon
    rows = y > 0.0
    cost_cols = cdist(feat_prev[rows], feat_next[dead], metric="sqeuclidean")
    log_terms = -(cost_cols - row_min[rows, None]) / two_eps + np.log(y[rows, None])
    log_gamma = logsumexp(log_terms, axis=0)
    expo = cfg.exponent
    log_out = expo * np.log(zeta[dead]) + (1.0 - expo) * log_gamma
    values_next[dead] = np.exp(log_out)


def prox_step(
    values_prev: np.ndarray,
    ens_prev: "Ensemble",
    ens_next: "Ensemble",
    net: ReducedNetwork,
    spec: TransformSpec,
    cfg: ProxConfig,
    z0: np.ndarray | None = None,
    keep_internals: bool = False,
):
    """Advance density values over one step via the fixed-point loop.

    Returns (values_next, ProxReport). Non-convergence is reported, not
    raised; the best iterate is still returned and callers decide how
    strict to be.
    """
    tic = _time.perf_counter()
    values_prev = np.asarray(values_prev, dtype=float)
    n_cloud = ens_prev.size
    if ens_next.size != n_cloud:
        raise ValueError("previous and advanced clouds must have equal size")
    if (
        values_prev.shape != (n_cloud,)
        or not np.all(values_prev >= 0.0)
        or not np.any(values_prev > 0.0)
    ):
        raise ValueError("values_prev must be a nonnegative N-vector with positive total")
    if z0 is None:
        z0 = np.ones(n_cloud)
    z0 = np.asarray(z0, dtype=float)
    if z0.shape != (n_cloud,) or not np.all(z0 > 0.0):
        raise ValueError("z0 must be a positive N-vector")

    feat_prev, feat_next = _feature_clouds(
        ens_prev.states, ens_next.states, net, spec, cfg.h
    )
    kernel, row_min = gibbs_rowshift(feat_prev, feat_next, 2.0 * cfg.epsilon)

    eta_prev = ens_prev.states[:, net.n :]
    zeta = np.exp(-potential_F(eta_prev, net, spec) - 1.0)
    if not np.all(zeta > 0.0):
        raise NumericalUnderflow(
            "dissipative factor exp(-F-1) underflowed to zero; velocities too large"
        )

    expo = cfg.exponent
    z = z0
    y = values_prev / (kernel @ z)
    converged = False
    res_y = np.inf
    res_z = np.inf
    iterations = 0
    gty = kernel.T @ y
    for iterations in range(1, cfg.l_max + 1):
        # A zero entry means column j has no float-representable coupling
        # to mass this iteration; its z keeps the previous value (columns
        # at the underflow cliff would otherwise flip between a placeholder
        # and a real value forever) and is patched in log space at exit.
        upd = gty > 0.0
        if iterations == 1 and not upd.any():
            raise NumericalUnderflow(
                "kernel^T y underflowed to zero everywhere; "
                "epsilon is too small for the cost scale"
            )
        z_new = z.copy()
        # through logs: the ratio can overflow a float before the tiny
        # exponent tames it, but its log never can
        z_new[upd] = np.exp(expo * (np.log(zeta[upd]) - np.log(gty[upd])))
        y_new = values_prev / (kernel @ z_new)
        res_z = float(np.linalg.norm(z_new - z))
        res_y = float(np.linalg.norm(y_new - y))
        y, z = y_new, z_new
        gty = kernel.T @ y
        if res_y < cfg.delta and res_z < cfg.delta:
            converged = True
            break
    values_next = z * gty
    dead = values_next == 0.0
    if dead.any():
        _patch_dead_columns(
            values_next, dead, feat_prev, feat_next, row_min, y, zeta, cfg
        )
    report = ProxReport(
        iterations=iterations,
        residual_y=res_y,
        residual_z=res_z,
        converged=converged,
        wall_seconds=_time.perf_counter() - tic,
        internals=ProxInternals(y=y, z=z, kernel=kernel, zeta=zeta, alive=gty > 0.0)
        if keep_internals
        else None,
    )
    return values_next, report


def stationarity_residuals(values_prev: np.ndarray, cfg: ProxConfig, internals: ProxInternals):
    """Relative residuals of the two fixed-point identities at exit.

    Identity one: y * (kernel z) = previous values, over rows with
    positive previous value. Identity two:
    z^(1 + 2 eps / h) * (kernel^T y) = zeta, over alive columns.
    """
    rows = values_prev > 0.0
    lhs1 = internals.y * (internals.kernel @ internals.z)
    rel1 = float(np.max(np.abs(lhs1[rows] - values_prev[rows]) / values_prev[rows]))
    cols = internals.alive
    lhs2 = internals.z ** (1.0 / cfg.exponent) * (internals.kernel.T @ internals.y)
    rel2 = float(np.max(np.abs(lhs2[cols] - internals.zeta[cols]) / internals.zeta[cols]))
    return rel1, rel2


def full_step(
    ens: "Ensemble",
    net: ReducedNetwork,
    spec: TransformSpec,
    cfg: ProxConfig,
    rng: np.random.Generator,
    z0: np.ndarray | None = None,
):
    """Euler-Maruyama state step followed by the density update."""
    from .dynamics import em_step_transformed

    ens_next = em_step_transformed(ens, net, spec, cfg.h, rng)
    values_next, report = prox_step(ens.values, ens, ens_next, net, spec, cfg, z0)
    return ens_next.with_values(values_next), report
