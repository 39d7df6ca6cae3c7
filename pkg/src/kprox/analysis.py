"""Validation metrics and desk-scale oracles.

Everything here consumes weighted particle clouds produced by the
pipeline and turns them into checkable numbers: moment summaries,
covariance and cloud distances, marginal histograms, and an n = 1
grid solver of the underlying kinetic PDE used as an accuracy oracle.

Particles follow the sample-path law, so the stored density values are
not probability weights by themselves. All "proximal" statistics use
the self-normalized importance scheme: weight_i proportional to
value_i / qhat_i, with qhat a leave-one-out Gaussian kernel estimate
(Scott bandwidth) of the cloud's own sampling density. The effective
sample size of those weights is always reported.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
import scipy.linalg
from scipy.optimize import linprog
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from .errors import (
    DegenerateWeightsWarning,
    MassLeak,
    NonFinite,
    NotPSD,
    UnstableStep,
    WeightMismatch,
)
from .network import ReducedNetwork, potential_V

if TYPE_CHECKING:  # pragma: no cover
    from .dynamics import Ensemble

_EXACT_OT_MAX_ENTRIES = 4096


# ---------------------------------------------------------------------------
# moments


@dataclass(frozen=True)
class MomentSummary:
    mean: np.ndarray  # (2n,)
    cov: np.ndarray  # (2n, 2n)
    source: str  # "MC" | "Prox"

    def __post_init__(self):
        if not (np.all(np.isfinite(self.mean)) and np.all(np.isfinite(self.cov))):
            raise NonFinite(f"{self.source} moment summary", -1)


def mc_moments(ens: "Ensemble") -> MomentSummary:
    """Unweighted sample mean and population (1/N) covariance."""
    x = ens.states
    if x.shape[0] < 2:
        raise ValueError("need at least two particles")
    mean = x.mean(axis=0)
    d = x - mean
    cov = d.T @ d / x.shape[0]
    return MomentSummary(mean=mean, cov=0.5 * (cov + cov.T), source="MC")


def importance_weights(ens: "Ensemble"):
    """Normalized weights value_i / qhat_i and their effective sample size.

    qhat is a leave-one-out Gaussian KDE with Scott's bandwidth on the
    cloud's own states, computed fully in log space so that huge or
    tiny density values (the transform Jacobian can be astronomically
    scaled) never overflow.
    """
    x = ens.states
    n_pts, dim = x.shape
    if n_pts < 2:
        raise ValueError("need at least two particles")
    cov = np.cov(x, rowvar=False, bias=False)
    cov = np.atleast_2d(cov)
    factor = n_pts ** (-1.0 / (dim + 4))  # Scott's rule
    band = factor * factor * cov
    jitter = 1e-12 * max(np.trace(band) / dim, 1e-300)
    for _ in range(8):
        try:
            chol = np.linalg.cholesky(band + jitter * np.eye(dim))
            break
        except np.linalg.LinAlgError:
            jitter *= 1e3
    else:
        raise NonFinite("bandwidth matrix not factorizable", -1)
    white = scipy.linalg.solve_triangular(chol, x.T, lower=True).T
    sq = cdist(white, white, metric="sqeuclidean")
    np.fill_diagonal(sq, np.inf)  # leave-one-out
    log_q = (
        logsumexp(-0.5 * sq, axis=1)
        - np.log(n_pts - 1)
        - 0.5 * dim * np.log(2.0 * np.pi)
        - np.sum(np.log(np.diag(chol)))
    )
    with np.errstate(divide="ignore"):  # zero values carry zero weight
        log_w = np.log(ens.values) - log_q
    log_w -= logsumexp(log_w)
    w = np.exp(log_w)
    ess = 1.0 / float((w * w).sum())
    if ess < 0.01 * n_pts:
        warnings.warn(
            f"importance weights degenerate: ESS {ess:.1f} of N={n_pts}",
            DegenerateWeightsWarning,
            stacklevel=2,
        )
    return w, ess


def prox_moments(ens: "Ensemble"):
    """Importance-weighted mean/covariance. Returns (summary, ess)."""
    w, ess = importance_weights(ens)
    x = ens.states
    mean = w @ x
    d = x - mean
    cov = (d * w[:, None]).T @ d
    return MomentSummary(mean=mean, cov=0.5 * (cov + cov.T), source="Prox"), ess


# ---------------------------------------------------------------------------
# distances


def _psd_sqrt(a: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(0.5 * (a + a.T))
    if vals.min() < -1e-10 * max(1.0, float(vals.max())):
        raise NotPSD(float(vals.min()))
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def bures_wasserstein(cov_a: np.ndarray, cov_b: np.ndarray) -> float:
    """Covariance distance sqrt(tr A + tr B - 2 tr((sqrtA B sqrtA)^1/2))."""
    cov_a = np.asarray(cov_a, dtype=float)
    cov_b = np.asarray(cov_b, dtype=float)
    root_a = _psd_sqrt(cov_a)
    inner = root_a @ cov_b @ root_a
    vals = np.linalg.eigvalsh(0.5 * (inner + inner.T))
    if vals.min() < -1e-10 * max(1.0, float(vals.max())):
        raise NotPSD(float(vals.min()))
    cross = np.sqrt(np.clip(vals, 0.0, None)).sum()
    tr_a = abs(float(np.trace(cov_a)))
    tr_b = abs(float(np.trace(cov_b)))
    d2 = float(tr_a + tr_b - 2.0 * cross)
    # the subtraction cancels to eigensolver noise for nearly equal
    # inputs; below that floor the only resolvable answer is zero
    if d2 <= 64.0 * np.finfo(float).eps * (tr_a + tr_b):
        return 0.0
    return float(np.sqrt(d2))


def _check_weights(weights_a, weights_b):
    sum_a, sum_b = float(weights_a.sum()), float(weights_b.sum())
    if abs(sum_a - 1.0) > 1e-9 or abs(sum_b - 1.0) > 1e-9:
        raise WeightMismatch(sum_a, sum_b)


def _exact_w2sq(cost: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    """Transportation LP via HiGHS; one redundant marginal row dropped."""
    na, nb = cost.shape
    rows = []
    cols = []
    data = []
    for i in range(na):
        rows.extend([i] * nb)
        cols.extend(range(i * nb, (i + 1) * nb))
        data.extend([1.0] * nb)
    for j in range(nb - 1):  # last column constraint is redundant
        rows.extend([na + j] * na)
        cols.extend(j + nb * np.arange(na))
        data.extend([1.0] * na)
    from scipy.sparse import coo_matrix

    a_eq = coo_matrix((data, (rows, cols)), shape=(na + nb - 1, na * nb))
    b_eq = np.concatenate([a, b[:-1]])
    res = linprog(cost.ravel(), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if not res.success:  # pragma: no cover - LP on a compact polytope
        raise RuntimeError(f"transport LP failed: {res.message}")
    return float(res.fun)


def _sinkhorn_w2sq(cost, a, b, eps_target, max_iter=2000, tol=1e-10):
    """Log-domain entropic OT with epsilon-scaling; returns plan cost."""
    log_a = np.log(a)
    log_b = np.log(b)
    f = np.zeros_like(a)
    g = np.zeros_like(b)
    scale = float(np.median(cost[cost > 0])) if np.any(cost > 0) else 1.0
    eps = max(scale, eps_target)
    while True:
        for _ in range(max_iter if eps <= eps_target else 60):
            f_new = -eps * logsumexp((g[None, :] - cost) / eps + log_b[None, :], axis=1)
            g_new = -eps * logsumexp((f_new[:, None] - cost) / eps + log_a[:, None], axis=0)
            shift_f = float(np.max(np.abs(f_new - f)))
            shift_g = float(np.max(np.abs(g_new - g)))
            f, g = f_new, g_new
            if max(shift_f, shift_g) < tol * max(1.0, eps):
                break
        if eps <= eps_target:
            break
        eps = max(eps * 0.5, eps_target)
    log_plan = (f[:, None] + g[None, :] - cost) / eps + log_a[:, None] + log_b[None, :]
    plan = np.exp(log_plan)
    # renormalize away the residual marginal defect before taking the cost
    plan /= plan.sum()
    return float((plan * cost).sum())


def wasserstein2(points_a, weights_a, points_b, weights_b, mode="sinkhorn", eps_ot=None):
    """2-Wasserstein distance between weighted clouds (squared-Euclidean
    ground cost, returns the square root of the transport cost).

    Exact mode solves the transportation LP and is capped at 4096 cost
    entries; sinkhorn mode reports the entropic plan's transport cost
    (no debiasing) with default eps_ot = 1e-3 * median pairwise cost.
    """
    points_a = np.atleast_2d(np.asarray(points_a, dtype=float))
    points_b = np.atleast_2d(np.asarray(points_b, dtype=float))
    weights_a = np.asarray(weights_a, dtype=float)
    weights_b = np.asarray(weights_b, dtype=float)
    _check_weights(weights_a, weights_b)
    cost = cdist(points_a, points_b, metric="sqeuclidean")
    if mode == "exact":
        if cost.size > _EXACT_OT_MAX_ENTRIES:
            raise ValueError(
                f"exact transport capped at {_EXACT_OT_MAX_ENTRIES} cost entries; "
                "use mode='sinkhorn'"
            )
        w2sq = _exact_w2sq(cost, weights_a, weights_b)
    elif mode == "sinkhorn":
        if eps_ot is None:
            positive = cost[cost > 0]
            eps_ot = 1e-3 * float(np.median(positive)) if positive.size else 1e-9
        w2sq = _sinkhorn_w2sq(cost, weights_a, weights_b, eps_ot)
    else:
        raise ValueError("mode must be 'exact' or 'sinkhorn'")
    return float(np.sqrt(max(w2sq, 0.0)))


# ---------------------------------------------------------------------------
# marginals and summaries


def marginal_univariate(ens: "Ensemble", coord: int, bins: int, lo=None, hi=None, weights=None):
    """Weighted histogram density of one coordinate.

    Coordinates below n are angles and get wrapped to [0, 2pi) first.
    ``weights=None`` computes the importance weights; pass an array to
    reuse precomputed ones, or uniform weights for plain MC histograms.
    Returns (edges, density).
    """
    if bins < 2:
        raise ValueError("bins must be >= 2")
    n = ens.n
    x = ens.states[:, coord]
    if coord < n:
        x = np.mod(x, 2.0 * np.pi)
        if lo is None:
            lo, hi = 0.0, 2.0 * np.pi
    if lo is None:
        lo, hi = float(x.min()), float(x.max())
    if weights is None:
        weights, _ = importance_weights(ens)
    density, edges = np.histogram(x, bins=bins, range=(lo, hi), weights=weights, density=True)
    return edges, density


def marginal_bivariate_scatter(ens: "Ensemble", i: int) -> np.ndarray:
    """Plot-ready (theta_i wrapped, omega_i, joint value) records.

    The third column is the particle's joint density value used as a
    color, not a bivariate marginal density.
    """
    n = ens.n
    if not 1 <= i <= n:
        raise ValueError(f"generator index must be in 1..{n}")
    out = np.zeros(ens.size, dtype=[("theta", float), ("omega", float), ("value", float)])
    out["theta"] = np.mod(ens.states[:, i - 1], 2.0 * np.pi)
    out["omega"] = ens.states[:, n + i - 1]
    out["value"] = ens.values
    return out


def boxplot_stats(trajectory, coord: int):
    """Five-number summary plus mean per snapshot (type-7 quantiles)."""
    if not trajectory:
        raise ValueError("trajectory is empty")
    rows = []
    for ens in trajectory:
        x = ens.states[:, coord]
        q1, med, q3 = np.quantile(x, [0.25, 0.5, 0.75])
        rows.append(
            {
                "time": ens.time,
                "min": float(x.min()),
                "q1": float(q1),
                "median": float(med),
                "q3": float(q3),
                "max": float(x.max()),
                "mean": float(x.mean()),
            }
        )
    return rows


@dataclass(frozen=True)
class MetricsRow:
    time: float
    rel_mean_err: float
    d_bw_normalized: float
    w2: float
    ess: float


def compare_metrics(ens_prox: "Ensemble", ens_mc: "Ensemble", w2_mode=None, eps_ot=None):
    """One validation row: proximal cloud against an independent MC twin."""
    prox, ess = prox_moments(ens_prox)
    mc = mc_moments(ens_mc)
    rel = float(
        np.linalg.norm(mc.mean - prox.mean) / max(np.linalg.norm(mc.mean), 1e-300)
    )
    dbw = bures_wasserstein(mc.cov, prox.cov) / np.sqrt(max(np.trace(mc.cov), 1e-300))
    if w2_mode is None:
        w2_mode = "exact" if ens_prox.size * ens_mc.size <= _EXACT_OT_MAX_ENTRIES else "sinkhorn"
    w_prox, _ = importance_weights(ens_prox)
    w_mc = np.full(ens_mc.size, 1.0 / ens_mc.size)
    w2 = wasserstein2(ens_prox.states, w_prox, ens_mc.states, w_mc, mode=w2_mode, eps_ot=eps_ot)
    return MetricsRow(
        time=ens_prox.time,
        rel_mean_err=rel,
        d_bw_normalized=float(dbw),
        w2=w2,
        ess=ess,
    )


# ---------------------------------------------------------------------------
# n = 1 kinetic PDE oracle


@dataclass
class GridDensity:
    """Cell-centered density on [0, 2pi) x [-omega_max, omega_max]."""

    theta_centers: np.ndarray  # (G_theta,)
    omega_centers: np.ndarray  # (G_omega,)
    values: np.ndarray  # (G_theta, G_omega), >= 0
    time: float

    @property
    def d_theta(self) -> float:
        return float(self.theta_centers[1] - self.theta_centers[0])

    @property
    def d_omega(self) -> float:
        return float(self.omega_centers[1] - self.omega_centers[0])

    def mass(self) -> float:
        return float(self.values.sum() * self.d_theta * self.d_omega)

    def marginal_theta(self) -> np.ndarray:
        return self.values.sum(axis=1) * self.d_omega

    def marginal_omega(self) -> np.ndarray:
        return self.values.sum(axis=0) * self.d_theta


def boltzmann_n1(net: ReducedNetwork, theta: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """Grid-normalized Boltzmann density exp(-beta (V + m w^2 / 2)) / Z.

    Well defined as a periodic density only when the tilt P vanishes;
    callers pick fixtures accordingly.
    """
    beta = float(2.0 * net.gamma[0] / net.sigma[0] ** 2)
    v_theta = potential_V(theta.reshape(-1, 1), net)
    ham = v_theta[:, None] + 0.5 * net.m[0] * omega[None, :] ** 2
    dens = np.exp(-beta * (ham - ham.min()))
    d_th = theta[1] - theta[0]
    d_om = omega[1] - omega[0]
    return dens / (dens.sum() * d_th * d_om)


def fd_fpk_oracle_n1(
    net: ReducedNetwork,
    rho0,
    t_final: float,
    omega_max: float = 2.0,
    n_theta: int = 128,
    n_omega: int = 192,
    dt: float | None = None,
    snapshot_times=(),
) -> list[GridDensity]:
    """Explicit upwind finite-volume solve of the n = 1 kinetic PDE.

    Periodic in theta, zero-flux walls at omega = +-omega_max,
    donor-cell advection in both directions, centered diffusion in
    omega. ``rho0`` is a callable rho0(theta, omega) -> density or a
    pre-tabulated (n_theta, n_omega) array; it is renormalized on the
    grid. Returns GridDensity snapshots at the requested times plus
    t_final (always last).
    """
    if net.n != 1:
        raise ValueError("oracle is n = 1 only")
    if net.sigma[0] <= 0.0:
        raise ValueError("oracle requires positive diffusion")
    m, gamma, sigma = float(net.m[0]), float(net.gamma[0]), float(net.sigma[0])
    diff = sigma * sigma / (2.0 * m * m)

    d_th = 2.0 * np.pi / n_theta
    d_om = 2.0 * omega_max / n_omega
    theta = (np.arange(n_theta) + 0.5) * d_th
    omega = -omega_max + (np.arange(n_omega) + 0.5) * d_om

    if callable(rho0):
        rho = rho0(theta[:, None], omega[None, :]) * np.ones((n_theta, n_omega))
    else:
        rho = np.array(rho0, dtype=float)
        if rho.shape != (n_theta, n_omega):
            raise ValueError("rho0 array has wrong shape")
    if np.any(rho < 0.0):
        raise ValueError("rho0 must be nonnegative")
    rho = rho / (rho.sum() * d_th * d_om)

    # dV/dtheta for the single machine: P - k sin(theta - phi) enters with
    # a minus sign; reuse the network gradient for exactness.
    from .network import grad_V

    dv = grad_V(np.stack([theta], axis=1), net)[:, 0]  # (n_theta,)

    # drift in the omega direction at omega faces: a = -(gamma w + V')/m
    omega_faces = -omega_max + np.arange(1, n_omega) * d_om  # interior faces
    a_face = -(gamma * omega_faces[None, :] + dv[:, None]) / m  # (n_theta, n_omega-1)

    cfl = (
        np.abs(omega).max() / d_th
        + np.abs(a_face).max() / d_om
        + 2.0 * diff / (d_om * d_om)
    )
    dt_stable = 0.9 / cfl
    if dt is None:
        n_steps = max(int(np.ceil(t_final / dt_stable)), 1)
        dt = t_final / n_steps
    else:
        if dt > dt_stable:
            raise UnstableStep(f"dt={dt:.3e} exceeds stability bound {dt_stable:.3e}")
        n_steps = int(round(t_final / dt))
        if abs(n_steps * dt - t_final) > 1e-9:
            raise ValueError("t_final must be an integer multiple of dt")

    mass0 = rho.sum() * d_th * d_om
    pos_omega = omega > 0  # per-column upwind direction for theta advection
    a_pos = np.maximum(a_face, 0.0)
    a_neg = np.minimum(a_face, 0.0)

    want = sorted(set(float(t) for t in snapshot_times) | {float(t_final)})
    snaps: list[GridDensity] = []
    next_want = 0
    t = 0.0
    for step in range(n_steps + 1):
        while next_want < len(want) and t >= want[next_want] - 0.5 * dt:
            snaps.append(
                GridDensity(
                    theta_centers=theta.copy(),
                    omega_centers=omega.copy(),
                    values=rho.copy(),
                    time=t,
                )
            )
            next_want += 1
        if step == n_steps:
            break
        # theta advection, donor cell, periodic: flux at face i+1/2
        flux_th = np.where(pos_omega[None, :], omega[None, :] * rho,
                           omega[None, :] * np.roll(rho, -1, axis=0))
        rho = rho - (dt / d_th) * (flux_th - np.roll(flux_th, 1, axis=0))
        # omega advection + diffusion, zero flux at the walls
        flux_om = a_pos * rho[:, :-1] + a_neg * rho[:, 1:]
        flux_om = flux_om - diff * (rho[:, 1:] - rho[:, :-1]) / d_om
        div = np.zeros_like(rho)
        div[:, :-1] += flux_om
        div[:, 1:] -= flux_om
        rho = rho - (dt / d_om) * div
        t += dt

    lost = abs(snaps[-1].mass() - mass0)
    if lost > 1e-4:
        raise MassLeak(lost)
    return snaps


def l1_distance_histogram(edges: np.ndarray, density_a: np.ndarray, density_b: np.ndarray):
    """Integral of |a - b| for two densities on the same bin edges."""
    width = np.diff(edges)
    return float((np.abs(density_a - density_b) * width).sum())
