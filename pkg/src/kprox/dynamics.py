"""Particle-state propagation.

Euler-Maruyama stepping for the networked swing dynamics in original
(theta, omega) and scaled (xi, eta) coordinates, and the driver loop
that alternates a state step with a density-value update. Angles are
never wrapped during integration; wrapping is an output-time concern.
"""

from __future__ import annotations

import time as _time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import rng as _rng
from .errors import ConfigError, NonConvergence, NonConvergenceWarning, NonFinite
from .network import ReducedNetwork, grad_V
from .transform import TransformSpec, grad_F, grad_U, to_theta_omega, to_xi_eta

_COORDS = ("original", "transformed")


@dataclass(frozen=True)
class Ensemble:
    """Weighted particle cloud: N states in 2n dimensions plus the joint
    density value carried by each particle."""

    coords: str
    states: np.ndarray  # (N, 2n)
    values: np.ndarray  # (N,)
    step_index: int = 0
    time: float = 0.0

    def __post_init__(self):
        if self.coords not in _COORDS:
            raise ValueError(f"coords must be one of {_COORDS}")
        states = np.asarray(self.states, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if states.ndim != 2 or states.shape[1] % 2 != 0 or states.shape[0] < 1:
            raise ValueError("states must be (N, 2n) with N >= 1")
        if values.shape != (states.shape[0],):
            raise ValueError("values must be an N-vector")
        # Exact zeros are legal: a particle whose density value underflowed
        # (farther than float range from all mass). Negative values are not.
        if not np.all(values >= 0.0) or not np.any(values > 0.0):
            raise ValueError("density values must be nonnegative with positive total")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.states.shape[1] // 2

    @property
    def size(self) -> int:
        return self.states.shape[0]

    def with_states(self, states: np.ndarray, step_index: int, time: float) -> "Ensemble":
        return Ensemble(self.coords, states, self.values, step_index, time)

    def with_values(self, values: np.ndarray) -> "Ensemble":
        return Ensemble(self.coords, self.states, values, self.step_index, self.time)


def to_transformed(ens: Ensemble, spec: TransformSpec) -> Ensemble:
    """Pushforward of an original-coordinate ensemble through the scaling.

    Density values divide by the map's Jacobian determinant, applied in
    log space because the determinant itself can overflow a float.
    """
    if ens.coords != "transformed":
        with np.errstate(divide="ignore"):  # zero values stay exactly zero
            values = np.exp(np.log(ens.values) - spec.log_jac)
        return Ensemble(
            coords="transformed",
            states=to_xi_eta(ens.states, spec),
            values=values,
            step_index=ens.step_index,
            time=ens.time,
        )
    return ens


def to_original(ens: Ensemble, spec: TransformSpec) -> Ensemble:
    """Pushback to (theta, omega); inverse of :func:`to_transformed`."""
    if ens.coords != "original":
        with np.errstate(divide="ignore"):
            values = np.exp(np.log(ens.values) + spec.log_jac)
        return Ensemble(
            coords="original",
            states=to_theta_omega(ens.states, spec),
            values=values,
            step_index=ens.step_index,
            time=ens.time,
        )
    return ens


def _require_finite(states: np.ndarray, step_index: int):
    bad = ~np.isfinite(states)
    if bad.any():
        i = int(np.argwhere(bad.any(axis=1))[0, 0])
        raise NonFinite(f"particle state at step {step_index}", i)


def em_step_original(
    ens: Ensemble,
    net: ReducedNetwork,
    h: float,
    rng: np.random.Generator | None = None,
    noise: np.ndarray | None = None,
) -> Ensemble:
    """One Euler-Maruyama step of the (theta, omega) dynamics.

    Density values pass through untouched; the proximal update owns them.
    ``noise`` overrides the generator with an explicit (N, n) standard
    normal draw, which the transform-commutation test relies on.
    """
    if ens.coords != "original":
        raise ValueError("em_step_original expects original coordinates")
    n = ens.n
    th, om = ens.states[:, :n], ens.states[:, n:]
    if noise is None:
        noise = rng.standard_normal(size=(ens.size, n))
    th_new = th + h * om
    om_new = (
        om
        + h * (-(grad_V(th, net) / net.m) - (net.gamma / net.m) * om)
        + np.sqrt(h) * (net.sigma / net.m) * noise
    )
    states = np.concatenate([th_new, om_new], axis=1)
    _require_finite(states, ens.step_index + 1)
    return ens.with_states(states, ens.step_index + 1, ens.time + h)


def em_step_transformed(
    ens: Ensemble,
    net: ReducedNetwork,
    spec: TransformSpec,
    h: float,
    rng: np.random.Generator | None = None,
    noise: np.ndarray | None = None,
    grad_u=None,
    grad_f=None,
) -> Ensemble:
    """One Euler-Maruyama step of the scaled (xi, eta) dynamics.

    The noise enters the eta block with identity diffusion. ``grad_u``
    and ``grad_f`` allow injecting test potentials; defaults evaluate
    the network potential and the dissipative form.
    """
    if ens.coords != "transformed":
        raise ValueError("em_step_transformed expects transformed coordinates")
    n = ens.n
    xi, eta = ens.states[:, :n], ens.states[:, n:]
    if noise is None:
        noise = rng.standard_normal(size=(ens.size, n))
    gu = grad_U(xi, net, spec) if grad_u is None else grad_u(xi)
    gf = grad_F(eta, net, spec) if grad_f is None else grad_f(eta)
    xi_new = xi + h * eta
    eta_new = eta + h * (-spec.upsilon_diag * gu - gf) + np.sqrt(h) * noise
    states = np.concatenate([xi_new, eta_new], axis=1)
    _require_finite(states, ens.step_index + 1)
    return ens.with_states(states, ens.step_index + 1, ens.time + h)


@dataclass(frozen=True)
class StepInfo:
    """Per-step diagnostics handed to propagate() hooks."""

    step_index: int
    time: float
    wall_seconds: float
    prox_iterations: int
    prox_converged: bool
    residual_y: float
    residual_z: float


@dataclass
class PropagateResult:
    trajectory: list  # collected Ensembles (transformed coordinates)
    final: Ensemble
    steps: list = field(default_factory=list)  # StepInfo per step

    @property
    def converged_fraction(self) -> float:
        if not self.steps:
            return 1.0
        return sum(1 for s in self.steps if s.prox_converged) / len(self.steps)


def propagate(
    ens: Ensemble,
    net: ReducedNetwork,
    spec: TransformSpec,
    cfg,
    t_final: float,
    seed: int,
    hooks=None,
    z0_mode: str = "ones",
    z0_seed: int | None = None,
    strict: bool = False,
    collect_every: int = 1,
) -> PropagateResult:
    """Alternate state steps with proximal density updates until t_final.

    Per-step noise comes from counter-based streams keyed by
    (seed, purpose, step), so a trajectory is reproducible and
    restartable from any step. ``collect_every = 0`` keeps only the
    final ensemble (hooks still fire every step).
    """
    from .prox import prox_step  # runtime import; prox annotates Ensemble

    h = cfg.h
    n_steps = int(round(t_final / h))
    if abs(n_steps * h - t_final) > 1e-9 * max(1.0, abs(t_final)):
        raise ConfigError(f"t_final={t_final} is not an integer multiple of h={h}")
    if z0_mode not in ("ones", "uniform"):
        raise ConfigError(f"unknown z0_mode: {z0_mode!r}")

    trajectory = [ens] if collect_every else []
    steps: list[StepInfo] = []
    warned = False
    for _ in range(n_steps):
        k_next = ens.step_index + 1
        tic = _time.perf_counter()
        noise_rng = _rng.stream(seed, _rng.EM_NOISE, step=k_next)
        ens_next = em_step_transformed(ens, net, spec, h, noise_rng)
        if z0_mode == "ones":
            z0 = np.ones(ens.size)
        else:
            # uniform on (0, 1]: avoid an exact zero killing a column
            z0_rng = _rng.stream(seed if z0_seed is None else z0_seed, _rng.Z0, step=k_next)
            z0 = 1.0 - z0_rng.random(ens.size)
        values_next, report = prox_step(ens.values, ens, ens_next, net, spec, cfg, z0)
        wall = _time.perf_counter() - tic
        if not report.converged:
            if strict:
                raise NonConvergence(
                    k_next, report.iterations, report.residual_y, report.residual_z
                )
            if not warned:
                warnings.warn(
                    f"fixed point hit l_max={cfg.l_max} at step {k_next} "
                    f"(residuals {report.residual_y:.3e}, {report.residual_z:.3e})",
                    NonConvergenceWarning,
                    stacklevel=2,
                )
                warned = True
        ens = ens_next.with_values(values_next)
        info = StepInfo(
            step_index=k_next,
            time=ens.time,
            wall_seconds=wall,
            prox_iterations=report.iterations,
            prox_converged=report.converged,
            residual_y=report.residual_y,
            residual_z=report.residual_z,
        )
        steps.append(info)
        if hooks:
            for hook in hooks:
                hook(ens, info)
        if collect_every and (k_next % collect_every == 0):
            trajectory.append(ens)
    if collect_every and (not trajectory or trajectory[-1] is not ens):
        trajectory.append(ens)
    return PropagateResult(trajectory=trajectory, final=ens, steps=steps)
