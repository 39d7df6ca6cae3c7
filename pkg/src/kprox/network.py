"""Admittance assembly, Kron reduction, and the reduced oscillator network.

The unreduced grid is augmented with one internal node per generator
(behind its transient reactance) ordered before the physical buses.
Eliminating the buses by Schur complement leaves a dense all-to-all
coupled-oscillator network whose parameters drive the swing dynamics.
"""

from __future__ import annotations

import dataclasses
import json
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .casefile import DynamicParams, Table1Draws, UnreducedCase
from .errors import (
    AlreadyOut,
    DegeneratePhase,
    DisconnectedNetworkWarning,
    NonPositive,
    SingularBranch,
    SingularInterior,
    UnknownBranch,
    Unsupported,
)

_RCOND_FLOOR = 1e-12


@dataclass(frozen=True)
class AugmentedAdmittance:
    """Symmetric (n+m) x (n+m) admittance with generator internal nodes first."""

    y: np.ndarray  # complex
    boundary_count: int
    interior_count: int

    @property
    def y_boundary(self) -> np.ndarray:
        n = self.boundary_count
        return self.y[:n, :n]

    @property
    def y_coupling(self) -> np.ndarray:
        n = self.boundary_count
        return self.y[:n, n:]

    @property
    def y_interior(self) -> np.ndarray:
        n = self.boundary_count
        return self.y[n:, n:]


@dataclass(frozen=True)
class ReducedNetwork:
    """Coupled-oscillator parameters of the reduced generator network.

    ``m``, ``gamma``, ``sigma`` are the diagonals of the inertia, damping,
    and noise-intensity matrices. ``k_ref``/``phi_ref`` couple each machine
    to a fixed reference bus at angle zero (zero for ordinary networks;
    used by single-machine studies against an infinite bus).
    """

    n: int
    P: np.ndarray
    phi: np.ndarray
    K: np.ndarray
    m: np.ndarray
    gamma: np.ndarray
    sigma: np.ndarray
    Y: np.ndarray | None = None
    E: np.ndarray | None = None
    I: np.ndarray | None = None
    k_ref: np.ndarray | None = None
    phi_ref: np.ndarray | None = None

    def __post_init__(self):
        n = self.n
        for name in ("m", "gamma", "sigma"):
            v = getattr(self, name)
            if v.shape != (n,) or not np.all(v > 0.0):
                raise NonPositive(name, "all")
        if self.k_ref is None:
            object.__setattr__(self, "k_ref", np.zeros(n))
        if self.phi_ref is None:
            object.__setattr__(self, "phi_ref", np.zeros(n))
        if np.any(np.diag(self.K) != 0.0) or np.any(np.diag(self.phi) != 0.0):
            raise ValueError("K and phi must have zero diagonals")
        if not np.array_equal(self.K, self.K.T):
            raise ValueError("K must be symmetric")
        if np.any(self.K < 0.0) or np.any(self.k_ref < 0.0):
            raise ValueError("couplings must be nonnegative")
        if np.any(self.phi < 0.0) or np.any(self.phi >= np.pi / 2):
            raise DegeneratePhase(-1, -1, float(self.phi.min()))


def _network_admittance(case: UnreducedCase) -> np.ndarray:
    """Bus-only admittance: branches and line charging.

    Loads are deliberately NOT absorbed as shunt admittances. Conductive
    load shunts push the reduced off-diagonal arguments past pi/2, which
    makes every phase lag negative on the 14-bus fixture and trips
    DegeneratePhase. Loads instead enter the operating point as constant
    power extractions (see steady_state_internal) and the effective power
    via the explicit load term.
    """
    idx = case.bus_index()
    m = len(case.buses)
    y = np.zeros((m, m), dtype=complex)
    for br in case.branches:
        if br.status != 1:
            continue
        if br.r == 0.0 and br.x == 0.0:
            raise SingularBranch(br.from_bus, br.to_bus)
        ys = 1.0 / complex(br.r, br.x)
        a, b = idx[br.from_bus], idx[br.to_bus]
        y[a, a] += ys + 0.5j * br.b_charging
        y[b, b] += ys + 0.5j * br.b_charging
        y[a, b] -= ys
        y[b, a] -= ys
    return y


def build_admittance(case: UnreducedCase, dyn: DynamicParams) -> AugmentedAdmittance:
    """Assemble the augmented admittance with internal generator nodes first."""
    case.validate()
    dyn.validate()
    idx = case.bus_index()
    n = len(case.gens)
    m = len(case.buses)
    y = np.zeros((n + m, n + m), dtype=complex)
    y[n:, n:] = _network_admittance(case)
    seen = set()
    for g_i, gen in enumerate(case.gens):
        if gen.bus in seen:
            raise Unsupported(f"multiple generators at bus {gen.bus}")
        seen.add(gen.bus)
        yg = 1.0 / complex(0.0, dyn.x_d_prime[g_i])
        b = n + idx[gen.bus]
        y[g_i, g_i] += yg
        y[b, b] += yg
        y[g_i, b] -= yg
        y[b, g_i] -= yg
    return AugmentedAdmittance(y=y, boundary_count=n, interior_count=m)


def kron_reduce(aug: AugmentedAdmittance) -> np.ndarray:
    """Schur complement eliminating the interior (bus) block."""
    if aug.interior_count == 0:
        return aug.y_boundary.copy()
    y_ii = aug.y_interior
    try:
        # cond can come back complex-typed for complex input; its value is real
        rcond = float(np.abs(1.0 / np.linalg.cond(y_ii, p=1)))
    except np.linalg.LinAlgError:
        rcond = 0.0
    if not np.isfinite(rcond) or rcond < _RCOND_FLOOR:
        raise SingularInterior(rcond)
    lu, piv = scipy.linalg.lu_factor(y_ii)
    x = scipy.linalg.lu_solve((lu, piv), aug.y_coupling.T)
    return aug.y_boundary - aug.y_coupling @ x


def steady_state_internal(case: UnreducedCase, dyn: DynamicParams):
    """Internal EMFs and boundary currents at the case operating point.

    The bus voltages are taken as the solved steady state. Kirchhoff at a
    generator bus balances the machine current against the branch flows
    and the collocated load, so I = (Y_net V)_bus + conj(S_load / V).
    The internal EMF sits behind the transient reactance, E = V + j x'_d I,
    and the same current is what the internal node injects into the
    augmented network.
    """
    idx = case.bus_index()
    y_net = _network_admittance(case)
    v = np.array(
        [b.v_mag * np.exp(1j * np.deg2rad(b.v_angle)) for b in case.buses], dtype=complex
    )
    inj = y_net @ v
    e = np.empty(len(case.gens), dtype=complex)
    i_bnd = np.empty(len(case.gens), dtype=complex)
    for g_i, gen in enumerate(case.gens):
        b = idx[gen.bus]
        bus = case.buses[b]
        s_load = complex(bus.p_load, bus.q_load) / case.base_mva
        ig = inj[b] + (s_load / v[b]).conjugate()
        eg = v[b] + 1j * dyn.x_d_prime[g_i] * ig
        if gen.e_internal_mag is not None:
            mag = abs(eg)
            eg = gen.e_internal_mag * (eg / mag if mag > 0.0 else 1.0)
        e[g_i] = eg
        i_bnd[g_i] = ig
    return e, i_bnd


def _phase_from_admittance(y_ij: complex, i: int, j: int) -> float:
    if y_ij == 0.0:
        return 0.0
    if y_ij.imag == 0.0:
        raise DegeneratePhase(i, j, np.sign(y_ij.real) * np.pi / 2)
    raw = -np.arctan(y_ij.real / y_ij.imag)
    if 0.0 <= raw < np.pi / 2:
        return float(raw)
    if 0.0 <= raw + np.pi < np.pi / 2:
        return float(raw + np.pi)
    raise DegeneratePhase(i, j, float(raw))


def derive_parameters(
    y_reduced: np.ndarray, case: UnreducedCase, dyn: DynamicParams
) -> ReducedNetwork:
    """Effective powers, phase lags, and couplings from the reduced admittance."""
    n = len(case.gens)
    e, i_bnd = steady_state_internal(case, dyn)
    if np.any(np.abs(e) == 0.0):
        raise NonPositive("e_internal_mag", "steady state")
    i_red = y_reduced @ e - i_bnd
    bus_by_id = {b.id: b for b in case.buses}
    P = np.empty(n)
    for g_i, gen in enumerate(case.gens):
        p_load = bus_by_id[gen.bus].p_load / case.base_mva
        p_mech = gen.p_mech / case.base_mva
        P[g_i] = (
            p_mech
            - p_load
            - abs(e[g_i]) ** 2 * y_reduced[g_i, g_i].real
            + (e[g_i] * np.conj(i_red[g_i])).real
        )
    phi = np.zeros((n, n))
    K = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            phi[i, j] = _phase_from_admittance(complex(y_reduced[i, j]), i, j)
            K[i, j] = abs(e[i]) * abs(e[j]) * abs(y_reduced[i, j])
    K = 0.5 * (K + K.T)  # exact symmetry despite roundoff in |Y_ij| vs |Y_ji|
    return ReducedNetwork(
        n=n,
        P=P,
        phi=phi,
        K=K,
        m=dyn.m.copy(),
        gamma=dyn.gamma.copy(),
        sigma=dyn.sigma.copy(),
        Y=y_reduced.copy(),
        E=e,
        I=i_red,
    )


def reduce_case(case: UnreducedCase, dyn: DynamicParams) -> ReducedNetwork:
    """Full pipeline: augment, Kron-reduce, derive oscillator parameters."""
    aug = build_admittance(case, dyn)
    return derive_parameters(kron_reduce(aug), case, dyn)


def apply_line_outage(case: UnreducedCase, branch_index: int) -> UnreducedCase:
    """Copy of the case with one branch taken out of service."""
    target = None
    for br in case.branches:
        if br.branch_index == branch_index:
            target = br
            break
    if target is None:
        raise UnknownBranch(branch_index)
    if target.status != 1:
        raise AlreadyOut(branch_index)
    branches = tuple(
        dataclasses.replace(br, status=0) if br.branch_index == branch_index else br
        for br in case.branches
    )
    out = dataclasses.replace(case, branches=branches)
    if not _connected(out):
        warnings.warn(
            f"removing branch {branch_index} disconnects the network",
            DisconnectedNetworkWarning,
            stacklevel=2,
        )
    return out


def _connected(case: UnreducedCase) -> bool:
    adj: dict[int, set[int]] = {b.id: set() for b in case.buses}
    for br in case.branches:
        if br.status == 1:
            adj[br.from_bus].add(br.to_bus)
            adj[br.to_bus].add(br.from_bus)
    start = case.buses[0].id
    seen = {start}
    stack = [start]
    while stack:
        for nb in adj[stack.pop()]:
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    return len(seen) == len(case.buses)


# potential and gradient


def potential_V(theta: np.ndarray, net: ReducedNetwork) -> np.ndarray | float:
    """Energy -sum P_i theta_i + sum_{i<j} k_ij (1 - cos(th_i - th_j - phi_ij)).

    Accepts a single configuration (n,) or a batch (..., n). Only the
    upper triangles of K and phi enter; the reference-bus couplings add
    sum_i k_ref_i (1 - cos(th_i - phi_ref_i)).
    """
    theta = np.asarray(theta, dtype=float)
    squeeze = theta.ndim == 1
    th = theta.reshape(-1, net.n)
    iu, ju = np.triu_indices(net.n, k=1)
    v = -(th @ net.P)
    if len(iu):
        diff = th[:, iu] - th[:, ju] - net.phi[iu, ju]
        v = v + (net.K[iu, ju] * (1.0 - np.cos(diff))).sum(axis=1)
    if np.any(net.k_ref != 0.0):
        v = v + (net.k_ref * (1.0 - np.cos(th - net.phi_ref))).sum(axis=1)
    return float(v[0]) if squeeze else v.reshape(theta.shape[:-1])


def grad_V(theta: np.ndarray, net: ReducedNetwork) -> np.ndarray:
    """Exact gradient of :func:`potential_V`, batched like it."""
    theta = np.asarray(theta, dtype=float)
    squeeze = theta.ndim == 1
    th = theta.reshape(-1, net.n)
    # phi enters antisymmetrically in the gradient: the (i<j) pair term
    # contributes +k sin(th_i - th_j - phi_ij) to i and the negation to j
    phi_eff = np.triu(net.phi, k=1)
    phi_eff = phi_eff - phi_eff.T
    diff = th[:, :, None] - th[:, None, :] - phi_eff
    g = -net.P + (net.K * np.sin(diff)).sum(axis=2)
    if np.any(net.k_ref != 0.0):
        g = g + net.k_ref * np.sin(th - net.phi_ref)
    return g[0] if squeeze else g.reshape(theta.shape)


# constructors for synthetic studies


def network_from_draws(draws: Table1Draws) -> ReducedNetwork:
    """Oscillator network directly from synthetic parameter draws (no admittance)."""
    return ReducedNetwork(
        n=draws.n,
        P=draws.P.copy(),
        phi=draws.phi.copy(),
        K=draws.K.copy(),
        m=draws.m.copy(),
        gamma=draws.gamma.copy(),
        sigma=draws.sigma.copy(),
    )


def smib_network(
    m: float, gamma: float, sigma: float, P: float, k: float, phi: float
) -> ReducedNetwork:
    """Single machine against an infinite bus at angle zero."""
    return ReducedNetwork(
        n=1,
        P=np.array([P], dtype=float),
        phi=np.zeros((1, 1)),
        K=np.zeros((1, 1)),
        m=np.array([m], dtype=float),
        gamma=np.array([gamma], dtype=float),
        sigma=np.array([sigma], dtype=float),
        k_ref=np.array([k], dtype=float),
        phi_ref=np.array([phi], dtype=float),
    )


# reduced-network JSON export/import


def _complex_pairs(a: np.ndarray) -> list:
    return [[float(z.real), float(z.imag)] for z in np.asarray(a).ravel()]


def save_reduced_network(net: ReducedNetwork) -> str:
    doc = {
        "n": net.n,
        "P": net.P.tolist(),
        "phi": net.phi.tolist(),
        "K": net.K.tolist(),
        "m": net.m.tolist(),
        "gamma": net.gamma.tolist(),
        "sigma": net.sigma.tolist(),
        "k_ref": net.k_ref.tolist(),
        "phi_ref": net.phi_ref.tolist(),
    }
    if net.Y is not None:
        doc["Y"] = _complex_pairs(net.Y)
    if net.E is not None:
        doc["E"] = _complex_pairs(net.E)
    if net.I is not None:
        doc["I"] = _complex_pairs(net.I)
    return json.dumps(doc, indent=2)


def load_reduced_network(text: str) -> ReducedNetwork:
    doc = json.loads(text)
    n = int(doc["n"])

    def _restore(key, shape):
        if key not in doc:
            return None
        flat = np.array([complex(re, im) for re, im in doc[key]])
        return flat.reshape(shape)

    return ReducedNetwork(
        n=n,
        P=np.array(doc["P"], dtype=float),
        phi=np.array(doc["phi"], dtype=float),
        K=np.array(doc["K"], dtype=float),
        m=np.array(doc["m"], dtype=float),
        gamma=np.array(doc["gamma"], dtype=float),
        sigma=np.array(doc["sigma"], dtype=float),
        Y=_restore("Y", (n, n)),
        E=_restore("E", (n,)),
        I=_restore("I", (n,)),
        k_ref=np.array(doc["k_ref"], dtype=float),
        phi_ref=np.array(doc["phi_ref"], dtype=float),
    )
