"""Parsers for network description files.

Two input formats: a MATPOWER-subset case file (``.m``) and a native
JSON dynamic-parameters file. Bus voltage angles live in degrees both
in files and in the parsed tables (MATPOWER convention); every angle
that participates in dynamics is radians.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import rng
from .errors import (
    DanglingBranch,
    MalformedRow,
    MissingGenerator,
    MissingMatrix,
    NonPositive,
    Unsupported,
    ZeroReactance,
)

_BUS_TYPES = {1: "PQ", 2: "PV", 3: "slack"}
_F0_HZ = 60.0


@dataclass(frozen=True)
class Bus:
    id: int
    type: str  # PQ | PV | slack
    p_load: float  # MW
    q_load: float  # MVAr
    v_mag: float  # p.u.
    v_angle: float  # degrees


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    r: float
    x: float
    b_charging: float
    status: int
    branch_index: int  # 1-based position in file


@dataclass(frozen=True)
class Gen:
    bus: int
    p_mech: float  # MW
    e_internal_mag: float | None = None  # p.u.; None means derive from steady state


@dataclass(frozen=True)
class UnreducedCase:
    base_mva: float
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    gens: tuple[Gen, ...]

    def validate(self) -> "UnreducedCase":
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            raise MalformedRow(0, "duplicate bus ids")
        known = set(ids)
        for br in self.branches:
            if br.from_bus not in known or br.to_bus not in known:
                raise DanglingBranch(br.from_bus, br.to_bus)
            if br.status == 1 and br.x == 0.0:
                raise ZeroReactance(br.branch_index)
        if not self.gens:
            raise MalformedRow(0, "case has no generators")
        for g in self.gens:
            if g.bus not in known:
                raise DanglingBranch(g.bus, g.bus)
        return self

    def bus_index(self) -> dict[int, int]:
        return {b.id: k for k, b in enumerate(self.buses)}


@dataclass(frozen=True)
class DynamicParams:
    buses: tuple[int, ...]
    m: np.ndarray
    gamma: np.ndarray
    sigma: np.ndarray
    x_d_prime: np.ndarray

    def validate(self) -> "DynamicParams":
        for name in ("m", "gamma", "sigma", "x_d_prime"):
            vals = getattr(self, name)
            for bus, v in zip(self.buses, vals):
                if not v > 0.0:
                    raise NonPositive(name, bus)
        return self


def _strip_comment(line: str) -> str:
    pos = line.find("%")
    return line if pos < 0 else line[:pos]


def _parse_blocks(text: str):
    """Collect scalars and matrices with per-row line numbers."""
    scalars: dict[str, tuple[str, int]] = {}
    matrices: dict[str, list[tuple[list[str], int]]] = {}
    lines = text.splitlines()
    i = 0
    n_lines = len(lines)
    while i < n_lines:
        line = _strip_comment(lines[i]).strip()
        if not (line.startswith("mpc.") and "=" in line):
            i += 1
            continue
        lhs, rhs = line.split("=", 1)
        key = lhs.strip()[4:]
        rhs = rhs.strip()
        if not rhs.startswith("["):
            scalars[key] = (rhs.rstrip(";").strip(), i + 1)
            i += 1
            continue
        body = rhs[1:]
        rows: list[tuple[list[str], int]] = []
        carry: list[str] = []
        carry_line = 0
        lineno = i + 1
        closed = False
        while True:
            if "]" in body:
                body = body[: body.index("]")]
                closed = True
            segments = body.split(";")
            for si, seg in enumerate(segments):
                toks = seg.split()
                if toks:
                    if not carry:
                        carry_line = lineno
                    carry.extend(toks)
                terminated = si < len(segments) - 1
                if terminated and carry:
                    rows.append((carry, carry_line))
                    carry = []
            if closed:
                break
            i += 1
            if i >= n_lines:
                raise MalformedRow(n_lines, f"unterminated matrix block mpc.{key}")
            body = _strip_comment(lines[i])
            lineno = i + 1
        if carry:
            rows.append((carry, carry_line))
        matrices[key] = rows
        i += 1
    return scalars, matrices


def _floats(tokens: list[str], lineno: int) -> list[float]:
    out = []
    for t in tokens:
        try:
            out.append(float(t))
        except ValueError:
            raise MalformedRow(lineno, f"non-numeric token {t!r}") from None
    return out


def parse_matpower_case(text: str) -> UnreducedCase:
    """Parse the supported MATPOWER case subset into a validated table set."""
    scalars, matrices = _parse_blocks(text)
    if "baseMVA" not in scalars:
        raise MissingMatrix("baseMVA")
    base_raw, base_line = scalars["baseMVA"]
    try:
        base_mva = float(base_raw)
    except ValueError:
        raise MalformedRow(base_line, f"bad baseMVA value {base_raw!r}") from None

    for required in ("bus", "branch", "gen"):
        if required not in matrices:
            raise MissingMatrix(required)

    buses = []
    for toks, lineno in matrices["bus"]:
        vals = _floats(toks, lineno)
        if len(vals) < 9:
            raise MalformedRow(lineno, f"bus row has {len(vals)} columns, expected >= 9")
        code = int(vals[1])
        if code not in _BUS_TYPES:
            raise MalformedRow(lineno, f"unknown bus type code {code}")
        buses.append(
            Bus(
                id=int(vals[0]),
                type=_BUS_TYPES[code],
                p_load=vals[2],
                q_load=vals[3],
                v_mag=vals[7],
                v_angle=vals[8],
            )
        )

    branches = []
    for idx, (toks, lineno) in enumerate(matrices["branch"], start=1):
        vals = _floats(toks, lineno)
        if len(vals) < 11:
            raise MalformedRow(lineno, f"branch row has {len(vals)} columns, expected >= 11")
        ratio, angle = vals[8], vals[9]
        if ratio not in (0.0, 1.0):
            raise Unsupported(f"line {lineno}: off-nominal tap ratio {ratio} not supported")
        if angle != 0.0:
            raise Unsupported(f"line {lineno}: phase-shifting transformer not supported")
        branches.append(
            Branch(
                from_bus=int(vals[0]),
                to_bus=int(vals[1]),
                r=vals[2],
                x=vals[3],
                b_charging=vals[4],
                status=int(vals[10]),
                branch_index=idx,
            )
        )

    gens = []
    for toks, lineno in matrices["gen"]:
        vals = _floats(toks, lineno)
        if len(vals) < 2:
            raise MalformedRow(lineno, "gen row has fewer than 2 columns")
        gens.append(Gen(bus=int(vals[0]), p_mech=vals[1]))

    return UnreducedCase(
        base_mva=base_mva,
        buses=tuple(buses),
        branches=tuple(branches),
        gens=tuple(gens),
    ).validate()


def parse_dynamic_params(text: str, case: UnreducedCase) -> DynamicParams:
    """Parse the native JSON dynamics file, aligned to the case gens table."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedRow(exc.lineno, f"invalid JSON: {exc.msg}") from None
    entries = {}
    for obj in doc.get("generators", []):
        entries[int(obj["bus"])] = obj
    per_gen = []
    for g in case.gens:
        if g.bus not in entries:
            raise MissingGenerator(g.bus)
        per_gen.append(entries[g.bus])
    buses = tuple(g.bus for g in case.gens)
    params = DynamicParams(
        buses=buses,
        m=np.array([e["m"] for e in per_gen], dtype=float),
        gamma=np.array([e["gamma"] for e in per_gen], dtype=float),
        sigma=np.array([e["sigma"] for e in per_gen], dtype=float),
        x_d_prime=np.array([e["x_d_prime"] for e in per_gen], dtype=float),
    )
    return params.validate()


# native JSON case format (round-trips exactly: angles stay in degrees)


def serialize_case(case: UnreducedCase) -> str:
    doc = {
        "base_mva": case.base_mva,
        "buses": [
            {
                "id": b.id,
                "type": b.type,
                "p_load": b.p_load,
                "q_load": b.q_load,
                "v_mag": b.v_mag,
                "v_angle_deg": b.v_angle,
            }
            for b in case.buses
        ],
        "branches": [
            {
                "from": br.from_bus,
                "to": br.to_bus,
                "r": br.r,
                "x": br.x,
                "b_charging": br.b_charging,
                "status": br.status,
            }
            for br in case.branches
        ],
        "gens": [
            {"bus": g.bus, "p_mech": g.p_mech, "e_internal_mag": g.e_internal_mag}
            for g in case.gens
        ],
    }
    return json.dumps(doc, indent=2)


def parse_network_json(text: str) -> UnreducedCase:
    doc = json.loads(text)
    buses = tuple(
        Bus(
            id=int(b["id"]),
            type=b["type"],
            p_load=float(b["p_load"]),
            q_load=float(b["q_load"]),
            v_mag=float(b["v_mag"]),
            v_angle=float(b["v_angle_deg"]),
        )
        for b in doc["buses"]
    )
    branches = tuple(
        Branch(
            from_bus=int(br["from"]),
            to_bus=int(br["to"]),
            r=float(br["r"]),
            x=float(br["x"]),
            b_charging=float(br["b_charging"]),
            status=int(br["status"]),
            branch_index=k,
        )
        for k, br in enumerate(doc["branches"], start=1)
    )
    gens = tuple(
        Gen(
            bus=int(g["bus"]),
            p_mech=float(g["p_mech"]),
            e_internal_mag=None if g.get("e_internal_mag") is None else float(g["e_internal_mag"]),
        )
        for g in doc["gens"]
    )
    return UnreducedCase(
        base_mva=float(doc["base_mva"]), buses=buses, branches=branches, gens=gens
    ).validate()


# synthetic parameter draws


@dataclass(frozen=True)
class Table1Draws:
    """Synthetic machine and coupling parameters for an n-generator study."""

    n: int
    m: np.ndarray
    gamma: np.ndarray
    sigma: np.ndarray
    P: np.ndarray
    phi: np.ndarray  # (n, n), zero diagonal
    K: np.ndarray  # (n, n), symmetric, zero diagonal


def sample_table1_params(n: int, seed: int) -> Table1Draws:
    """Draw machine/coupling parameters from the standard synthetic ranges.

    Inertia and damping are drawn in per-unit-time ranges and scaled by
    1/(2*pi*60 Hz); couplings are symmetric with zero diagonal; the phase
    lags are arctan of a uniform tangent draw, so they stay in [0, pi/2).
    Deterministic given the seed; draw order is part of the contract.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    g = rng.stream(seed, rng.TABLE1)
    w0 = 2.0 * math.pi * _F0_HZ
    m = g.uniform(2.0, 12.0, size=n) / w0
    gamma = g.uniform(20.0, 30.0, size=n) / w0
    sigma = g.uniform(1.0, 5.0, size=n)
    P = g.uniform(0.0, 10.0, size=n)
    phi = np.zeros((n, n))
    off = ~np.eye(n, dtype=bool)
    phi[off] = np.arctan(g.uniform(0.0, 0.25, size=n * (n - 1)))
    K = np.zeros((n, n))
    iu = np.triu_indices(n, k=1)
    K[iu] = g.uniform(0.7, 1.2, size=len(iu[0]))
    K = K + K.T
    return Table1Draws(n=n, m=m, gamma=gamma, sigma=sigma, P=P, phi=phi, K=K)
