"""Command-line front end.

Subcommands:
  reduce         case + dynamics -> reduced oscillator network JSON
  simulate       propagate a weighted cloud; snapshots/timing/metrics CSVs
  compare        simulate plus an independent Monte Carlo twin ensemble
  oracle-n1      single-machine grid-PDE oracle vs the particle pipeline
  sample-table1  draw a synthetic network from the published ranges

Scenario configuration is JSON; every flag overrides its config field.
All runs write run.json first, so a crashed run still leaves enough to
reproduce it. Floats in CSVs carry 17 significant digits. Exit codes:
0 success, 2 configuration error, 3 numerical failure, 4 fixed-point
non-convergence under --strict.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, analysis, kernels, rng
from .casefile import (
    parse_dynamic_params,
    parse_matpower_case,
    parse_network_json,
    sample_table1_params,
)
from .distributions import InitialPdf, sample_initial, von_mises_pdf
from .dynamics import propagate, em_step_transformed, to_original, to_transformed
from .errors import (
    AlreadyOut,
    ConfigError,
    DanglingBranch,
    DegeneratePhase,
    KproxError,
    MalformedRow,
    MassLeak,
    MissingGenerator,
    MissingMatrix,
    NonConvergence,
    NonFinite,
    NonPositive,
    NotPSD,
    NumericalUnderflow,
    SingularBranch,
    SingularInterior,
    Unsupported,
    UnknownBranch,
    UnstableStep,
    WeightMismatch,
    ZeroReactance,
)
from .network import (
    apply_line_outage,
    load_reduced_network,
    network_from_draws,
    reduce_case,
    save_reduced_network,
    smib_network,
)
from .prox import ProxConfig
from .transform import check_einstein, make_transform

SCHEMA_VERSION = 1

_CONFIG_ERRORS = (
    ConfigError,
    MissingMatrix,
    MalformedRow,
    DanglingBranch,
    ZeroReactance,
    SingularBranch,
    Unsupported,
    MissingGenerator,
    NonPositive,
    UnknownBranch,
    AlreadyOut,
)
_NUMERICAL_ERRORS = (
    NonFinite,
    NumericalUnderflow,
    SingularInterior,
    DegeneratePhase,
    NotPSD,
    MassLeak,
    UnstableStep,
    WeightMismatch,
)


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _load_json(path: str):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise ConfigError(f"file not found: {path}") from exc


# ---------------------------------------------------------------------------
# scenario resolution


_DEFAULTS = {
    "outage": None,
    "n_particles": 1000,
    "t_final": 1.0,
    "seed": 0,
    "f_mode": "derived",
    "emit_every": 100,
    "out": "kprox-run",
    "z0": "ones",
    "strict": False,
}


def _merge_scenario(args) -> dict:
    """Config file -> dict, then apply CLI overrides (flags win)."""
    cfg = dict(_DEFAULTS)
    cfg["prox"] = {}
    cfg["initial"] = {}
    cfg["network"] = {}
    if getattr(args, "config", None):
        file_cfg = _load_json(args.config)
        if not isinstance(file_cfg, dict):
            raise ConfigError("scenario config must be a JSON object")
        for key, val in file_cfg.items():
            if key in ("prox", "initial", "network"):
                if not isinstance(val, dict):
                    raise ConfigError(f"config field {key!r} must be an object")
                cfg[key].update(val)
            else:
                cfg[key] = val
    for key in ("outage", "n_particles", "t_final", "seed", "f_mode", "emit_every", "out"):
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    for key in ("h", "epsilon", "delta", "l_max"):
        val = getattr(args, key, None)
        if val is not None:
            cfg["prox"][key] = val
    if getattr(args, "case", None):
        cfg["network"]["case"] = args.case
    if getattr(args, "dynamics", None):
        cfg["network"]["dynamics"] = args.dynamics
    if getattr(args, "reduced", None):
        cfg["network"]["reduced"] = args.reduced
    if getattr(args, "z0", None):
        cfg["z0"] = args.z0
    if getattr(args, "strict", False):
        cfg["strict"] = True
    if cfg["f_mode"] not in ("derived", "paper"):
        raise ConfigError(f"f_mode must be 'derived' or 'paper', got {cfg['f_mode']!r}")
    return cfg


def _build_network(cfg: dict):
    """Network from whichever source the scenario names."""
    src = cfg.get("network") or {}
    outage = cfg.get("outage")
    if "reduced" in src:
        net = load_reduced_network(_read_text(src["reduced"]))
        if outage is not None:
            raise ConfigError("outage applies to case files, not to reduced networks")
        return net
    if "case" in src:
        if "dynamics" not in src:
            raise ConfigError("network.case requires network.dynamics")
        case_text = _read_text(src["case"])
        if src["case"].endswith(".json"):
            case = parse_network_json(case_text)
        else:
            case = parse_matpower_case(case_text)
        dyn = parse_dynamic_params(_read_text(src["dynamics"]), case)
        if outage is not None:
            case = apply_line_outage(case, int(outage))
        return reduce_case(case, dyn)
    if "table1" in src:
        spec = src["table1"]
        draws = sample_table1_params(int(spec["n"]), int(spec.get("seed", cfg["seed"])))
        return network_from_draws(draws)
    if "smib" in src:
        s = src["smib"]
        try:
            return smib_network(
                m=float(s["m"]),
                gamma=float(s["gamma"]),
                sigma=float(s["sigma"]),
                P=float(s["P"]),
                k=float(s["k"]),
                phi=float(s.get("phi", 0.0)),
            )
        except KeyError as exc:
            raise ConfigError(f"smib network missing field {exc}") from exc
    raise ConfigError(
        "scenario needs a network source: case+dynamics, reduced, table1, or smib"
    )


def _as_vector(value, n: int, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.full(n, float(arr))
    if arr.shape != (n,):
        raise ConfigError(f"initial.{name} must be scalar or length {n}")
    return arr


def _build_initial(cfg: dict, n: int) -> InitialPdf:
    init = cfg.get("initial") or {}
    theta_law = init.get("theta", "uniform")
    omega = init.get("omega") or {}
    lo = _as_vector(omega.get("lo", -0.1), n, "omega.lo")
    hi = _as_vector(omega.get("hi", 0.1), n, "omega.hi")
    if theta_law == "uniform":
        mu = np.zeros(n)
        kappa = np.zeros(n)
    elif theta_law == "vonmises":
        if "mu" not in init or "kappa" not in init:
            raise ConfigError("initial.theta=vonmises requires initial.mu and initial.kappa")
        mu = _as_vector(init["mu"], n, "mu")
        kappa = _as_vector(init["kappa"], n, "kappa")
    else:
        raise ConfigError(f"initial.theta must be 'vonmises' or 'uniform', got {theta_law!r}")
    convention = init.get("convention", "doubled" if theta_law == "vonmises" else "standard")
    try:
        return InitialPdf(mu=mu, kappa=kappa, omega_lo=lo, omega_hi=hi, convention=convention)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _build_prox(cfg: dict) -> ProxConfig:
    p = cfg.get("prox") or {}
    try:
        return ProxConfig(
            h=float(p.get("h", 1e-3)),
            epsilon=float(p.get("epsilon", 0.05)),
            delta=float(p.get("delta", 1e-3)),
            l_max=int(p.get("l_max", 300)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _parse_z0(spec: str):
    """'ones' or 'random:<seed>' -> (mode, seed)."""
    if spec == "ones":
        return "ones", None
    if spec.startswith("random:"):
        try:
            return "uniform", int(spec.split(":", 1)[1])
        except ValueError as exc:
            raise ConfigError(f"bad z0 spec {spec!r}; use ones or random:<seed>") from exc
    if spec == "random":
        return "uniform", None
    raise ConfigError(f"bad z0 spec {spec!r}; use ones or random:<seed>")


def _apply_threads(args):
    """Best-effort worker-count control for the underlying BLAS."""
    threads = getattr(args, "threads", None) or os.environ.get("KPROX_THREADS")
    if not threads:
        return None
    threads = str(int(threads))
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = threads
    try:  # takes effect for already-loaded BLAS pools when available
        import threadpoolctl

        threadpoolctl.threadpool_limits(int(threads))
    except ImportError:
        pass
    return int(threads)


# ---------------------------------------------------------------------------
# writers


class _RunWriter:
    """Owns the output directory and the CSV streams of one run."""

    def __init__(self, out_dir: str, manifest: dict):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        manifest = dict(manifest)
        manifest["schema_version"] = SCHEMA_VERSION
        manifest["kprox_version"] = __version__
        manifest["kernel_backend"] = kernels.backend()
        manifest["notes"] = {
            "timing_csv": "wall_seconds is a measured monotonic-clock duration "
            "and is not reproducible byte for byte",
        }
        with open(self.dir / "run.json", "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        self._files = {}
        self._writers = {}

    def _writer(self, name: str, header: list[str]):
        if name not in self._writers:
            fh = open(self.dir / name, "w", encoding="utf-8", newline="")
            self._files[name] = fh
            self._writers[name] = csv.writer(fh)
            self._writers[name].writerow(header)
        return self._writers[name]

    def timing(self, info):
        w = self._writer(
            "timing.csv", ["step", "t", "iterations", "residual_y", "residual_z", "wall_seconds"]
        )
        w.writerow(
            [
                info.step_index,
                _fmt(info.time),
                info.prox_iterations,
                _fmt(info.residual_y),
                _fmt(info.residual_z),
                _fmt(info.wall_seconds),
            ]
        )

    def snapshot(self, ens):
        n = ens.n
        header = (
            ["step", "t", "particle"]
            + [f"theta_wrapped_{i + 1}" for i in range(n)]
            + [f"theta_{i + 1}" for i in range(n)]
            + [f"omega_{i + 1}" for i in range(n)]
            + ["value"]
        )
        w = self._writer("snapshots.csv", header)
        theta = ens.states[:, :n]
        wrapped = np.mod(theta, 2.0 * np.pi)
        omega = ens.states[:, n:]
        for i in range(ens.size):
            row = [ens.step_index, _fmt(ens.time), i]
            row += [_fmt(v) for v in wrapped[i]]
            row += [_fmt(v) for v in theta[i]]
            row += [_fmt(v) for v in omega[i]]
            row.append(_fmt(ens.values[i]))
            w.writerow(row)

    def metrics(self, row):
        w = self._writer("metrics.csv", ["t", "rel_mean_err", "d_bw_normalized", "w2", "ess"])
        w.writerow(
            [_fmt(row.time), _fmt(row.rel_mean_err), _fmt(row.d_bw_normalized), _fmt(row.w2), _fmt(row.ess)]
        )

    def close(self):
        for fh in self._files.values():
            fh.close()


# ---------------------------------------------------------------------------
# commands


def cmd_reduce(args) -> int:
    cfg = _merge_scenario(args)
    net = _build_network(cfg)
    out_dir = Path(cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / "reduced_network.json"
    out_path.write_text(save_reduced_network(net), encoding="utf-8")
    off = net.K[~np.eye(net.n, dtype=bool)] if net.n > 1 else np.array([0.0])
    ein = check_einstein(net)
    print(f"reduced network: n={net.n} generators")
    print(f"  coupling K: min={off.min():.6g} max={off.max():.6g} (off-diagonal)")
    print(f"  phase shifts: max={net.phi.max():.6g} rad")
    print(f"  effective power P: {np.array2string(net.P, precision=6)}")
    if ein.ok:
        print(f"  fluctuation-dissipation: satisfied, beta={ein.beta:.6g}")
    else:
        print(
            "  fluctuation-dissipation: not satisfied "
            f"(max relative spread {ein.max_rel_dev:.3g}); Boltzmann form not stationary"
        )
    print(f"  wrote {out_path}")
    return 0


def _prepare_run(args):
    cfg = _merge_scenario(args)
    net = _build_network(cfg)
    spec = make_transform(net, cfg["f_mode"])
    pdf = _build_initial(cfg, net.n)
    prox_cfg = _build_prox(cfg)
    n_steps = int(round(float(cfg["t_final"]) / prox_cfg.h))
    if abs(n_steps * prox_cfg.h - float(cfg["t_final"])) > 1e-9:
        raise ConfigError(
            f"t_final={cfg['t_final']} is not an integer multiple of h={prox_cfg.h}"
        )
    seed = int(cfg["seed"])
    ens0 = sample_initial(pdf, int(cfg["n_particles"]), rng.stream(seed, rng.INITIAL_SAMPLES))
    return cfg, net, spec, pdf, prox_cfg, seed, ens0


def _manifest(cfg, command, prox_cfg):
    resolved = dict(cfg)
    resolved["prox"] = {
        "h": prox_cfg.h,
        "epsilon": prox_cfg.epsilon,
        "delta": prox_cfg.delta,
        "l_max": prox_cfg.l_max,
    }
    return {"command": command, "scenario": resolved}


def _run_simulation(args, command: str, with_twin: bool):
    cfg, net, spec, pdf, prox_cfg, seed, ens0 = _prepare_run(args)
    ens = to_transformed(ens0, spec)
    writer = _RunWriter(cfg["out"], _manifest(cfg, command, prox_cfg))
    emit_every = max(int(cfg["emit_every"]), 1)
    n_steps = int(round(float(cfg["t_final"]) / prox_cfg.h))
    z0_mode, z0_seed = _parse_z0(cfg["z0"])

    twin = ens if not with_twin else to_transformed(
        sample_initial(pdf, int(cfg["n_particles"]), rng.stream(seed, rng.MC_TWIN_NOISE)),
        spec,
    )
    metrics_rows = []

    def emit(snapshot, twin_snapshot):
        original = to_original(snapshot, spec)
        writer.snapshot(original)
        row = analysis.compare_metrics(original, to_original(twin_snapshot, spec))
        metrics_rows.append(row)
        writer.metrics(row)

    emit(ens, twin)

    def hook(ens_k, info):
        nonlocal twin
        writer.timing(info)
        if with_twin:
            noise_rng = rng.stream(seed, rng.MC_TWIN_NOISE, step=info.step_index)
            twin = em_step_transformed(twin, net, spec, prox_cfg.h, noise_rng)
        if info.step_index % emit_every == 0 or info.step_index == n_steps:
            emit(ens_k, twin if with_twin else ens_k)

    try:
        result = propagate(
            ens,
            net,
            spec,
            prox_cfg,
            float(cfg["t_final"]),
            seed,
            hooks=[hook],
            z0_mode=z0_mode,
            z0_seed=z0_seed,
            strict=bool(cfg["strict"]),
            collect_every=0,
        )
    finally:
        writer.close()

    walls = np.array([s.wall_seconds for s in result.steps]) if result.steps else np.zeros(1)
    print(f"{command}: {len(result.steps)} steps, backend={kernels.backend()}")
    print(
        f"  converged steps: {result.converged_fraction * 100.0:.2f}%  "
        f"median step {np.median(walls) * 1e3:.2f} ms  "
        f"p90 {np.quantile(walls, 0.9) * 1e3:.2f} ms"
    )
    print(f"  outputs in {writer.dir}")

    if getattr(args, "assert_decreasing", False):
        burn = float(getattr(args, "burn_in", 0.0) or 0.0)
        ok = _trends_decreasing(metrics_rows, float(cfg["t_final"]), burn)
        if not ok:
            print("trend assertion FAILED: validation metrics do not decrease", file=sys.stderr)
            return 1
        print("  trend assertion passed: metrics decrease after transients")
    return 0


def _trends_decreasing(rows, t_final: float, burn_in: float) -> bool:
    """Mean over the last half below mean over the first quarter, per metric,
    restricted to t >= burn_in * t_final."""
    kept = [r for r in rows if r.time >= burn_in * t_final]
    if len(kept) < 4:
        raise ConfigError("not enough metric snapshots for a trend assertion")
    times = np.array([r.time for r in kept])
    t0, t1 = times[0], times[-1]
    first = times <= t0 + 0.25 * (t1 - t0)
    last = times >= t0 + 0.5 * (t1 - t0)
    ok = True
    for name in ("rel_mean_err", "d_bw_normalized", "w2"):
        vals = np.array([getattr(r, name) for r in kept])
        head = float(vals[first].mean())
        tail = float(vals[last].mean())
        print(f"  trend {name}: first-quarter mean {head:.6g} -> last-half mean {tail:.6g}")
        ok = ok and tail < head
    return ok


def cmd_simulate(args) -> int:
    return _run_simulation(args, "simulate", with_twin=False)


def cmd_compare(args) -> int:
    return _run_simulation(args, "compare", with_twin=True)


def cmd_oracle_n1(args) -> int:
    cfg, net, spec, pdf, prox_cfg, seed, ens0 = _prepare_run(args)
    if net.n != 1:
        raise ConfigError(f"oracle-n1 requires a single-machine network, got n={net.n}")
    if net.sigma[0] <= 0.0:
        raise ConfigError("oracle-n1 needs sigma > 0; the grid PDE degenerates without noise")
    times = sorted(float(t) for t in (args.times or [0.25, 0.5]))
    if any(t <= 0 for t in times):
        raise ConfigError("comparison times must be positive")
    t_final = times[-1]
    omega_max = float(args.omega_max)
    bins = int(args.bins)

    box = 1.0 / (pdf.omega_hi[0] - pdf.omega_lo[0])

    def rho0(theta, omega):
        ang = von_mises_pdf(theta, float(pdf.mu[0]), float(pdf.kappa[0]), pdf.convention)
        vel = box * ((omega >= pdf.omega_lo[0]) & (omega <= pdf.omega_hi[0]))
        return ang * vel

    snaps = analysis.fd_fpk_oracle_n1(
        net,
        rho0,
        t_final=t_final,
        omega_max=omega_max,
        n_theta=int(args.n_theta),
        n_omega=int(args.n_omega),
        snapshot_times=times,
    )

    ens = to_transformed(ens0, spec)
    by_step = {int(round(t / prox_cfg.h)): t for t in times}
    kept = {}

    def hook(ens_k, info):
        if info.step_index in by_step:
            kept[info.step_index] = ens_k

    result = propagate(
        ens,
        net,
        spec,
        prox_cfg,
        t_final,
        seed,
        hooks=[hook],
        strict=bool(cfg["strict"]),
        collect_every=0,
    )

    report = {
        "times": times,
        "bins": bins,
        "omega_max": omega_max,
        "n_particles": ens.size,
        "f_mode": cfg["f_mode"],
        "converged_fraction": result.converged_fraction,
        "l1": [],
    }
    worst = 0.0
    for t in times:
        step = int(round(t / prox_cfg.h))
        ens_t = to_original(kept[step], spec)
        grid = min(snaps, key=lambda s: abs(s.time - t))
        l1_theta, l1_omega = _oracle_l1(ens_t, grid, bins, omega_max)
        worst = max(worst, l1_theta, l1_omega)
        report["l1"].append({"t": t, "theta": l1_theta, "omega": l1_omega})
        print(f"t={t:g}: L1(theta) = {l1_theta:.4f}   L1(omega) = {l1_omega:.4f}")
    out_dir = Path(cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "oracle_report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"worst marginal L1 = {worst:.4f}; report in {out_dir / 'oracle_report.json'}")
    return 0


def _bin_grid_marginal(centers, marginal, edges):
    """Aggregate a grid marginal (cell masses) into histogram densities."""
    cell = centers[1] - centers[0]
    masses = marginal * cell
    idx = np.clip(np.searchsorted(edges, centers, side="right") - 1, 0, len(edges) - 2)
    binned = np.zeros(len(edges) - 1)
    np.add.at(binned, idx, masses)
    return binned / np.diff(edges)


def _oracle_l1(ens_original, grid, bins: int, omega_max: float):
    weights, _ = analysis.importance_weights(ens_original)
    theta_edges, theta_density = analysis.marginal_univariate(
        ens_original, 0, bins, weights=weights
    )
    omega_edges, omega_density = analysis.marginal_univariate(
        ens_original, 1, bins, lo=-omega_max, hi=omega_max, weights=weights
    )
    oracle_theta = _bin_grid_marginal(grid.theta_centers, grid.marginal_theta(), theta_edges)
    oracle_omega = _bin_grid_marginal(grid.omega_centers, grid.marginal_omega(), omega_edges)
    l1_theta = analysis.l1_distance_histogram(theta_edges, theta_density, oracle_theta)
    l1_omega = analysis.l1_distance_histogram(omega_edges, omega_density, oracle_omega)
    return l1_theta, l1_omega


def cmd_sample_table1(args) -> int:
    draws = sample_table1_params(int(args.n), int(args.seed if args.seed is not None else 0))
    net = network_from_draws(draws)
    out_dir = Path(args.out or "kprox-run")
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / "reduced_network.json"
    out_path.write_text(save_reduced_network(net), encoding="utf-8")
    print(f"synthetic network: n={net.n}, seed={args.seed}")
    print(f"  inertia m: [{net.m.min():.6g}, {net.m.max():.6g}]")
    print(f"  damping gamma: [{net.gamma.min():.6g}, {net.gamma.max():.6g}]")
    print(f"  noise sigma: [{net.sigma.min():.6g}, {net.sigma.max():.6g}]")
    print(f"  wrote {out_path}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _add_scenario_flags(p: argparse.ArgumentParser, with_run_flags=True):
    p.add_argument("--config", help="scenario JSON; flags override its fields")
    p.add_argument("--case", help="MATPOWER .m or network .json case file")
    p.add_argument("--dynamics", help="machine dynamics JSON aligned with the case gens")
    p.add_argument("--reduced", help="previously written reduced_network.json")
    p.add_argument("--outage", type=int, help="branch index to take out before reduction")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="run seed")
    if with_run_flags:
        p.add_argument("-N", "--n-particles", dest="n_particles", type=int)
        p.add_argument("--t-final", dest="t_final", type=float)
        p.add_argument("--h", type=float, help="time step")
        p.add_argument("--epsilon", type=float, help="entropic regularization weight")
        p.add_argument("--delta", type=float, help="fixed-point tolerance")
        p.add_argument("--l-max", dest="l_max", type=int, help="fixed-point iteration cap")
        p.add_argument("--f-mode", dest="f_mode", choices=["derived", "paper"])
        p.add_argument("--emit-every", dest="emit_every", type=int, help="snapshot cadence")
        p.add_argument("--z0", help="fixed-point initialization: ones or random:<seed>")
        p.add_argument("--strict", action="store_true", help="abort on non-convergence")
        p.add_argument("--threads", type=int, help="worker threads (also KPROX_THREADS)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kprox",
        description="Joint density propagation for stochastic power-system networks",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("reduce", help="Kron-reduce a case to the oscillator network")
    _add_scenario_flags(p, with_run_flags=False)
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("simulate", help="propagate a weighted particle cloud")
    _add_scenario_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="simulate plus an independent MC twin, with metrics")
    _add_scenario_flags(p)
    p.add_argument(
        "--assert-decreasing",
        action="store_true",
        help="fail unless validation metrics decrease after transients",
    )
    p.add_argument("--burn-in", type=float, default=0.0, help="fraction of t_final to drop")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("oracle-n1", help="compare against the single-machine grid PDE")
    _add_scenario_flags(p)
    p.add_argument("--times", type=float, nargs="+", help="comparison times (default 0.25 0.5)")
    p.add_argument("--omega-max", dest="omega_max", type=float, default=2.0)
    p.add_argument("--n-theta", dest="n_theta", type=int, default=128)
    p.add_argument("--n-omega", dest="n_omega", type=int, default=192)
    p.add_argument("--bins", type=int, default=32, help="comparison histogram bins")
    p.set_defaults(func=cmd_oracle_n1)

    p = sub.add_parser("sample-table1", help="draw a synthetic network from published ranges")
    p.add_argument("--n", type=int, required=True, help="number of machines")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_sample_table1)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _apply_threads(args)
    try:
        return args.func(args)
    except NonConvergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except _CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except _NUMERICAL_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except KproxError as exc:  # anything else domain-specific is numerical-grade
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
