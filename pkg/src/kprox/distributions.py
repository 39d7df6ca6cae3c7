"""Initial joint densities on the cylinder T^n x R^n.

Product laws only: per-angle von Mises (doubled or standard convention)
or uniform on the circle, times a uniform box on the velocities. The
doubled convention multiplies the angle by two inside the cosine, which
makes the density pi-periodic and therefore bimodal on [0, 2pi); this
is intentional and documented wherever the convention is selectable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import i0e as _i0e

from .dynamics import Ensemble

_CONVENTIONS = ("doubled", "standard")

# series/asymptotic crossover; at 15 the asymptotic tail is already
# below 1e-12 relative and the series needs < 50 terms
_I0_SWITCH = 15.0


def _i0_scalar(k: float) -> float:
    if k <= _I0_SWITCH:
        term = 1.0
        total = 1.0
        q = 0.25 * k * k
        r = 1
        while term > 1e-16 * total:
            term *= q / (r * r)
            total += term
            r += 1
        return total
    # e^k / sqrt(2 pi k) * sum mu_j / (8k)^j with mu_j = prod (2i-1)^2 / j!;
    # truncate at the smallest term, where an asymptotic series must stop
    term = 1.0
    total = 1.0
    j = 1
    while True:
        nxt = term * (2 * j - 1) ** 2 / (8.0 * k * j)
        if nxt >= term or nxt < 1e-17 * total:
            break
        term = nxt
        total += term
        j += 1
    return math.exp(k) / math.sqrt(2.0 * math.pi * k) * total


def bessel_i0(kappa):
    """Modified Bessel function of the first kind, order zero.

    Power series up to the crossover, asymptotic expansion beyond;
    both straight out of the defining formulas so the function has no
    special-function dependency to disagree with.
    """
    kappa = np.asarray(kappa, dtype=float)
    if np.any(kappa < 0.0):
        raise ValueError("bessel_i0 requires kappa >= 0")
    out = np.array([_i0_scalar(float(k)) for k in np.atleast_1d(kappa).ravel()])
    return float(out[0]) if kappa.ndim == 0 else out.reshape(kappa.shape)


def von_mises_pdf(theta, mu: float, kappa: float, convention: str = "standard"):
    """Von Mises density on [0, 2pi).

    Doubled convention: exp(kappa cos(2 theta - mu)) / (2 pi I0(kappa)),
    normalized over one period despite the doubled angle. Uses the
    exponentially scaled Bessel function so large kappa cannot overflow.
    """
    if convention not in _CONVENTIONS:
        raise ValueError(f"convention must be one of {_CONVENTIONS}")
    if kappa < 0.0:
        raise ValueError("kappa must be >= 0")
    theta = np.asarray(theta, dtype=float)
    mult = 2.0 if convention == "doubled" else 1.0
    out = np.exp(kappa * (np.cos(mult * theta - mu) - 1.0)) / (2.0 * np.pi * _i0e(kappa))
    return float(out) if out.ndim == 0 else out


def sample_von_mises(
    mu: float,
    kappa: float,
    rng: np.random.Generator,
    size=None,
    convention: str = "standard",
) -> np.ndarray:
    """Exact von Mises sampling (Best-Fisher rejection, via numpy).

    Doubled convention: draw the standard law at the doubled angle,
    halve it, then flip to the antipodal mode with probability 1/2 so
    both modes of the pi-periodic density are covered. Returns angles
    in [0, 2pi).
    """
    if convention not in _CONVENTIONS:
        raise ValueError(f"convention must be one of {_CONVENTIONS}")
    if kappa < 0.0:
        raise ValueError("kappa must be >= 0")
    if kappa == 0.0:
        return rng.uniform(0.0, 2.0 * np.pi, size=size)
    if convention == "standard":
        return np.mod(rng.vonmises(mu, kappa, size=size), 2.0 * np.pi)
    psi = rng.vonmises(mu, kappa, size=size)
    flip = rng.integers(0, 2, size=np.shape(psi))
    return np.mod(0.5 * psi + np.pi * flip, 2.0 * np.pi)


@dataclass(frozen=True)
class InitialPdf:
    """Product initial law: angle marginals x uniform velocity box.

    ``kappa[i] = 0`` makes angle i uniform on the circle, so the
    all-uniform law is the kappa = 0 vector with any mu.
    """

    mu: np.ndarray  # (n,) location parameters, rad
    kappa: np.ndarray  # (n,) concentrations, >= 0
    omega_lo: np.ndarray  # (n,) rad/s
    omega_hi: np.ndarray
    convention: str = "doubled"

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        kappa = np.asarray(self.kappa, dtype=float)
        lo = np.asarray(self.omega_lo, dtype=float)
        hi = np.asarray(self.omega_hi, dtype=float)
        if not (mu.shape == kappa.shape == lo.shape == hi.shape) or mu.ndim != 1:
            raise ValueError("mu, kappa, omega_lo, omega_hi must share shape (n,)")
        if np.any(kappa < 0.0):
            raise ValueError("kappa must be >= 0 elementwise")
        if np.any(lo >= hi):
            raise ValueError("omega_lo must be < omega_hi elementwise")
        if self.convention not in _CONVENTIONS:
            raise ValueError(f"convention must be one of {_CONVENTIONS}")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "kappa", kappa)
        object.__setattr__(self, "omega_lo", lo)
        object.__setattr__(self, "omega_hi", hi)

    @property
    def n(self) -> int:
        return self.mu.shape[0]

    @classmethod
    def uniform(cls, n: int, omega_lo: float = -0.1, omega_hi: float = 0.1) -> "InitialPdf":
        return cls(
            mu=np.zeros(n),
            kappa=np.zeros(n),
            omega_lo=np.full(n, omega_lo),
            omega_hi=np.full(n, omega_hi),
        )

    def pdf(self, x: np.ndarray) -> np.ndarray:
        """Joint density at states x with shape (..., 2n), angles wrapped
        internally; zero outside the velocity box."""
        x = np.asarray(x, dtype=float)
        n = self.n
        theta, omega = x[..., :n], x[..., n:]
        mult = 2.0 if self.convention == "doubled" else 1.0
        log_angle = self.kappa * (np.cos(mult * theta - self.mu) - 1.0)
        log_angle -= np.log(2.0 * np.pi * _i0e(self.kappa))
        out = np.exp(log_angle.sum(axis=-1))
        inside = np.all((omega >= self.omega_lo) & (omega <= self.omega_hi), axis=-1)
        box = 1.0 / np.prod(self.omega_hi - self.omega_lo)
        out = out * box * inside
        return float(out) if out.ndim == 0 else out

    def sample(self, n_samples: int, rng: np.random.Generator) -> np.ndarray:
        theta = np.empty((n_samples, self.n))
        for i in range(self.n):
            theta[:, i] = sample_von_mises(
                self.mu[i], self.kappa[i], rng, size=n_samples, convention=self.convention
            )
        omega = rng.uniform(self.omega_lo, self.omega_hi, size=(n_samples, self.n))
        return np.concatenate([theta, omega], axis=1)


def sample_initial(pdf: InitialPdf, n_samples: int, rng: np.random.Generator) -> Ensemble:
    """Draw an initial cloud with exact density values attached."""
    if n_samples < 1:
        raise ValueError("need at least one sample")
    states = pdf.sample(n_samples, rng)
    values = pdf.pdf(states)
    return Ensemble(coords="original", states=states, values=values, step_index=0, time=0.0)
