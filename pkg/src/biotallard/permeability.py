r"""Rational dynamic-permeability series.

The frequency-domain permeability is approximated by a positive sum of
first-order relaxation terms

.. math::

    \hat{A}(\omega) = \frac{\eta_k}{F} \sum_{j=1}^{N} \frac{d_j}{1 + i\omega c_j},

with relaxation times :math:`c_j > 0` and weights :math:`d_j > 0`.

Fourier convention
------------------
All transforms in this package use :math:`\hat g(\omega) = \int g(t) e^{-i\omega t}\,dt`,
so :math:`\partial_t \leftrightarrow i\omega` and :math:`\partial_t^2 u \leftrightarrow -\omega^2 \hat u`.
Under this convention the causal pair is

.. math::

    \frac{d}{c} e^{-t/c} H(t) \;\leftrightarrow\; \frac{d}{1 + i\omega c},

so the time-domain kernel is :math:`A(t) = (\eta_k/F)\sum_j (d_j/c_j) e^{-t/c_j}` for
:math:`t \ge 0` with no extra :math:`2\pi` factors.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import FitDiverged, InsufficientSamples, PositivityViolated

__all__ = [
    "PermeabilitySeries",
    "FrequencySample",
    "FitOptions",
    "FitResult",
    "eval_hat",
    "kernel",
    "convolve_constant",
    "fit_series",
    "sample_series",
    "read_samples_csv",
    "write_samples_csv",
]


@dataclass(frozen=True)
class PermeabilitySeries:
    """Constants of the permeability series.

    ``terms`` is stored as a tuple of ``(c_j, d_j)`` pairs sorted by ascending
    relaxation time, so two series with the same terms in a different order
    compare equal.
    """

    eta_k: float
    F: float
    terms: tuple[tuple[float, float], ...]

    def __post_init__(self):
        terms = tuple(sorted((float(c), float(d)) for c, d in self.terms))
        if len(terms) < 1:
            raise ValueError("a permeability series needs at least one term")
        for c, d in terms:
            if not (c > 0 and d > 0) or not (math.isfinite(c) and math.isfinite(d)):
                raise ValueError(f"relaxation constants must be positive and finite, got c={c}, d={d}")
        if not self.eta_k > 0:
            raise ValueError(f"eta_k must be positive, got {self.eta_k}")
        if not self.F >= 1:
            raise ValueError(f"formation factor must satisfy F >= 1, got {self.F}")
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "eta_k", float(self.eta_k))
        object.__setattr__(self, "F", float(self.F))

    @classmethod
    def from_material(cls, params, terms: Iterable[Sequence[float]]) -> "PermeabilitySeries":
        """Build a series whose prefactor is derived from material parameters."""
        return cls(eta_k=params.eta_k, F=params.F, terms=tuple(tuple(t) for t in terms))

    @property
    def N(self) -> int:
        return len(self.terms)

    @property
    def c(self) -> np.ndarray:
        return np.array([t[0] for t in self.terms])

    @property
    def d(self) -> np.ndarray:
        return np.array([t[1] for t in self.terms])

    @property
    def prefactor(self) -> float:
        """``eta_k / F``."""
        return self.eta_k / self.F

    def split(self) -> list["PermeabilitySeries"]:
        """One single-term series per term."""
        return [PermeabilitySeries(self.eta_k, self.F, (t,)) for t in self.terms]

    def check_relaxation_bound(self, phi_max: float) -> bool:
        """Warn if some ``c_j`` reaches the principal viscous relaxation time.

        The bound is advisory only; returns ``True`` when all terms respect it.
        """
        bad = [c for c, _ in self.terms if c >= phi_max]
        if bad:
            warnings.warn(
                f"relaxation times {bad} are not below the principal viscous relaxation time {phi_max}",
                stacklevel=2,
            )
        return not bad

    def to_dict(self) -> dict:
        return {
            "eta_k": self.eta_k,
            "F": self.F,
            "terms": [{"c": c, "d": d} for c, d in self.terms],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PermeabilitySeries":
        return cls(
            eta_k=data["eta_k"],
            F=data["F"],
            terms=tuple((t["c"], t["d"]) for t in data["terms"]),
        )

    def to_json(self) -> str:
        # json renders floats with repr(), the shortest round-trip decimal
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "PermeabilitySeries":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class FrequencySample:
    omega: float
    value: complex

    def __post_init__(self):
        if not self.omega >= 0:
            raise ValueError(f"sample frequency must be non-negative, got {self.omega}")
        if not np.isfinite(self.value):
            raise ValueError("sample value must be finite")


def eval_hat(series: PermeabilitySeries, omega):
    """Evaluate the frequency-domain permeability; vectorised over ``omega``."""
    w = np.asarray(omega, dtype=float)
    c, d = series.c, series.d
    val = series.prefactor * np.sum(d / (1.0 + 1j * w[..., None] * c), axis=-1)
    return complex(val) if np.ndim(val) == 0 else val


def kernel(series: PermeabilitySeries, t):
    """Causal time-domain kernel ``A(t)``; vectorised over ``t >= 0``."""
    tt = np.asarray(t, dtype=float)
    if np.any(tt < 0):
        raise ValueError("the permeability kernel is causal; t must be non-negative")
    c, d = series.c, series.d
    val = series.prefactor * np.sum((d / c) * np.exp(-tt[..., None] / c), axis=-1)
    return float(val) if np.ndim(val) == 0 else val


def convolve_constant(series: PermeabilitySeries, t):
    """Exact value of ``int_0^t A(t - s) ds``, the response to ``g == 1``."""
    tt = np.asarray(t, dtype=float)
    c, d = series.c, series.d
    val = series.prefactor * np.sum(d * (-np.expm1(-tt[..., None] / c)), axis=-1)
    return float(val) if np.ndim(val) == 0 else val


def sample_series(series: PermeabilitySeries, omegas) -> list[FrequencySample]:
    values = eval_hat(series, np.asarray(omegas, dtype=float))
    return [FrequencySample(float(w), complex(v)) for w, v in zip(omegas, np.atleast_1d(values))]


# --------------------------------------------------------------------------
# fitting
# --------------------------------------------------------------------------


@dataclass
class FitOptions:
    """Controls for :func:`fit_series`.

    ``eta_k`` and ``F`` set the prefactor of the returned series; only the
    products ``eta_k * d_j / F`` are identifiable from samples.
    """

    eta_k: float = 1.0
    F: float = 1.0
    max_iter: int = 200
    tol: float = 1e-12
    static_limit: float | None = None
    relaxation_bound: float | None = None


@dataclass(frozen=True)
class FitResult:
    series: PermeabilitySeries
    residual: float
    iterations: int
    pole_history: list = field(default_factory=list, compare=False, repr=False)


def _basis(s, poles):
    return 1.0 / (s[:, None] - poles[None, :])


def _real_stack(a):
    return np.concatenate([a.real, a.imag], axis=0)


def _lstsq_scaled(A, b):
    scale = np.linalg.norm(A, axis=0)
    scale[scale == 0] = 1.0
    x, *_ = np.linalg.lstsq(A / scale, b, rcond=None)
    return x / scale


def _relocate(s, H, poles):
    """One pole-relocation pass with a weighting function ``1 + sum r~/(s-a)``."""
    n = poles.size
    phi = _basis(s, poles)
    A = np.hstack([phi, -H[:, None] * phi])
    x = _lstsq_scaled(_real_stack(A), _real_stack(H))
    rt = x[n:]
    zeros = np.linalg.eigvals(np.diag(poles) - np.outer(np.ones(n), rt))
    new = zeros.real.copy()
    # keep the poles stable and real
    new = -np.abs(new)
    tiny = 1e-14 * max(np.max(np.abs(poles)), 1.0)
    new[new > -tiny] = -tiny
    return np.sort(new)


def _residues(s, H, poles, static_limit=None):
    phi = _real_stack(_basis(s, poles))
    b = _real_stack(H)
    if static_limit is None:
        return _lstsq_scaled(phi, b)
    # equality-constrained least squares via the KKT system
    w = 1.0 / (-poles)
    n = poles.size
    scale = np.linalg.norm(phi, axis=0)
    phis = phi / scale
    ws = w / scale
    kkt = np.zeros((n + 1, n + 1))
    kkt[:n, :n] = phis.T @ phis
    kkt[:n, n] = ws
    kkt[n, :n] = ws
    rhs = np.concatenate([phis.T @ b, [static_limit]])
    y = np.linalg.solve(kkt, rhs)
    return y[:n] / scale


def fit_series(samples: Sequence[FrequencySample], N: int, options: FitOptions | None = None) -> FitResult:
    """Fit ``N`` positive relaxation terms to frequency samples.

    Poles ``-1/c_j`` are relocated with vector-fitting passes restricted to
    the negative real axis until their relative movement drops below
    ``options.tol``; the weights then follow from a linear least-squares
    solve, optionally constrained to reproduce ``options.static_limit`` at
    ``omega = 0``.

    Raises
    ------
    InsufficientSamples
        Fewer than ``2 N`` samples.
    FitDiverged
        Pole relocation did not settle within ``options.max_iter`` passes.
    PositivityViolated
        The converged weights are not all strictly positive.
    """
    options = options or FitOptions()
    if N < 1:
        raise ValueError("N must be at least 1")
    if len(samples) < 2 * N:
        raise InsufficientSamples(f"need at least {2 * N} samples for N={N}, got {len(samples)}")
    omega = np.array([smp.omega for smp in samples], dtype=float)
    H = np.array([smp.value for smp in samples], dtype=complex)
    if np.unique(omega).size != omega.size:
        raise ValueError("sample frequencies must be distinct")
    s = 1j * omega

    positive = omega[omega > 0]
    if positive.size == 0:
        raise InsufficientSamples("at least one sample with omega > 0 is required")
    lo, hi = positive.min(), positive.max()
    if hi == lo:
        hi = 10.0 * lo
    poles = -np.logspace(np.log10(lo), np.log10(hi), N)

    history = [poles.copy()]
    for it in range(1, options.max_iter + 1):
        new = _relocate(s, H, poles)
        move = np.max(np.abs(new - poles) / np.abs(poles))
        poles = new
        history.append(poles.copy())
        if move < options.tol:
            break
    else:
        raise FitDiverged(
            f"pole relocation did not converge in {options.max_iter} iterations (last move {move:.3e})"
        )

    res = _residues(s, H, poles, options.static_limit)
    if np.any(res <= 0):
        raise PositivityViolated(
            f"fitted residues are not all positive: {res}", poles=poles, residues=res
        )

    c = -1.0 / poles
    d = res * c * options.F / options.eta_k
    series = PermeabilitySeries(options.eta_k, options.F, tuple(zip(c, d)))
    fitted = eval_hat(series, omega)
    residual = float(np.linalg.norm(fitted - H) / np.linalg.norm(H))
    if options.relaxation_bound is not None:
        series.check_relaxation_bound(options.relaxation_bound)
    return FitResult(series=series, residual=residual, iterations=it, pole_history=history)


# --------------------------------------------------------------------------
# I/O
# --------------------------------------------------------------------------


def read_samples_csv(path) -> list[FrequencySample]:
    """Read samples from a CSV file with header ``omega,re,im``."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["omega", "re", "im"]:
            raise ValueError(f"{path}: expected header 'omega,re,im', got {reader.fieldnames}")
        return [
            FrequencySample(float(row["omega"]), complex(float(row["re"]), float(row["im"])))
            for row in reader
        ]


def write_samples_csv(path, samples: Sequence[FrequencySample]) -> None:
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["omega", "re", "im"])
        for smp in samples:
            writer.writerow([repr(smp.omega), repr(smp.value.real), repr(smp.value.imag)])
