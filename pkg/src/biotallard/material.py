r"""Physical parameters, the pointwise material law and its positivity constant.

The convolution-free system is written as :math:`(\partial_t M_0 + M_1 + A) U = G`
with unknowns :math:`U = (v, \sigma, p, \Psi_1, \dots, \Psi_N)`. Pointwise, the
material law is the block matrix :math:`M(z) = M_0 + z^{-1} M_1` with

* ``v``-block ``rho * I_d``, coupled to every ``Psi_j`` through ``rho_f * I_d``,
* ``sigma``-block the compliance ``S = C^{-1}``,
* ``p``-block ``c0``,
* ``Psi_j``-blocks ``a_j I_d`` in :math:`M_0` and ``b_j I_d`` in :math:`M_1` with
  ``a_j = c_j rho_f F / (d_j eta_k)`` and ``b_j = rho_f F / (d_j eta_k)``.

Symmetric tensors are stored in Mandel coordinates (off-diagonal entries scaled by
``sqrt(2)``) so that the Euclidean inner product of the pointwise blocks equals the
Frobenius inner product.

Throughout, the viscosity and formation factor entering the law are taken from
the permeability series (``eta = eta_k * rho_f``) so the law and the series never
disagree.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch
from .permeability import PermeabilitySeries

__all__ = [
    "MaterialParams",
    "MaterialLaw",
    "WellPosednessReport",
    "sym_pairs",
    "assemble_material_law",
    "congruence_reduce",
    "c_min",
    "spectral_c_min",
    "default_z_grid",
    "m0_positive_definite",
    "schur_margins",
    "check_wellposedness",
    "convolution_form_margin",
    "eval_hat_complex",
]


def sym_pairs(d: int) -> list[tuple[int, int]]:
    """Index pairs of the independent components of a symmetric ``d x d`` tensor."""
    diag = [(i, i) for i in range(d)]
    off = [(i, j) for i in range(d) for j in range(i + 1, d)]
    return diag + off


def _mandel_weights(d):
    return np.array([1.0 if i == j else math.sqrt(2.0) for i, j in sym_pairs(d)])


def _isotropic_tensor(lam, mu, d):
    delta = np.eye(d)
    return (
        lam * np.einsum("ij,kl->ijkl", delta, delta)
        + mu * (np.einsum("ik,jl->ijkl", delta, delta) + np.einsum("il,jk->ijkl", delta, delta))
    )


@dataclass(frozen=True)
class MaterialParams:
    """Physical coefficients of the poroelastic medium (SI units).

    Elasticity is given either as Lamé constants ``lame=(lam, mu)`` or as a full
    fourth-order tensor ``C`` of shape ``(d, d, d, d)``.
    """

    rho_s: float
    rho_f: float
    phi: float
    alpha: float
    c0: float
    eta: float
    alpha_inf: float
    lame: tuple[float, float] | None = None
    C: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        for name in ("rho_s", "rho_f", "eta", "c0"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0 < self.phi <= 1:
            raise ValueError(f"porosity must lie in (0, 1], got {self.phi}")
        if not 0 < self.alpha <= 1:
            raise ValueError(f"Biot coefficient must lie in (0, 1], got {self.alpha}")
        if not self.alpha_inf >= 1:
            raise ValueError(f"tortuosity must be >= 1, got {self.alpha_inf}")
        if (self.lame is None) == (self.C is None):
            raise ValueError("give exactly one of lame=(lam, mu) or C")
        if self.C is not None:
            C = np.asarray(self.C, dtype=float)
            d = C.shape[0]
            if C.shape != (d, d, d, d):
                raise DimensionMismatch(f"elasticity tensor must have shape (d,d,d,d), got {C.shape}")
            object.__setattr__(self, "C", C)
        for d in ((self.C.shape[0],) if self.C is not None else (1, 2, 3)):
            if np.linalg.eigvalsh(self.elastic_mandel(d)).min() <= 0:
                raise ValueError("elasticity tensor must be positive definite")

    @property
    def rho(self) -> float:
        return self.rho_f * self.phi + self.rho_s * (1.0 - self.phi)

    @property
    def eta_k(self) -> float:
        return self.eta / self.rho_f

    @property
    def F(self) -> float:
        return self.alpha_inf / self.phi

    def tensor(self, d: int) -> np.ndarray:
        if self.C is not None:
            if self.C.shape[0] != d:
                raise DimensionMismatch(f"elasticity tensor is {self.C.shape[0]}-dimensional, requested d={d}")
            return self.C
        return _isotropic_tensor(*self.lame, d)

    def elastic_mandel(self, d: int) -> np.ndarray:
        """Stiffness as a symmetric matrix on Mandel components."""
        C = self.tensor(d)
        pairs = sym_pairs(d)
        w = _mandel_weights(d)
        out = np.empty((len(pairs), len(pairs)))
        for a, (i, j) in enumerate(pairs):
            for b, (k, l) in enumerate(pairs):
                out[a, b] = w[a] * w[b] * C[i, j, k, l]
        return 0.5 * (out + out.T)

    def compliance_mandel(self, d: int) -> np.ndarray:
        S = np.linalg.inv(self.elastic_mandel(d))
        return 0.5 * (S + S.T)

    def compliance_min(self, d: int) -> float:
        """Smallest eigenvalue ``c_s`` of the compliance."""
        if self.lame is not None:
            lam, mu = self.lame
            if d == 1:
                return 1.0 / (lam + 2.0 * mu)
            return 1.0 / max(2.0 * mu, d * lam + 2.0 * mu)
        return float(np.linalg.eigvalsh(self.compliance_mandel(d)).min())

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in ("rho_s", "rho_f", "phi", "alpha", "c0", "eta", "alpha_inf")}
        if self.lame is not None:
            out["lame"] = list(self.lame)
        else:
            out["C"] = self.C.tolist()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "MaterialParams":
        kw = {k: float(data[k]) for k in ("rho_s", "rho_f", "phi", "alpha", "c0", "eta", "alpha_inf")}
        if "lame" in data:
            kw["lame"] = tuple(float(x) for x in data["lame"])
        if "C" in data:
            kw["C"] = np.asarray(data["C"], dtype=float)
        return cls(**kw)


@dataclass(frozen=True)
class MaterialLaw:
    """Pointwise blocks of ``M(z) = M0 + M1 / z``."""

    M0: np.ndarray
    M1: np.ndarray
    d: int
    N: int
    slices: dict = field(compare=False)
    rho: float = 0.0
    rho_f: float = 0.0
    alpha: float = 1.0
    a: np.ndarray = field(default=None, compare=False)
    b: np.ndarray = field(default=None, compare=False)

    def at(self, z: complex) -> np.ndarray:
        return self.M0 + self.M1 / z

    @property
    def size(self) -> int:
        return self.M0.shape[0]


def _block_slices(d, N):
    nsym = d * (d + 1) // 2
    sl = {"v": slice(0, d), "sigma": slice(d, d + nsym), "p": slice(d + nsym, d + nsym + 1)}
    off = d + nsym + 1
    for j in range(N):
        sl[f"psi{j}"] = slice(off + j * d, off + (j + 1) * d)
    return sl


def assemble_material_law(params: MaterialParams, series: PermeabilitySeries | None, d: int) -> MaterialLaw:
    """Assemble the pointwise ``M0`` and ``M1`` for dimension ``d`` and ``N`` terms.

    ``series=None`` gives the memory-free law (``N = 0``).
    """
    if d not in (1, 2, 3):
        raise DimensionMismatch(f"d must be 1, 2 or 3, got {d}")
    S = params.compliance_mandel(d)
    N = 0 if series is None else series.N
    sl = _block_slices(d, N)
    n = d + S.shape[0] + 1 + N * d
    M0 = np.zeros((n, n))
    M1 = np.zeros((n, n))
    I = np.eye(d)
    M0[sl["v"], sl["v"]] = params.rho * I
    M0[sl["sigma"], sl["sigma"]] = S
    M0[sl["p"], sl["p"]] = params.c0
    a = np.zeros(N)
    b = np.zeros(N)
    if N:
        c, dd = series.c, series.d
        b = params.rho_f * series.F / (dd * series.eta_k)
        a = c * b
        for j in range(N):
            pj = sl[f"psi{j}"]
            M0[pj, pj] = a[j] * I
            M0[sl["v"], pj] = params.rho_f * I
            M0[pj, sl["v"]] = params.rho_f * I
            M1[pj, pj] = b[j] * I
    return MaterialLaw(M0=M0, M1=M1, d=d, N=N, slices=sl, rho=params.rho, rho_f=params.rho_f,
                       alpha=params.alpha, a=a, b=b)


def congruence_reduce(law: MaterialLaw) -> tuple[MaterialLaw, np.ndarray]:
    """Eliminate the ``v``/``Psi`` coupling of ``M0`` by a symmetric Gauss step.

    Returns the reduced law ``T^T M T`` and the transformation ``T`` (acting as
    ``v = v' - (rho_f/rho) sum_j Psi_j'``). ``M1`` is unchanged by ``T``. For
    ``N = 1`` the reduced ``M0`` is block diagonal; for ``N > 1`` the ``Psi``
    blocks stay coupled through ``-rho_f**2/rho``.
    """
    T = np.eye(law.size)
    for j in range(law.N):
        T[law.slices["v"], law.slices[f"psi{j}"]] = -(law.rho_f / law.rho) * np.eye(law.d)
    M0 = T.T @ law.M0 @ T
    M1 = T.T @ law.M1 @ T
    M0 = 0.5 * (M0 + M0.T)
    reduced = MaterialLaw(M0=M0, M1=M1, d=law.d, N=law.N, slices=law.slices,
                          rho=law.rho, rho_f=law.rho_f, alpha=law.alpha, a=law.a, b=law.b)
    return reduced, T


def _eta_F(params, series):
    return series.eta_k * params.rho_f, series.F


def schur_margins(params: MaterialParams, series: PermeabilitySeries) -> np.ndarray:
    """Per-term slopes ``c_j F / (d_j eta) - 1/rho``."""
    eta, F = _eta_F(params, series)
    return series.c * F / (series.d * eta) - 1.0 / params.rho


def m0_positive_definite(params: MaterialParams, series: PermeabilitySeries | None, exact: bool = True) -> bool:
    """Whether ``M0`` is positive definite.

    ``exact=True`` uses the full Schur complement of the ``v`` block,
    ``rho - rho_f**2 sum_j 1/a_j > 0``; ``exact=False`` applies the per-term
    test ``c_j F/(d_j eta) > 1/rho``, which coincides with it only for ``N = 1``.
    """
    if series is None:
        return True
    if not exact:
        return bool(np.all(schur_margins(params, series) > 0))
    eta, F = _eta_F(params, series)
    a = series.c * params.rho_f**2 * F / (series.d * eta)
    return bool(params.rho - params.rho_f**2 * np.sum(1.0 / a) > 0)


def c_min(law: MaterialLaw, params: MaterialParams, nu0: float, series: PermeabilitySeries | None = None) -> float:
    """Closed-form positivity constant at ``Re z = nu0``.

    ``min{nu0 rho, nu0 c_s, nu0 c0, min_j rho_f**2 (nu0 (c_j F/(d_j eta) - 1/rho) + F/(d_j eta))}``.
    May be non-positive, which signals that the condition fails.
    """
    if not nu0 > 0:
        raise ValueError("nu0 must be positive")
    cands = [nu0 * params.rho, nu0 * params.compliance_min(law.d), nu0 * params.c0]
    if law.N:
        # recover c_j F/(d_j eta) = a_j / rho_f**2 and F/(d_j eta) = b_j / rho_f**2
        slope = law.a / law.rho_f**2 - 1.0 / law.rho
        icpt = law.b / law.rho_f**2
        cands.extend(law.rho_f**2 * (nu0 * slope + icpt))
    return float(min(cands))


def default_z_grid(nu0: float) -> np.ndarray:
    """Sampling grid ``Re z in nu0 {1,2,5,10,100}``, ``Im z in {0, +-logspace(-3, 6)}``."""
    re = nu0 * np.array([1.0, 2.0, 5.0, 10.0, 100.0])
    im = np.logspace(-3, 6, 37)
    im = np.concatenate([[0.0], im, -im])
    return (re[:, None] + 1j * im[None, :]).ravel()


def spectral_c_min(law: MaterialLaw, nu0: float, z_grid=None) -> float:
    """Infimum over sampled ``z`` of the smallest eigenvalue of ``Re(z M(z))``.

    ``Re`` is the Hermitian part. Independent of :func:`c_min`: it never looks
    at the closed form, only at the assembled blocks.
    """
    zs = default_z_grid(nu0) if z_grid is None else np.asarray(z_grid)
    best = np.inf
    for z in zs:
        Z = z * law.at(z)
        Hm = 0.5 * (Z + Z.conj().T)
        best = min(best, np.linalg.eigvalsh(Hm)[0])
    return float(best)


@dataclass
class WellPosednessReport:
    nu0: float
    holds: bool
    c_min: float
    per_term_margins: list
    nu0_admissible_range: tuple
    m0_positive_definite: bool = True
    coupled_min_eig: float = float("nan")

    def to_dict(self) -> dict:
        lo, hi = self.nu0_admissible_range
        return {
            "nu0": self.nu0,
            "holds": self.holds,
            "c_min": self.c_min,
            "per_term_margins": list(self.per_term_margins),
            "nu0_admissible_range": [lo, None if math.isinf(hi) else hi],
            "m0_positive_definite": self.m0_positive_definite,
            "coupled_min_eig": self.coupled_min_eig,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def table(self) -> str:
        lo, hi = self.nu0_admissible_range
        rows = [
            ("nu0", f"{self.nu0:.6g}"),
            ("holds", str(self.holds)),
            ("c_min", f"{self.c_min:.6g}"),
            ("admissible nu0", f"({lo:.6g}, {'inf' if math.isinf(hi) else f'{hi:.6g}'})"),
            ("M0 positive definite", str(self.m0_positive_definite)),
            ("min eig(nu0 M0 + M1), raw", f"{self.coupled_min_eig:.6g}"),
        ]
        rows += [(f"margin[{j}]", f"{m:.6g}") for j, m in enumerate(self.per_term_margins)]
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k.ljust(width)}  {v}" for k, v in rows)


def check_wellposedness(params: MaterialParams, series: PermeabilitySeries, nu0: float, d: int = 1) -> WellPosednessReport:
    """Evaluate ``nu0 (c_j F/(d_j eta) - 1/rho) + F/(d_j eta) > 0`` for every term."""
    if not nu0 > 0:
        raise ValueError("nu0 must be positive")
    eta, F = _eta_F(params, series)
    slope = schur_margins(params, series)
    icpt = F / (series.d * eta)
    margins = nu0 * slope + icpt
    neg = slope < 0
    upper = float(np.min(icpt[neg] / -slope[neg])) if np.any(neg) else math.inf
    law = assemble_material_law(params, series, d)
    cm = c_min(law, params, nu0)
    coupled = float(np.linalg.eigvalsh(nu0 * law.M0 + law.M1)[0])
    holds = bool(np.all(margins > 0) and cm > 0)
    return WellPosednessReport(
        nu0=float(nu0),
        holds=holds,
        c_min=cm,
        per_term_margins=[float(m) for m in margins],
        nu0_admissible_range=(0.0, upper),
        m0_positive_definite=m0_positive_definite(params, series),
        coupled_min_eig=coupled,
    )


def convolution_form_margin(params: MaterialParams, series: PermeabilitySeries, nu0: float,
                            m: Sequence[float] | None = None) -> float:
    """Diagnostic for the convolution form: ``min_m Re(1/A_hat(m - i nu0)) - nu0 rho_f/rho``.

    With the transform convention of :mod:`biotallard.permeability`, ``sqrt(2 pi)``
    times the unitary transform equals :func:`eval_hat`, so no extra factor appears.
    """
    ms = np.concatenate([[0.0], np.logspace(-3, 6, 200), -np.logspace(-3, 6, 200)]) if m is None else np.asarray(m)
    vals = np.real(1.0 / eval_hat_complex(series, ms - 1j * nu0))
    return float(np.min(vals) - nu0 * params.rho_f / params.rho)


def eval_hat_complex(series: PermeabilitySeries, omega):
    """:func:`eval_hat` continued to complex frequencies."""
    w = np.asarray(omega, dtype=complex)
    return series.prefactor * np.sum(series.d / (1.0 + 1j * w[..., None] * series.c), axis=-1)

