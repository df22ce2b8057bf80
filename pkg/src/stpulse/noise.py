"""Exchange models and quasi-static noise sweeps."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "ExchangeModel",
    "NoiseGrid",
    "SweepTable",
    "InsufficientData",
    "infidelity_sweep",
    "scaling_exponent",
    "gaussian_factor_check",
    "gaussian_samples",
    "INFIDELITY_FLOOR",
]

# below this the direct (cancellation-free) infidelity is dominated by rounding in the propagator product
INFIDELITY_FLOOR = 1e-26


@dataclass(frozen=True)
class ExchangeModel:
    """Exchange curve ``J(eps)`` and its slope ``g(J) = dJ/deps`` at fixed ``J``.

    ``kind="exponential"`` is the empirical ``J0 + J1 exp(eps/eps0)`` curve,
    so ``g(J) = (J - J0) / eps0`` and the exchange cannot go below ``J0``.
    ``kind="custom"`` takes ``g`` as polynomial coefficients in ``J``
    (highest power first, as for ``numpy.polyval``) together with ``Jmin``.
    """

    kind: str = "exponential"
    J0: float = 0.0
    J1: float = 1.0
    eps0: float = 1.0
    Jmax: float = 30.0
    g_coeffs: tuple[float, ...] = ()
    Jmin_custom: float = 0.0

    def __post_init__(self):
        if self.kind not in ("exponential", "custom"):
            raise ValueError(f"unknown exchange model kind {self.kind!r}")
        if self.kind == "exponential" and not self.eps0 > 0:
            raise ValueError("eps0 must be positive")
        if self.kind == "custom" and not self.g_coeffs:
            raise ValueError("custom exchange model needs g_coeffs")
        if not self.Jmax > self.Jmin:
            raise ValueError("Jmax must exceed the minimum exchange")
        object.__setattr__(self, "g_coeffs", tuple(float(c) for c in self.g_coeffs))

    @property
    def Jmin(self) -> float:
        return self.J0 if self.kind == "exponential" else self.Jmin_custom

    def J(self, eps):
        if self.kind != "exponential":
            raise NotImplementedError("custom models only define g(J)")
        return self.J0 + self.J1 * np.exp(np.asarray(eps, dtype=float) / self.eps0)

    def g(self, J):
        J = np.asarray(J, dtype=float)
        if self.kind == "exponential":
            out = (J - self.J0) / self.eps0
        else:
            out = np.polyval(self.g_coeffs, J)
        return float(out) if out.ndim == 0 else out

    def in_range(self, J, tol: float = 1e-12) -> bool:
        J = np.asarray(J, dtype=float)
        return bool(np.all(J >= self.Jmin - tol) and np.all(J <= self.Jmax + tol))

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "Jmax": self.Jmax}
        if self.kind == "exponential":
            d.update(J0=self.J0, J1=self.J1, eps0=self.eps0)
        else:
            d.update(g_coeffs=list(self.g_coeffs), Jmin=self.Jmin_custom)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExchangeModel":
        kind = d.get("kind", "exponential")
        if kind == "exponential":
            return cls(
                kind=kind,
                J0=float(d.get("J0", 0.0)),
                J1=float(d.get("J1", 1.0)),
                eps0=float(d.get("eps0", 1.0)),
                Jmax=float(d.get("Jmax", 30.0)),
            )
        return cls(
            kind=kind,
            g_coeffs=tuple(d["g_coeffs"]),
            Jmin_custom=float(d.get("Jmin", 0.0)),
            Jmax=float(d.get("Jmax", 30.0)),
        )

    def key(self) -> str:
        """Stable short hash used to key cached solutions."""
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha1(blob).hexdigest()[:12]


class InsufficientData(ValueError):
    """Too few usable points for a scaling fit."""


@dataclass(frozen=True)
class NoiseGrid:
    """Quasi-static noise points ``(dh, deps)``.

    In point mode each row is one static noise realization.  In Gaussian
    mode each row holds standard deviations ``(sigma_h, sigma_eps)`` and the
    sweep reports the mean infidelity over ``samples`` draws.  ``deps`` is in
    units of ``eps0``.
    """

    points: np.ndarray
    gaussian: bool = False
    samples: int = 100_000
    seed: int = 0

    def __post_init__(self):
        p = np.array(self.points, dtype=float).reshape(-1, 2)
        if len(p) == 0:
            raise ValueError("noise grid is empty")
        if not np.all(np.isfinite(p)):
            raise ValueError("noise grid values must be finite")
        if self.gaussian and (np.any(p < 0) or self.samples < 1):
            raise ValueError("Gaussian widths must be >= 0 and samples >= 1")
        p.flags.writeable = False
        object.__setattr__(self, "points", p)

    @classmethod
    def axis(cls, which: str, values, other: float = 0.0) -> "NoiseGrid":
        """Sweep one source over ``values`` with the other held at ``other``."""
        v = np.asarray(values, dtype=float)
        o = np.full_like(v, other)
        if which == "h":
            return cls(np.stack([v, o], 1))
        if which == "eps":
            return cls(np.stack([o, v], 1))
        raise ValueError(f"noise axis must be 'h' or 'eps', got {which!r}")

    @classmethod
    def product(cls, dh, deps) -> "NoiseGrid":
        H, E = np.meshgrid(np.asarray(dh, float), np.asarray(deps, float), indexing="ij")
        return cls(np.stack([H.ravel(), E.ravel()], 1))

    @classmethod
    def gaussian_widths(cls, sigmas, samples: int = 100_000, seed: int = 0) -> "NoiseGrid":
        return cls(np.asarray(sigmas, float).reshape(-1, 2), True, samples, seed)


def gaussian_samples(seed: int, index: int, n: int, sigma_h: float, sigma_eps: float) -> tuple[np.ndarray, np.ndarray]:
    """Draws for one grid point from a Philox stream keyed by ``(seed, index)``.

    The stream depends only on the key, so any evaluation order or worker
    split gives the same numbers.
    """
    gen = np.random.Generator(np.random.Philox(key=np.array([seed, index], dtype=np.uint64)))
    z = gen.standard_normal((2, n))
    return sigma_h * z[0], sigma_eps * z[1]


@dataclass(frozen=True)
class SweepTable:
    delta_h: np.ndarray
    delta_eps: np.ndarray
    infidelity: np.ndarray
    label: str = ""

    def __len__(self):
        return len(self.infidelity)

    def column(self, axis: str) -> np.ndarray:
        return {"h": self.delta_h, "eps": self.delta_eps}[axis]

    def to_csv(self, fh=None) -> str:
        buf = io.StringIO() if fh is None else fh
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["delta_h", "delta_eps", "infidelity", "label"])
        for h, e, f in zip(self.delta_h, self.delta_eps, self.infidelity):
            w.writerow([f"{h:.17g}", f"{e:.17g}", f"{f:.17g}", self.label])
        return buf.getvalue() if fh is None else ""

    @classmethod
    def from_csv(cls, text: str) -> "SweepTable":
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows:
            raise ValueError("empty sweep table")
        col = lambda k: np.array([float(r[k]) for r in rows])  # noqa: E731
        return cls(col("delta_h"), col("delta_eps"), col("infidelity"), rows[0].get("label", ""))


def infidelity_sweep(seq, target: np.ndarray, grid: NoiseGrid, model: ExchangeModel, label: str = "") -> SweepTable:
    """Infidelity of ``seq`` against ``target`` at every grid point.

    Each point is computed independently (Gaussian draws are keyed by the
    point index), so the table does not depend on evaluation order.
    """
    from .su2 import compose, infidelity_single

    pts = grid.points
    if not grid.gaussian:
        U = compose(seq, pts[:, 0], pts[:, 1], model)
        inf = np.atleast_1d(infidelity_single(U, target))
    else:
        inf = np.empty(len(pts))
        for i, (sh, se) in enumerate(pts):
            dh, de = gaussian_samples(grid.seed, i, grid.samples, sh, se)
            vals = []
            for lo in range(0, grid.samples, 50_000):
                U = compose(seq, dh[lo:lo + 50_000], de[lo:lo + 50_000], model)
                vals.append(np.atleast_1d(infidelity_single(U, target)))
            inf[i] = float(np.mean(np.concatenate(vals)))
    return SweepTable(pts[:, 0].copy(), pts[:, 1].copy(), inf, label)


def scaling_exponent(delta, infidelity, fit_range: tuple[float, float] | None = None,
                     floor: float = INFIDELITY_FLOOR) -> tuple[float, float, float]:
    """Least-squares slope of ``log(1-F)`` against ``log|delta|``.

    Returns ``(slope, intercept, r2)``.  Needs at least five points inside
    ``fit_range`` (on ``|delta|``) whose infidelity is above ``floor``.
    """
    d = np.abs(np.asarray(delta, dtype=float))
    f = np.asarray(infidelity, dtype=float)
    keep = d > 0
    if fit_range is not None:
        keep &= (d >= fit_range[0] * (1 - 1e-12)) & (d <= fit_range[1] * (1 + 1e-12))
    if keep.sum() < 5:
        raise InsufficientData(f"need >= 5 points in the fit range, have {int(keep.sum())}")
    if np.any(f[keep] <= floor):
        raise InsufficientData(f"infidelity at or below the numerical floor {floor:g} inside the fit range")
    x, y = np.log(d[keep]), np.log(f[keep])
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum((y - pred) ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def gaussian_factor_check(seq, target: np.ndarray, sigma: float, model: ExchangeModel, axis: str = "h",
                          samples: int = 100_000, seed: int = 0, even: bool = False) -> float:
    """Mean infidelity under ``N(0, sigma)`` noise on one axis over the value at ``delta = sigma``.

    A purely quartic response gives ``E[d^4] / sigma^4 = 3``, a quadratic one 1.
    With ``even`` the denominator is the even part ``(f(sigma) + f(-sigma)) / 2``,
    which drops the odd orders that average out under the Gaussian anyway.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    widths = (sigma, 0.0) if axis == "h" else (0.0, sigma)
    mean = infidelity_sweep(seq, target, NoiseGrid.gaussian_widths([widths], samples, seed), model).infidelity[0]
    pts = [widths, (-widths[0], -widths[1])] if even else [widths]
    point = np.mean(infidelity_sweep(seq, target, NoiseGrid(pts), model).infidelity)
    return float(mean / point)
