"""First-order error calculus for exchange pulse sequences.

A noisy propagator is factored as ``U = U0 (I - i sum_k c_k sigma_k)`` with
``c_k = c[k, 0] dh + c[k, 1] deps``.  Rows are (x, y, z); columns are the
gradient error ``dh`` and the detuning error ``deps``.  The exchange error of
a segment is ``dJ = g(J) deps``, so the detuning column is the exchange column
scaled by ``g``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .su2 import PAULIS, PulseSequence, compose

__all__ = [
    "ErrorCoefficients",
    "IdentityLevel",
    "FiniteDifferenceError",
    "naive_error_coeffs",
    "level0_coeffs",
    "recursion_step",
    "identity_coeffs",
    "identity_sequence",
    "sequence_error_coeffs",
    "segment_bloch_matrix",
    "fd_error_coeffs",
]

AXES = ("x", "y", "z")
SOURCES = ("h", "eps")


class FiniteDifferenceError(ArithmeticError):
    """Richardson extrapolation disagreed with the raw difference quotient."""


@dataclass(frozen=True)
class ErrorCoefficients:
    """3x2 real matrix of first-order error terms (rows x, y, z; columns dh, deps)."""

    c: np.ndarray

    def __post_init__(self):
        c = np.array(self.c, dtype=float)
        if c.shape != (3, 2):
            raise ValueError(f"expected a 3x2 matrix, got shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("error coefficients must be finite")
        c.flags.writeable = False
        object.__setattr__(self, "c", c)

    @classmethod
    def zeros(cls) -> "ErrorCoefficients":
        return cls(np.zeros((3, 2)))

    def __getitem__(self, key):
        """``ec["x", "h"]`` or plain numpy indexing."""
        if isinstance(key, tuple) and len(key) == 2 and isinstance(key[0], str):
            return float(self.c[AXES.index(key[0]), SOURCES.index(key[1])])
        return self.c[key]

    def __add__(self, other: "ErrorCoefficients") -> "ErrorCoefficients":
        return ErrorCoefficients(self.c + other.c)

    def __sub__(self, other: "ErrorCoefficients") -> "ErrorCoefficients":
        return ErrorCoefficients(self.c - other.c)

    def __mul__(self, s: float) -> "ErrorCoefficients":
        return ErrorCoefficients(self.c * s)

    __rmul__ = __mul__

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.c)))

    def as_dict(self) -> dict:
        return {f"{a}_{s}": float(self.c[i, k]) for i, a in enumerate(AXES) for k, s in enumerate(SOURCES)}


@dataclass(frozen=True)
class IdentityLevel:
    """One level of the nested identity: ``U(j, m pi + theta) [inner] U(j, m pi - theta)``.

    For level 0 only ``j`` and ``m`` matter and the level is the bare
    ``U(j, 2 m pi)``.
    """

    j: float
    m: int = 1
    theta: float = 0.0

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise ValueError(f"half-turn multiplicity must be a positive integer, got {self.m}")
        object.__setattr__(self, "m", int(self.m))


def _naive_exchange_column(J, phi):
    """Raw (dh, dJ) coefficient arrays of U(J, phi); broadcasts over J and phi."""
    J = np.asarray(J, dtype=float)
    phi = np.asarray(phi, dtype=float)
    n2 = 1.0 + J * J
    n3 = n2 ** 1.5
    s, c = np.sin(phi), np.cos(phi)
    xh = (phi + J * J * s) / (2 * n3)
    xj = J * (phi - s) / (2 * n3)
    yh = J * (c - 1) / (2 * n2)
    yj = (1 - c) / (2 * n2)
    zh = J * (phi - s) / (2 * n3)
    zj = (J * J * phi + s) / (2 * n3)
    return np.stack([np.stack([xh, xj], -1), np.stack([yh, yj], -1), np.stack([zh, zj], -1)], -2)


def _to_eps(coeffs, J, model):
    out = np.array(coeffs, dtype=float, copy=True)
    out[..., 1] = out[..., 1] * np.asarray(model.g(J))[..., None]
    return out


def naive_error_coeffs(J: float, phi: float, model) -> ErrorCoefficients:
    """Errors of a single constant-exchange rotation ``U(J, phi)``."""
    return ErrorCoefficients(_to_eps(_naive_exchange_column(J, phi), J, model))


def _source(j, m):
    n3 = (1.0 + j * j) ** 1.5
    base = m * math.pi / n3
    return np.array([[base, base * j], [0.0, 0.0], [base * j, base * j * j]])


def level0_coeffs(j0: float, m0: int, model) -> ErrorCoefficients:
    """Errors of the bare full rotation ``U(j0, 2 m0 pi)``."""
    return ErrorCoefficients(_to_eps(_source(j0, m0), j0, model))


def recursion_step(prev: ErrorCoefficients, lvl: IdentityLevel, model) -> ErrorCoefficients:
    """Wrap ``prev`` in one more interrupted full rotation.

    Both noise columns are transformed by the same linear map; the new
    level's own full-rotation error is added on top.
    """
    # the closed-form relations are written for the mirrored offset, U(j, m pi - theta) applied last
    j, m, th = lvl.j, lvl.m, -lvl.theta
    sgn = -1.0 if m % 2 else 1.0
    n2 = 1.0 + j * j
    n = math.sqrt(n2)
    c, s = math.cos(th), math.sin(th)
    M = np.array(
        [
            [(1 + sgn * j * j * c) / n2, sgn * j * s / n, j * (1 - sgn * c) / n2],
            [-sgn * j * s / n, sgn * c, sgn * s / n],
            [j * (1 - sgn * c) / n2, -sgn * s / n, (j * j + sgn * c) / n2],
        ]
    )
    return ErrorCoefficients(M @ prev.c) + level0_coeffs(j, m, model)


def identity_coeffs(levels: Sequence[IdentityLevel], model) -> ErrorCoefficients:
    """First-order errors of the nested identity built from ``levels`` (level 0 first)."""
    if not levels:
        raise ValueError("need at least the level-0 rotation")
    ec = level0_coeffs(levels[0].j, levels[0].m, model)
    for lvl in levels[1:]:
        ec = recursion_step(ec, lvl, model)
    return ec


def identity_sequence(levels: Sequence[IdentityLevel], label: str = "identity") -> PulseSequence:
    """Time-ordered pulses of the nested identity (outermost ``m pi - theta`` first)."""
    pairs = [(lv.j, lv.m * math.pi - lv.theta) for lv in reversed(levels[1:])]
    pairs.append((levels[0].j, 2 * levels[0].m * math.pi))
    pairs += [(lv.j, lv.m * math.pi + lv.theta) for lv in levels[1:]]
    return PulseSequence.from_pairs(pairs, label)


def segment_bloch_matrix(j, angle):
    """Bloch-sphere rotation of ``U(j, angle)``: angle about ``(1, 0, j)/|.|``.

    Broadcasts over ``j`` and ``angle``; returns ``shape + (3, 3)``.
    """
    j = np.asarray(j, dtype=float)
    angle = np.asarray(angle, dtype=float)
    j, angle = np.broadcast_arrays(j, angle)
    n = np.sqrt(1.0 + j * j)
    nx, nz = 1.0 / n, j / n
    c, s = np.cos(angle), np.sin(angle)
    C = 1.0 - c
    R = np.empty(j.shape + (3, 3))
    R[..., 0, 0] = c + nx * nx * C
    R[..., 0, 1] = -nz * s
    R[..., 0, 2] = nx * nz * C
    R[..., 1, 0] = nz * s
    R[..., 1, 1] = c
    R[..., 1, 2] = -nx * s
    R[..., 2, 0] = nx * nz * C
    R[..., 2, 1] = nx * s
    R[..., 2, 2] = c + nz * nz * C
    return R


def sequence_error_coeffs_raw(js, angles, model) -> np.ndarray:
    """Analytic first-order errors of an arbitrary segment list.

    ``js`` and ``angles`` are sequences (time order) whose items may be
    arrays of a common batch shape.  Each segment's own error is pulled back
    through everything applied before it:
    ``c = sum_k R(U_{k-1} ... U_1)^T Delta_k``.
    Returns ``batch + (3, 2)``.
    """
    batch = np.broadcast(*[np.asarray(x) for x in list(js) + list(angles)]).shape
    total = np.zeros(batch + (3, 2))
    frame = np.broadcast_to(np.eye(3), batch + (3, 3)).copy()
    for j, a in zip(js, angles):
        j = np.broadcast_to(np.asarray(j, dtype=float), batch)
        a = np.broadcast_to(np.asarray(a, dtype=float), batch)
        delta = _to_eps(_naive_exchange_column(j, a), j, model)
        total += np.einsum("...ji,...jk->...ik", frame, delta)
        frame = segment_bloch_matrix(j, a) @ frame
    return total


def sequence_error_coeffs(seq: PulseSequence, model) -> ErrorCoefficients:
    if len(seq) == 0:
        return ErrorCoefficients.zeros()
    return ErrorCoefficients(sequence_error_coeffs_raw(seq.js, seq.angles, model))


def pauli_components(M: np.ndarray) -> np.ndarray:
    """Real coefficients ``c`` with ``M ~ -i sum c_k sigma_k`` (anti-Hermitian part)."""
    return np.array([np.real(1j * np.trace(P @ M) / 2) for P in PAULIS])


def fd_error_coeffs(seq: PulseSequence, model, step: float = 1e-4, disagreement_tol: float = 1e-4) -> ErrorCoefficients:
    """Finite-difference estimate of the first-order errors of ``seq``.

    Central differences of ``E(d) = U0^dag U(d)`` at steps ``s`` and ``s/2``
    are Richardson-combined.  Independent of the analytic calculus: it only
    uses the exact noisy propagator.
    """
    if not 1e-7 <= step <= 1e-3:
        raise ValueError("finite-difference step must lie in [1e-7, 1e-3]")
    if len(seq) == 0:
        return ErrorCoefficients.zeros()
    U0d = compose(seq).conj().T
    out = np.zeros((3, 2))
    for col in range(2):

        def central(s):
            d = np.array([s, -s])
            U = compose(seq, d, 0.0, model) if col == 0 else compose(seq, 0.0, d, model)
            return (U0d @ U[0] - U0d @ U[1]) / (2 * s)

        coarse, fine = central(step), central(step / 2)
        rich = (4 * fine - coarse) / 3
        if np.max(np.abs(rich - fine)) > disagreement_tol:
            raise FiniteDifferenceError(
                f"difference quotients disagree by {np.max(np.abs(rich - fine)):.2e}; reduce the step"
            )
        out[:, col] = pauli_components(rich)
    return ErrorCoefficients(out)
