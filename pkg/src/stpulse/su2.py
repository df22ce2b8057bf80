"""Exact SU(2) algebra for piecewise-constant singlet-triplet pulses.

Energies are measured in units of the field gradient ``h`` (``h = 1``), so a
segment with exchange ``j`` held for time ``t`` rotates the qubit by
``angle = t * sqrt(1 + j**2)`` about the axis ``x + j z``.

Sequences are stored in *time order*: ``segments[0]`` is applied first.  The
matrix product of a sequence therefore reads right-to-left against the list,
``U = U[n-1] @ ... @ U[1] @ U[0]``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "SIGMA_I",
    "SIGMA_X",
    "SIGMA_Y",
    "SIGMA_Z",
    "PAULIS",
    "PulseSegment",
    "PulseSequence",
    "SequenceFormatError",
    "rotation",
    "segment_propagator",
    "compose",
    "distance_up_to_phase",
    "fidelity_single",
    "infidelity_single",
    "bloch_rotation",
]

SIGMA_I = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (SIGMA_X, SIGMA_Y, SIGMA_Z)


class SequenceFormatError(ValueError):
    """Raised when a serialized pulse sequence cannot be parsed."""


@dataclass(frozen=True)
class PulseSegment:
    """Constant exchange ``j`` held long enough to rotate by ``angle``."""

    j: float
    angle: float

    def __post_init__(self):
        if not (math.isfinite(self.j) and math.isfinite(self.angle)):
            raise ValueError(f"non-finite segment ({self.j}, {self.angle})")
        if self.angle < 0:
            raise ValueError(f"segment angle must be >= 0, got {self.angle}")

    @property
    def duration(self) -> float:
        return self.angle / math.sqrt(1.0 + self.j * self.j)

    @property
    def area(self) -> float:
        """Integrated exchange over the segment."""
        return self.j * self.duration

    @property
    def physical(self) -> bool:
        return self.j >= 0


@dataclass(frozen=True)
class PulseSequence:
    segments: tuple[PulseSegment, ...] = ()
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[float, float]], label: str = "") -> "PulseSequence":
        """Build from ``(j, angle)`` pairs listed in time order."""
        return cls(tuple(PulseSegment(float(j), float(a)) for j, a in pairs), label)

    @classmethod
    def from_operator_order(cls, pairs: Sequence[tuple[float, float]], label: str = "") -> "PulseSequence":
        """Build from an operator product written left-to-right (last applied first)."""
        return cls.from_pairs(reversed(list(pairs)), label)

    def __len__(self) -> int:
        return len(self.segments)

    def __iter__(self):
        return iter(self.segments)

    def __add__(self, other: "PulseSequence") -> "PulseSequence":
        """``a + b`` plays ``a`` first, then ``b``."""
        label = "+".join(s for s in (self.label, other.label) if s)
        return PulseSequence(self.segments + other.segments, label)

    def with_label(self, label: str) -> "PulseSequence":
        return PulseSequence(self.segments, label)

    @property
    def js(self) -> np.ndarray:
        return np.array([s.j for s in self.segments], dtype=float)

    @property
    def angles(self) -> np.ndarray:
        return np.array([s.angle for s in self.segments], dtype=float)

    @property
    def total_angle(self) -> float:
        return float(sum(s.angle for s in self.segments))

    @property
    def total_duration(self) -> float:
        return float(sum(s.duration for s in self.segments))

    @property
    def area(self) -> float:
        return float(sum(s.area for s in self.segments))

    def merged(self) -> "PulseSequence":
        """Fuse neighbouring segments with equal exchange and drop empty ones."""
        out: list[PulseSegment] = []
        for s in self.segments:
            if s.angle == 0:
                continue
            if out and out[-1].j == s.j:
                out[-1] = PulseSegment(s.j, out[-1].angle + s.angle)
            else:
                out.append(s)
        return PulseSequence(tuple(out), self.label)

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "segments": [{"j": s.j, "angle": s.angle} for s in self.segments],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PulseSequence":
        # durations are always recomputed, never read back
        try:
            segs = tuple(PulseSegment(float(s["j"]), float(s["angle"])) for s in data["segments"])
            label = str(data.get("label", ""))
        except (KeyError, TypeError, ValueError) as exc:
            raise SequenceFormatError(f"malformed pulse sequence: {exc}") from exc
        return cls(segs, label)

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_json(cls, text: str) -> "PulseSequence":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SequenceFormatError(f"invalid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise SequenceFormatError("pulse sequence JSON must be an object")
        return cls.from_dict(data)


def rotation(axis, angle: float) -> np.ndarray:
    """Ideal ``R(n, angle) = exp(-i angle n.sigma / 2)``; ``axis`` need not be normalized."""
    n = np.asarray(axis, dtype=float)
    n = n / np.linalg.norm(n)
    c, s = math.cos(angle / 2), math.sin(angle / 2)
    return c * SIGMA_I - 1j * s * (n[0] * SIGMA_X + n[1] * SIGMA_Y + n[2] * SIGMA_Z)


def _su2_exp(ax, az, angle):
    """exp(-i angle (ax sx + az sz)/2) for unit (ax, az); broadcasts over arrays."""
    c = np.cos(angle / 2)
    s = np.sin(angle / 2)
    out = np.empty(np.broadcast(c, ax, az).shape + (2, 2), dtype=complex)
    out[..., 0, 0] = c - 1j * s * az
    out[..., 0, 1] = -1j * s * ax
    out[..., 1, 0] = -1j * s * ax
    out[..., 1, 1] = c + 1j * s * az
    return out


def segment_propagator(seg: PulseSegment, dh=0.0, dj=0.0) -> np.ndarray:
    """Propagator of one segment with static gradient error ``dh`` and exchange error ``dj``.

    The hold time is fixed by the ideal segment; noise only changes the
    Hamiltonian.  ``dh`` and ``dj`` may be arrays, in which case the result
    has shape ``broadcast(dh, dj).shape + (2, 2)``.
    """
    t = seg.duration
    bx = 1.0 + np.asarray(dh, dtype=float)
    bz = seg.j + np.asarray(dj, dtype=float)
    norm = np.hypot(bx, bz)
    safe = np.where(norm == 0, 1.0, norm)
    return _su2_exp(bx / safe, bz / safe, norm * t)


def compose(seq: PulseSequence, dh=0.0, deps=0.0, model=None) -> np.ndarray:
    """Noisy propagator of a whole sequence.

    The exchange error of each segment is ``model.g(j) * deps``; with no
    model, ``deps`` is ignored.  Array-valued ``dh``/``deps`` are broadcast and
    the product is evaluated for every noise realization at once.
    """
    dh = np.asarray(dh, dtype=float)
    deps = np.asarray(deps, dtype=float)
    shape = np.broadcast(dh, deps).shape
    U = np.broadcast_to(SIGMA_I, shape + (2, 2)).copy()
    for seg in seq.segments:
        dj = model.g(seg.j) * deps if model is not None else 0.0
        U = segment_propagator(seg, dh, dj) @ U
    return U


def distance_up_to_phase(U: np.ndarray, V: np.ndarray) -> float:
    """Phase-insensitive distance ``sqrt(1 - |Tr(U^dag V)| / d)`` for unitaries.

    Evaluated as ``||e^{-i chi} W - I||_F / sqrt(2 d)`` with ``W = U^dag V`` and
    ``chi = arg Tr W``, which equals the trace form for unitary ``W`` but does
    not lose half the significant digits to cancellation near zero.
    """
    W = np.asarray(U).conj().T @ np.asarray(V)
    d = W.shape[-1]
    tr = np.trace(W)
    phase = tr / abs(tr) if abs(tr) > 0 else 1.0
    diff = W / phase - np.eye(d)
    return min(1.0, float(np.linalg.norm(diff) / math.sqrt(2 * d)))


def fidelity_single(U_actual: np.ndarray, U_ideal: np.ndarray):
    """Average gate fidelity of a single-qubit unitary against its target.

    Accepts stacked ``U_actual`` of shape ``(..., 2, 2)``.
    """
    Ua = np.asarray(U_actual)
    Ui = np.asarray(U_ideal)
    total = 0.0
    for P in PAULIS:
        ideal = Ui @ P @ np.swapaxes(Ui.conj(), -1, -2)
        actual = Ua @ P @ np.swapaxes(Ua.conj(), -1, -2)
        total = total + np.einsum("...ij,...ji->...", ideal, actual)
    F = 0.5 + np.real(total) / 12.0
    return float(F) if np.ndim(F) == 0 else F


def infidelity_single(U_actual: np.ndarray, U_ideal: np.ndarray):
    """``1 - fidelity_single`` without the cancellation of subtracting from one.

    With ``W = U_ideal^dag U_actual``, ``1 - F = sum_k ||s_k - W s_k W^dag||_F^2 / 24``,
    which keeps full relative precision down to ~1e-30.
    """
    Ua = np.asarray(U_actual)
    Ui = np.asarray(U_ideal)
    W = np.swapaxes(Ui.conj(), -1, -2) @ Ua
    Wd = np.swapaxes(W.conj(), -1, -2)
    total = 0.0
    for P in PAULIS:
        D = P - W @ P @ Wd
        total = total + np.sum(np.abs(D) ** 2, axis=(-2, -1))
    out = total / 24.0
    return float(out) if np.ndim(out) == 0 else out


def bloch_rotation(U: np.ndarray) -> np.ndarray:
    """SO(3) matrix R with ``U sigma_j U^dag = sum_i R[i, j] sigma_i``."""
    R = np.empty(np.shape(U)[:-2] + (3, 3))
    Ud = np.swapaxes(np.conj(U), -1, -2)
    for j, Pj in enumerate(PAULIS):
        conj = U @ Pj @ Ud
        for i, Pi in enumerate(PAULIS):
            R[..., i, j] = 0.5 * np.real(np.einsum("ij,...ji->...", Pi, conj))
    return R
