"""Two singlet-triplet qubits on a chain of four dots.

Qubit A is dots (1, 2), qubit B is dots (3, 4), and the two qubits talk
through the exchange link between dots 2 and 3.  Everything is simulated in
the six-dimensional total-S_z = 0 space of the four spins.

Basis order (fixed, also used by the JSON dump)::

    0  |T0 T0>    1  |T0 S>    2  |S T0>    3  |S S>       (qubit A first)
    4  |up up dn dn>            5  |dn dn up up>           (leakage)

Within each pair ``|0> = T0`` and ``|1> = S``, so a pair's exchange acts
as ``(J/2) sigma_z`` and its field gradient ``b1 - b2`` as ``(h/2) sigma_x``,
exactly the single-qubit model.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .design import (
    PI,
    CorrectedSequence,
    SolverConfig,
    UnreachableTarget,
    euler_xzx,
    identity_range,
    solve_arbitrary,
    solve_identity,
    solve_z_rotation,
)
from .noise import ExchangeModel, NoiseGrid, SweepTable
from .su2 import PulseSequence, SIGMA_I, SIGMA_X, SIGMA_Y, SIGMA_Z, distance_up_to_phase, rotation

__all__ = [
    "BASIS_LABELS",
    "ScheduleOverlap",
    "DomainError",
    "ChainConfig",
    "FourDotOperator",
    "Layer",
    "Gate",
    "GateBuilder",
    "chain_propagator",
    "c23_pulse",
    "ising_gate",
    "tilted_ising",
    "bb1_ising",
    "cnot",
    "schedule_parallel",
    "fidelity_two_qubit",
    "fidelity_two_qubit_literal",
    "first_order_generator",
    "gate_sweep",
    "bb1_angles",
    "ideal_ising",
    "CNOT",
]

LINKS = ("12", "23", "34")
BASIS_LABELS = ("T0T0", "T0S", "ST0", "SS", "uudd", "dduu")
CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
XX = np.kron(SIGMA_X, SIGMA_X)


class ScheduleOverlap(ValueError):
    """Link 23 scheduled together with link 12 or link 34."""


class DomainError(ValueError):
    """Angle outside the domain of a closed-form expression."""


# ---------------------------------------------------------------- basis


@lru_cache(maxsize=None)
def _operators():
    """Projected single-spin z operators and link exchange operators (6x6, real)."""
    up, dn = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    sz = np.diag([1.0, -1.0])
    sx = np.array([[0.0, 1.0], [1.0, 0.0]])
    sy = np.array([[0.0, -1j], [1j, 0.0]])

    def kron(*vs):
        out = vs[0]
        for v in vs[1:]:
            out = np.kron(out, v)
        return out

    def site(o, i):
        return kron(*[o if k == i else np.eye(2) for k in range(4)])

    t0 = (kron(up, dn) + kron(dn, up)) / math.sqrt(2)
    s = (kron(up, dn) - kron(dn, up)) / math.sqrt(2)
    states = [kron(a, b) for a in (t0, s) for b in (t0, s)] + [kron(up, up, dn, dn), kron(dn, dn, up, up)]
    W = np.array(states).T  # 16 x 6
    SZ = [np.real(W.T @ site(sz, i) @ W) for i in range(4)]
    EX = {}
    for link, (i, j) in zip(LINKS, ((0, 1), (1, 2), (2, 3))):
        ss = 0.25 * sum(site(o, i) @ site(o, j) for o in (sx, sy, sz))
        EX[link] = np.real(W.T @ (ss - 0.25 * np.eye(16)) @ W)
    return SZ, EX


# ---------------------------------------------------------------- config


@dataclass(frozen=True)
class ChainConfig:
    """Local fields and exchange models of the four-dot chain.

    ``b`` are the dot fields (units of the design gradient), so the
    gradients are ``hA = b1 - b2``, ``h_link = b2 - b3``, ``hB = b3 - b4``.
    The default is the linear gradient with all three equal to 1.
    """

    b: tuple[float, float, float, float] = (0.0, -1.0, -2.0, -3.0)
    models: tuple[ExchangeModel, ExchangeModel, ExchangeModel] = (ExchangeModel(), ExchangeModel(), ExchangeModel())

    @property
    def gradients(self) -> tuple[float, float, float]:
        b = self.b
        return (b[0] - b[1], b[1] - b[2], b[2] - b[3])

    @property
    def linear(self) -> bool:
        g = self.gradients
        return abs(g[0] - g[1]) < 1e-12 and abs(g[1] - g[2]) < 1e-12

    def model(self, link: str) -> ExchangeModel:
        return self.models[LINKS.index(link)]

    def fields(self, dh=0.0) -> np.ndarray:
        """Dot fields with gradient errors ``dh`` (scalar: uniform, or one per gradient).

        A uniform relative error scales every gradient by ``1 + dh``.
        Returns ``batch + (4,)``.
        """
        dh = np.asarray(dh, dtype=float)
        grads = np.array(self.gradients)
        if dh.ndim and dh.shape[-1] == 3:
            g = grads + dh
        else:
            g = grads * (1.0 + dh[..., None])
        b1 = np.full(g.shape[:-1], self.b[0])
        return np.stack([b1, b1 - g[..., 0], b1 - g[..., 0] - g[..., 1], b1 - g[..., 0] - g[..., 1] - g[..., 2]], -1)


@dataclass(frozen=True)
class FourDotOperator:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.shape[-2:] != (6, 6):
            raise ValueError(f"expected 6x6, got {m.shape}")
        object.__setattr__(self, "matrix", m)

    @property
    def computational(self) -> np.ndarray:
        return self.matrix[..., :4, :4]

    @property
    def leakage(self) -> np.ndarray:
        return self.matrix[..., 4:, 4:]

    def leakage_population(self) -> float:
        """Mean population leaving the computational block (uniform over its basis)."""
        return float(np.sum(np.abs(self.matrix[..., 4:, :4]) ** 2) / 4)

    def unitarity_error(self) -> float:
        m = self.matrix
        return float(np.max(np.abs(m.conj().T @ m - np.eye(6))))

    def to_dict(self) -> dict:
        return {
            "basis": list(BASIS_LABELS),
            "matrix": [[[z.real, z.imag] for z in row] for row in self.matrix],
        }


# ---------------------------------------------------------------- schedules


@dataclass(frozen=True)
class Layer:
    """Pulses that run side by side, all starting at the same time.

    ``ops`` maps a link name to its time-ordered pulse sequence.  Links not
    listed (and listed links after their sequence ends) sit at the minimum
    exchange for the rest of the layer.
    """

    ops: dict
    label: str = ""
    provenance: tuple[str, ...] = ()

    def __post_init__(self):
        bad = set(self.ops) - set(LINKS)
        if bad:
            raise ValueError(f"unknown links {sorted(bad)}")
        if "23" in self.ops and ({"12", "34"} & set(self.ops)):
            raise ScheduleOverlap(f"layer {self.label!r}: link 23 cannot run alongside links 12/34")

    @property
    def duration(self) -> float:
        return max((s.total_duration for s in self.ops.values()), default=0.0)

    def slices(self, cfg: ChainConfig) -> list[tuple[float, dict]]:
        """Merged breakpoints: list of (duration, {link: j})."""
        cuts = {0.0, self.duration}
        for seq in self.ops.values():
            cuts.update(np.cumsum([s.duration for s in seq]).tolist())
        cuts = sorted(cuts)
        out = []
        for t0, t1 in zip(cuts[:-1], cuts[1:]):
            if t1 - t0 <= 1e-15:
                continue
            mid = 0.5 * (t0 + t1)
            js = {}
            for link in LINKS:
                seq = self.ops.get(link)
                js[link] = cfg.model(link).Jmin
                if seq is None:
                    continue
                ends = np.cumsum([s.duration for s in seq])
                k = int(np.searchsorted(ends, mid))
                if k < len(seq):
                    js[link] = seq.segments[k].j
            out.append((t1 - t0, js))
        return out


def _hamiltonians(fields: np.ndarray, js: dict, deps, cfg: ChainConfig) -> np.ndarray:
    SZ, EX = _operators()
    deps = np.asarray(deps, dtype=float)
    H = 0.5 * np.einsum("...i,ijk->...jk", fields, np.array(SZ))
    for n, link in enumerate(LINKS):
        j = js[link]
        e = deps[..., n] if (deps.ndim and deps.shape[-1] == 3) else deps
        Jn = j + cfg.model(link).g(j) * e
        H = H + np.asarray(Jn)[..., None, None] * EX[link]
    return H


def chain_propagator(layers: Sequence[Layer], cfg: ChainConfig | None = None, dh=0.0, deps=0.0) -> FourDotOperator:
    """Time-ordered product of exact 6x6 exponentials over all layers.

    ``dh``: relative gradient error (scalar) or absolute error per gradient
    (``(..., 3)``).  ``deps``: detuning error shared by all links (scalar) or
    one per link (``(..., 3)``).  Leading batch dimensions broadcast.
    """
    cfg = cfg or ChainConfig()
    dh = np.asarray(dh, dtype=float)
    deps = np.asarray(deps, dtype=float)
    fields = cfg.fields(dh)
    batch = np.broadcast_shapes(fields.shape[:-1], deps.shape[:-1] if (deps.ndim and deps.shape[-1] == 3) else deps.shape)
    fields = np.broadcast_to(fields, batch + (4,))
    U = np.broadcast_to(np.eye(6, dtype=complex), batch + (6, 6)).copy()
    for layer in layers:
        for dt, js in layer.slices(cfg):
            H = _hamiltonians(fields, js, deps, cfg)
            w, V = np.linalg.eigh(H)
            step = (V * np.exp(-1j * w * dt)[..., None, :]) @ np.swapaxes(V, -1, -2)
            U = step @ U
    return FourDotOperator(U)


# ---------------------------------------------------------------- fidelity


def _embed(V) -> np.ndarray:
    V = np.asarray(V.matrix if isinstance(V, FourDotOperator) else V, dtype=complex)
    if V.shape[-2:] == (6, 6):
        return V[..., :4, :4]
    return V


def fidelity_two_qubit(U_f, V) -> float:
    """Leakage-aware average gate fidelity of ``U_f`` against ``V``.

    Uses ``sum_P Tr(X P X^dag P) = 4 |Tr X|^2`` over the 16 two-qubit Paulis
    to collapse the double sum, so with ``M`` the computational block of
    ``U_f``: ``F = (Tr(M M^dag) + |Tr(V^dag M)|^2) / 20``.
    """
    M = _embed(U_f)
    V4 = _embed(V)
    a = np.real(np.einsum("...ij,...ij->...", M, M.conj()))
    b = np.abs(np.einsum("...ij,...ij->...", V4.conj(), M)) ** 2
    F = (a + b) / 20.0
    return float(F) if np.ndim(F) == 0 else F


def fidelity_two_qubit_literal(U_f, V) -> float:
    """Direct 16-term evaluation of the same fidelity, kept as an oracle."""
    U = np.asarray(U_f.matrix if isinstance(U_f, FourDotOperator) else U_f, dtype=complex)
    V = np.asarray(V, dtype=complex)
    if V.shape == (4, 4):
        V6 = np.eye(6, dtype=complex)
        V6[:4, :4] = V
        V = V6
    P = np.zeros((6, 6), dtype=complex)
    P[:4, :4] = np.eye(4)
    first = np.trace(P @ U @ P @ U.conj().T)
    total = 0.0
    paulis = (SIGMA_I, SIGMA_X, SIGMA_Y, SIGMA_Z)
    for s1, s2 in itertools.product(paulis, repeat=2):
        S = np.zeros((6, 6), dtype=complex)
        S[:4, :4] = np.kron(s1, s2)
        total += np.trace(V @ S @ V.conj().T @ U @ S @ U.conj().T)
    return float(np.real((4 / 5 * first + total / 5) / 16))


# ---------------------------------------------------------------- gates


def ideal_ising(alpha: float) -> np.ndarray:
    """``exp(i (alpha/2) sigma_x^A sigma_x^B)``."""
    return math.cos(alpha / 2) * np.eye(4) + 1j * math.sin(alpha / 2) * XX


def bb1_angles(alpha: float) -> tuple[float, float]:
    """``theta1 = 9 pi`` and ``phi1 = arccos(-alpha / (4 theta1))``."""
    theta1 = 9 * PI
    r = -alpha / (4 * theta1)
    if abs(r) > 1:
        raise DomainError(f"|alpha / (4 theta1)| = {abs(r):.4g} > 1, no BB1 phase")
    return theta1, math.acos(r)


@dataclass
class Gate:
    layers: list[Layer]
    ideal: np.ndarray
    label: str
    blocks: list[dict] = field(default_factory=list)

    def propagator(self, cfg: ChainConfig | None = None, dh=0.0, deps=0.0) -> FourDotOperator:
        return chain_propagator(self.layers, cfg, dh, deps)

    @property
    def duration(self) -> float:
        return float(sum(l.duration for l in self.layers))

    def budget(self) -> dict:
        """Composite-pulse count and total rotation.

        A block is one slot of the circuit: a link pulse, or a single-qubit
        slot in which qubit A and/or B run composite rotations (paddings
        included).  ``rotation_critical`` adds, per block, the larger of
        the two qubits' sweeps; ``rotation_all`` adds every composite on
        every qubit and link.
        """
        crit = sum(b["critical_angle"] for b in self.blocks)
        allr = sum(b["all_angle"] for b in self.blocks)
        return {
            "composite_pulses": len(self.blocks),
            "link_pulses": sum(1 for b in self.blocks if b["kind"] == "link"),
            "single_qubit_blocks": sum(1 for b in self.blocks if b["kind"] != "link"),
            "rotation_critical_pi": crit / PI,
            "rotation_all_pi": allr / PI,
            "duration": self.duration,
        }

    def to_dict(self, cfg: ChainConfig | None = None) -> dict:
        U = self.propagator(cfg)
        return {
            "label": self.label,
            "gate": U.to_dict(),
            "ideal_computational": [[[z.real, z.imag] for z in row] for row in self.ideal],
            "budget": self.budget(),
            "blocks": [{k: v for k, v in b.items()} for b in self.blocks],
        }


def schedule_parallel(seq_a: PulseSequence | CorrectedSequence, seq_b: PulseSequence | CorrectedSequence,
                      model: ExchangeModel | None = None, cfg: SolverConfig | None = None,
                      tol: float = 1e-9) -> tuple[PulseSequence, PulseSequence]:
    """Pad two single-qubit schedules with corrected identities to a common duration.

    The shorter side gets an identity of the missing duration.  If that gap
    is below the shortest corrected identity, both sides are padded: the
    longer one with the shortest identity and the shorter one with that plus
    the gap.
    """
    a = seq_a.sequence if isinstance(seq_a, CorrectedSequence) else seq_a
    b = seq_b.sequence if isinstance(seq_b, CorrectedSequence) else seq_b
    ta, tb = a.total_duration, b.total_duration
    gap = abs(ta - tb)
    if gap <= tol:
        return a, b
    model = model or ExchangeModel()
    tmin = identity_range(model, cfg).span("duration")[0]
    longer_is_a = ta > tb
    if gap >= tmin:
        pad = solve_identity(duration=gap, model=model, cfg=cfg).sequence
        return (a, b + pad) if longer_is_a else (a + pad, b)
    pad_long = solve_identity(duration=tmin * (1 + 1e-9), model=model, cfg=cfg).sequence
    pad_short = solve_identity(duration=pad_long.total_duration + gap, model=model, cfg=cfg).sequence
    if longer_is_a:
        return a + pad_long, b + pad_short
    return a + pad_short, b + pad_long


def _naive_identity(duration: float) -> PulseSequence:
    """Uncorrected identity: ``U(j, 2 pi n)`` stretched to ``duration``."""
    if duration <= 1e-12:
        return PulseSequence()
    n = max(1, math.ceil(duration / (2 * PI) - 1e-12))
    j = math.sqrt(max(0.0, (2 * PI * n / duration) ** 2 - 1.0))
    return PulseSequence.from_pairs([(j, 2 * PI * n)], "naive identity")


def _naive_link(area: float) -> PulseSequence:
    """Uncorrected link pulse: one ``U(j, 2 pi n)`` with the requested integrated exchange."""
    n = int(area // (2 * PI)) + 1
    j = area / math.sqrt((2 * PI * n) ** 2 - area ** 2)
    return PulseSequence.from_pairs([(j, 2 * PI * n)], "naive link")


def _as_rotation(U: np.ndarray):
    """Classify a 2x2 unitary: ('id',), ('z', phi) or ('xzx', a, b, c)."""
    U = U / np.sqrt(np.linalg.det(U))
    if distance_up_to_phase(U, np.eye(2)) < 1e-12:
        return ("id",)
    if abs(U[0, 1]) < 1e-12:
        phi = (2 * np.angle(U[1, 1])) % (2 * PI)
        return ("z", float(phi))
    return ("xzx",) + euler_xzx(U)


class GateBuilder:
    """Assembles two-qubit gates from corrected (or naive) composite pulses.

    Single-qubit composites are solved once per distinct target and cached.
    """

    def __init__(self, model: ExchangeModel | None = None, solver: SolverConfig | None = None,
                 corrected: bool = True, chain: ChainConfig | None = None):
        self.model = model or (chain.models[0] if chain else ExchangeModel())
        self.solver = solver or SolverConfig()
        self.corrected = corrected
        self.chain = chain or ChainConfig(models=(self.model,) * 3)
        if not np.allclose(self.chain.gradients, 1.0, atol=1e-12):
            # composites are solved in units of a unit gradient
            raise ValueError(f"gate assembly needs hA = h_link = hB = 1, got {self.chain.gradients}")
        self._cache: dict = {}

    # single-qubit pieces -------------------------------------------------

    def single(self, U: np.ndarray) -> PulseSequence | None:
        kind = _as_rotation(np.asarray(U, dtype=complex))
        key = (kind[0],) + tuple(round(v, 12) for v in kind[1:])
        if key in self._cache:
            return self._cache[key]
        if kind[0] == "id":
            seq = None
        elif self.corrected:
            if kind[0] == "z":
                seq = solve_z_rotation(kind[1], self.model, self.solver).sequence
            else:
                seq = solve_arbitrary(*kind[1:], self.model, self.solver).sequence
        else:
            if kind[0] == "z":
                seq = PulseSequence.from_pairs([(1.0, PI), (0.0, kind[1]), (1.0, PI)], "naive z")
            else:
                a, b, c = kind[1:]
                seq = PulseSequence.from_pairs([(0.0, c), (1.0, PI), (0.0, b), (1.0, PI), (0.0, a)], "naive xzx")
        self._cache[key] = seq
        return seq

    def identity(self, duration: float) -> PulseSequence:
        if self.corrected:
            return solve_identity(duration=duration, model=self.model, cfg=self.solver).sequence
        return _naive_identity(duration)

    def link(self, area: float) -> PulseSequence:
        key = ("link", round(area, 12))
        if key not in self._cache:
            if self.corrected:
                self._cache[key] = solve_identity(area=area, model=self.model, cfg=self.solver).sequence
            else:
                self._cache[key] = _naive_link(area)
        return self._cache[key]

    def pair(self, UA, UB, label: str) -> tuple[Layer, dict]:
        """One single-qubit block: ``UA`` on qubit A and ``UB`` on B in parallel, padded to equal time."""
        sa = self.single(UA)
        sb = self.single(UB)
        sa = sa or PulseSequence()
        sb = sb or PulseSequence()
        if self.corrected:
            sa, sb = schedule_parallel(sa, sb, self.model, self.solver)
        else:
            ta, tb = sa.total_duration, sb.total_duration
            if ta > tb:
                sb = sb + _naive_identity(ta - tb)
            elif tb > ta:
                sa = sa + _naive_identity(tb - ta)
        ops = {k: v for k, v in (("12", sa), ("34", sb)) if len(v)}
        block = {
            "kind": "single",
            "label": label,
            "critical_angle": max(sa.total_angle, sb.total_angle),
            "all_angle": sa.total_angle + sb.total_angle,
            "A_segments": len(sa),
            "B_segments": len(sb),
        }
        return Layer(ops, label), block

    def link_block(self, area: float, label: str) -> tuple[Layer, dict]:
        seq = self.link(area)
        block = {"kind": "link", "label": label, "area": seq.area, "critical_angle": seq.total_angle,
                 "all_angle": seq.total_angle, "segments": len(seq)}
        return Layer({"23": seq}, label), block

    # two-qubit gates -----------------------------------------------------

    def _assemble(self, ops: list, ideal: np.ndarray, label: str) -> Gate:
        """``ops`` in time order: ('link', area, label) or ('single', UA, UB, label)."""
        layers, blocks = [], []
        for op in ops:
            if op[0] == "link":
                layer, block = self.link_block(op[1], op[2])
            else:
                layer, block = self.pair(op[1], op[2], op[3])
            layers.append(layer)
            blocks.append(block)
        return Gate(layers, ideal, label, blocks)

    @staticmethod
    def _ising_ops(alpha: float, tag: str) -> list:
        P = rotation((0, 0, 1), PI)
        return [
            ("link", alpha, f"C23 {tag}"),
            ("single", P, P, f"Rz(pi) A,B {tag}"),
            ("link", alpha, f"C23 {tag}"),
            ("single", P, P, f"Rz(pi) A,B {tag}"),
        ]

    def ising(self, alpha: float) -> Gate:
        """``C P C P`` in time order with link area ``alpha`` per pulse."""
        return self._assemble(self._ising_ops(alpha, f"a={alpha:.6g}"), ideal_ising(alpha), f"Uxx({alpha:.6g})")

    def tilted_ising(self, alpha: float, phi: float) -> Gate:
        """``Rz_A(-phi) Uxx(alpha) Rz_A(phi)``; qubit B idles with corrected identities."""
        Rz = lambda a: rotation((0, 0, 1), a)  # noqa: E731
        ops = [("single", Rz(phi), SIGMA_I, f"Rz_A({phi:.6g})")] + self._ising_ops(alpha, "tilted")
        ops.append(("single", Rz(-phi), SIGMA_I, f"Rz_A({-phi:.6g})"))
        ops = [o for o in ops if not (o[0] == "single" and _as_rotation(o[1])[0] == "id" and _as_rotation(o[2])[0] == "id")]
        RzA = lambda a: np.kron(Rz(a), SIGMA_I)  # noqa: E731
        ideal = RzA(-phi) @ ideal_ising(alpha) @ RzA(phi)
        return self._assemble(ops, ideal, f"Uxx'({alpha:.6g}, {phi:.6g})")

    def _bb1_ops(self, alpha: float, correction_first: bool) -> list:
        theta1, phi1 = bb1_angles(alpha)
        main = self._ising_ops(alpha, "main")
        # tilted blocks with neighbouring Rz_A contracted
        tilts = [phi1, 2 * phi1, -2 * phi1, -phi1]
        bodies = [(theta1, "theta1"), (2 * theta1, "2theta1"), (theta1, "theta1")]
        corr = []
        for k, (area, tag) in enumerate(bodies):
            corr.append(("single", rotation((0, 0, 1), tilts[k]), SIGMA_I, f"Rz_A tilt {k}"))
            corr += self._ising_ops(area, tag)
        corr.append(("single", rotation((0, 0, 1), tilts[3]), SIGMA_I, "Rz_A tilt 3"))
        return corr + main if correction_first else main + corr

    def bb1_ising(self, alpha: float, correction_first: bool = False) -> Gate:
        """BB1-protected Ising gate.

        By default the plain ``Uxx(alpha)`` is played first and the three
        tilted gates after it; ``correction_first`` plays them before.
        Both orders cancel the link-amplitude error to first order because
        the correction block's first-order error is along ``sigma_x sigma_x``.
        """
        return self._assemble(self._bb1_ops(alpha, correction_first), ideal_ising(alpha), f"BB1 Uxx({alpha:.6g})")

    def cnot(self, alpha: float | None = None) -> Gate:
        """CNOT (A controls B) from an Ising ``pi/2``-class gate and local rotations.

        ``CNOT ~ [Rz(pi/2) Ry(3pi/2) (x) Rx(pi/2)] exp(i pi/4 XX) [Ry(pi/2) (x) 1]``.
        Corrected: BB1-protected Ising with ``alpha = 8 pi + pi/2``, correction
        block first so the local conversions fold into the first tilt and the
        last ``Rz(pi)`` block.  Uncorrected: the bare Ising gate with
        ``alpha = pi/2`` and naive pulses.
        """
        Ry = lambda a: rotation((0, 1, 0), a)  # noqa: E731
        Rz = lambda a: rotation((0, 0, 1), a)  # noqa: E731
        Rx = lambda a: rotation((1, 0, 0), a)  # noqa: E731
        pre_a = Ry(PI / 2)
        post_a, post_b = Rz(PI / 2) @ Ry(1.5 * PI), Rx(PI / 2)
        if alpha is None:
            alpha = 8 * PI + PI / 2 if self.corrected else PI / 2
        if self.corrected:
            ops = self._bb1_ops(alpha, correction_first=True)
        else:
            ops = self._ising_ops(alpha, "bare")
        ops = [("single", pre_a, SIGMA_I, "pre")] + ops + [("single", post_a, post_b, "post")]
        ops = _contract(ops)
        return self._assemble(ops, CNOT, "CNOT" if self.corrected else "CNOT (uncorrected)")


def _contract(ops: list) -> list:
    """Fold the CNOT conversion blocks into their single-qubit neighbours."""
    out = list(ops)
    if len(out) > 1 and out[0][3] == "pre" and out[1][0] == "single":
        nxt = out[1]
        out[:2] = [("single", nxt[1] @ out[0][1], nxt[2] @ out[0][2], nxt[3] + " + pre")]
    if len(out) > 1 and out[-1][3] == "post" and out[-2][0] == "single":
        prv = out[-2]
        out[-2:] = [("single", out[-1][1] @ prv[1], out[-1][2] @ prv[2], prv[3] + " + post")]
    return out


def _builder(model, solver, corrected=True, chain=None):
    return GateBuilder(model, solver, corrected, chain)


def c23_pulse(alpha: float, cfg: ChainConfig | None = None, model: ExchangeModel | None = None,
              solver: SolverConfig | None = None) -> FourDotOperator:
    """Corrected identity on link 23 with integrated exchange ``alpha``, alone."""
    b = _builder(model, solver, chain=cfg)
    layer, _ = b.link_block(alpha, "C23")
    return chain_propagator([layer], b.chain)


def ising_gate(alpha: float, cfg: ChainConfig | None = None, model: ExchangeModel | None = None,
               solver: SolverConfig | None = None) -> FourDotOperator:
    b = _builder(model, solver, chain=cfg)
    return b.ising(alpha).propagator(b.chain)


def tilted_ising(alpha: float, phi: float, cfg: ChainConfig | None = None, model: ExchangeModel | None = None,
                 solver: SolverConfig | None = None) -> FourDotOperator:
    b = _builder(model, solver, chain=cfg)
    return b.tilted_ising(alpha, phi).propagator(b.chain)


def bb1_ising(alpha: float, cfg: ChainConfig | None = None, model: ExchangeModel | None = None,
              solver: SolverConfig | None = None, correction_first: bool = False) -> FourDotOperator:
    b = _builder(model, solver, chain=cfg)
    return b.bb1_ising(alpha, correction_first).propagator(b.chain)


def cnot(cfg: ChainConfig | None = None, model: ExchangeModel | None = None, solver: SolverConfig | None = None,
         corrected: bool = True) -> FourDotOperator:
    b = _builder(model, solver, corrected, chain=cfg)
    return b.cnot().propagator(b.chain)


# ---------------------------------------------------------------- oracles


def first_order_generator(gate: Gate, cfg: ChainConfig | None = None, axis: str = "h", step: float = 1e-5) -> np.ndarray:
    """Hermitian first-order error generator ``G = i U0^dag dU/d delta``.

    Central differences at ``step`` and ``step/2`` combined by Richardson
    extrapolation; the global-phase part is removed.  Entries coupling the
    computational block to leakage, and the traceless part of the
    computational block, are what enter the fidelity at first order.
    """
    cfg = cfg or ChainConfig()
    d = np.array([step, -step, step / 2, -step / 2])
    U = gate.propagator(cfg, d, 0.0) if axis == "h" else gate.propagator(cfg, 0.0, d)
    U = U.matrix
    U0 = gate.propagator(cfg).matrix
    d1 = (U[0] - U[1]) / (2 * step)
    d2 = (U[2] - U[3]) / step
    G = 1j * U0.conj().T @ ((4 * d2 - d1) / 3)
    G = 0.5 * (G + G.conj().T)
    return G - np.trace(G[:4, :4]) / 4 * np.eye(6)


def gate_error_norm(gate: Gate, cfg: ChainConfig | None = None, axis: str = "h", step: float = 1e-5) -> float:
    """Size of the fidelity-relevant first-order error (computational traceless part plus leakage coupling)."""
    G = first_order_generator(gate, cfg, axis, step)
    comp = G[:4, :4] - np.trace(G[:4, :4]) / 4 * np.eye(4)
    return float(np.sqrt(np.sum(np.abs(comp) ** 2) + 2 * np.sum(np.abs(G[4:, :4]) ** 2)))


def gate_sweep(gate: Gate, grid: NoiseGrid, cfg: ChainConfig | None = None, label: str = "") -> SweepTable:
    """Infidelity ``1 - F`` of ``gate`` over quasi-static noise points (``delta_eps`` shared by the links)."""
    if grid.gaussian:
        raise ValueError("two-qubit sweeps take point grids only")
    pts = grid.points
    U = gate.propagator(cfg, pts[:, 0], pts[:, 1])
    inf = 1.0 - np.atleast_1d(fidelity_two_qubit(U, gate.ideal))
    return SweepTable(pts[:, 0].copy(), pts[:, 1].copy(), inf, label or gate.label)


def gate_json(gate: Gate, cfg: ChainConfig | None = None, **kwargs) -> str:
    return json.dumps(gate.to_dict(cfg), **kwargs)
