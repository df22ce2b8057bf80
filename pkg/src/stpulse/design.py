"""Corrected pulse-sequence families and their compensation solves.

Every family is a fixed time-ordered template of ``(j, angle)`` segments in
which some exchange values (and, for the asymmetric families, one offset
angle) are unknown.  The unknowns are chosen so that the first-order error
coefficients of the whole template vanish.  Symmetric templates only need
the x and z rows (the y row cancels by the palindrome), asymmetric ones need
all six entries.
"""

from __future__ import annotations

import enum
import json
import math
import os
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import sequence_error_coeffs_raw
from .noise import ExchangeModel
from .rootfind import NoPhysicalSolution, damped_newton, root_find
from .su2 import PulseSequence, compose, distance_up_to_phase, rotation

__all__ = [
    "Family",
    "SolverConfig",
    "CorrectedSequence",
    "InvalidTarget",
    "UnreachableTarget",
    "NoPhysicalSolution",
    "solve_xz_rotation",
    "solve_z_rotation",
    "solve_y_rotation",
    "solve_arbitrary",
    "solve_identity",
    "identity_at",
    "identity_range",
    "xz_sweep",
    "z_primary_branch",
    "euler_xzx",
    "SolutionCache",
]

PI = math.pi
SYM_ROWS = ((0, 0), (0, 1), (2, 0), (2, 1))
ALL_ROWS = tuple((i, k) for i in range(3) for k in range(2))

# fallback order for the x+z family when the default j2 slot has no physical root
XZ_SLOT_ORDER = ("j2", "j1", "j3", "j4")
# extra fixed exchange for the y / arbitrary family (six equations, seven unknowns otherwise)
Y_FIXED_DEFAULT = "j4"
# where the level-6 identity sits among the five outer pulses (time order); 3 = after R(x, phi_b)
ARB_DEFAULT_SEAT = 3
ARB_SEAT_ORDER = (3, 2, 4, 1, 0, 5)


class InvalidTarget(ValueError):
    """Requested rotation lies outside the family's domain."""


class UnreachableTarget(ValueError):
    """Requested identity duration or area cannot be produced."""


class Family(str, enum.Enum):
    XZ = "xz"
    Z = "z"
    Y = "y"
    ARBITRARY = "arbitrary"
    IDENTITY = "identity"


@dataclass(frozen=True)
class SolverConfig:
    """Knobs for the multistart solves.

    ``multistart_grid`` overrides the default logarithmic seed grid with one
    list of seed values per unknown.
    """

    residual_tol: float = 1e-12
    max_iters: int = 60
    grid_points: int = 6
    seed_low: float = 0.05
    multistart_grid: tuple[tuple[float, ...], ...] | None = None
    continuation_step: float = 0.05 * PI
    verify_tol: float = 1e-8

    def __post_init__(self):
        if not self.residual_tol > 0:
            raise ValueError("residual_tol must be positive")
        if self.max_iters < 1 or self.grid_points < 2:
            raise ValueError("need max_iters >= 1 and grid_points >= 2")
        if not self.continuation_step > 0:
            raise ValueError("continuation_step must be positive")

    def seeds(self, n_exchange: int, hi: float, angle_seeds: Sequence[float] = ()) -> np.ndarray:
        if self.multistart_grid is not None:
            axes = [np.asarray(g, dtype=float) for g in self.multistart_grid]
        else:
            g = np.geomspace(self.seed_low, hi, self.grid_points)
            axes = [g] * n_exchange
            if len(angle_seeds):
                axes.append(np.asarray(angle_seeds, dtype=float))
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)


@dataclass(frozen=True)
class CorrectedSequence:
    sequence: PulseSequence
    family: Family
    target: np.ndarray
    solved_params: dict
    residual: float
    branch: str = "primary"
    notes: tuple[str, ...] = ()

    @property
    def total_angle(self) -> float:
        return self.sequence.total_angle

    @property
    def total_duration(self) -> float:
        return self.sequence.total_duration

    def to_dict(self) -> dict:
        return {
            "family": self.family.value,
            "branch": self.branch,
            "solved_params": {k: float(v) for k, v in self.solved_params.items()},
            "residual": float(self.residual),
            "total_angle": self.total_angle,
            "total_duration": self.total_duration,
            "target": [[[z.real, z.imag] for z in row] for row in np.asarray(self.target)],
            "notes": list(self.notes),
            "sequence": self.sequence.to_dict(),
        }


# ---------------------------------------------------------------- templates


def _mirror(half, middle):
    return list(half) + [middle] + list(reversed(half))


def _xz_pairs(p, J, phi):
    half = [(J, PI + phi / 2), (p["j4"], PI), (p["j3"], PI), (p["j2"], PI), (p["j1"], PI)]
    return _mirror(half, (p["j0"], 4 * PI))


def _z_pairs(p, phi, lo):
    half = [(1.0, PI), (lo, PI + phi / 2), (p["j5"], PI), (p["j4"], PI), (p["j3"], PI), (p["j2"], PI), (p["j1"], PI)]
    return _mirror(half, (p["j0"], 4 * PI))


def _arb_pairs(p, pa, pb, pc, seat=ARB_DEFAULT_SEAT):
    th = p["theta6"]
    core = [(p[f"j{k}"], PI) for k in (5, 4, 3, 2, 1)]
    ident = [(p["j6"], PI + th)] + _mirror(core, (p["j0"], 4 * PI)) + [(p["j6"], PI - th)]
    outer = [(0.0, pc), (1.0, PI), (0.0, pb), (1.0, PI), (0.0, pa)]
    return outer[:seat] + ident + outer[seat:]


def _identity_pairs(p, J):
    half = [(J, 2 * PI), (p["j5"], PI), (p["j4"], PI), (p["j3"], PI), (p["j2"], PI), (p["j1"], PI)]
    return _mirror(half, (p["j0"], 4 * PI))


@dataclass
class _Problem:
    """One nonlinear system: template, unknown names, fixed values, residual rows."""

    build: Callable[[dict], list]
    unknowns: tuple[str, ...]
    fixed: dict
    rows: tuple[tuple[int, int], ...]
    model: ExchangeModel
    n_exchange: int = field(init=False)

    def __post_init__(self):
        self.n_exchange = sum(1 for u in self.unknowns if u.startswith("j"))

    def params(self, X: np.ndarray) -> dict:
        p = dict(self.fixed)
        p.update({name: X[:, i] for i, name in enumerate(self.unknowns)})
        return p

    def residual(self, X: np.ndarray) -> np.ndarray:
        pairs = self.build(self.params(X))
        js = [j for j, _ in pairs]
        angles = [np.asarray(a) + np.zeros(len(X)) for _, a in pairs]
        c = sequence_error_coeffs_raw(js, angles, self.model)
        r, k = np.array(self.rows).T
        return c[:, r, k]

    def rank(self, X: np.ndarray) -> np.ndarray:
        pairs = self.build(self.params(X))
        dur = sum(np.asarray(a) / np.sqrt(1.0 + np.asarray(j) ** 2) for j, a in pairs)
        jmax = np.max(X[:, : self.n_exchange], axis=1)
        return np.stack([jmax, dur + np.zeros(len(X))], axis=1)

    def box(self):
        lo = [self.model.Jmin] * self.n_exchange + [-PI] * (len(self.unknowns) - self.n_exchange)
        hi = [self.model.Jmax] * self.n_exchange + [PI] * (len(self.unknowns) - self.n_exchange)
        return np.array(lo), np.array(hi)

    def sequence(self, x: np.ndarray, label: str) -> PulseSequence:
        pairs = self.build(self.params(np.asarray(x, dtype=float)[None, :]))
        return PulseSequence.from_pairs([(float(np.ravel(j)[0]), float(np.ravel(a)[0])) for j, a in pairs], label)

    def solved(self, x: np.ndarray) -> dict:
        out = {k: float(v) for k, v in self.fixed.items() if k.startswith(("j", "theta"))}
        out.update({name: float(v) for name, v in zip(self.unknowns, x)})
        return dict(sorted(out.items()))


def _multistart(prob: _Problem, cfg: SolverConfig, angle_seeds: Sequence[float] = (), extra=None):
    seeds = cfg.seeds(prob.n_exchange, prob.model.Jmax, angle_seeds)
    if extra is not None:
        seeds = np.vstack([np.atleast_2d(extra), seeds])
    lo, hi = prob.box()
    return root_find(prob.residual, seeds, lo, hi, tol=cfg.residual_tol, max_iters=cfg.max_iters, rank=prob.rank)


def _finish(prob, x, family, target, cfg, label, branch="primary", notes=()) -> CorrectedSequence:
    seq = prob.sequence(np.asarray(x, dtype=float), label)
    res = float(np.max(np.abs(prob.residual(np.asarray(x, dtype=float)[None, :]))))
    c = sequence_error_coeffs_raw(seq.js, seq.angles, prob.model)
    if np.max(np.abs(c)) > cfg.verify_tol:
        raise NoPhysicalSolution(f"{label}: leftover first-order error {np.max(np.abs(c)):.1e}")
    d = distance_up_to_phase(compose(seq), target)
    if d > 1e-10:
        raise NoPhysicalSolution(f"{label}: zero-noise action misses the target by {d:.1e}")
    return CorrectedSequence(seq, family, target, prob.solved(x), res, branch, tuple(notes))


def _check_angle(phi: float, name: str = "phi") -> float:
    phi = float(phi)
    if not (math.isfinite(phi) and 0.0 <= phi < 2 * PI):
        raise InvalidTarget(f"{name}={phi} outside [0, 2pi)")
    return phi


def _need_zero_exchange(model: ExchangeModel, what: str):
    if model.Jmin > 0:
        raise InvalidTarget(f"{what} needs pure x rotations (J=0) but the model's minimum exchange is {model.Jmin}")


# ---------------------------------------------------------------- x + J z


def _xz_problem(J, phi, model, fixed_slot):
    fixed = {fixed_slot: model.Jmin}
    unknowns = tuple(n for n in ("j0", "j1", "j2", "j3", "j4") if n != fixed_slot)
    return _Problem(lambda p: _xz_pairs(p, J, phi), unknowns, fixed, ALL_ROWS, model)


def solve_xz_rotation(J: float, phi: float, model: ExchangeModel | None = None,
                      cfg: SolverConfig | None = None, slots: Sequence[str] = XZ_SLOT_ORDER,
                      warm: np.ndarray | None = None) -> CorrectedSequence:
    """Corrected rotation by ``phi`` about ``x + J z``.

    The compensating identity uses 14 pi of rotation.  One inner exchange is
    pinned at the model's minimum; ``j2`` first, then the other slots in
    ``slots`` order if the default has no root in ``[Jmin, Jmax]``.
    """
    model = model or ExchangeModel()
    cfg = cfg or SolverConfig()
    if not (model.Jmin < J <= model.Jmax):
        raise InvalidTarget(f"J={J} outside ({model.Jmin}, {model.Jmax}]")
    phi = _check_angle(phi)
    target = rotation((1.0, 0.0, J), phi)
    if phi < 1e-9:
        ident = identity_at(J, model, cfg)
        return CorrectedSequence(ident.sequence, Family.IDENTITY, target, ident.solved_params,
                                 ident.residual, "degenerate", ("phi=0: plain corrected identity",))
    failures = []
    for slot in slots:
        prob = _xz_problem(J, phi, model, slot)
        try:
            r = _multistart(prob, cfg, extra=warm if slot == slots[0] else None)
        except NoPhysicalSolution as exc:
            failures.append(f"{slot} fixed: {exc}")
            continue
        notes = tuple(failures) + ((f"{slot} pinned at Jmin",) if slot != "j2" else ())
        return _finish(prob, r.x, Family.XZ, target, cfg, f"xz J={J:g} phi={phi:.6g}",
                       "primary" if slot == "j2" else f"fixed-{slot}", notes)
    raise NoPhysicalSolution("x+z rotation: " + "; ".join(failures))


def xz_sweep(J: float, phis: Sequence[float], model: ExchangeModel | None = None,
             cfg: SolverConfig | None = None) -> list[CorrectedSequence]:
    """Solve along a grid of angles, warm-starting each point from the previous one.

    Each point first tries plain Newton from the previous solution and only
    falls back to a full multistart if that leaves the physical box.
    """
    model = model or ExchangeModel()
    cfg = cfg or SolverConfig()
    out: list[CorrectedSequence] = []
    for phi in phis:
        prev = out[-1] if out else None
        if prev is not None and prev.branch in ("primary",):
            prob = _xz_problem(J, phi, model, "j2")
            x0 = np.array([prev.solved_params[u] for u in prob.unknowns])
            x, n = damped_newton(prob.residual, x0[None, :], cfg.max_iters, cfg.residual_tol)
            lo, hi = prob.box()
            if n[0] < cfg.residual_tol and np.all((x[0] >= lo) & (x[0] <= hi)):
                out.append(_finish(prob, x[0], Family.XZ, rotation((1.0, 0.0, J), phi), cfg,
                                   f"xz J={J:g} phi={phi:.6g}"))
                continue
        out.append(solve_xz_rotation(J, phi, model, cfg))
    return out


# ---------------------------------------------------------------- z axis

Z_PRIMARY_FIXED = ("j1", "j5")
Z_FALLBACK_FIXED = ("j2", "j4")


def _z_problem(phi, model, fixed_names):
    fixed = {n: model.Jmin for n in fixed_names}
    unknowns = tuple(n for n in ("j0", "j1", "j2", "j3", "j4", "j5") if n not in fixed_names)
    return _Problem(lambda p: _z_pairs(p, phi, model.Jmin), unknowns, fixed, ALL_ROWS, model)


_Z_REF = (0.5 * PI,)


def z_primary_branch(phis: Sequence[float], model: ExchangeModel | None = None,
                     cfg: SolverConfig | None = None, start_phi: float = 0.5 * PI) -> np.ndarray:
    """Follow the primary z-branch (``j1 = j5 = 0``) by continuation.

    Starts from the best physical root at ``start_phi`` and tracks it across
    ``phis`` with small warm-started Newton steps, without any sign
    constraint, so windows where an exchange turns negative show up as they
    are.  Returns ``(len(phis), 4)`` values of ``(j0, j2, j3, j4)``; rows are
    NaN where the branch is lost.
    """
    model = model or ExchangeModel()
    cfg = cfg or SolverConfig()
    _need_zero_exchange(model, "z rotation")
    x_ref = _multistart(_z_problem(start_phi, model, Z_PRIMARY_FIXED), cfg).x
    phis = np.asarray(phis, dtype=float)
    out = np.full((len(phis), 4), np.nan)
    order = np.argsort(phis)
    # walk outwards from the start angle so each point warm-starts the next
    for side in (order[phis[order] >= start_phi], order[phis[order] < start_phi][::-1]):
        x, at = x_ref, start_phi
        for i in side:
            x = _track(lambda f: _z_problem(f, model, Z_PRIMARY_FIXED), at, phis[i], x, cfg)
            if x is None:
                break
            out[i], at = x, phis[i]
    return out


def _track(make, phi_from, phi_to, x0, cfg, bounds=None):
    """Warm-started Newton continuation from ``phi_from`` to ``phi_to``."""
    n = max(1, int(math.ceil(abs(phi_to - phi_from) / cfg.continuation_step)))
    x = np.array(x0, dtype=float)
    for phi in np.linspace(phi_from, phi_to, n + 1)[1:]:
        prob = make(phi)
        xs, norm = damped_newton(prob.residual, x[None, :], max(cfg.max_iters, 100), cfg.residual_tol)
        if not norm[0] < cfg.residual_tol or np.max(np.abs(xs[0] - x)) > 10 * (1 + np.max(np.abs(x))):
            return None
        x = xs[0]
    return x


def solve_z_rotation(phi: float, model: ExchangeModel | None = None,
                     cfg: SolverConfig | None = None) -> CorrectedSequence:
    """Corrected rotation about ``z`` (total angle ``18 pi + phi``).

    The primary branch pins ``j1 = j5 = 0``.  When that branch turns
    unphysical (``j3 < 0`` near ``0.6 pi .. 0.9 pi``) the solve switches to
    pinning ``j2 = j4 = 0`` instead.
    """
    model = model or ExchangeModel()
    cfg = cfg or SolverConfig()
    _need_zero_exchange(model, "z rotation")
    phi = _check_angle(phi)
    target = rotation((0.0, 0.0, 1.0), phi)
    if phi < 1e-9:
        ident = identity_at(1.0, model, cfg)
        return CorrectedSequence(ident.sequence, Family.IDENTITY, target, ident.solved_params,
                                 ident.residual, "degenerate", ("phi=0: plain corrected identity",))
    notes = []
    label = f"z phi={phi:.6g}"
    branch = z_primary_branch([phi], model, cfg)[0]
    prob = _z_problem(phi, model, Z_PRIMARY_FIXED)
    lo, hi = prob.box()
    if np.all(np.isfinite(branch)) and np.all((branch >= lo) & (branch <= hi)):
        return _finish(prob, branch, Family.Z, target, cfg, label)
    if np.all(np.isfinite(branch)):
        bad = [f"{n}={v:.4g}" for n, v, a, b in zip(prob.unknowns, branch, lo, hi) if not a <= v <= b]
        notes.append("primary branch unphysical: " + ", ".join(bad))
    else:
        notes.append("primary branch not continuable to this angle")
    try:
        r = _multistart(_z_problem(phi, model, Z_FALLBACK_FIXED), cfg)
        return _finish(_z_problem(phi, model, Z_FALLBACK_FIXED), r.x, Family.Z, target, cfg, label,
                       "fallback", notes + ["fallback branch: j2 = j4 = 0"])
    except NoPhysicalSolution as exc:
        notes.append(f"fallback: {exc}")
    # last resort: any physical root of the primary template
    try:
        r = _multistart(prob, cfg)
        return _finish(prob, r.x, Family.Z, target, cfg, label, "primary-other", notes)
    except NoPhysicalSolution as exc:
        raise NoPhysicalSolution("z rotation: " + "; ".join(notes + [f"primary multistart: {exc}"])) from None


# ---------------------------------------------------------------- arbitrary / y


def _arb_problem(pa, pb, pc, model, fixed_extra, seat=ARB_DEFAULT_SEAT):
    fixed = {"j2": model.Jmin, fixed_extra: model.Jmin}
    unknowns = tuple(n for n in ("j0", "j1", "j3", "j4", "j5", "j6") if n not in fixed) + ("theta6",)
    return _Problem(lambda p: _arb_pairs(p, pa, pb, pc, seat), unknowns, fixed, ALL_ROWS, model)


def euler_xzx(U: np.ndarray) -> tuple[float, float, float]:
    """Angles ``(a, b, c)`` in ``[0, 2 pi)`` with ``U ~ R(x, a) R(z, b) R(x, c)`` up to phase."""
    U = np.asarray(U, dtype=complex)
    U = U / np.sqrt(np.linalg.det(U))
    # Hadamard swaps x and z, turning this into the textbook z-x-z form
    H = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
    W = H @ U @ H
    b = 2 * math.atan2(abs(W[1, 0]), abs(W[0, 0]))
    if abs(W[1, 0]) < 1e-14:
        s, d = 2 * np.angle(W[1, 1]), 0.0
    elif abs(W[0, 0]) < 1e-14:
        s, d = 0.0, 2 * np.angle(1j * W[1, 0])
    else:
        s, d = 2 * np.angle(W[1, 1]), 2 * np.angle(1j * W[1, 0])
    a, c = (s + d) / 2, (s - d) / 2
    return tuple(float(v % (2 * PI)) for v in (a, b, c))


def solve_arbitrary(phi_a: float, phi_b: float, phi_c: float, model: ExchangeModel | None = None,
                    cfg: SolverConfig | None = None, fixed_extra: str = Y_FIXED_DEFAULT,
                    family: Family = Family.ARBITRARY, seats: Sequence[int] = ARB_SEAT_ORDER) -> CorrectedSequence:
    """Corrected ``R(x, phi_a) R(z, phi_b) R(x, phi_c)`` using one level-6 identity.

    In time order the pulses are ``R(x, phi_c)``, ``U(1, pi)``,
    ``R(x, phi_b)``, ``U(1, pi)``, ``R(x, phi_a)`` and the identity is
    seated after the third of them.  No symmetry is available, so all six
    first-order entries are solved for.  Besides ``j2``, ``fixed_extra`` is
    pinned at the minimum exchange to leave six unknowns (five exchanges and
    ``theta6``).  If that seat has no physical root the other seats are
    tried, then the same seats for the equivalent angles
    ``(phi_a + pi, 2 pi - phi_b, phi_c + pi)``.
    """
    model = model or ExchangeModel()
    cfg = cfg or SolverConfig()
    _need_zero_exchange(model, "arbitrary rotation")
    pa, pb, pc = (_check_angle(v, n) for v, n in ((phi_a, "phi_a"), (phi_b, "phi_b"), (phi_c, "phi_c")))
    target = rotation((1, 0, 0), pa) @ rotation((0, 0, 1), pb) @ rotation((1, 0, 0), pc)
    small = replace(cfg, grid_points=min(cfg.grid_points, 4))
    thetas = np.linspace(-0.75 * PI, 0.75 * PI, 4)
    alt = ((pa + PI) % (2 * PI), (2 * PI - pb) % (2 * PI), (pc + PI) % (2 * PI))
    tried = []
    for angles in ((pa, pb, pc), alt):
        for seat in seats:
            prob = _arb_problem(*angles, model, fixed_extra, seat)
            try:
                r = _multistart(prob, small, angle_seeds=thetas)
            except NoPhysicalSolution:
                tried.append(f"seat {seat} at ({angles[0]:.4g}, {angles[1]:.4g}, {angles[2]:.4g})")
                continue
            branch = "primary" if (seat == ARB_DEFAULT_SEAT and angles == (pa, pb, pc)) else f"seat-{seat}"
            notes = [f"j2 and {fixed_extra} pinned at Jmin"]
            if angles != (pa, pb, pc):
                notes.append("equivalent angles (phi_a + pi, 2 pi - phi_b, phi_c + pi)")
            if tried:
                notes.append("no physical root for " + "; ".join(tried))
            out = _finish(prob, r.x, family, target, cfg,
                          f"{family.value} ({pa:.6g}, {pb:.6g}, {pc:.6g})", branch, notes)
            params = dict(out.solved_params, seat=float(seat))
            return CorrectedSequence(out.sequence, family, target, params, out.residual, branch, out.notes)
    raise NoPhysicalSolution(f"{family.value} rotation: no physical root for any identity seat")


def solve_y_rotation(phi: float, model: ExchangeModel | None = None,
                     cfg: SolverConfig | None = None, fixed_extra: str = Y_FIXED_DEFAULT) -> CorrectedSequence:
    """Corrected rotation about ``y``: the arbitrary family at ``(3 pi/2, phi, pi/2)``."""
    phi = _check_angle(phi)
    out = solve_arbitrary(1.5 * PI, phi, 0.5 * PI, model, cfg, fixed_extra, Family.Y)
    # same operator as R(y, phi); keep the plainer target
    return CorrectedSequence(out.sequence, Family.Y, rotation((0, 1, 0), phi), out.solved_params,
                             out.residual, out.branch, out.notes)


# ---------------------------------------------------------------- identity


def _identity_problem(J, model):
    fixed = {"j2": model.Jmin, "j4": model.Jmin}
    return _Problem(lambda p: _identity_pairs(p, J), ("j0", "j1", "j3", "j5"), fixed, SYM_ROWS, model)


def identity_at(J: float, model: ExchangeModel | None = None, cfg: SolverConfig | None = None,
                warm: np.ndarray | None = None) -> CorrectedSequence:
    """Corrected identity with outer exchange ``J`` (``j2 = j4 = 0``)."""
    model = model or ExchangeModel()
    cfg = cfg or SolverConfig()
    prob = _identity_problem(J, model)
    lo, hi = prob.box()
    if warm is not None:
        x, n = damped_newton(prob.residual, np.atleast_2d(warm), cfg.max_iters, cfg.residual_tol)
        if n[0] < cfg.residual_tol and np.all((x[0] >= lo) & (x[0] <= hi)):
            return _finish(prob, x[0], Family.IDENTITY, np.eye(2, dtype=complex), cfg, f"identity J={J:.6g}")
    r = _multistart(prob, cfg)
    return _finish(prob, r.x, Family.IDENTITY, np.eye(2, dtype=complex), cfg, f"identity J={J:.6g}")


@dataclass(frozen=True)
class IdentityRange:
    """Outer-exchange scan of the identity family (continuation from the largest ``J``)."""

    J: np.ndarray
    duration: np.ndarray
    area: np.ndarray
    params: np.ndarray

    def span(self, quantity: str) -> tuple[float, float]:
        v = getattr(self, quantity)
        return float(np.min(v)), float(np.max(v))


_RANGE_CACHE: dict = {}


def identity_range(model: ExchangeModel | None = None, cfg: SolverConfig | None = None,
                   J_low: float = 0.2, n: int = 60) -> IdentityRange:
    """Scan outer ``J`` from ``Jmax`` down to ``J_low`` following one branch."""
    model = model or ExchangeModel()
    cfg = cfg or SolverConfig()
    key = (model.key(), J_low, n, cfg.residual_tol)
    if key in _RANGE_CACHE:
        return _RANGE_CACHE[key]
    Js, T, A, P = [], [], [], []
    warm = None

    def visit(J):
        nonlocal warm
        s = identity_at(float(J), model, cfg, warm)
        warm = np.array([s.solved_params[k] for k in ("j0", "j1", "j3", "j5")])
        Js.append(float(J)), T.append(s.total_duration), A.append(s.sequence.area), P.append(warm)

    lost = None
    for J in np.geomspace(model.Jmax, max(J_low, model.Jmin + 1e-3), n):
        try:
            visit(J)
        except NoPhysicalSolution:
            lost = J
            break
    if lost is not None and Js:
        # the branch ends between the last good J and ``lost``: walk towards the end by bisection
        good = Js[-1]
        for _ in range(30):
            mid = math.sqrt(good * lost)
            try:
                visit(mid)
                good = mid
            except NoPhysicalSolution:
                warm = P[-1]
                lost = mid
            if good / lost - 1 < 1e-6:
                break
    if not Js:
        raise UnreachableTarget("identity family has no physical solution for this model")
    out = IdentityRange(np.array(Js), np.array(T), np.array(A), np.array(P))
    _RANGE_CACHE[key] = out
    return out


def _hit(rng: IdentityRange, quantity: str, value: float, model, cfg) -> CorrectedSequence:
    v = getattr(rng, quantity)
    idx = np.flatnonzero((v[:-1] - value) * (v[1:] - value) <= 0)
    if len(idx) == 0:
        raise UnreachableTarget(f"{quantity} {value} outside [{v.min():.6g}, {v.max():.6g}]")
    i = int(idx[0])
    warm = {"x": rng.params[i]}

    def f(J):
        s = identity_at(J, model, cfg, warm["x"])
        warm["x"] = np.array([s.solved_params[k] for k in ("j0", "j1", "j3", "j5")])
        return (s.total_duration if quantity == "duration" else s.sequence.area) - value

    if v[i] == value:
        J = rng.J[i]
    else:
        J = brentq(f, rng.J[i + 1], rng.J[i], xtol=1e-13, rtol=1e-13)
    return identity_at(float(J), model, cfg, warm["x"])


def solve_identity(duration: float | None = None, area: float | None = None,
                   model: ExchangeModel | None = None, cfg: SolverConfig | None = None,
                   chain: bool = True) -> CorrectedSequence:
    """Corrected identity of a requested duration or integrated exchange.

    The outer exchange ``J`` of the family is tuned by bracketing and Brent
    root finding on the scanned range.  Targets above the range are split
    into the fewest equal chained pieces that each fit.
    """
    if (duration is None) == (area is None):
        raise ValueError("give exactly one of duration or area")
    model = model or ExchangeModel()
    cfg = cfg or SolverConfig()
    quantity, value = ("duration", float(duration)) if duration is not None else ("area", float(area))
    if not (math.isfinite(value) and value > 0):
        raise UnreachableTarget(f"{quantity} must be positive and finite")
    rng = identity_range(model, cfg)
    lo, hi = rng.span(quantity)
    if value < lo:
        raise UnreachableTarget(f"{quantity} {value:.6g} below the shortest corrected identity ({lo:.6g})")
    pieces = 1
    if value > hi:
        if not chain:
            raise UnreachableTarget(f"{quantity} {value:.6g} above {hi:.6g} and chaining disabled")
        pieces = int(math.ceil(value / hi))
        if value / pieces < lo:
            raise UnreachableTarget(f"{quantity} {value:.6g} cannot be split into pieces within [{lo:.6g}, {hi:.6g}]")
    one = _hit(rng, quantity, value / pieces, model, cfg)
    if pieces == 1:
        return one
    seq = PulseSequence(one.sequence.segments * pieces, f"identity x{pieces}")
    params = dict(one.solved_params, pieces=float(pieces))
    return CorrectedSequence(seq, Family.IDENTITY, one.target, params, one.residual, "chained",
                             (f"{pieces} chained identities of {quantity} {value / pieces:.6g}",))


# ---------------------------------------------------------------- cache


class SolutionCache:
    """JSON file mapping (family, target, model) to solved parameters."""

    def __init__(self, path: str | os.PathLike):
        self.path = os.fspath(path)
        try:
            with open(self.path) as fh:
                self.entries = json.load(fh)
        except FileNotFoundError:
            self.entries = {}

    @staticmethod
    def key(family: Family | str, target: dict, model: ExchangeModel) -> str:
        fam = family.value if isinstance(family, Family) else str(family)
        return f"{fam}|{json.dumps(target, sort_keys=True)}|{model.key()}"

    def get(self, family, target: dict, model: ExchangeModel) -> dict | None:
        return self.entries.get(self.key(family, target, model))

    def put(self, family, target: dict, model: ExchangeModel, result: CorrectedSequence):
        self.entries[self.key(family, target, model)] = {
            "family": result.family.value,
            "target": target,
            "model": model.key(),
            "solved_params": result.solved_params,
            "residual": result.residual,
            "branch": result.branch,
            "sequence": result.sequence.to_dict(),
        }

    def save(self):
        tmp = self.path + ".tmp"
        with open(tmp, "w") as fh:
            json.dump(self.entries, fh, indent=1, sort_keys=True)
        os.replace(tmp, self.path)
