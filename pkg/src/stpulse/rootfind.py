"""Bounded multistart damped Newton for small square nonlinear systems."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = ["NoPhysicalSolution", "RootResult", "damped_newton", "root_find"]


class NoPhysicalSolution(RuntimeError):
    """No seed converged to a root inside the admissible box."""

    def __init__(self, message: str, out_of_bounds: np.ndarray | None = None):
        super().__init__(message)
        self.out_of_bounds = np.empty((0, 0)) if out_of_bounds is None else out_of_bounds


@dataclass(frozen=True)
class RootResult:
    x: np.ndarray
    residual: float
    roots: np.ndarray  # every distinct in-bounds root, best first
    out_of_bounds: np.ndarray  # converged roots rejected by the box


def _jacobian(fun, x, r0, rel_step=1e-7):
    n, k = x.shape
    J = np.empty((n, r0.shape[1], k))
    for i in range(k):
        h = rel_step * np.maximum(1.0, np.abs(x[:, i]))
        xp = x.copy()
        xp[:, i] += h
        J[:, :, i] = (fun(xp) - r0) / h[:, None]
    return J


def damped_newton(fun: Callable[[np.ndarray], np.ndarray], x0: np.ndarray, max_iters: int = 60,
                  tol: float = 1e-12, clip: float = 1e3) -> tuple[np.ndarray, np.ndarray]:
    """Run Newton with backtracking on a batch of starting points.

    ``fun`` maps ``(n, k)`` to ``(n, k)``.  Returns the final iterates and
    their residual inf-norms.  Iterates are confined to ``|x| <= clip`` so a
    runaway seed cannot overflow.
    """
    x = np.array(x0, dtype=float, copy=True)
    r = fun(x)
    norm = np.max(np.abs(r), axis=1)
    active = np.isfinite(norm) & (norm >= tol)
    for _ in range(max_iters):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        xa, ra = x[idx], r[idx]
        J = _jacobian(fun, xa, ra)
        # pseudo-inverse step: plain Newton when J is regular, Gauss-Newton on root manifolds
        try:
            step = -np.einsum("nij,nj->ni", np.linalg.pinv(J, rcond=1e-10), ra)
        except np.linalg.LinAlgError:
            step = np.zeros_like(xa)
        step = np.where(np.isfinite(step), step, 0.0)
        lam = np.ones(len(idx))
        accepted = np.zeros(len(idx), dtype=bool)
        best_x, best_r, best_n = xa.copy(), ra.copy(), norm[idx].copy()
        for _ in range(12):
            trial = np.clip(xa + lam[:, None] * step, -clip, clip)
            rt = fun(trial)
            nt = np.max(np.abs(rt), axis=1)
            ok = (~accepted) & np.isfinite(nt) & (nt < best_n)
            best_x[ok], best_r[ok], best_n[ok] = trial[ok], rt[ok], nt[ok]
            accepted |= ok
            if accepted.all():
                break
            lam = np.where(accepted, lam, lam / 2)
        x[idx], r[idx], norm[idx] = best_x, best_r, best_n
        # stalled seeds stop; converged ones too
        active[idx] = accepted & (best_n >= tol)
    return x, norm


def _dedupe(xs: np.ndarray, scale: float = 1e-6) -> np.ndarray:
    out: list[np.ndarray] = []
    for x in xs:
        if not any(np.max(np.abs(x - y)) < scale * max(1.0, np.max(np.abs(y))) for y in out):
            out.append(x)
    return np.array(out).reshape(-1, xs.shape[1])


def root_find(fun: Callable[[np.ndarray], np.ndarray], seeds: np.ndarray, lower: np.ndarray,
              upper: np.ndarray, tol: float = 1e-12, max_iters: int = 60,
              rank: Callable[[np.ndarray], np.ndarray] | None = None) -> RootResult:
    """Multistart damped Newton restricted to the box ``[lower, upper]``.

    All seeds are iterated; converged roots inside the box are deduplicated
    and ordered by ``rank`` (smaller is better; default: seed order).  The
    outcome depends only on the inputs, never on timing or randomness.
    """
    seeds = np.atleast_2d(np.asarray(seeds, dtype=float))
    lower = np.broadcast_to(np.asarray(lower, dtype=float), seeds.shape[1:])
    upper = np.broadcast_to(np.asarray(upper, dtype=float), seeds.shape[1:])
    x, norm = damped_newton(fun, seeds, max_iters=max_iters, tol=tol)
    conv = norm < tol
    inside = np.all((x >= lower - 1e-12) & (x <= upper + 1e-12), axis=1)
    good = _dedupe(x[conv & inside])
    bad = _dedupe(x[conv & ~inside])
    if len(good) == 0:
        best = np.min(norm) if len(norm) else np.inf
        raise NoPhysicalSolution(
            f"{len(seeds)} seeds: {int(conv.sum())} converged, none inside the admissible box "
            f"(best residual {best:.2e})",
            bad,
        )
    if rank is not None:
        keys = np.asarray(rank(good))
        good = good[np.lexsort(keys.T[::-1]) if keys.ndim == 2 else np.argsort(keys, kind="stable")]
    r = np.max(np.abs(fun(good[:1])), axis=1)[0]
    return RootResult(good[0], float(r), good, bad)
