import json
import math

import numpy as np
import pytest

from stpulse.design import (
    Family,
    InvalidTarget,
    SolutionCache,
    SolverConfig,
    UnreachableTarget,
    euler_xzx,
    identity_at,
    identity_range,
    solve_arbitrary,
    solve_identity,
    solve_xz_rotation,
    solve_y_rotation,
    solve_z_rotation,
    xz_sweep,
    z_primary_branch,
)
from stpulse.errors import fd_error_coeffs
from stpulse.noise import ExchangeModel
from stpulse.rootfind import NoPhysicalSolution
from stpulse.su2 import compose, distance_up_to_phase, rotation

PI = math.pi


def check_corrected(res, model, fd_tol=1e-8):
    seq = res.sequence
    assert model.in_range(seq.js)
    assert distance_up_to_phase(compose(seq), res.target) < 1e-10
    assert fd_error_coeffs(seq, model).max_abs() < fd_tol
    assert res.residual < 1e-8


# ---------------------------------------------------------------- x + z


def test_xz_half_pi(xz_half_pi, model):
    r = xz_half_pi
    assert r.family is Family.XZ and r.branch == "primary"
    assert len(r.sequence) == 11
    check_corrected(r, model)
    # the compensating identity sweeps 14 pi; the two outer halves add phi
    assert r.total_angle == pytest.approx(14 * PI + PI / 2, abs=1e-12)
    js = r.sequence.js
    assert js[0] == js[-1] == 1.0 and np.all(js >= 0)


def test_xz_solver_is_deterministic(model):
    a = solve_xz_rotation(0.5, PI, model)
    b = solve_xz_rotation(0.5, PI, model)
    assert a.solved_params == b.solved_params


def test_xz_invalid_targets(model):
    with pytest.raises(InvalidTarget):
        solve_xz_rotation(1.0, 2 * PI + 0.1, model)
    with pytest.raises(InvalidTarget):
        solve_xz_rotation(0.0, 1.0, model)
    with pytest.raises(InvalidTarget):
        solve_xz_rotation(31.0, 1.0, model)


def test_xz_degenerate_angle_gives_identity(model):
    r = solve_xz_rotation(1.0, 0.0, model)
    assert r.branch == "degenerate"
    assert distance_up_to_phase(compose(r.sequence), np.eye(2)) < 1e-10


def test_xz_sweep_is_continuous_within_branches(model):
    phis = np.linspace(0.1 * PI, 1.9 * PI, 37)
    out = xz_sweep(1.0, phis, model)
    branches = [s.branch for s in out]
    # j4 of the j2-pinned branch reaches zero near 1.62 pi; the j3-pinned branch takes over
    assert set(branches[: phis.searchsorted(1.6 * PI) + 1]) == {"primary"}
    names = ("j0", "j1", "j2", "j3", "j4")
    for b in set(branches):
        P = np.array([[s.solved_params[k] for k in names] for s in out if s.branch == b])
        idx = [i for i, s in enumerate(out) if s.branch == b]
        assert idx == list(range(idx[0], idx[-1] + 1))
        steps = np.max(np.abs(np.diff(P, axis=0)), axis=1)
        assert np.max(steps) < 10 * np.median(steps) + 1e-9


def test_xz_with_positive_minimum_exchange():
    m = ExchangeModel(J0=0.05, J1=1.0, eps0=1.0)
    r = solve_xz_rotation(1.0, PI / 2, m)
    assert r.solved_params["j2"] == pytest.approx(0.05)
    check_corrected(r, m)


def test_xz_infeasible_case_raises_with_diagnostics(model):
    # every converged root for this target has a negative exchange whichever slot is pinned
    with pytest.raises(NoPhysicalSolution, match="none inside the admissible box"):
        solve_xz_rotation(2.0, 1.5 * PI, model)


# ---------------------------------------------------------------- z


def test_z_half_pi_primary(model):
    r = solve_z_rotation(PI / 2, model)
    assert r.branch == "primary"
    check_corrected(r, model)
    assert r.total_angle == pytest.approx(18 * PI + PI / 2, abs=1e-12)


def test_z_window_falls_back(model):
    br = z_primary_branch([0.75 * PI], model)[0]
    assert br[2] < 0  # j3
    r = solve_z_rotation(0.75 * PI, model)
    assert r.branch == "fallback"
    assert any("j3" in n for n in r.notes)
    check_corrected(r, model)


def test_z_needs_zero_exchange():
    with pytest.raises(InvalidTarget):
        solve_z_rotation(1.0, ExchangeModel(J0=0.1))


# ---------------------------------------------------------------- y / arbitrary


@pytest.fixture(scope="module")
def y_half_pi(model):
    return solve_y_rotation(PI / 2, model)


def test_y_half_pi(y_half_pi, model):
    r = y_half_pi
    check_corrected(r, model)
    assert distance_up_to_phase(r.target, rotation((0, 1, 0), PI / 2)) < 1e-14
    assert 20 * PI <= r.total_angle <= 22 * PI


def test_y_target_matches_arbitrary_decomposition():
    U = rotation((1, 0, 0), 1.5 * PI) @ rotation((0, 0, 1), 0.8) @ rotation((1, 0, 0), 0.5 * PI)
    assert distance_up_to_phase(U, rotation((0, 1, 0), 0.8)) < 1e-14


def test_collapsed_decomposition_is_x_rotation():
    U = rotation((1, 0, 0), 0.4) @ rotation((0, 0, 1), 0.0) @ rotation((1, 0, 0), 1.1)
    assert distance_up_to_phase(U, rotation((1, 0, 0), 1.5)) < 1e-14


@pytest.mark.parametrize("seed", range(20))
def test_euler_extraction_round_trip(seed):
    rng = np.random.default_rng(seed)
    U = rotation(rng.normal(size=3), rng.uniform(0, 2 * PI))
    a, b, c = euler_xzx(U)
    V = rotation((1, 0, 0), a) @ rotation((0, 0, 1), b) @ rotation((1, 0, 0), c)
    assert distance_up_to_phase(U, V) < 1e-12
    assert all(0 <= v < 2 * PI for v in (a, b, c))


def test_arbitrary_random_target(model):
    U = rotation((0.3, -0.5, 0.8), 2.1)
    r = solve_arbitrary(*euler_xzx(U), model)
    check_corrected(r, model)
    assert distance_up_to_phase(compose(r.sequence), U) < 1e-10


# ---------------------------------------------------------------- identity


def test_identity_range_spans(model):
    rng = identity_range(model)
    lo, hi = rng.span("duration")
    assert lo < 23 and hi > 48
    alo, ahi = rng.span("area")
    assert alo < 20.1 and ahi > 40


def test_identity_at_is_corrected(model):
    check_corrected(identity_at(3.0, model), model)


def test_identity_by_duration(model):
    r = solve_identity(duration=30.0, model=model)
    assert r.total_duration == pytest.approx(30.0, abs=1e-6)
    check_corrected(r, model)


def test_identity_by_area(model):
    r = solve_identity(area=9 * PI, model=model)
    assert r.sequence.area == pytest.approx(9 * PI, abs=1e-6)
    check_corrected(r, model)


def test_identity_chaining(model):
    r = solve_identity(duration=60.0, model=model)
    assert r.branch == "chained" and r.solved_params["pieces"] == 2
    assert r.total_duration == pytest.approx(60.0, abs=1e-6)
    check_corrected(r, model)


def test_identity_unreachable(model):
    with pytest.raises(UnreachableTarget):
        solve_identity(duration=10.0, model=model)
    with pytest.raises(UnreachableTarget):
        solve_identity(duration=60.0, model=model, chain=False)
    with pytest.raises(ValueError):
        solve_identity(model=model)


# ---------------------------------------------------------------- cache / config


def test_solution_cache_round_trip(tmp_path, xz_half_pi, model):
    path = tmp_path / "cache.json"
    c = SolutionCache(path)
    c.put(Family.XZ, {"J": 1.0, "phi": PI / 2}, model, xz_half_pi)
    c.save()
    again = SolutionCache(path)
    hit = again.get("xz", {"phi": PI / 2, "J": 1.0}, model)
    assert hit["solved_params"] == pytest.approx(xz_half_pi.solved_params)
    assert again.get("xz", {"J": 1.0, "phi": PI / 2}, ExchangeModel(Jmax=40)) is None
    json.loads(path.read_text())


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(residual_tol=0)
    with pytest.raises(ValueError):
        SolverConfig(grid_points=1)


def test_corrected_sequence_dict(xz_half_pi):
    d = xz_half_pi.to_dict()
    assert d["family"] == "xz" and len(d["sequence"]["segments"]) == 11
    json.dumps(d)
