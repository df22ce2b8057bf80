"""Command-line front end.

    stpulse solve xz --J 1 --phi 0.5pi --out seq.json
    stpulse sweep --sequence seq.json --axis h --fit
    stpulse curves xz --J 1 --points 41
    stpulse cnot --out gates/

Exit codes: 0 ok, 2 no physical solution, 3 bad input.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import re
import sys
from dataclasses import dataclass

import numpy as np

from . import design
from .design import CorrectedSequence, InvalidTarget, SolutionCache, SolverConfig, UnreachableTarget
from .noise import ExchangeModel, InsufficientData, NoiseGrid, SweepTable, infidelity_sweep, scaling_exponent
from .rootfind import NoPhysicalSolution
from .su2 import PulseSequence, SequenceFormatError, compose, rotation

EXIT_OK, EXIT_NO_SOLUTION, EXIT_BAD_INPUT = 0, 2, 3
DEFAULT_SEED = 20120101


class BadInput(ValueError):
    pass


_ANGLE = re.compile(
    r"^\s*([-+])?\s*(\d+\.?\d*(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?)?\s*\*?\s*(pi|π)?\s*(?:/\s*(\d+\.?\d*))?\s*$"
)


def parse_angle(text: str) -> float:
    """``"0.5pi"``, ``"-pi/4"``, ``"3*pi/2"``, ``"1.2"`` (radians)."""
    m = _ANGLE.match(str(text))
    if not m or (m.group(2) is None and m.group(3) is None):
        raise argparse.ArgumentTypeError(f"cannot parse angle {text!r}")
    val = float(m.group(2)) if m.group(2) is not None else 1.0
    if m.group(4) is not None:
        if float(m.group(4)) == 0:
            raise argparse.ArgumentTypeError(f"division by zero in {text!r}")
        val /= float(m.group(4))
    if m.group(1) == "-":
        val = -val
    return val * math.pi if m.group(3) else val


@dataclass(frozen=True)
class RunConfig:
    model: ExchangeModel
    solver: SolverConfig
    seed: int
    out: str | None
    cache: str | None

    @classmethod
    def from_args(cls, a) -> "RunConfig":
        try:
            data = {}
            if a.model_json:
                with open(a.model_json) as fh:
                    data = json.load(fh)
            if a.Jmax is not None:
                data["Jmax"] = a.Jmax
            model = ExchangeModel.from_dict(data) if data else ExchangeModel()
            solver = SolverConfig(residual_tol=a.tol) if a.tol is not None else SolverConfig()
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise BadInput(f"bad configuration: {exc}") from exc
        if a.seed < 0:
            raise BadInput("seed must be non-negative")
        return cls(model, solver, a.seed, a.out, a.cache)


def _common(p: argparse.ArgumentParser):
    p.add_argument("--model-json", help="exchange model JSON (kind, J0, J1, eps0, Jmax | g_coeffs, Jmin)")
    p.add_argument("--Jmax", type=float, help="override the maximum exchange")
    p.add_argument("--tol", type=float, help="solver residual tolerance")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help="RNG seed for Gaussian sampling")
    p.add_argument("--out", help="output file (solve, sweep, curves) or directory (cnot)")
    p.add_argument("--cache", help="JSON solution cache file")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stpulse", description="Noise-compensating exchange pulses")
    sub = ap.add_subparsers(dest="cmd", required=True)

    s = sub.add_parser("solve", help="solve a corrected sequence")
    s.add_argument("family", choices=[f.value for f in design.Family])
    s.add_argument("--J", type=float, help="x+z family: tilt J of the rotation axis")
    s.add_argument("--phi", type=parse_angle, help="rotation angle")
    s.add_argument("--angles", type=parse_angle, nargs=3, metavar=("A", "B", "C"),
                   help="arbitrary family: R(x,A) R(z,B) R(x,C)")
    s.add_argument("--T", type=parse_angle, help="identity: duration (1/h)")
    s.add_argument("--area", type=parse_angle, help="identity: integrated exchange")
    _common(s)

    w = sub.add_parser("sweep", help="infidelity over quasi-static noise")
    src = w.add_mutually_exclusive_group(required=True)
    src.add_argument("--sequence", help="sequence JSON written by 'solve' (or a bare segment list)")
    src.add_argument("--naive", help="uncorrected pulse: 'J:PHI' for U(J, PHI) or 'z:PHI'")
    w.add_argument("--axis", choices=("h", "eps"), default="h")
    w.add_argument("--min", dest="dmin", type=float, default=1e-4)
    w.add_argument("--max", dest="dmax", type=float, default=1e-2)
    w.add_argument("--points", type=int, default=21)
    w.add_argument("--fit", action="store_true", help="print the log-log slope")
    w.add_argument("--gaussian", type=float, metavar="SIGMA", help="mean over N(0, SIGMA) instead of a point grid")
    w.add_argument("--samples", type=int, default=100_000)
    _common(w)

    c = sub.add_parser("curves", help="solved parameters against rotation angle")
    c.add_argument("family", choices=("xz", "z"))
    c.add_argument("--J", type=float, default=1.0)
    c.add_argument("--points", type=int, default=41)
    _common(c)

    g = sub.add_parser("cnot", help="assemble corrected and uncorrected CNOT gates")
    g.add_argument("--min", dest="dmin", type=float, default=1e-3)
    g.add_argument("--max", dest="dmax", type=float, default=1e-2)
    g.add_argument("--points", type=int, default=11)
    _common(g)
    return ap


def _emit(text: str, path: str | None):
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------- solve


def _solve(a, rc: RunConfig) -> CorrectedSequence:
    m, cfg = rc.model, rc.solver
    fam = a.family
    if fam == "identity":
        if (a.T is None) == (a.area is None):
            raise BadInput("identity needs exactly one of --T or --area")
        return design.solve_identity(duration=a.T, area=a.area, model=m, cfg=cfg)
    if fam == "arbitrary":
        if a.angles is None:
            raise BadInput("arbitrary needs --angles A B C")
        return design.solve_arbitrary(*a.angles, m, cfg)
    if a.phi is None:
        raise BadInput(f"{fam} needs --phi")
    if fam == "xz":
        if a.J is None:
            raise BadInput("xz needs --J")
        return design.solve_xz_rotation(a.J, a.phi, m, cfg)
    if fam == "z":
        return design.solve_z_rotation(a.phi, m, cfg)
    return design.solve_y_rotation(a.phi, m, cfg)


def _cache_target(a) -> dict:
    return {k: getattr(a, k) for k in ("J", "phi", "angles", "T", "area") if getattr(a, k) is not None}


def cmd_solve(a, rc: RunConfig) -> int:
    cache = SolutionCache(rc.cache) if rc.cache else None
    hit = cache.get(a.family, _cache_target(a), rc.model) if cache else None
    if hit is not None:
        data = {k: hit[k] for k in ("family", "branch", "solved_params", "residual", "sequence")}
        seq = PulseSequence.from_dict(hit["sequence"])
        data.update(total_angle=seq.total_angle, total_duration=seq.total_duration, notes=["from cache"])
        _emit(json.dumps(data, indent=1) + "\n", rc.out)
        print(f"cached {a.family}: residual {hit['residual']:.3e}, total angle {seq.total_angle / math.pi:.6g} pi, "
              f"duration {seq.total_duration:.6g}", file=sys.stderr)
        return EXIT_OK
    res = _solve(a, rc)
    _emit(json.dumps(res.to_dict(), indent=1) + "\n", rc.out)
    if cache:
        cache.put(a.family, _cache_target(a), rc.model, res)
        cache.save()
    line = (f"{res.family.value} [{res.branch}]: residual {res.residual:.3e}, "
            f"total angle {res.total_angle / math.pi:.6g} pi, duration {res.total_duration:.6g}, "
            f"{len(res.sequence)} segments")
    for n in res.notes:
        line += f"\n  note: {n}"
    print(line, file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------- sweep


def load_sequence(path: str) -> tuple[PulseSequence, np.ndarray | None]:
    """Read a 'solve' output (sequence plus target) or a bare sequence JSON."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise SequenceFormatError(f"cannot read {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SequenceFormatError(f"invalid JSON in {path}: {exc}") from exc
    if isinstance(data, dict) and "sequence" in data:
        seq = PulseSequence.from_dict(data["sequence"])
        target = None
        if "target" in data:
            try:
                target = np.array([[complex(re_, im) for re_, im in row] for row in data["target"]])
            except (TypeError, ValueError) as exc:
                raise SequenceFormatError(f"malformed target: {exc}") from exc
            if target.shape != (2, 2):
                raise SequenceFormatError("target must be 2x2")
        return seq, target
    if isinstance(data, dict):
        return PulseSequence.from_dict(data), None
    raise SequenceFormatError("sequence JSON must be an object")


def _naive(text: str) -> tuple[PulseSequence, np.ndarray]:
    parts = text.split(":")
    try:
        if len(parts) == 2 and parts[0].lower() == "z":
            phi = parse_angle(parts[1])
            seq = PulseSequence.from_pairs([(1.0, math.pi), (0.0, phi), (1.0, math.pi)], f"naive z {phi:.6g}")
            return seq, rotation((0, 0, 1), phi)
        if len(parts) == 2:
            J, phi = float(parts[0]), parse_angle(parts[1])
            return PulseSequence.from_pairs([(J, phi)], f"naive J={J:g} {phi:.6g}"), rotation((1, 0, J), phi)
    except (ValueError, argparse.ArgumentTypeError) as exc:
        raise BadInput(f"bad --naive value {text!r}: {exc}") from exc
    raise BadInput(f"bad --naive value {text!r}; use 'J:PHI' or 'z:PHI'")


def cmd_sweep(a, rc: RunConfig) -> int:
    if a.sequence:
        seq, target = load_sequence(a.sequence)
        if target is None:
            target = compose(seq)
    else:
        seq, target = _naive(a.naive)
    if len(seq) and not rc.model.in_range(seq.js):
        raise BadInput("sequence exchange values outside the model range")
    if a.gaussian is not None:
        if not a.gaussian > 0:
            raise BadInput("--gaussian needs a positive width")
        sig = (a.gaussian, 0.0) if a.axis == "h" else (0.0, a.gaussian)
        grid = NoiseGrid.gaussian_widths([sig], a.samples, rc.seed)
        table = infidelity_sweep(seq, target, grid, rc.model, seq.label or "sequence")
        point = infidelity_sweep(seq, target, NoiseGrid.axis(a.axis, [a.gaussian]), rc.model).infidelity[0]
        _emit(table.to_csv(), rc.out)
        print(f"seed {rc.seed}: gaussian mean {table.infidelity[0]:.6e}, point value {point:.6e}, "
              f"factor {table.infidelity[0] / point:.4f}", file=sys.stderr)
        return EXIT_OK
    if a.points < 2 or not (0 < a.dmin < a.dmax):
        raise BadInput("need --points >= 2 and 0 < --min < --max")
    deltas = np.geomspace(a.dmin, a.dmax, a.points)
    table = infidelity_sweep(seq, target, NoiseGrid.axis(a.axis, deltas), rc.model, seq.label or "sequence")
    _emit(table.to_csv(), rc.out)
    if a.fit:
        slope, _, r2 = scaling_exponent(table.column(a.axis), table.infidelity)
        print(f"slope {slope:.4f} (r2 {r2:.6f}) over delta_{a.axis} in [{a.dmin:g}, {a.dmax:g}]", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------- curves


def cmd_curves(a, rc: RunConfig) -> int:
    if a.points < 2:
        raise BadInput("need --points >= 2")
    rows = []
    if a.family == "xz":
        phis = np.linspace(0, 2 * math.pi, a.points + 1)[1:-1]
        names = ("j0", "j1", "j2", "j3", "j4")
        for phi, s in zip(phis, design.xz_sweep(a.J, phis, rc.model, rc.solver)):
            rows.append([phi] + [s.solved_params.get(n, float("nan")) for n in names] + [s.branch])
    else:
        phis = np.linspace(0, 2 * math.pi, a.points + 1)[1:-1]
        names = ("j0", "j2", "j3", "j4")
        for phi, v in zip(phis, design.z_primary_branch(phis, rc.model, rc.solver)):
            rows.append([phi] + list(v) + ["primary"])
    out = "phi," + ",".join(names) + ",branch\n"
    for r in rows:
        out += ",".join(f"{x:.17g}" for x in r[:-1]) + f",{r[-1]}\n"
    _emit(out, rc.out)
    return EXIT_OK


# ---------------------------------------------------------------- cnot


def cmd_cnot(a, rc: RunConfig) -> int:
    from .twoqubit import CNOT, GateBuilder, chain_propagator, gate_sweep
    from .su2 import distance_up_to_phase

    outdir = rc.out or "cnot_out"
    os.makedirs(outdir, exist_ok=True)
    if a.points < 5 or not (0 < a.dmin < a.dmax):
        raise BadInput("need --points >= 5 and 0 < --min < --max")
    deltas = np.geomspace(a.dmin, a.dmax, a.points)
    report = {}
    for name, corrected in (("corrected", True), ("uncorrected", False)):
        b = GateBuilder(rc.model, rc.solver, corrected)
        gate = b.cnot()
        U = chain_propagator(gate.layers, b.chain)
        dist = distance_up_to_phase(U.computational, CNOT)
        with open(os.path.join(outdir, f"cnot_{name}.json"), "w") as fh:
            json.dump(gate.to_dict(b.chain), fh)
        entry = dict(gate.budget(), zero_noise_distance=dist, leakage=U.leakage_population())
        for axis in ("h", "eps"):
            t = gate_sweep(gate, NoiseGrid.axis(axis, deltas), b.chain, f"{name} cnot")
            with open(os.path.join(outdir, f"sweep_{name}_{axis}.csv"), "w") as fh:
                t.to_csv(fh)
            try:
                entry[f"slope_{axis}"] = scaling_exponent(t.column(axis), t.infidelity)[0]
            except InsufficientData as exc:
                entry[f"slope_{axis}"] = None
                print(f"{name} {axis}: {exc}", file=sys.stderr)
        report[name] = entry
        print(f"{name}: {entry['composite_pulses']} composite pulses, "
              f"{entry['rotation_critical_pi']:.4g} pi total rotation (critical path), "
              f"zero-noise distance {dist:.2e}, slopes h {entry['slope_h']}, eps {entry['slope_eps']}")
    with open(os.path.join(outdir, "budget.json"), "w") as fh:
        json.dump(report, fh, indent=1)
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "sweep": cmd_sweep, "curves": cmd_curves, "cnot": cmd_cnot}


def main(argv=None) -> int:
    ap = build_parser()
    try:
        a = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_BAD_INPUT
    try:
        rc = RunConfig.from_args(a)
        return COMMANDS[a.cmd](a, rc)
    except NoPhysicalSolution as exc:
        print(f"no physical solution: {exc}", file=sys.stderr)
        oob = getattr(exc, "out_of_bounds", None)
        if oob is not None and np.size(oob):
            print(f"  converged outside the exchange range: {np.array2string(np.asarray(oob)[:3], precision=4)}",
                  file=sys.stderr)
        return EXIT_NO_SOLUTION
    except UnreachableTarget as exc:
        print(f"no physical solution: {exc}", file=sys.stderr)
        return EXIT_NO_SOLUTION
    except (BadInput, InvalidTarget, SequenceFormatError, InsufficientData, ValueError) as exc:
        print(f"bad input: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
