"""Command-line front end.

    cml-stability analyze CONFIG [--verify]
    cml-stability sweep CONFIG --param r --from 0.1 --to 3 --steps 200 [--verify]
    cml-stability simulate CONFIG --history perturb:x2:0.01 --t-end 600 --out traj.csv
    cml-stability legacy-diff CONFIG --from 0.1 --to 3 --steps 200
    cml-stability lyapunov CONFIG --draws 50

Exit codes: 0 ok, 2 config error, 3 empty admissible domain, 4 certificate failure.
"""
from __future__ import annotations

import argparse
import csv
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence, TextIO

import numpy as np

from . import charroots, dde_sim, hayes, lyapunov
from .model import (
    ConfigError,
    DomainError,
    Parameters,
    b_sign_region,
    critical_delay,
    derive_k,
    equilibria,
    load_config,
    parse_config,
    r_max,
    r_n,
    reduced_coeffs,
)

EXIT_OK, EXIT_CONFIG, EXIT_EMPTY, EXIT_CERT = 0, 2, 3, 4

SWEEP_FIELDS = ["x2", "A", "B", "p", "q", "verdict", "case", "margin", "omega0", "rhp_count"]
SWEEPABLE = ("r", "beta0", "delta", "gamma", "n")


def fmt(value) -> str:
    """Deterministic CSV formatting: 17 significant digits, empty for missing values."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


@dataclass(frozen=True)
class SweepRecord:
    params: Parameters
    equilibrium: str
    x2: Optional[float]
    A: Optional[float] = None
    B: Optional[float] = None
    p: Optional[float] = None
    q: Optional[float] = None
    verdict: str = "Absent"
    case: str = ""
    margin: Optional[float] = None
    omega0: Optional[float] = None
    rhp_count: Optional[object] = None
    hopf_r: Optional[float] = None
    g_value: Optional[float] = None

    def row(self) -> list[str]:
        return [fmt(getattr(self, name)) for name in SWEEP_FIELDS]

    @property
    def consistent(self) -> bool:
        if self.verdict != "Stable" or not isinstance(self.rhp_count, int):
            return True
        return self.rhp_count == 0


def analyze_point(
    params: Parameters, which: str = "x2", verify: bool = False, band: float = hayes.DEFAULT_MARGINAL_BAND
) -> SweepRecord:
    """Stability record of one equilibrium; shared by ``analyze`` and ``sweep``."""
    eq = equilibria(params)
    if which == "x2" and not eq.has_x2:
        return SweepRecord(params, which, None)
    rc = reduced_coeffs(params, which)  # type: ignore[arg-type]
    if not params.r > 0:
        return SweepRecord(params, which, eq.x2, rc.A, rc.B, rc.p, rc.q, "NoDelay")
    v = hayes.classify(rc.p, rc.q, params.r, band)
    count = None
    if verify:
        try:
            count = charroots.count_rhp_roots(rc.p, rc.q, params.r).count
        except charroots.MarginalAxisError:
            count = "axis"
    hopf = hayes.hopf_boundary_r(rc.p, rc.q)
    g = None
    if which == "x2":
        try:
            g = hayes.g_of_r(params, params.r)
        except DomainError:
            g = None
    return SweepRecord(
        params,
        which,
        eq.x2,
        rc.A,
        rc.B,
        rc.p,
        rc.q,
        v.status.value,
        v.case_tag.value,
        v.margin,
        v.omega0,
        count,
        hopf.r_star if hopf else None,
        g,
    )


def _params_from_args(args) -> Parameters:
    overrides = {key: getattr(args, key, None) for key in ("beta0", "n", "delta", "gamma", "r")}
    if args.config is None:
        return parse_config("", **overrides)
    return load_config(args.config, **overrides)


def cmd_analyze(params: Parameters, verify: bool = False, band: float = hayes.DEFAULT_MARGINAL_BAND, out: TextIO = sys.stdout) -> int:
    p = params
    eq = equilibria(p)
    w = lambda *parts: print(*parts, file=out)  # noqa: E731
    w(f"parameters: beta0={fmt(p.beta0)} n={fmt(p.n)} delta={fmt(p.delta)} gamma={fmt(p.gamma)} r={fmt(p.r)} k={fmt(derive_k(p))}")
    w(f"equilibria: x1={fmt(eq.x1)} x2={fmt(eq.x2) if eq.has_x2 else 'absent'}")
    w(f"existence_excess: {fmt(p.beta0 / p.delta * (derive_k(p) - 1) - 1)}")
    rm, rn = r_max(p), r_n(p)
    w(f"r_max: {fmt(rm) if rm is not None else 'undefined'}")
    w(f"r_n: {fmt(rn) if rn is not None else 'undefined'}")
    region = b_sign_region(p)
    w(f"b_sign_region: {region.region.value}")
    w("csv_header: " + ",".join(["param"] + SWEEP_FIELDS))
    for which in ("x1", "x2"):
        rec = analyze_point(p, which, verify, band)
        if rec.verdict == "Absent":
            w(f"[{which}] absent")
            continue
        w(f"[{which}] A={fmt(rec.A)} B={fmt(rec.B)} p={fmt(rec.p)} q={fmt(rec.q)}")
        w(f"[{which}] verdict={rec.verdict} case={rec.case} margin={fmt(rec.margin)} omega0={fmt(rec.omega0)}")
        if which == "x1":
            if rec.verdict == "Stable":
                w("[x1] stable: (beta0/delta)(k-1) < 1, x1 is the only equilibrium")
            elif rec.verdict == "Unstable":
                w("[x1] unstable: (beta0/delta)(k-1) > 1, a real root has crossed lambda = 0")
            elif rec.verdict == "Marginal":
                w("[x1] marginal: k beta0 = delta + beta0, lambda = 0 is a root; "
                  "linearization is inconclusive, run `cml-stability lyapunov` to check the Lyapunov functional")
        if rec.hopf_r is not None:
            w(f"[{which}] hopf_r={fmt(rec.hopf_r)}")
        if rec.g_value is not None:
            w(f"[{which}] g={fmt(rec.g_value)}")
        if verify and p.r > 0:
            w(f"[{which}] rhp_count={fmt(rec.rhp_count)}")
            root = charroots.rightmost_root(rec.p, rec.q, p.r)
            w(f"[{which}] rightmost_root={fmt(root.mu)}{'+' if root.omega >= 0 else '-'}{fmt(abs(root.omega))}i "
              f"residual={fmt(root.residual)} validated={root.validated}")
        w(f"[{which}] record: " + ",".join([fmt(p.r)] + rec.row()))
    return EXIT_OK


def _point(args):
    params, which, verify, band = args
    return analyze_point(params, which, verify, band)


def _grid(lo: float, hi: float, steps: int) -> np.ndarray:
    if steps < 1:
        raise ValueError("steps must be at least 1")
    return np.linspace(lo, hi, steps)


def _admissible(base: Parameters, changes: dict) -> Optional[Parameters]:
    try:
        return base.replace(**changes)
    except ValueError:
        return None


def _margin_at(base: Parameters, name: str, value: float, which: str) -> Optional[float]:
    params = _admissible(base, {name: value})
    if params is None or params.r <= 0:
        return None
    try:
        rc = reduced_coeffs(params, which)  # type: ignore[arg-type]
        return hayes.classify(rc.p, rc.q, params.r).margin
    except DomainError:
        return None


def _bisect_margin(base, name, a, b, ma, which, tol=1e-12):
    for _ in range(200):
        if abs(b - a) <= tol * max(1.0, abs(a)):
            break
        mid = 0.5 * (a + b)
        mm = _margin_at(base, name, mid, which)
        if mm is None:
            return None
        if (mm > 0) == (ma > 0):
            a, ma = mid, mm
        else:
            b = mid
    return 0.5 * (a + b)


def cmd_sweep(
    params: Parameters,
    name: str,
    lo: float,
    hi: float,
    steps: int,
    verify: bool = False,
    which: str = "x2",
    band: float = hayes.DEFAULT_MARGINAL_BAND,
    second: Optional[tuple[str, float, float, int]] = None,
    jobs: int = 1,
    out: TextIO = sys.stdout,
    err: TextIO = sys.stderr,
) -> int:
    if name not in SWEEPABLE or (second and second[0] not in SWEEPABLE):
        raise ConfigError(f"swept parameter must be one of {', '.join(SWEEPABLE)}")
    values = _grid(lo, hi, steps)
    cells: list[tuple[tuple[float, ...], Parameters]] = []
    if second is None:
        for v in values:
            pp = _admissible(params, {name: float(v)})
            if pp is not None:
                cells.append(((float(v),), pp))
    else:
        name2, lo2, hi2, steps2 = second
        for v in values:
            for v2 in _grid(lo2, hi2, steps2):
                pp = _admissible(params, {name: float(v), name2: float(v2)})
                if pp is not None:
                    cells.append(((float(v), float(v2)), pp))
    tasks = [(pp, which, verify, band) for _, pp in cells]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_point, tasks, chunksize=16))
    else:
        records = [_point(t) for t in tasks]
    if not any(rec.verdict not in ("Absent", "NoDelay") for rec in records):
        print(f"error: no admissible grid point with equilibrium {which} in the requested range", file=err)
        return EXIT_EMPTY

    writer = csv.writer(out, lineterminator="\n")
    header = ["param"] + (["param2"] if second else []) + SWEEP_FIELDS
    writer.writerow(header)
    inconsistent = 0
    for (key, _), rec in zip(cells, records):
        writer.writerow([fmt(k) for k in key] + rec.row())
        if not rec.consistent:
            inconsistent += 1
    if inconsistent:
        print(f"warning: {inconsistent} records with verdict Stable but rhp_count > 0", file=err)

    if second is None:
        out.write(f"# sweep {name} from {fmt(lo)} to {fmt(hi)} steps {steps} equilibrium {which}\n")
        prev = None
        for (key, pp), rec in zip(cells, records):
            if rec.verdict not in ("Stable", "Unstable"):
                prev = None if rec.verdict != "Marginal" else prev
                continue
            if prev is not None and prev[1].verdict != rec.verdict:
                a, b = prev[0][0], key[0]
                switch = _bisect_margin(params, name, a, b, prev[1].margin, which)
                line = f"# switch {name}={fmt(switch)} {prev[1].verdict}->{rec.verdict}"
                if name == "r" and which == "x2":
                    try:
                        g_root = hayes.find_stability_switch(params, min(a, b), max(a, b))
                    except ValueError:
                        g_root = None
                    line += f" g_root={fmt(g_root)}"
                out.write(line + "\n")
            prev = (key, rec)
    return EXIT_OK


def parse_history(spec: str) -> dde_sim.History:
    kind, _, rest = spec.partition(":")
    try:
        if kind == "const":
            return dde_sim.Constant(float(rest))
        if kind == "perturb":
            which, _, amp = rest.partition(":")
            if which not in ("x1", "x2"):
                raise ValueError
            return dde_sim.PerturbedEquilibrium(which, float(amp))
        if kind == "file":
            return dde_sim.load_history_csv(rest)
    except (ValueError, IndexError, OSError) as exc:
        raise ConfigError(f"bad --history {spec!r}: {exc}") from None
    raise ConfigError(f"bad --history {spec!r}; use const:LEVEL, perturb:x1|x2:AMP or file:PATH")


def cmd_simulate(
    params: Parameters,
    history: dde_sim.History,
    t_end: Optional[float],
    h: Optional[float],
    out_path: Optional[str],
    dt: Optional[float] = None,
    out: TextIO = sys.stdout,
    err: TextIO = sys.stderr,
) -> int:
    if t_end is None:
        t_end = 60.0 * params.r
    try:
        traj = dde_sim.integrate(params, history, t_end, h)
    except DomainError as exc:
        raise ConfigError(str(exc)) from None
    report_stream = out
    if out_path:
        dde_sim.write_trajectory_csv(traj, out_path, dt)
    else:
        dde_sim.write_trajectory_csv(traj, out, dt)
        report_stream = err
    w = lambda *parts: print(*parts, file=report_stream)  # noqa: E731
    w(f"steps: {len(traj.nodes) - 1} h={fmt(traj.step)} t_end={fmt(traj.t_end)} failed={traj.failed}")
    ok = not traj.failed
    if traj.positivity is not None:
        c = traj.positivity
        w(f"positivity: passed={c.passed} min={fmt(c.minimum)} at t={fmt(c.location)}")
        ok &= c.passed
    else:
        w("positivity: not certified (history is negative somewhere)")
    if traj.boundedness is not None:
        b = traj.boundedness
        w(f"boundedness: passed={b.passed} epsilon={fmt(b.epsilon)} eta={fmt(b.eta)} max_violation={fmt(b.max_violation)}")
        ok &= b.passed
    elif not traj.failed and traj.positivity is not None:
        w("boundedness: not applicable (the a-priori bound needs n >= 2)")
    if not traj.failed:
        rep = dde_sim.classify_asymptotics(traj)
        detail = ""
        if rep.verdict == "ConvergedTo":
            detail = f" {rep.equilibrium} final_gap={fmt(rep.final_gap)}"
        elif rep.verdict == "SustainedOscillation":
            detail = f" amplitude={fmt(rep.amplitude)} period={fmt(rep.period)}"
        w(f"asymptotics: {rep.verdict}{detail}")
    return EXIT_OK if ok else EXIT_CERT


LEGACY_FIELDS = ["r", "B", "p", "q", "correct", "legacy", "rel_gap", "verdict", "rhp_count", "legacy_verdict", "flag"]


def legacy_row(params: Parameters) -> Optional[dict]:
    """One row of the legacy comparison at ``params.r``; ``None`` when x2 is absent."""
    if not equilibria(params).has_x2 or not params.r > 0:
        return None
    rc = reduced_coeffs(params, "x2")
    r = params.r
    correct = hayes.correct_boundary(rc.p, rc.q, r) if rc.B < 0 else None
    legacy = hayes.legacy_pmm_boundary(rc.p, rc.q) if rc.B < 0 else None
    gap = abs(correct - legacy) / abs(legacy) if correct is not None and legacy is not None else None
    # verdict from the root count; the contour excludes axis roots, so band points are reported Marginal
    try:
        count: object = charroots.count_rhp_roots(rc.p, rc.q, r).count
        verdict = "Stable" if count == 0 else "Unstable"
    except charroots.MarginalAxisError:
        count, verdict = "axis", "Marginal"
    if hayes.classify(rc.p, rc.q, r).status is hayes.Status.MARGINAL:
        verdict = "Marginal"
    legacy_verdict = None
    if legacy is not None:
        legacy_verdict = "Stable" if r < legacy else "Unstable"
    flag = legacy_verdict is not None and verdict != "Marginal" and legacy_verdict != verdict
    return {
        "r": r, "B": rc.B, "p": rc.p, "q": rc.q, "correct": correct, "legacy": legacy,
        "rel_gap": gap, "verdict": verdict, "rhp_count": count,
        "legacy_verdict": legacy_verdict, "flag": flag,
    }


def cmd_legacy_diff(params: Parameters, lo: float, hi: float, steps: int, out: TextIO = sys.stdout, err: TextIO = sys.stderr) -> int:
    rows = []
    for r in _grid(lo, hi, steps):
        pp = _admissible(params, {"r": float(r)})
        row = legacy_row(pp) if pp is not None else None
        if row is not None:
            rows.append(row)
    if not any(row["B"] < 0 for row in rows):
        print("error: no scanned delay has x2 with B < 0", file=err)
        return EXIT_EMPTY
    hopf = None
    if lo > 0:
        hopf = hayes.find_stability_switch(params, lo, hi, scan_points=max(steps, 200))
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(LEGACY_FIELDS)
    for row in rows:
        writer.writerow([fmt(row[k]) for k in LEGACY_FIELDS])
    hopf_row = legacy_row(params.replace(r=hopf)) if hopf is not None else None
    if hopf_row is not None:
        writer.writerow([fmt(hopf_row[k]) for k in LEGACY_FIELDS])
    gaps = [row["rel_gap"] for row in rows if row["rel_gap"] is not None]
    out.write(f"# max_rel_gap={fmt(max(gaps) if gaps else None)}\n")
    out.write(f"# hopf_r={fmt(hopf)}\n")
    out.write(f"# hopf_rel_gap={fmt(hopf_row['rel_gap'] if hopf_row else None)}\n")
    out.write(f"# flagged_rows={sum(1 for row in rows if row['flag'])}\n")
    return EXIT_OK


def cmd_lyapunov(params: Parameters, draws: int, seed: int = 0, out: TextIO = sys.stdout) -> int:
    rc = critical_delay(params.beta0, params.delta, params.gamma)
    if rc is None or rc == 0:
        print("error: no positive delay puts these parameters on k beta0 = delta + beta0", file=out)
        return EXIT_EMPTY
    crit = params.replace(r=rc)
    print(f"critical delay: r={fmt(rc)} defect={fmt(lyapunov.critical_defect(crit))}", file=out)
    rep = lyapunov.verify_critical_stability(crit, draws, seed=seed)
    print(
        f"lyapunov: passed={rep.passed} draws={rep.draws} max_step_increase={fmt(rep.max_step_increase)} "
        f"max_excess_over_bound={fmt(rep.max_excess_over_bound)}",
        file=out,
    )
    return EXIT_OK if rep.passed else EXIT_CERT


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cml-stability", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", nargs="?", help="key=value scenario file (beta0, n, delta, gamma, r)")
    for key in ("beta0", "n", "delta", "gamma", "r"):
        common.add_argument(f"--{key}", type=float, help=f"override {key}")
    common.add_argument("--band", type=float, default=hayes.DEFAULT_MARGINAL_BAND, help="marginal band on the margin")
    sub = parser.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", parents=[common], help="single-point stability report")
    a.add_argument("--verify", action="store_true", help="count right-half-plane roots and locate the rightmost root")

    s = sub.add_parser("sweep", parents=[common], help="1-D or 2-D parameter sweep as CSV")
    s.add_argument("--param", required=True, choices=SWEEPABLE)
    s.add_argument("--from", dest="lo", type=float, required=True)
    s.add_argument("--to", dest="hi", type=float, required=True)
    s.add_argument("--steps", type=int, required=True)
    s.add_argument("--param2", choices=SWEEPABLE)
    s.add_argument("--from2", dest="lo2", type=float)
    s.add_argument("--to2", dest="hi2", type=float)
    s.add_argument("--steps2", type=int)
    s.add_argument("--equilibrium", choices=("x1", "x2"), default="x2")
    s.add_argument("--verify", action="store_true")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out")

    m = sub.add_parser("simulate", parents=[common], help="integrate the model and certify the run")
    m.add_argument("--history", default="perturb:x2:0.01", help="const:LEVEL | perturb:{x1|x2}:AMP | file:PATH")
    m.add_argument("--t-end", type=float)
    m.add_argument("--h", type=float)
    m.add_argument("--dt", type=float, help="resample the dense output at this spacing")
    m.add_argument("--out")

    d = sub.add_parser("legacy-diff", parents=[common], help="compare the corrected and legacy stability bounds")
    d.add_argument("--from", dest="lo", type=float, required=True)
    d.add_argument("--to", dest="hi", type=float, required=True)
    d.add_argument("--steps", type=int, default=200)
    d.add_argument("--out")

    ly = sub.add_parser("lyapunov", parents=[common], help="check the Lyapunov functional on the critical set")
    ly.add_argument("--draws", type=int, default=50)
    ly.add_argument("--seed", type=int, default=0)
    return parser


def _open_out(path: Optional[str]):
    return open(path, "w", newline="", encoding="utf-8") if path else sys.stdout


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "lyapunov" and args.r is None:
            # r is replaced by the critical delay, so it is optional here
            args.r = 0.0
        params = _params_from_args(args)
        if args.command == "analyze":
            return cmd_analyze(params, args.verify, args.band, out=sys.stdout)
        if args.command == "sweep":
            second = None
            if args.param2:
                if None in (args.lo2, args.hi2, args.steps2):
                    raise ConfigError("--param2 needs --from2, --to2 and --steps2")
                second = (args.param2, args.lo2, args.hi2, args.steps2)
            out = _open_out(args.out)
            try:
                return cmd_sweep(params, args.param, args.lo, args.hi, args.steps, args.verify,
                                 args.equilibrium, args.band, second, args.jobs, out, sys.stderr)
            finally:
                if out is not sys.stdout:
                    out.close()
        if args.command == "simulate":
            return cmd_simulate(params, parse_history(args.history), args.t_end, args.h, args.out, args.dt,
                                sys.stdout, sys.stderr)
        if args.command == "legacy-diff":
            out = _open_out(args.out)
            try:
                return cmd_legacy_diff(params, args.lo, args.hi, args.steps, out, sys.stderr)
            finally:
                if out is not sys.stdout:
                    out.close()
        if args.command == "lyapunov":
            return cmd_lyapunov(params, args.draws, args.seed, sys.stdout)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_CONFIG  # pragma: no cover


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
