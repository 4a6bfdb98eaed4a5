"""Command-line front end.

Five subcommands, each wrapping one pipeline:

* ``simulate``  -- run the event-driven dynamics, write the trajectory
  table, event list, and summary;
* ``certify``   -- run (or ingest) a trajectory and check the entropy
  certificates: Rankine-Hugoniot residuals, Oleinik margins, Kruzkov
  residuals;
* ``converge``  -- distances between discretization levels and a fine
  reference level;
* ``stability`` -- measured W1 between two scenarios against the
  a-priori bounds;
* ``kernels``   -- list the built-in kernel families and their norms.

Artifacts are CSV/JSON plus rendered PNG figures (``--no-figures`` to
skip).  All files are written atomically (temp + rename).  Exit codes:
0 success, 1 assertion failure (violated certificate or exceeded
bound), 2 input error.  ``NARZ_THREADS`` caps study workers.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from .bumps import Bump, TestFunction
from .cumulative import (
    CertificateRow,
    KruzkovPair,
    certify_state,
    entropy_residual,
)
from .dynamics import (
    ParticleSystem,
    Tolerances,
    Trajectory,
    TrajectoryRecord,
    a_priori_bounds,
    simulate,
)
from .errors import InsufficientSnapshots, NarzError, ScenarioError, ValidationError
from .kernels import BUILTIN_FAMILIES, make_builtin, validate_hypotheses
from .metrics import convergence_study, stability_experiment
from .scenario import Scenario, parse_scenario, resolve_particles
from . import plots

__all__ = ["main"]


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _write_csv(path: Path, header: list[str], rows) -> None:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    _write_atomic(path, buf.getvalue())


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_json_safe(v) for v in obj.tolist()]
    return obj


def _write_json(path: Path, obj) -> None:
    _write_atomic(path, json.dumps(_json_safe(obj), indent=2, sort_keys=True) + "\n")


def _out_dir(scn: Scenario, override: str | None) -> Path:
    target = override or scn.out_dir or f"narz_out/{scn.name}"
    p = Path(target)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _trajectory_rows(traj: Trajectory):
    for rec in traj.records:
        st = rec.state
        for i in range(st.n):
            yield (rec.time, i, st.x[i], st.v[i], st.m[i], int(st.cluster[i]), rec.psi[i])


def _events_payload(traj: Trajectory):
    return [
        {"t": e.time, "kind": e.kind, "indices": list(e.indices)}
        for e in traj.events
    ]


def _run_scenario(scn: Scenario, substep: float | None = None, snapshots=None):
    system, flux = resolve_particles(scn)
    tol = scn.tolerances
    if substep is not None:
        tol = dataclasses.replace(tol, substep=substep)
    times = scn.snapshots if snapshots is None else snapshots
    traj = simulate(system, scn.kernel, scn.horizon, snapshot_times=times, tol=tol)
    return system, flux, traj


def cmd_simulate(args) -> int:
    scn = parse_scenario(args.scenario)
    out = _out_dir(scn, args.out)
    system, flux, traj = _run_scenario(scn, substep=args.substep)
    bounds = a_priori_bounds(system, scn.kernel)

    _write_csv(
        out / "trajectory.csv",
        ["t", "i", "x", "v", "m", "cluster", "psi"],
        _trajectory_rows(traj),
    )
    _write_json(out / "events.json", _events_payload(traj))
    final = traj.final_state()
    summary = scn.summary_header()
    summary.update(
        {
            "n_initial_clusters": system.n_clusters,
            "n_final_clusters": final.n_clusters,
            "n_collision_events": len(traj.collisions()),
            "collision_times": [e.time for e in traj.collisions()],
            "flux": flux.to_dict(),
            "bounds": {
                "psi_lo": bounds.psi_lo,
                "psi_hi": bounds.psi_hi,
                "vel_lo": bounds.vel_lo,
                "vel_hi": bounds.vel_hi,
                "m_tilde": bounds.m_tilde,
                "r0": bounds.r0,
            },
        }
    )
    _write_json(out / "summary.json", summary)
    if not args.no_figures:
        plots.plot_trajectory(traj, out / "fig_trajectory.png")
        plots.plot_cumulative(traj, out / "fig_cumulative.png")
    print(f"simulate: {len(traj.collisions())} collisions, artifacts in {out}")
    return 0


def _parse_alphas(text: str) -> tuple[float, ...]:
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValidationError("--alphas expects lo:hi:step")
        lo, hi, step = (float(p) for p in parts)
        if step <= 0 or hi < lo:
            raise ValidationError("--alphas expects lo <= hi and step > 0")
        n = int(round((hi - lo) / step))
        vals = [lo + k * step for k in range(n + 1)]
    else:
        vals = [float(p) for p in text.split(",") if p]
    if any(a < 0 or a > 1 for a in vals):
        raise ValidationError("--alphas values must lie in [0, 1]")
    return tuple(vals)


def _read_trajectory_csv(path, kernel) -> Trajectory:
    """Rebuild a trajectory from a trajectory.csv file (for certifying
    runs produced earlier, possibly by other tools)."""
    from .fastsum import kernel_sums

    groups: list[tuple[float, list[list[float]]]] = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            try:
                t = float(row["t"])
                vals = [float(row["x"]), float(row["v"]), float(row["m"]), float(row["cluster"])]
                idx = int(row["i"])
            except (KeyError, TypeError, ValueError) as e:
                raise ValidationError(f"trajectory file {path} has a malformed row: {e}") from e
            if idx == 0:
                # each record block restarts the particle index at 0
                # (pre- and post-merge states can share one time)
                groups.append((t, []))
            elif not groups:
                raise ValidationError(f"trajectory file {path} must start at particle index 0")
            groups[-1][1].append(vals)
    records = []
    for t, rows in groups:
        arr = np.array(rows)
        try:
            state = ParticleSystem(
                time=t, x=arr[:, 0], v=arr[:, 1], m=arr[:, 2], cluster=arr[:, 3].astype(int)
            )
        except ValueError as e:
            raise ValidationError(
                f"trajectory file {path} has an inadmissible state at t={t}: {e}"
            ) from e
        psi = state.v + kernel_sums(state.x, state.m, kernel, "omega", x_eval=state.x)[0]
        records.append(TrajectoryRecord(time=t, state=state, psi=psi))
    if not records:
        raise ValidationError(f"trajectory file {path} contains no records")
    return Trajectory(records=tuple(records), events=())


def _certify_tests(traj: Trajectory, horizon: float) -> list[TestFunction]:
    """Three deterministic space-time bumps around the recorded
    collisions (empty when the run has none)."""
    cols = traj.collisions()
    if not cols:
        return []
    span = max(abs(float(rec.state.x[k])) for rec in traj.records for k in (0, -1))
    picks = [cols[0], cols[len(cols) // 2], cols[-1]]
    tests = []
    shrink = 1.0
    for ev in picks:
        rec = next(r for r in traj.records if r.time == ev.time)
        xc = float(rec.state.x[ev.indices[0]])
        tw = 0.85 * min(ev.time, horizon - ev.time) * shrink
        if tw <= horizon / 100.0:
            tw = min(0.45 * horizon, max(4 * horizon / 100.0, tw))
        tc = min(max(ev.time, tw * 1.01), horizon - tw * 1.01)
        tests.append(
            TestFunction(space=Bump(center=xc, width=0.6 * span * shrink), time=Bump(center=tc, width=tw))
        )
        shrink *= 0.7
    return tests


def cmd_certify(args) -> int:
    scn = parse_scenario(args.scenario)
    out = _out_dir(scn, args.out)
    thresholds = scn.certificates
    alphas = _parse_alphas(args.alphas) if args.alphas else thresholds.alphas

    if args.trajectory:
        system, flux = resolve_particles(scn)
        traj = _read_trajectory_csv(args.trajectory, scn.kernel)
    else:
        # certification wants densely sampled records for the entropy
        # quadrature and a finer substep than the general default so
        # invariant drift stays well under the RH threshold
        n_dense = max(2001, 2 * len(scn.snapshots))
        dense = np.linspace(0.0, scn.horizon, n_dense)
        substep = scn.tolerances.substep
        if substep is None:
            substep = scn.horizon / 4e4
        system, flux, traj = _run_scenario(scn, substep=substep, snapshots=dense)

    # keep the last record per time so post-merge states are the ones
    # certified at collision instants
    by_time: dict[float, TrajectoryRecord] = {}
    for rec in traj.records:
        by_time[rec.time] = rec
    cert_rows: list[CertificateRow] = []
    for rec in by_time.values():
        cert_rows.extend(certify_state(rec.state, flux, scn.kernel))

    violations = []
    for row in cert_rows:
        if row.rh_residual > thresholds.rh_tol:
            violations.append(
                {"t": row.t, "cluster": row.cluster, "kind": "rankine_hugoniot", "value": row.rh_residual}
            )
        if row.oleinik_margin < -thresholds.oleinik_tol:
            violations.append(
                {"t": row.t, "cluster": row.cluster, "kind": "oleinik", "value": row.oleinik_margin}
            )

    tests = _certify_tests(traj, scn.horizon)
    entropy_rows = []
    for ti, test in enumerate(tests):
        for alpha in alphas:
            try:
                res = entropy_residual(
                    traj, flux, scn.kernel, KruzkovPair(alpha), test, quad_tol=thresholds.quad_tol
                )
            except InsufficientSnapshots as e:
                print(f"certify: skipping test {ti}, alpha {alpha}: {e}", file=sys.stderr)
                continue
            entropy_rows.append({"test": ti, "alpha": alpha, "residual": res})
            if res < -thresholds.kruzkov_tol:
                violations.append(
                    {"t": test.time.center, "cluster": -1, "kind": "kruzkov", "value": res, "alpha": alpha}
                )

    _write_csv(
        out / "certificates.csv",
        ["t", "cluster", "rh_residual", "oleinik_margin"],
        [(r.t, r.cluster, r.rh_residual, r.oleinik_margin) for r in cert_rows],
    )
    _write_csv(
        out / "entropy.csv",
        ["test", "alpha", "residual"],
        [(e["test"], e["alpha"], e["residual"]) for e in entropy_rows],
    )
    finite_margins = [r.oleinik_margin for r in cert_rows if math.isfinite(r.oleinik_margin)]
    summary = scn.summary_header()
    summary.update(
        {
            "thresholds": {
                "rh_tol": thresholds.rh_tol,
                "oleinik_tol": thresholds.oleinik_tol,
                "kruzkov_tol": thresholds.kruzkov_tol,
            },
            "alphas": list(alphas),
            "n_states_checked": len(by_time),
            "n_clusters_checked": len(cert_rows),
            "worst_rh_residual": max((r.rh_residual for r in cert_rows), default=0.0),
            "worst_oleinik_margin": min(finite_margins, default=math.inf),
            "n_entropy_checks": len(entropy_rows),
            "min_entropy_residual": min((e["residual"] for e in entropy_rows), default=None),
            "violations": violations,
            "ok": not violations,
        }
    )
    _write_json(out / "summary.json", summary)
    if not args.no_figures:
        plots.plot_certificates(cert_rows, entropy_rows, out / "fig_certificates.png")

    if violations:
        # lead with the worst offender: largest RH residual, most
        # negative Oleinik or Kruzkov value
        def severity(v):
            return v["value"] if v["kind"] == "rankine_hugoniot" else -v["value"]

        violations.sort(key=severity, reverse=True)
        v = violations[0]
        where = f"cluster {v['cluster']}" if v["cluster"] >= 0 else f"alpha {v.get('alpha')}"
        print(
            f"certify: FAILED {v['kind']} at t={v['t']:g}, {where}: value {v['value']:.3e}",
            file=sys.stderr,
        )
        return 1
    print(
        f"certify: ok ({len(cert_rows)} cluster checks, {len(entropy_rows)} entropy checks), "
        f"artifacts in {out}"
    )
    return 0


def cmd_converge(args) -> int:
    scn = parse_scenario(args.scenario)
    if scn.datum is None:
        raise ValidationError("converge requires continuum initial data")
    ns = tuple(int(v) for v in args.ns.split(",")) if args.ns else scn.ns
    if not ns:
        raise ValidationError("converge needs Ns (scenario key or --ns)")
    n_ref = args.nref if args.nref else scn.n_ref
    out = _out_dir(scn, args.out)

    table = convergence_study(
        scn.datum,
        scn.kernel,
        scn.horizon,
        ns=ns,
        n_ref=n_ref,
        u0=scn.u0,
        substep=scn.tolerances.substep,
    )
    _write_csv(
        out / "convergence.csv",
        ["N", "t", "distance", "bound"],
        [(r.n, r.t, r.distance, r.bound) for r in table.rows],
    )
    times = sorted({r.t for r in table.rows})
    checks = {}
    for t in times:
        seq = [d for _, d in sorted(table.distances_at(t))]
        mono = all(b <= a * 1.5 for a, b in zip(seq, seq[1:]))
        checks[f"nonincreasing_t={t:g}"] = mono
    bound_ok = all(
        r.distance <= r.bound for r in table.rows if not math.isnan(r.bound)
    )
    checks["t0_bound"] = bound_ok
    summary = scn.summary_header()
    summary.update(
        {
            "Ns": list(ns),
            "N_ref": n_ref,
            "checks": checks,
            "moment_drift": table.moment_drift,
            "ok": all(checks.values()),
        }
    )
    _write_json(out / "summary.json", summary)
    if not args.no_figures:
        plots.plot_convergence(table, out / "fig_convergence.png")
    if not all(checks.values()):
        bad = [k for k, v in checks.items() if not v]
        print(f"converge: FAILED checks: {', '.join(bad)}", file=sys.stderr)
        return 1
    print(f"converge: ok over N={list(ns)} vs {n_ref}, artifacts in {out}")
    return 0


def cmd_stability(args) -> int:
    scn_a = parse_scenario(args.scenario_a)
    scn_b = parse_scenario(args.scenario_b)
    for scn in (scn_a, scn_b):
        if scn.datum is None:
            raise ValidationError("stability requires continuum initial data in both scenarios")
    if (scn_a.kernel.name, scn_a.kernel.params) != (scn_b.kernel.name, scn_b.kernel.params):
        raise ValidationError("stability scenarios must share one kernel")
    n = scn_a.n or scn_b.n
    if n is None:
        raise ValidationError("stability needs N in the first scenario")
    out = _out_dir(scn_a, args.out)

    horizon = scn_a.horizon
    times = [t for t in scn_a.snapshots if t > 0] or [horizon / 4, horizon / 2, horizon]
    report = stability_experiment(
        scn_a.datum,
        scn_a.u0,
        scn_b.datum,
        scn_b.u0,
        scn_a.kernel,
        horizon,
        n,
        times=times,
        substep=scn_a.tolerances.substep,
    )
    _write_csv(
        out / "stability.csv",
        ["t", "measured", "exp_bound", "linear_bound", "min_bound", "within", "p_moment_drift"],
        [
            (r.t, r.measured, r.exp_bound, r.linear_bound, r.min_bound, int(r.within), r.p_moment_drift)
            for r in report.rows
        ],
    )
    summary = scn_a.summary_header()
    summary.update(
        {
            "scenario_b": scn_b.name,
            "w1_0": report.w1_0,
            "lip_diff": report.lip_diff,
            "tol_meas": report.tol_meas,
            "rows": [dataclasses.asdict(r) for r in report.rows],
            "ok": report.all_within,
        }
    )
    _write_json(out / "summary.json", summary)
    if not args.no_figures:
        plots.plot_stability(report, out / "fig_stability.png")
    if not report.all_within:
        bad = [r.t for r in report.rows if not r.within]
        print(f"stability: FAILED bound at t={bad}", file=sys.stderr)
        return 1
    print(f"stability: ok at t={[r.t for r in report.rows]}, artifacts in {out}")
    return 0


def cmd_kernels(args) -> int:
    ks = [make_builtin(f, (args.radius,)) for f in BUILTIN_FAMILIES]
    print(f"built-in kernel families at radius r = {args.radius:g}")
    print(f"{'family':<20} {'support':<22} {'sup omega':>10} {'sup phi':>10} {'l1 phi':>8}  admissible")
    rows = []
    for k in ks:
        rep = validate_hypotheses(k)
        a, b = k.support
        print(
            f"{k.name:<20} [{a:+.3f}, {b:+.3f}]      {k.sup_omega:>10.4g} {k.sup_phi:>10.4g} "
            f"{k.l1_phi:>8.4g}  {'yes' if rep.admissible else 'NO'}"
        )
        rows.append(
            {
                "family": k.name,
                "support": [a, b],
                "sup_omega": k.sup_omega,
                "sup_phi": k.sup_phi,
                "l1_phi": k.l1_phi,
                "admissible": rep.admissible,
                "mass": rep.mass,
            }
        )
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "kernels.json", rows)
        plots.plot_kernels(ks, out / "kernels.png")
        print(f"wrote {out/'kernels.json'} and {out/'kernels.png'}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="narz",
        description="event-driven sticky particles and entropy certificates "
        "for a nonlocal second-order traffic model",
    )
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("simulate", help="run the dynamics, write trajectory artifacts")
    ps.add_argument("scenario")
    ps.add_argument("--out", default=None, help="output directory")
    ps.add_argument("--substep", type=float, default=None, help="integrator substep override")
    ps.add_argument("--no-figures", action="store_true")
    ps.set_defaults(func=cmd_simulate)

    pc = sub.add_parser("certify", help="check RH / Oleinik / Kruzkov certificates")
    pc.add_argument("scenario")
    pc.add_argument("--alphas", default=None, help="lo:hi:step or comma list, default 0.1:0.9:0.1")
    pc.add_argument("--trajectory", default=None, help="certify an existing trajectory.csv")
    pc.add_argument("--out", default=None)
    pc.add_argument("--no-figures", action="store_true")
    pc.set_defaults(func=cmd_certify)

    pv = sub.add_parser("converge", help="distances to a reference discretization level")
    pv.add_argument("scenario")
    pv.add_argument("--ns", default=None, help="comma list of levels, e.g. 64,128,256")
    pv.add_argument("--nref", type=int, default=None)
    pv.add_argument("--out", default=None)
    pv.add_argument("--no-figures", action="store_true")
    pv.set_defaults(func=cmd_converge)

    pt = sub.add_parser("stability", help="measured W1 between two scenarios vs bounds")
    pt.add_argument("scenario_a")
    pt.add_argument("scenario_b")
    pt.add_argument("--out", default=None)
    pt.add_argument("--no-figures", action="store_true")
    pt.set_defaults(func=cmd_stability)

    pk = sub.add_parser("kernels", help="list built-in kernel families")
    pk.add_argument("--radius", type=float, default=1.0)
    pk.add_argument("--out", default=None, help="also render shapes and a JSON table")
    pk.set_defaults(func=cmd_kernels)
    return p


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as e:
        print(f"narz: input error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"narz: io error: {e}", file=sys.stderr)
        return 2
    except NarzError as e:
        print(f"narz: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
