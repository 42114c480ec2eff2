"""Command line front end: ``choreo run|export|plot|stability``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import archive as io
from .continuation import ContinuationConfig, ContinuationError, run_polygon_to_eight
from .model import ModelParams, classify_frequency

log = logging.getLogger("choreo")


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------

def _validate(n: int, m: int, k: int) -> ModelParams:
    if n < 3 or n % 2 == 0:
        raise UsageError(f"--n must be odd and >= 3 (got {n}); even n has no figure eight")
    if m < 8:
        raise UsageError(f"--m must be >= 8 (got {m})")
    try:
        return ModelParams(n=n, m=m, k=k)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def cmd_run(args) -> int:
    if args.resume:
        man = io.read_manifest(args.resume)
        n, m, k = man["n"], man["m"], man["k"]
        config = ContinuationConfig(**man["config"])
        src = _manifest_dir(args.resume)
        out = Path(args.out) if args.out else src
        if man.get("status") == "complete" and out.resolve() == src.resolve():
            log.info("archive already complete; skipping the continuation")
            return _post_run(io.read_archive(out), out, args)
    else:
        if args.n is None or args.m is None:
            raise UsageError("run needs --n and --m (or --resume)")
        n, m, k = args.n, args.m, args.k
        kw = {}
        if args.ds is not None:
            kw.update(ds=args.ds, ds_min=min(1e-6, args.ds), ds_max=max(1e-2, args.ds))
        if args.max_steps is not None:
            kw["max_steps"] = args.max_steps
        config = ContinuationConfig(**kw)
        out = Path(args.out or f"run_n{n}_m{m}")
    params = _validate(n, m, k)
    t0 = time.perf_counter()
    try:
        arch, X_eight, _ = run_polygon_to_eight(params, config)
    except ContinuationError as exc:
        from .continuation import BranchArchive
        partial = getattr(exc, "archive", None) or BranchArchive(params, config)
        io.write_archive(partial, out,
                         status=f"failed: {exc.stage or 'run'}",
                         wall_clock=time.perf_counter() - t0)
        print(f"choreo run: stage '{exc.stage}' failed: {exc}", file=sys.stderr)
        return 1
    wall = time.perf_counter() - t0
    io.write_archive(arch, out, status="complete", wall_clock=wall)
    kc = classify_frequency(X_eight[-1], params)
    print(f"eight reached at omega = {X_eight[-1]:.15g} "
          f"(p, q) = {(kc.p, kc.q) if kc else None}; {len(arch.records)} records, "
          f"{arch.switches} branch switch(es), {wall:.1f}s -> {out}")
    return _post_run(arch, out, args)


def _manifest_dir(path) -> Path:
    p = Path(path)
    return p if p.is_dir() else p.resolve().parent


def _post_run(arch, out: Path, args) -> int:
    if args.with_stability:
        _stability(arch, out, stride=args.stride, threads=args.threads)
    if args.plot:
        from . import plotting
        plotting.plot_diagram(arch, out / "diagram.svg")
        if arch.eight_key:
            plotting.plot_orbit(arch, arch.eight_key, out / f"orbit_{arch.eight_key}.svg")
    return 0


# ---------------------------------------------------------------------------
# stability
# ---------------------------------------------------------------------------

def _stability(arch, out: Path, stride: int, threads: int | None) -> dict:
    from .stability import monodromy, morse_profile
    from .state import u_from_real

    profile = morse_profile(arch, stride=stride, threads=threads)
    summary = {"stride": stride, "profile": profile}
    if arch.eight_key:
        p = arch.params
        X = arch.states[arch.eight_key]
        res = monodromy(u_from_real(X, p.n, p.m), float(X[-1]), p)
        for rec in arch.records:
            if rec.state_ref == arch.eight_key:
                rec.morse_index = res.morse_index
        summary["eight"] = {
            "morse_index": res.morse_index,
            "symplectic_defect": res.symplectic_defect,
            "unit_circle_defect": res.unit_circle_defect,
            "max_modulus_defect": res.max_modulus_defect,
            "multipliers": [[z.real, z.imag] for z in res.multipliers],
        }
        print(f"eight: Morse index {res.morse_index}, max ||lambda|-1| = "
              f"{res.max_modulus_defect:.2e}, |det M - 1| = {res.symplectic_defect:.2e}")
    man = io.read_manifest(out) if (out / io.MANIFEST).exists() else {}
    io.write_archive(arch, out, status=man.get("status", "complete"),
                     wall_clock=man.get("wall_clock"))
    (out / "stability.json").write_text(json.dumps(summary, indent=2))
    indices = sorted({v for v in profile.values() if v is not None})
    print(f"Morse indices along the branch: {indices}")
    return summary


def cmd_stability(args) -> int:
    out = _manifest_dir(args.archive)
    arch = io.read_archive(out)
    _stability(arch, out, stride=args.stride, threads=args.threads)
    return 0


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def _resolve_key(arch, step: str) -> str:
    if step == "eight":
        if not arch.eight_key:
            raise UsageError("archive has no eight")
        return arch.eight_key
    key = f"{int(step):05d}"
    if key not in arch.states:
        raise UsageError(f"no archived state for step {step}")
    return key


def export_samples(X: np.ndarray, params: ModelParams, frame: str, samples: int):
    """Rows ``(t, body, x, y, z)`` for all bodies."""
    from .stability import InertialCurve, eval_series, inertial_period, reconstruct_bodies
    from .state import u_from_real

    omega = float(X[-1])
    bodies = reconstruct_bodies(u_from_real(X, params.n, params.m), params)
    if frame == "rotating":
        period = 2.0 * math.pi / omega
    else:
        period = inertial_period(omega, params)
    s = period * np.arange(samples) / samples
    rows = []
    for j, b in enumerate(bodies, start=1):
        if frame == "rotating":
            pts = eval_series(b, omega * s)
        else:
            pts = InertialCurve(b, omega, params)(s)
        rows.extend((float(t), j, *map(float, p)) for t, p in zip(s, pts))
    return rows


def cmd_export(args) -> int:
    directory = _manifest_dir(args.archive)
    arch = io.read_archive(directory)
    key = _resolve_key(arch, str(args.step))
    X = arch.states[key]
    if args.format == "coeffs":
        target = Path(args.output or directory / f"export_{key}.coeffs")
        io.write_orbit(target, X, arch.params, key)
    else:
        if args.samples < 1:
            raise UsageError("--samples must be positive")
        target = Path(args.output or directory / f"export_{key}_{args.frame}.csv")
        rows = export_samples(X, arch.params, args.frame, args.samples)
        with open(target, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "body", "x", "y", "z"])
            for r in rows:
                w.writerow([repr(r[0]), r[1], repr(r[2]), repr(r[3]), repr(r[4])])
    print(target)
    return 0


# ---------------------------------------------------------------------------
# plot
# ---------------------------------------------------------------------------

def cmd_plot(args) -> int:
    from . import plotting

    directory = _manifest_dir(args.archive)
    arch = io.read_archive(directory)
    out = Path(args.out) if args.out else directory
    out.mkdir(parents=True, exist_ok=True)
    written = [plotting.plot_diagram(arch, out / "diagram.svg")]
    steps = args.steps or (["eight"] if arch.eight_key else [])
    for step in steps:
        try:
            key = _resolve_key(arch, step)
        except UsageError as exc:
            log.warning("%s", exc)
            continue
        written.append(plotting.plot_orbit(arch, key, out / f"orbit_{key}.svg",
                                           frame=args.frame))
    for w in written:
        print(w)
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="choreo", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="continue from the polygon to the figure eight")
    run.add_argument("--n", type=int)
    run.add_argument("--k", type=int, default=2)
    run.add_argument("--m", type=int)
    run.add_argument("--ds", type=float)
    run.add_argument("--max-steps", type=int)
    run.add_argument("--with-stability", action="store_true")
    run.add_argument("--plot", action="store_true")
    run.add_argument("--out")
    run.add_argument("--resume", metavar="MANIFEST")
    run.add_argument("--stride", type=int, default=10, help="Morse profile stride")
    run.add_argument("--threads", type=int, help="overrides CHOREO_THREADS")
    run.set_defaults(func=cmd_run)

    exp = sub.add_parser("export", help="write one archived orbit")
    exp.add_argument("archive", help="run directory or manifest")
    exp.add_argument("--step", default="eight", help="step index or 'eight'")
    exp.add_argument("--format", choices=("csv", "coeffs"), default="csv")
    exp.add_argument("--frame", choices=("rotating", "inertial"), default="inertial")
    exp.add_argument("--samples", type=int, default=1024)
    exp.add_argument("--output")
    exp.set_defaults(func=cmd_export)

    plot = sub.add_parser("plot", help="render the branch diagram and orbits as SVG")
    plot.add_argument("archive")
    plot.add_argument("--steps", nargs="*")
    plot.add_argument("--frame", choices=("rotating", "inertial"), default="inertial")
    plot.add_argument("--out")
    plot.set_defaults(func=cmd_plot)

    st = sub.add_parser("stability", help="Morse profile of an archived run")
    st.add_argument("archive")
    st.add_argument("--stride", type=int, default=10)
    st.add_argument("--threads", type=int)
    st.set_defaults(func=cmd_stability)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"choreo {args.command}: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"choreo {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
