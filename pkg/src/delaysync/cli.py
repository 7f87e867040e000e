"""Command-line front end: run, certify, plot and synthesize.

Exit codes
----------
0 success, 2 usage error, 3 scenario parse error, 4 validation failure,
5 divergence, 6 no convergence within the horizon, 7 I/O error,
8 certificate failure.
"""

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import logging
import os
import platform
import sys

import numpy as np
import scipy

from . import __version__
from .engine import (
    DEFAULT_GRID,
    certificate_sweep,
    default_grid,
    delayed_sync_errors,
    prepare,
    run,
)
from .errors import (
    CertificateError,
    DimensionError,
    DivergenceError,
    HomogenizationError,
    ModelError,
    ScenarioError,
    SynthesisError,
    TopologyError,
)
from .numerics import spectral_radius, synthesize_observer_gain, synthesize_state_gain
from .plant import remodel_exosystem
from .protocol import HETEROGENEOUS
from .scenario_io import dump_scenario, load_scenario

log = logging.getLogger("delaysync")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_VALIDATION = 4
EXIT_DIVERGENCE = 5
EXIT_NONCONVERGENCE = 6
EXIT_IO = 7
EXIT_CERTIFICATE = 8

VALIDATION_ERRORS = (TopologyError, ModelError, DimensionError, HomogenizationError, SynthesisError)


def _fmt(v):
    return "" if v is None or not np.isfinite(v) else repr(float(v))


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def trajectories_csv(r):
    """One row per (step, agent): state, output, input and delayed reference."""
    N, T = r.n_agents, r.horizon
    n_max = max(x.shape[1] for x in r.x)
    m_max = max(u.shape[1] for u in r.u)
    p = r.y.shape[2]
    header = (["step", "agent"] + [f"x{j + 1}" for j in range(n_max)] + [f"y{j + 1}" for j in range(p)]
              + [f"u{j + 1}" for j in range(m_max)] + [f"y_ref{j + 1}" for j in range(p)])
    rows = []
    for k in range(T + 1):
        for i in range(N):
            x, u = r.x[i][k], r.u[i][k]
            lag = int(r.cumulative_delays[i])
            ref = r.y_r[k - lag] if k >= lag else [None] * p
            rows.append(
                [k, i + 1]
                + [_fmt(v) for v in x] + [""] * (n_max - len(x))
                + [_fmt(v) for v in r.y[k, i]]
                + [_fmt(v) for v in u] + [""] * (m_max - len(u))
                + [_fmt(v) for v in ref]
            )
    return _csv_text(header, rows)


def errors_csv(errs):
    norms = errs.regulated_norms()
    rows = [[k, i + 1, _fmt(norms[k, i])] for k in range(norms.shape[0]) for i in range(norms.shape[1])]
    return _csv_text(["step", "agent", "error_norm"], rows)


def certificate_csv(rep):
    rows = [[_fmt(w), _fmt(d), _fmt(rad)] for w, d, rad in zip(rep.omegas, rep.distances, rep.radii)]
    return _csv_text(["omega", "distance", "spectral_radius"], rows)


def _sha256(data):
    return hashlib.sha256(data.encode("utf-8") if isinstance(data, str) else data).hexdigest()


def _versions():
    return {"delaysync": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _load(path):
    try:
        return load_scenario(path)
    except OSError as exc:
        raise _CliError(EXIT_IO, f"cannot read scenario: {exc}") from exc


class _CliError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def cmd_run(args):
    s = _load(args.scenario)
    overrides = {k: v for k, v in (("horizon", args.horizon), ("tolerance", args.tol), ("seed", args.seed))
                 if v is not None}
    if overrides:
        s = dataclasses.replace(s, **overrides)
    if s.horizon < 1 or not s.tolerance > 0:
        raise _CliError(EXIT_USAGE, "horizon must be >= 1 and tolerance positive")
    log.info("running %s (%s, %d agents, seed %d)", s.name, s.variant, s.n_agents, s.seed)
    P = prepare(s, check_gains=not args.skip_gain_check)
    try:
        os.makedirs(args.out, exist_ok=True)
    except OSError as exc:
        raise _CliError(EXIT_IO, f"cannot create output directory: {exc}") from exc
    result = run(s, P)
    errs = delayed_sync_errors(result)
    final = errs.final_max()
    converged = bool(final < s.tolerance)
    rep = certificate_sweep(s, default_grid(args.grid), margin=args.margin, prepared=P)

    texts = {
        "trajectories.csv": trajectories_csv(result),
        "errors.csv": errors_csv(errs),
        "certificate.csv": certificate_csv(rep),
        "scenario.json": dump_scenario(s),
    }
    with open(args.scenario, "rb") as fh:
        source_hash = _sha256(fh.read())
    manifest = {
        "scenario": {"file": os.path.basename(args.scenario), "sha256": source_hash, "name": s.name},
        "overrides": overrides,
        "variant": s.variant,
        "seed": s.seed,
        "horizon": s.horizon,
        "tolerance": s.tolerance,
        "prefill": s.prefill,
        "agents": s.n_agents,
        "rows": (s.horizon + 1) * s.n_agents,
        "final_max_error": final,
        "converged": converged,
        "certificate": {"passed": rep.passed, "min_distance": rep.min_distance, "worst_omega": rep.worst_omega,
                        "grid": len(rep.omegas), "margin": rep.margin, "kind": rep.kind},
        "versions": _versions(),
        "files": {name: _sha256(text) for name, text in texts.items()},
    }
    texts["manifest.json"] = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    try:
        for name, text in texts.items():
            _write(os.path.join(args.out, name), text)
    except OSError as exc:
        raise _CliError(EXIT_IO, f"cannot write bundle: {exc}") from exc

    print(f"{s.name}: final max error {final:.3e} at k={s.horizon} "
          f"({'converged' if converged else 'NOT converged'}, tolerance {s.tolerance:g})")
    print(f"certificate: {'pass' if rep.passed else 'FAIL'}, min distance {rep.min_distance:.4g}")
    print(f"bundle written to {args.out}")
    return EXIT_OK if converged else EXIT_NONCONVERGENCE


def cmd_certify(args):
    s = _load(args.scenario)
    P = prepare(s, check_gains=False)
    rep = certificate_sweep(s, default_grid(args.grid), margin=args.margin, prepared=P)
    report = {
        "scenario": s.name,
        "passed": rep.passed,
        "min_distance": rep.min_distance,
        "worst_omega": rep.worst_omega,
        "max_spectral_radius": float(np.max(rep.radii)),
        "grid": len(rep.omegas),
        "margin": rep.margin,
        "kind": rep.kind,
    }
    text = json.dumps(report, indent=2) + "\n"
    if args.out:
        try:
            _write(args.out, text)
        except OSError as exc:
            raise _CliError(EXIT_IO, f"cannot write report: {exc}") from exc
    sys.stdout.write(text)
    return EXIT_OK if rep.passed else EXIT_CERTIFICATE


PLOT_TEMPLATE = '''"""Plot agent outputs against the delayed reference from {csv_name}."""
import csv
import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = os.path.dirname(os.path.abspath(__file__))
STEPS = {steps}  # plot steps 0..STEPS-1; 0 plots the whole horizon


def load(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    outputs = sorted((c for c in rows[0] if c.startswith("y") and not c.startswith("y_ref")),
                     key=lambda c: int(c[1:]))
    series = {{}}
    for row in rows:
        if STEPS and int(row["step"]) >= STEPS:
            continue
        agent = int(row["agent"])
        s = series.setdefault(agent, {{"k": [], "y": [], "ref": []}})
        s["k"].append(int(row["step"]))
        s["y"].append([float(row[c]) for c in outputs])
        s["ref"].append([float(row["y_ref" + c[1:]]) if row["y_ref" + c[1:]] else float("nan")
                         for c in outputs])
    return outputs, series


def main():
    outputs, series = load(os.path.join(HERE, "{csv_name}"))
    fig, axes = plt.subplots(len(outputs), 1, figsize=(10, 3.5 * len(outputs)), squeeze=False)
    for c, ax in enumerate(axes[:, 0]):
        for agent, s in sorted(series.items()):
            line, = ax.plot(s["k"], [v[c] for v in s["y"]], lw=1.0, label=f"$y_{{{{{{agent}}}}}}$")
            ax.plot(s["k"], [v[c] for v in s["ref"]], ls="--", lw=0.8, color=line.get_color())
        ax.set_xlabel("k")
        ax.set_ylabel(outputs[c] + "  (dashed: delayed reference)")
        ax.legend(ncol=5, fontsize="small")
    fig.suptitle("{title}")
    fig.tight_layout()
    out = os.path.join(HERE, "trajectories.png")
    fig.savefig(out, dpi=120)
    print(out)


if __name__ == "__main__":
    main()
'''


def cmd_plot(args):
    path = os.path.join(args.bundle, "trajectories.csv")
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            header = next(csv.reader(fh), None)
    except OSError as exc:
        raise _CliError(EXIT_IO, f"no readable bundle at {args.bundle}: {exc}") from exc
    if not header or header[:2] != ["step", "agent"] or "y1" not in header or "y_ref1" not in header:
        raise _CliError(EXIT_IO, f"{path} is not a trajectories file")
    title = os.path.basename(os.path.normpath(args.bundle))
    try:
        with open(os.path.join(args.bundle, "manifest.json"), encoding="utf-8") as fh:
            title = json.load(fh)["scenario"]["name"]
    except (OSError, ValueError, KeyError):
        pass
    script = PLOT_TEMPLATE.format(csv_name="trajectories.csv", title=title.replace('"', "'"), steps=args.steps)
    out = os.path.join(args.bundle, "plot_trajectories.py")
    try:
        _write(out, script)
    except OSError as exc:
        raise _CliError(EXIT_IO, f"cannot write plot script: {exc}") from exc
    print(out)
    return EXIT_OK


def cmd_synthesize(args):
    s = _load(args.scenario)
    g = s.gains
    if s.variant == HETEROGENEOUS:
        target = s.target or remodel_exosystem(s.exosystem, [a.infinite_zero_order() for a in s.agents])
        A, B, C = target.A, target.B, target.C
    else:
        a = s.agents[0]
        A, B, C = a.A, a.B, a.C
    K = synthesize_state_gain(A, B, g.Q, g.R)
    H = synthesize_observer_gain(A, C, g.Q, g.R)
    out = {
        "K": K.tolist(),
        "H": H.tolist(),
        "radius_A_minus_BK": spectral_radius(A - B @ K),
        "radius_A_minus_HC": spectral_radius(A - H @ C),
    }
    sys.stdout.write(json.dumps(out, indent=2) + "\n")
    return EXIT_OK


def _positive_int(text):
    v = int(text)
    if v <= 0:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {v}")
    return v


def _nonnegative_float(text):
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"must be nonnegative, got {text}")
    return v


def build_parser():
    parser = argparse.ArgumentParser(prog="delaysync", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate a scenario and write a result bundle")
    p.add_argument("scenario")
    p.add_argument("--out", required=True, help="output directory for the bundle")
    p.add_argument("--horizon", type=_positive_int)
    p.add_argument("--tol", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--grid", type=_positive_int, default=DEFAULT_GRID, help="certificate grid size")
    p.add_argument("--margin", type=_nonnegative_float, default=1e-3)
    p.add_argument("--skip-gain-check", action="store_true",
                   help="simulate even if A-BK or A-HC is not Schur stable")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("certify", help="sampled frequency-sweep certificate")
    p.add_argument("scenario")
    p.add_argument("--grid", type=_positive_int, default=DEFAULT_GRID)
    p.add_argument("--margin", type=_nonnegative_float, default=1e-3)
    p.add_argument("--out", help="also write the JSON report here")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("plot", help="emit a matplotlib script for a result bundle")
    p.add_argument("bundle")
    p.add_argument("--steps", type=int, default=100, help="number of steps to plot (0 for all)")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("synthesize", help="print Riccati-based gains K and H")
    p.add_argument("scenario")
    p.set_defaults(func=cmd_synthesize)
    return parser


def _configure_logging():
    level = os.environ.get("DELAYSYNC_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.ERROR), format="%(levelname)s %(name)s: %(message)s")


def main(argv=None):
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except _CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ScenarioError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except VALIDATION_ERRORS as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except CertificateError as exc:
        print(f"certificate error: {exc}", file=sys.stderr)
        return EXIT_CERTIFICATE
