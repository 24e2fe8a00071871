"""Command-line entry point.

Exit codes: 0 success, 1 configuration or input error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import os
import re
import sys
import time
from dataclasses import asdict
from importlib import metadata

import numpy as np

from . import diagnostics, flow, hypgeom
from .errors import ConfigError, ConvexityLossError, HypGaussError, StiffnessError
from .spheregrid import GridConfigError, ScalarField, make_grid

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2


def fmt(x):
    """17 significant digits, enough to round-trip a double."""
    return f"{float(x):.17g}"


def parse_resolution(text):
    parts = re.split(r"[x×X,]", str(text).strip())
    try:
        vals = tuple(int(p) for p in parts if p.strip())
    except ValueError:
        raise ConfigError(f"bad resolution {text!r}; expected e.g. 64x128 or 256") from None
    if not vals:
        raise ConfigError(f"bad resolution {text!r}")
    return vals if len(vals) > 1 else vals[0]


# -- configuration file --------------------------------------------------------

def _b(s):
    v = s.strip().lower()
    if v in ("on", "true", "yes", "1"):
        return True
    if v in ("off", "false", "no", "0"):
        return False
    raise ValueError(f"expected on/off, got {s!r}")


def _opt_float(s):
    return None if s.strip().lower() in ("", "none") else float(s)


SCHEMA = {
    "flow": {
        "n": int, "alpha": float, "parametrization": str,
        "dt_initial": _opt_float, "safety": float, "dt_max": float, "fixed_dt": _b,
        "volume_correction": _b, "t_end": _opt_float, "osc_tol": _opt_float,
        "filter_fraction": _opt_float, "recenter_threshold": float,
        "max_steps": int,
    },
    "grid": {"resolution": parse_resolution},
    "initial": {
        "shape": str, "rho0": float, "degree": int, "order": int,
        "amplitude": float, "cap": float, "seed": int,
    },
    "output": {"snapshot_every": int, "keep_every": int},
}

INITIAL_DEFAULTS = {"shape": "ball", "rho0": 1.0, "degree": 2, "order": 0,
                    "amplitude": 0.0, "cap": 0.1, "seed": 0}


def _key_lines(text):
    lines, section = {}, None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        m = re.match(r"\[(.+)\]$", line)
        if m:
            section = m.group(1).strip()
            lines.setdefault((section, None), no)
            continue
        key = re.split(r"[=:]", line, maxsplit=1)[0].strip().lower()
        lines.setdefault((section, key), no)
    return lines


def load_config(path):
    """Parse an INI run file into ``(FlowConfig, initial, output)``.

    Unknown sections or keys and unparsable values raise ConfigError naming
    the offending line.
    """
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc}") from None
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    where = _key_lines(text)
    values = {s: {} for s in SCHEMA}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{path}:{where.get((section, None), '?')}: unknown section [{section}]")
        for key, raw in cp.items(section):
            line = where.get((section, key), "?")
            if key not in SCHEMA[section]:
                raise ConfigError(f"{path}:{line}: unknown key {key!r} in [{section}]")
            try:
                values[section][key] = SCHEMA[section][key](raw)
            except (ValueError, ConfigError) as exc:
                raise ConfigError(f"{path}:{line}: bad value for {key}: {exc}") from None
    fl = dict(values["flow"])
    if "resolution" in values["grid"]:
        fl["resolution"] = values["grid"]["resolution"]
    out = values["output"]
    fl["keep_every"] = out.get("keep_every", 0)
    try:
        cfg = flow.FlowConfig(**fl)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    init = dict(INITIAL_DEFAULTS, **values["initial"])
    if init["shape"] not in ("ball", "harmonic", "sample"):
        line = where.get(("initial", "shape"), "?")
        raise ConfigError(f"{path}:{line}: shape must be ball, harmonic or sample")
    return cfg, init, out


# -- initial data --------------------------------------------------------------

def unit_harmonic(grid, l, m=0):
    """Real harmonic of degree l scaled to unit sup norm on the grid."""
    Y = grid.harmonic(l, m)
    return Y / np.abs(Y).max()


def sample_convex(grid, seed, count, cap, rho0=1.0, max_degree=4, min_rate=0.01):
    """Seeded rejection sampler of convex radial graphs about a ball.

    Each candidate is rho0 plus a random combination of real harmonics of
    degree 1..max_degree, rescaled to sup amplitude rho0 * cap * U(0.25, 1), and is
    accepted iff every principal curvature is positive.  Returns
    ``(surfaces, attempts)``.
    """
    if not 0 <= cap < 1:
        raise ConfigError(f"amplitude cap must lie in [0, 1), got {cap}")
    if count < 0:
        raise ConfigError("count must be non-negative")
    rng = np.random.default_rng(seed)
    basis = [grid.harmonic(l, m) for l in range(1, max_degree + 1)
             for m in range(-l, l + 1)] if grid.dim == 2 else \
        [grid.harmonic(l, s) for l in range(1, max_degree + 1) for s in (1, -1)]
    basis = np.array(basis)
    out, attempts = [], 0
    while len(out) < count:
        attempts += 1
        coef = rng.standard_normal(len(basis))
        scale = cap * rng.uniform(0.25, 1.0)
        p = np.tensordot(coef, basis, axes=1)
        p *= rho0 * scale / np.abs(p).max()
        surf = hypgeom.RadialSurface(grid, rho0 + p)
        try:
            ok = hypgeom.geometry(surf).kappa.min() > 0.0
        except HypGaussError:
            ok = False
        if ok:
            out.append(surf)
        if attempts >= 100 and len(out) / attempts < min_rate:
            raise ConfigError(
                f"acceptance rate {len(out)}/{attempts} below {min_rate:.0%}: cap too large")
    return out, attempts


def initial_surface(grid, init):
    rho0 = init["rho0"]
    if init["shape"] == "ball":
        return hypgeom.ball(grid, rho0)
    if init["shape"] == "harmonic":
        try:
            p = unit_harmonic(grid, init["degree"], init["order"])
        except GridConfigError as exc:
            raise ConfigError(str(exc)) from None
        return hypgeom.RadialSurface(grid, rho0 + init["amplitude"] * p)
    surfaces, _ = sample_convex(grid, init["seed"], 1, init["cap"], rho0)
    return surfaces[0]


# -- commands ------------------------------------------------------------------

def _version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _run_dir(out):
    os.makedirs(out, exist_ok=True)
    k = 1
    while True:
        path = os.path.join(out, f"run-{k:03d}")
        try:
            os.mkdir(path)
            return path
        except FileExistsError:
            k += 1


def _say(args, *msg):
    if not args.quiet:
        print(*msg)


def cmd_simulate(args):
    if not args.config:
        raise ConfigError("simulate needs --config")
    cfg, init, out_opts = load_config(args.config)
    if args.resolution:
        cfg = flow.FlowConfig(**dict(asdict(cfg), resolution=parse_resolution(args.resolution)))
    if args.seed is not None:
        init["seed"] = args.seed
    grid = make_grid(cfg.n, cfg.resolution)
    surface = initial_surface(grid, init)
    try:
        flow.make_state(surface, cfg.alpha)
    except ConvexityLossError as exc:
        raise ConfigError(f"initial data fails the convexity certificate: {exc}") from None

    run_dir = _run_dir(args.out or "runs")
    paths = {
        "manifest": os.path.join(run_dir, "manifest.json"),
        "series_jsonl": os.path.join(run_dir, "series.jsonl"),
        "series_csv": os.path.join(run_dir, "series.csv"),
        "summary": os.path.join(run_dir, "summary.json"),
        "snapshots": os.path.join(run_dir, "snapshots"),
    }
    os.makedirs(paths["snapshots"])
    manifest = {
        "config": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(cfg).items()},
        "initial": init,
        "version": _version(),
        "resolution": list(grid.shape),
        "seed": init["seed"],
        "start": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "end": None,
        "outputs": paths,
    }
    with open(paths["manifest"], "w") as fh:
        json.dump(manifest, fh, indent=2)

    every = out_opts.get("snapshot_every", 0)

    def snapshot(state, _rep=None):
        if every and state.step_count % every == 0:
            s = state.surface
            vals, name = (s.rho, "rho") if state.parametrization == "radial" else (s.s, "s")
            ScalarField(grid, vals, name).to_csv(
                os.path.join(paths["snapshots"], f"{name}-{state.step_count:07d}.csv"))

    code, summary = EXIT_OK, {}
    try:
        res = flow.run(surface, cfg, callback=snapshot)
    except StiffnessError as exc:
        code = EXIT_NUMERIC
        summary = {"status": "stiffness failure", "message": str(exc)}
        if exc.state is not None:
            st = exc.state
            summary["t"] = st.t
            vals = st.surface.rho if st.parametrization == "radial" else st.surface.s
            ScalarField(grid, vals, "dump").to_csv(os.path.join(run_dir, "failure_state.csv"))
        res = None
    if res is not None:
        res.series.to_jsonl(paths["series_jsonl"])
        res.series.to_csv(paths["series_csv"])
        final = res.final
        summary = {"status": "ok", "stop_reason": res.stop_reason, "t": final.t,
                   "steps": final.step_count, "functionals": final.functionals.to_dict(),
                   "rejections": sum(r.rejections for r in res.reports)}
        if final.parametrization == "radial":
            bd = diagnostics.ball_distance(final.surface)
            summary["ball_distance"] = bd.distance
            summary["rho_star"] = bd.rho_star
            summary["af_gap"] = diagnostics.af_verify(final.surface).gap
        last = res.series[-1]
        _say(args, f"t={fmt(final.t)} steps={final.step_count} osc={fmt(last['osc'])} "
             f"volume={fmt(last['volume'])} stop={res.stop_reason}")
    with open(paths["summary"], "w") as fh:
        json.dump(summary, fh, indent=2, default=float)
    manifest["end"] = time.strftime("%Y-%m-%dT%H:%M:%S")
    with open(paths["manifest"], "w") as fh:
        json.dump(manifest, fh, indent=2)
    _say(args, f"outputs in {run_dir}")
    return code


def _grid_from_args(args, n):
    return make_grid(n, parse_resolution(args.resolution) if args.resolution else None)


def cmd_sample_convex(args):
    grid = _grid_from_args(args, args.n)
    seed = 0 if args.seed is None else args.seed
    surfaces, attempts = sample_convex(grid, seed, args.count, args.cap, args.rho0)
    out = args.out or "samples"
    os.makedirs(out, exist_ok=True)
    for i, s in enumerate(surfaces):
        ScalarField(grid, s.rho, "rho").to_csv(os.path.join(out, f"sample-{i:04d}.csv"))
    _say(args, f"accepted {len(surfaces)} of {attempts} "
         f"(rate {fmt(len(surfaces) / max(attempts, 1))}) -> {out}")
    return EXIT_OK


def cmd_verify_af(args):
    grid = _grid_from_args(args, args.n)
    seed = 7 if args.seed is None else args.seed
    surfaces, _ = sample_convex(grid, seed, args.count, args.cap, args.rho0)
    rows = []
    for i, s in enumerate(surfaces):
        r = diagnostics.af_verify(s)
        rows.append((i, r.volume, r.quermass, r.psi, r.gap))
    worst = min(r[4] / r[3] for r in rows) if rows else 0.0
    out = args.out
    if out:
        os.makedirs(out, exist_ok=True)
        path = os.path.join(out, "af_campaign.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["seed", "index", "volume", f"A{args.n - 1}", "psi", "gap"])
            for i, v, a, p, g in rows:
                w.writerow([seed, i, fmt(v), fmt(a), fmt(p), fmt(g)])
    ok = worst >= -1e-6
    _say(args, f"bodies={len(rows)} min_gap={fmt(min((r[4] for r in rows), default=0))} "
         f"min_relative_gap={fmt(worst)} {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_linear_rate(args):
    print("l,linear_rate,flow_linear_rate")
    for l in range(args.lmax + 1):
        print(f"{l},{fmt(diagnostics.linear_rate(args.n, args.alpha, args.rho_inf, l))},"
              f"{fmt(diagnostics.flow_linear_rate(args.n, args.alpha, args.rho_inf, l))}")
    return EXIT_OK


def cmd_ball_table(args):
    grid = _grid_from_args(args, args.n)
    print("rho,quantity,quadrature,closed_form,relative_error")
    worst = 0.0
    for rho in args.rho:
        f = hypgeom.functionals(hypgeom.ball(grid, rho))
        closed = diagnostics.ball_closed_forms(args.n, rho)
        quad = {"volume": f.volume, "kbar": f.kbar}
        for k in range(args.n + 1):
            quad[f"A{k}"] = f.A(k)
        for key, exact in closed.items():
            err = abs(quad[key] - exact) / abs(exact)
            worst = max(worst, err)
            print(f"{fmt(rho)},{key},{fmt(quad[key])},{fmt(exact)},{err:.3e}")
    return EXIT_OK if worst <= 1e-8 else EXIT_NUMERIC


# -- argument parsing ----------------------------------------------------------

def _common(suppress):
    # the subcommand copy must not overwrite values given before the command
    kw = {"default": argparse.SUPPRESS} if suppress else {}
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI run file", **kw)
    common.add_argument("--out", help="output directory", **kw)
    common.add_argument("--seed", type=int, help="random seed", **kw)
    common.add_argument("--resolution", help="grid size, e.g. 64x128 (n=2) or 256 (n=1)", **kw)
    common.add_argument("--quiet", action="store_true", help="suppress progress output", **kw)
    return common


def build_parser():
    common = _common(suppress=True)
    p = argparse.ArgumentParser(prog="hypgauss", parents=[_common(suppress=False)],
                                description="Volume-preserving K^alpha flow in hyperbolic space")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("simulate", parents=[common], help="run a flow from a config file")

    s = sub.add_parser("sample-convex", parents=[common], help="draw seeded convex bodies")
    s.add_argument("--n", type=int, default=2, choices=(1, 2))
    s.add_argument("--count", type=int, default=10)
    s.add_argument("--cap", type=float, default=0.1)
    s.add_argument("--rho0", type=float, default=1.0)

    s = sub.add_parser("verify-af", parents=[common], help="Alexandrov-Fenchel campaign")
    s.add_argument("--n", type=int, default=2, choices=(1, 2))
    s.add_argument("--count", type=int, default=100)
    s.add_argument("--cap", type=float, default=0.1)
    s.add_argument("--rho0", type=float, default=1.0)

    s = sub.add_parser("linear-rate", parents=[common], help="linearized decay rates")
    s.add_argument("--n", type=int, default=2, choices=(1, 2))
    s.add_argument("--alpha", type=float, default=1.0)
    s.add_argument("--rho-inf", type=float, default=1.0)
    s.add_argument("--lmax", type=int, default=4)

    s = sub.add_parser("ball-table", parents=[common], help="ball functionals vs closed forms")
    s.add_argument("--n", type=int, default=2, choices=(1, 2))
    s.add_argument("--rho", type=float, nargs="+", default=[0.5, 1.0, 2.0])
    return p


COMMANDS = {
    "simulate": cmd_simulate,
    "sample-convex": cmd_sample_convex,
    "verify-af": cmd_verify_af,
    "linear-rate": cmd_linear_rate,
    "ball-table": cmd_ball_table,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, GridConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except HypGaussError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
