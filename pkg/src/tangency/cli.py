"""Command-line front end: ``tangency run|validate|presets``.

Each run writes its data tables plus a ``manifest.json`` that echoes the
resolved configuration. CSV bodies depend only on the configuration and seed;
the timestamp lives in the manifest alone.
"""

from __future__ import annotations

import argparse
import copy
import csv
import datetime as _dt
import hashlib
import json
import os
import sys
from importlib import resources
from pathlib import Path

import numpy as np
from jsonschema import Draft202012Validator

from . import __version__
from . import band_stats as bs
from . import fixed_points as fp
from . import flow_engine as fe
from . import singularity_chart as sc
from .map_core import MapParams, PhasePoint, orbit_arrays
from .systems import PRESETS, SystemSpec


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if hasattr(o, "to_dict"):
        return o.to_dict()
    if hasattr(o, "__dict__"):
        return vars(o)
    raise TypeError(f"not serialisable: {type(o)}")


# ------------------------------------------------------------------ config

def load_schema() -> dict:
    with resources.files("tangency").joinpath("schema/experiment.schema.json").open() as fh:
        return json.load(fh)


def _path(err) -> str:
    return "/".join(str(p) for p in err.absolute_path) or "<root>"


def validate_config(cfg: dict) -> list[str]:
    """All schema and semantic violations as 'path: message' strings."""
    problems = [f"{_path(e)}: {e.message}"
                for e in sorted(Draft202012Validator(load_schema()).iter_errors(cfg),
                                key=lambda e: list(map(str, e.absolute_path)))]
    if not isinstance(cfg, dict):
        return problems
    if isinstance(cfg.get("system"), dict) and not any(p.startswith("system") for p in problems):
        try:
            spec = SystemSpec.from_dict(cfg["system"])
            problems += [f"system: {msg}" for msg in spec.diagnostics()]
        except (KeyError, ValueError, TypeError) as exc:
            problems.append(f"system: {exc}")
    if isinstance(cfg.get("bifurcation"), dict):
        r = cfg["bifurcation"].get("omega_range")
        if isinstance(r, list) and len(r) == 2 and all(isinstance(x, (int, float)) for x in r) \
                and r[1] < r[0]:
            problems.append("bifurcation/omega_range: upper end below lower end")
    return problems


def epsilon_grid(g) -> np.ndarray:
    if isinstance(g, dict):
        return np.logspace(g["log10_min"], g["log10_max"], g["n"])
    return np.asarray(g, dtype=float)


def run_id(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha1(blob).hexdigest()[:12]


# ------------------------------------------------------------------ runners

def _run_orbit(cfg, out: Path) -> list[str]:
    m = MapParams.from_dict(cfg["map"])
    o = cfg["orbit"]
    stride = o.get("stride", 1)
    it, ph, kk = orbit_arrays(PhasePoint(o.get("phi0", 0.0), o.get("K0", 0.0)), m, o["n"], stride)
    write_csv(out / "orbit.csv", ["iterate", "phi", "K", "stride"],
              ((i, p, k, stride) for i, p, k in zip(it, ph, kk)))
    return ["orbit.csv"]


def _ensemble(cfg):
    e = cfg.get("ensemble", {})
    return e.get("n_ic", 100), e.get("n_iter", 100_000)


def _run_band_widths(cfg, out: Path) -> list[str]:
    m = MapParams.from_dict(cfg["map"])
    n_ic, n_iter = _ensemble(cfg)
    rep = bs.band_width_report(m, epsilon_grid(cfg["epsilon_grid"]), n_ic, n_iter, cfg.get("seed"))
    write_csv(out / "widths.csv", ["epsilon", "W_plus", "W_minus"],
              zip(rep.epsilon, rep.W_plus, rep.W_minus))
    write_json(out / "fits.json", {"meta": rep.metadata(), **rep.fits()})
    return ["widths.csv", "fits.json"]


def _run_scaling(cfg, out: Path) -> list[str]:
    base = MapParams.from_dict(cfg["map"])
    n_ic, n_iter = _ensemble(cfg)
    eps = epsilon_grid(cfg["epsilon_grid"])
    rows, fits = [], []
    for om in cfg["omegas"]:
        rep = bs.band_width_report(base.replace(omega=float(om)), eps, n_ic, n_iter, cfg.get("seed"))
        rows += [(om, e, wp, wm) for e, wp, wm in zip(rep.epsilon, rep.W_plus, rep.W_minus)]
        fits.append({"omega": om, **rep.fits()})
    write_csv(out / "scaling.csv", ["omega", "epsilon", "W_plus", "W_minus"], rows)
    write_json(out / "fits.json", fits)
    return ["scaling.csv", "fits.json"]


def _run_bifurcation(cfg, out: Path) -> list[str]:
    m = MapParams.from_dict(cfg["map"])
    b = cfg["bifurcation"]
    scan = fp.bifurcation_scan(tuple(b["omega_range"]), b["step"], m, b.get("j_window"))
    rows = []
    for om, recs in zip(scan.omega_grid, scan.records):
        for r in recs:
            rows.append((om, r.j, r.branch.value, r.phi_star, r.K_star,
                         "" if r.trace is None else r.trace,
                         "SINGULAR" if r.stability is None else r.stability.value))
    write_csv(out / "bifurcation.csv",
              ["omega", "j", "branch", "phi_star", "K_star", "trace", "stability"], rows)
    write_json(out / "thresholds.json", scan.thresholds)
    return ["bifurcation.csv", "thresholds.json"]


def _run_connection(cfg, out: Path) -> list[str]:
    base = MapParams.from_dict(cfg["map"])
    c = cfg["connection"]
    alphas = c.get("alphas", [base.alpha])
    ck = bs.log_checkpoints(c["N"], c.get("per_decade", 4))
    rows, summary = [], []
    for a in alphas:
        rec = bs.connection_metrics(base.replace(alpha=float(a)), c.get("n_ic", 10), c["N"],
                                    cfg.get("seed", 0), c.get("n_windows", 5),
                                    c.get("half_width"), ck,
                                    tuple(c["fit_range"]) if "fit_range" in c else None,
                                    c.get("positive_only", False))
        for k, n in enumerate(rec.checkpoints):
            rows.append((a, n, *rec.widths[:, k], rec.normalized[k], rec.min_distance[k]))
        summary.append({"alpha": a, "slope": rec.slope, "intercept": rec.intercept,
                        "band_width": rec.band_width, "window_centers": rec.centers,
                        "half_width": rec.half_width,
                        "plateaus": [bs.count_plateaus(w) for w in rec.widths]})
    n_ic = c.get("n_ic", 10)
    write_csv(out / "growth.csv",
              ["alpha", "N", *[f"W_phi0_{i}" for i in range(n_ic)], "normalized_width", "d_min"],
              rows)
    write_json(out / "connection.json", summary)
    return ["growth.csv", "connection.json"]


def _flow_cfg(cfg) -> dict:
    return cfg.get("flow", {})


def _run_flow_return(cfg, out: Path) -> list[str]:
    spec = SystemSpec.from_dict(cfg["system"])
    f = _flow_cfg(cfg)
    tol = f.get("tol", fe.DEFAULT_TOL)
    Itan = sc.I_tan(spec)
    if f.get("chart", "unperturbed") == "curve":
        curve = sc.extract_singularity_curve(spec, sc.default_theta_grid(f.get("n_theta", 64)),
                                             f.get("curve_tol", 1e-9), with_melnikov=False).curve
    else:
        curve = sc.PeriodicCurve(sc.default_theta_grid(8), np.full(8, Itan))
    init = f.get("initial", [{"theta": 0.0, "dI": 0.0}])
    rows = []
    for k, ic in enumerate(init):
        I = ic["I"] if "I" in ic else Itan + ic.get("dI", 0.0)
        s = fe.section_point(ic["theta"], I, spec)
        th, Ib = ic["theta"], I
        rows.append((k, 0, th, Ib, Ib - curve(th), th, 0))
        for n in range(1, f.get("n_returns", 100) + 1):
            c = fe.return_map(s, spec, tol)
            s = c.state
            th, Ib = fe.section_coords(s, spec)
            rows.append((k, n, th, Ib, Ib - curve(th), th, c.impact_flag))
    write_csv(out / "returns.csv", ["orbit", "return", "theta", "I", "K", "phi", "impact_flag"], rows)
    write_json(out / "profile.json", sc.unperturbed_profile(spec).to_dict())
    return ["returns.csv", "profile.json"]


def _run_singularity_curve(cfg, out: Path) -> list[str]:
    spec = SystemSpec.from_dict(cfg["system"])
    f = _flow_cfg(cfg)
    grid = sc.default_theta_grid(f.get("n_theta", 256))
    curve = sc.extract_singularity_curve(spec, grid, f.get("curve_tol", 1e-9))
    curve.write_csv(out / "curve.csv")
    files = ["curve.csv", "curve.json", "profile.json"]
    write_json(out / "curve.json", curve.to_dict())
    write_json(out / "profile.json", sc.unperturbed_profile(spec).to_dict())
    if f.get("symmetry", False):
        res = sc.symmetry_residual(curve, spec)
        write_csv(out / "symmetry.csv", ["theta_bar", "I_bar", "residual"],
                  zip(curve.image_theta, curve.image_I, res))
        files.append("symmetry.csv")
    return files


def _run_flow_vs_map(cfg, out: Path) -> list[str]:
    spec = SystemSpec.from_dict(cfg["system"])
    f = _flow_cfg(cfg)
    cmp = sc.flow_vs_map(spec, f.get("n_points", 1000), f.get("K_range"), cfg.get("seed", 0),
                         n_theta=f.get("n_theta", 64), n_modes=f.get("n_modes", 5),
                         flow_tol=f.get("tol", fe.DEFAULT_TOL))
    write_csv(out / "flow_vs_map.csv", ["phi", "K", "dK_flow", "dK_map"],
              zip(cmp.phi, cmp.K, cmp.dK_flow, cmp.dK_map))
    write_json(out / "flow_vs_map.json",
               {"std_flow": cmp.std_flow, "std_map": cmp.std_map, "rel_diff": cmp.rel_diff,
                "forcing": cmp.forcing.to_json(), "profile": cmp.profile.to_dict()})
    return ["flow_vs_map.csv", "flow_vs_map.json"]


RUNNERS = {
    "orbit": _run_orbit,
    "band-widths": _run_band_widths,
    "scaling": _run_scaling,
    "bifurcation": _run_bifurcation,
    "connection": _run_connection,
    "flow-return": _run_flow_return,
    "singularity-curve": _run_singularity_curve,
    "flow-vs-map": _run_flow_vs_map,
}


def run(cfg: dict, out: Path | str, threads: int | None = None) -> dict:
    """Validate, dispatch and write outputs plus manifest; returns the manifest."""
    problems = validate_config(cfg)
    if problems:
        raise ValueError("invalid configuration:\n  " + "\n  ".join(problems))
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    threads = threads or cfg.get("threads") or os.cpu_count() or 1
    try:
        import numba
        numba.set_num_threads(min(int(threads), numba.config.NUMBA_NUM_THREADS))
    except (ImportError, ValueError):
        pass
    resolved = copy.deepcopy(cfg)
    resolved.setdefault("seed", 0)
    try:
        files = RUNNERS[cfg["kind"]](resolved, out)
    except Exception as exc:
        raise RuntimeError(f"{cfg['kind']} run failed: {exc}") from exc
    manifest = {
        "tool": "tangency",
        "version": __version__,
        "run_id": run_id(resolved),
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "threads": int(threads),
        "config": resolved,
        "files": files,
    }
    write_json(out / "manifest.json", manifest)
    return manifest


# ------------------------------------------------------------------ entry point

def _load(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="tangency", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="verb", required=True)
    pr = sub.add_parser("run", help="run an experiment config")
    pr.add_argument("--config", required=True)
    pr.add_argument("--out", default=None)
    pr.add_argument("--seed", type=int, default=None)
    pr.add_argument("--threads", type=int, default=None)
    pv = sub.add_parser("validate", help="check a config without running it")
    pv.add_argument("--config", required=True)
    pp = sub.add_parser("presets", help="named wall systems")
    pp.add_argument("action", choices=["list"])
    args = ap.parse_args(argv)

    if args.verb == "presets":
        for name, make in PRESETS.items():
            print(name, json.dumps(make().to_dict(), sort_keys=True))
        return 0
    try:
        cfg = _load(args.config)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read {args.config}: {exc}", file=sys.stderr)
        return 2
    if args.verb == "validate":
        problems = validate_config(cfg)
        for p in problems:
            print(p)
        if not problems:
            print("ok")
        return 1 if problems else 0
    if args.seed is not None:
        cfg["seed"] = args.seed
    out = args.out or cfg.get("out") or os.path.join("runs", cfg.get("name", cfg.get("kind", "run")))
    try:
        man = run(cfg, out, args.threads)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    print(f"{man['run_id']} -> {out} ({', '.join(man['files'])})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
