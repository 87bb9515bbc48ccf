"""Command-line entry point: ``generate``, ``reconstruct`` and ``validate``.

Exit codes: 0 success, 1 runtime or convergence failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path
from typing import Sequence

import numpy as np

from . import data, descent, svg, validation
from . import geometry as geo
from .fem import SolverError

log = logging.getLogger("kvrecon")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

# flag name -> RunConfig field
RUN_FLAGS = {"r0": "r0", "alpha0": "alpha0", "mu": "mu", "beta": "beta", "max_iter": "max_iter"}
EXPERIMENT_KEYS = {"case", "data", "out", "noise", "seed", "emit_svg", "all_cases", "workers", "log_every"}


class UsageError(Exception):
    pass


def parse_case(text: str) -> tuple[str, str]:
    """``"A2:B1"`` -> ``("A2", "B1")``."""
    parts = text.upper().split(":")
    if len(parts) != 2 or parts[0] not in geo.ADMITTANCE_CASES or parts[1] not in geo.BOUNDARY_CASES:
        raise UsageError(f"invalid case {text!r}; expected A1..A3:B1..B3, e.g. A2:B1")
    return parts[0], parts[1]


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise UsageError(f"{path}: top level must be an object")
    allowed = set(descent.RunConfig.keys()) | EXPERIMENT_KEYS
    unknown = sorted(set(cfg) - allowed)
    if unknown:
        raise UsageError(f"{path}: unknown keys {', '.join(unknown)}")
    return cfg


def merged_settings(args: argparse.Namespace) -> tuple[dict, descent.RunConfig]:
    """Config file values overridden by every flag given on the command line."""
    cfg = load_config(args.config) if getattr(args, "config", None) else {}
    for key in EXPERIMENT_KEYS | set(RUN_FLAGS):
        val = getattr(args, key, None)
        if val is not None and val is not False:
            cfg[RUN_FLAGS.get(key, key)] = val
    run_kw = {k: cfg[k] for k in descent.RunConfig.keys() if k in cfg}
    if "seed" in cfg and "rng_seed" not in run_kw:
        run_kw["rng_seed"] = int(cfg["seed"])
    try:
        run_cfg = descent.RunConfig(**run_kw)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid run configuration: {exc}") from exc
    return cfg, run_cfg


# --------------------------------------------------------------------------
# generate
# --------------------------------------------------------------------------

def cmd_generate(args) -> int:
    cfg, _ = merged_settings(args)
    if "case" not in cfg:
        raise UsageError("generate needs --case")
    a, b = parse_case(cfg["case"])
    manifest = data.DatasetManifest(admittance=a, boundary=b, noise=float(cfg.get("noise", 0.0)),
                                    seed=int(cfg.get("seed", 0)))
    out = Path(cfg.get("out", "."))
    pairs = data.make_dataset(manifest)
    fwd = data.forward_solve(a, b, manifest.forward_n_boundary, manifest.forward_n_layers)
    residuals = data.flux_compatibility(fwd)
    try:
        out.mkdir(parents=True, exist_ok=True)
        data.serialize_dataset(pairs, manifest, out / "dataset.txt")
        with open(out / "manifest.json", "w") as fh:
            json.dump(asdict(manifest), fh, indent=2)
            fh.write("\n")
    except OSError as exc:
        print(f"error: cannot write to {out}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    for line in manifest.to_lines():
        print(line)
    for k, r in enumerate(residuals, start=1):
        print(f"flux compatibility residual k={k}: {r:.3e}")
    print(f"wrote {out / 'dataset.txt'} and {out / 'manifest.json'}")
    return EXIT_OK


# --------------------------------------------------------------------------
# reconstruct
# --------------------------------------------------------------------------

def write_alpha_profile(path, gamma_nodes, alpha) -> None:
    s = geo.arclength_params(gamma_nodes)
    with open(path, "w") as fh:
        fh.write("arclength,alpha\n")
        for si, ai in zip(s, alpha):
            fh.write(f"{float(si)!r},{float(ai)!r}\n")


def reconstruct_one(pairs, manifest: data.DatasetManifest, run_cfg: descent.RunConfig, out: Path,
                    emit_svg: bool = False, log_every: int = 25) -> dict:
    """Run one reconstruction and write its outputs to ``out``; returns the summary."""
    out.mkdir(parents=True, exist_ok=True)
    truth = geo.sample_case_curve(manifest.boundary, 1000) if manifest.boundary in geo.BOUNDARY_CASES else None
    label = f"{manifest.admittance}:{manifest.boundary}"
    t_start = time.perf_counter()

    def progress(state, rec):
        if log_every and rec.iter % log_every == 0:
            h = "" if np.isnan(rec.hausdorff) else f" hausdorff={rec.hausdorff:.4f}"
            print(f"[{label}] iter {rec.iter:4d} J={rec.J:.4e} t={rec.t:.3e} eps={rec.eps:.3e}{h}", flush=True)

    failure = ""
    try:
        state = descent.run_reconstruction(run_cfg, pairs, truth=truth, callback=progress)
    except SolverError as exc:
        raise RuntimeError(f"{label}: {exc}") from exc
    hist = state.history
    hist.to_csv(out / "history.csv")
    snap_dir = out / "snapshots"
    snap_dir.mkdir(exist_ok=True)
    for k, poly in sorted(state.snapshots.items()):
        geo.write_polyline_csv(snap_dir / f"gamma_{k:04d}.csv", poly)
    write_alpha_profile(out / "alpha.csv", state.mesh.gamma_nodes, state.alpha)

    J = hist.column("J")
    if state.breakdown:
        failure = state.message
    summary = {
        "case": label,
        "noise": manifest.noise,
        "seed": manifest.seed,
        "iterations": int(state.iteration),
        "initial_J": float(J[0]),
        "final_J": float(J[-1]),
        "J_reduction": float(J[0] / J[-1]) if J[-1] > 0 else None,
        "J_monotone": bool(np.all(np.diff(J) <= 0)),
        "final_hausdorff": None if truth is None else float(hist.column("hausdorff")[-1]),
        "max_inverted": int(max(r.inverted_count for r in hist.records)),
        "breakdown": bool(state.breakdown),
        "message": state.message,
        "config": asdict(run_cfg),
    }
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    if emit_svg:
        curves = {"initial": state.snapshots[0]}
        if truth is not None:
            curves["true"] = truth
        curves["reconstructed"] = state.mesh.gamma_nodes
        curves["outer boundary"] = state.mesh.sigma_nodes
        svg.boundary_overlay(out / "boundary.svg", curves)
        svg.history_chart(out / "history.svg", {
            "J": J, "||theta||": np.sqrt(hist.column("theta_norm_sq")), "tau": hist.column("tau")})
    elapsed = time.perf_counter() - t_start
    h = summary["final_hausdorff"]
    print(f"[{label}] done: {state.iteration} iterations, J {J[0]:.3e} -> {J[-1]:.3e}"
          + ("" if h is None else f", hausdorff {h:.4f}") + f" ({elapsed:.1f} s)", flush=True)
    if failure:
        print(f"[{label}] {failure}", file=sys.stderr, flush=True)
    return summary


def _case_job(job):
    a, b, noise, seed, run_cfg, out, emit_svg, log_every = job
    manifest = data.DatasetManifest(admittance=a, boundary=b, noise=noise, seed=seed)
    pairs = data.make_dataset(manifest)
    return reconstruct_one(pairs, manifest, run_cfg, out, emit_svg, log_every)


def cmd_reconstruct(args) -> int:
    cfg, run_cfg = merged_settings(args)
    out = Path(cfg.get("out", "results"))
    emit_svg = bool(cfg.get("emit_svg", False))
    log_every = int(cfg.get("log_every", 25))
    noise, seed = float(cfg.get("noise", 0.0)), int(cfg.get("seed", 0))
    if noise < 0:
        raise UsageError("--noise must be non-negative")

    if cfg.get("all_cases"):
        jobs = [(a, b, noise, seed, run_cfg, out / f"{a}_{b}", emit_svg, log_every)
                for a in geo.ADMITTANCE_CASES for b in geo.BOUNDARY_CASES]
        workers = int(cfg.get("workers", 1))
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                summaries = list(pool.map(_case_job, jobs))
        else:
            summaries = [_case_job(job) for job in jobs]
        with open(out / "cases.json", "w") as fh:
            json.dump(summaries, fh, indent=2)
            fh.write("\n")
        return EXIT_FAIL if any(s["breakdown"] for s in summaries) else EXIT_OK

    if cfg.get("data"):
        path = Path(cfg["data"])
        if not path.exists():
            raise UsageError(f"dataset {path} does not exist")
        try:
            pairs, manifest = data.load_dataset(path)
        except data.DatasetError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_FAIL
    elif cfg.get("case"):
        a, b = parse_case(cfg["case"])
        manifest = data.DatasetManifest(admittance=a, boundary=b, noise=noise, seed=seed)
        pairs = data.make_dataset(manifest)
    else:
        raise UsageError("reconstruct needs --data, --case or --all-cases")
    summary = reconstruct_one(pairs, manifest, run_cfg, out, emit_svg, log_every)
    return EXIT_FAIL if summary["breakdown"] else EXIT_OK


# --------------------------------------------------------------------------
# validate
# --------------------------------------------------------------------------

def cmd_validate(args) -> int:
    names = [c.strip() for c in args.checks.split(",") if c.strip()] if args.checks else None
    try:
        results = validation.run_checks(names, fault=args.fault)
    except KeyError as exc:
        raise UsageError(exc.args[0]) from exc
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.check}: {r.value:.4g} "
              f"({'<=' if r.upper else '>='} {r.threshold:g})")
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        validation.write_report(results, out)
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kvrecon", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON file with defaults; flags override it")
        p.add_argument("--case", help="case pair such as A2:B1")
        p.add_argument("--out", help="output directory")
        p.add_argument("--noise", type=float, help="noise level delta on the fluxes")
        p.add_argument("--seed", type=int, help="noise seed")

    g = sub.add_parser("generate", help="synthesize a Cauchy dataset")
    common(g)
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("reconstruct", help="recover the inner boundary and admittance")
    common(r)
    r.add_argument("--data", help="dataset file written by 'generate'")
    r.add_argument("--r0", type=float, help="radius of the initial circle")
    r.add_argument("--alpha0", type=float, help="initial admittance")
    r.add_argument("--mu", type=float, help="shape step scaling")
    r.add_argument("--beta", type=float, help="balancing constant (> 1)")
    r.add_argument("--max-iter", type=int, help="iteration cap (500 exact, 200 noisy)")
    r.add_argument("--emit-svg", action="store_true", default=None, help="write SVG figures")
    r.add_argument("--all-cases", action="store_true", default=None, help="run all nine case pairs")
    r.add_argument("--workers", type=int, help="parallel processes for --all-cases")
    r.add_argument("--log-every", type=int, help="progress line period (0 silences)")
    r.set_defaults(func=cmd_reconstruct)

    v = sub.add_parser("validate", help="run the gradient and discretization checks")
    v.add_argument("--checks", help="comma-separated subset of: " + ", ".join(validation.CHECKS))
    v.add_argument("--out", help="CSV report path")
    v.add_argument("--fault", choices=validation.FAULTS, help="inject a known fault (self-test)")
    v.set_defaults(func=cmd_validate)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RuntimeError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
