"""Command-line experiment harness.

Subcommands cover the full pipeline: simulate a dataset from the detector
model, reconstruct a POVM from a dataset, sweep a parameter axis, check
the jitter decay bound, and compare two stored operators. Every artifact
embeds the driving config and its hash; rerunning a command with the same
inputs rewrites identical files (timing goes to stdout only).

Exit codes: 0 success, 2 configuration error, 3 solver failure,
4 model-invalid result.
"""

from __future__ import annotations

import argparse
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
import json
import os
from pathlib import Path
import sys
import time

import numpy as np

from . import baseline, jitter, metrics
from .config import ExperimentConfig, SweepSpec, load_config, preset
from .detector import build_povm
from .errors import ConfigError, ModelInvalidError, SolverError
from .fock import FockOperator, POVMSet
from .probes import Dataset, synthesize
from .recursive import run_recursion

__all__ = ["main"]

_OVERRIDE_FLAGS = (
    ("reflectivity", float),
    ("eta_apd", float),
    ("lo_intensity", float),
    ("dim", int),
    ("max_intensity", float),
    ("intensity_step", float),
    ("phases", int),
    ("trials", int),
    ("seed", int),
    ("method", str),
    ("gamma", float),
    ("l_max", int),
    ("block_size", int),
    ("cutoff", float),
)


def _add_config_flags(p: argparse.ArgumentParser):
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", help="JSON config file")
    src.add_argument(
        "--preset",
        default=None,
        help="named preset (desk or paper); desk is the default base",
    )
    for name, cast in _OVERRIDE_FLAGS:
        flag = "--" + name.replace("_", "-")
        if name == "method":
            p.add_argument(flag, choices=("recursive", "full-joint", "pfunction"))
        else:
            p.add_argument(flag, type=cast, default=None)
    p.add_argument("--output-dir", default=None, help="default: $QDTKIT_OUTPUT_DIR or cwd")


def _build_config(args) -> ExperimentConfig:
    """Precedence: explicit flag > config file > preset > desk defaults."""
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = preset(args.preset or "desk")
    overrides = {}
    for name, _ in _OVERRIDE_FLAGS:
        val = getattr(args, name, None)
        if val is not None:
            overrides[name] = val
    if overrides:
        try:
            cfg = replace(cfg, **overrides)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    return cfg


def _outdir(args) -> Path:
    root = args.output_dir or os.environ.get("QDTKIT_OUTPUT_DIR") or "."
    path = Path(root)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _strip_volatile(obj):
    """Remove wall-clock fields so artifacts are bit-identical across reruns."""
    if isinstance(obj, dict):
        return {k: _strip_volatile(v) for k, v in obj.items() if k != "seconds"}
    if isinstance(obj, (list, tuple)):
        return [_strip_volatile(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def _write_json(path: Path, obj: dict):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {path}")


def cmd_simulate(args) -> int:
    cfg = _build_config(args)
    out = _outdir(args)
    tag = cfg.digest()
    started = time.perf_counter()

    povm = build_povm(cfg.detector())
    grid = cfg.grid()
    # a probe hotter than the truncation can represent produces data the
    # model cannot fit; surface the mass at risk before anyone reconstructs
    from .fock import coherent_amplitudes

    tail = coherent_amplitudes(float(np.sqrt(cfg.max_intensity)), 0.0, cfg.dim).tail
    print(
        f"truth: dim={cfg.dim} min_eig={povm.min_eigenvalue():.2e} "
        f"completeness_defect={povm.completeness_defect():.2e} "
        f"max_probe_tail_mass={tail:.3e}"
    )
    if tail > 1e-3:
        print(
            "warning: hottest probe loses "
            f"{tail:.2%} of its norm at this truncation; expect a misfit floor"
        )

    header = {"config": cfg.to_dict(), "config_hash": tag}
    data = synthesize(povm, grid, cfg.trials, cfg.seed)
    data.save(out / f"dataset_{tag}.json", metadata=header)
    print(f"wrote {out / f'dataset_{tag}.json'} "
          f"({grid.n_probes} probes x {cfg.trials} trials)")
    _write_json(out / f"truth_{tag}.json", {**header, "povm": povm.to_dict()})

    if args.lattice or cfg.method == "pfunction":
        lattice = cfg.lattice()
        probs = baseline.coherent_expectations(povm.outcomes[0], lattice)
        fractions = baseline.binomial_fractions(probs, cfg.trials, cfg.seed)
        np.savez(
            out / f"lattice_{tag}.npz",
            fractions=fractions,
            half_width=lattice.half_width,
            step=lattice.step,
            trials=cfg.trials,
            seed=cfg.seed,
            config_json=cfg.canonical_json(),
        )
        print(f"wrote {out / f'lattice_{tag}.npz'} ({lattice.n_axis}^2 points)")
    print(f"simulate finished in {time.perf_counter() - started:.1f}s")
    return 0


def _load_lattice(path) -> baseline.LatticeData:
    try:
        with np.load(path) as npz:
            grid = baseline.PhaseSpaceGrid(float(npz["half_width"]), float(npz["step"]))
            return baseline.LatticeData(
                grid, npz["fractions"], int(npz["trials"]), int(npz["seed"])
            )
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(f"cannot read lattice data {path}: {exc}") from exc


def _reconstruct_once(cfg: ExperimentConfig, data) -> tuple[POVMSet | None, FockOperator, dict]:
    """Dispatch one reconstruction; returns (povm or None, element 0, report)."""
    if cfg.method == "recursive":
        povm, report = run_recursion(data, cfg.recon())
        return povm, povm.outcomes[0], report
    if cfg.method == "full-joint":
        povm, report = baseline.full_joint_solve(data, cfg.dim, cfg.gamma)
        return povm, povm.outcomes[0], report
    block = baseline.pfunction_block(data.fractions, data.grid, cfg.block_size, cfg.cutoff)
    element = FockOperator(block)
    report = {
        "block_size": cfg.block_size,
        "cutoff": cfg.cutoff,
        "min_eigenvalue": float(np.linalg.eigvalsh(block).min()),
    }
    return None, element, report


def _compare_report(element, truth_element, l_max: int) -> dict:
    """Comparison dict; fidelity is null when the estimate is not PSD."""
    rel = metrics.relative_error(element, truth_element)
    dists = metrics.diagonal_distances(element, truth_element, l_max)
    try:
        fid = metrics.fidelity(element, truth_element)
    except ValueError as exc:
        return {
            "fidelity": None,
            "fidelity_note": str(exc),
            "relative_error": rel,
            "per_diagonal_distance": list(dists),
        }
    return {
        "fidelity": fid,
        "relative_error": rel,
        "per_diagonal_distance": list(dists),
    }


def _comparison_csv(path: Path, report: dict):
    fid = report["fidelity"]
    fid_txt = "" if fid is None else repr(fid)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("l,distance,fidelity,relative_error\n")
        for l, dist in enumerate(report["per_diagonal_distance"]):
            fh.write(f"{l},{dist!r},{fid_txt},{report['relative_error']!r}\n")
    print(f"wrote {path}")


def cmd_reconstruct(args) -> int:
    cfg = _build_config(args)
    out = _outdir(args)
    tag = cfg.digest()
    started = time.perf_counter()

    if cfg.method == "pfunction":
        if not args.lattice_file:
            raise ConfigError("method pfunction needs --lattice-file from simulate --lattice")
        data = _load_lattice(args.lattice_file)
    else:
        if not args.dataset:
            raise ConfigError("reconstruct needs --dataset (see simulate)")
        try:
            data = Dataset.load(args.dataset)
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"cannot read dataset {args.dataset}: {exc}") from exc

    povm, element, report = _reconstruct_once(cfg, data)
    seconds = report.get("seconds", time.perf_counter() - started)
    header = {"config": cfg.to_dict(), "config_hash": tag, "method": cfg.method}
    if povm is not None:
        _write_json(out / f"povm_{tag}.json", {**header, "povm": povm.to_dict()})
    else:
        _write_json(out / f"element_{tag}.json", {**header, "operator": element.to_dict()})
    _write_json(out / f"report_{tag}.json", {**header, "report": _strip_volatile(report)})

    if args.truth:
        truth_el = _load_operator(args.truth, args.element)
        sub = element.entries
        if sub.shape[0] < truth_el.shape[0]:
            truth_el = truth_el[: sub.shape[0], : sub.shape[0]]
        comparison = _compare_report(sub, truth_el, min(cfg.l_max, sub.shape[0] - 1))
        _write_json(out / f"comparison_{tag}.json", {**header, **_strip_volatile(comparison)})
        _comparison_csv(out / f"comparison_{tag}.csv", comparison)
        fid = comparison["fidelity"]
        print(
            f"fidelity={'n/a' if fid is None else f'{fid:.4f}'} "
            f"relative_error={comparison['relative_error']:.4f}"
        )
    print(f"reconstruct finished in {seconds:.1f}s")
    return 0


def _load_operator(path, element: int) -> np.ndarray:
    """Element matrix from any artifact schema this tool writes."""
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read operator file {path}: {exc}") from exc
    if "povm" in obj:
        obj = obj["povm"]
    if "operator" in obj:
        obj = obj["operator"]
    if "outcomes" in obj:
        ops = obj["outcomes"]
        if not 0 <= element < len(ops):
            raise ConfigError(f"element {element} out of range for {path}")
        obj = ops[element]
    try:
        return FockOperator.from_dict(obj).entries
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{path} does not hold an operator: {exc}") from exc


def _sweep_point(cfg: ExperimentConfig, axis: str, value) -> dict:
    point = cfg.with_axis(axis, value)
    povm = build_povm(point.detector())
    data = synthesize(povm, point.grid(), point.trials, point.seed)
    _, element, report = _reconstruct_once(point, data)
    truth = povm.outcomes[0]
    return {
        "axis": axis,
        "value": value,
        "fidelity": metrics.fidelity(element, truth),
        "relative_error": metrics.relative_error(element, truth),
        "seconds": report.get("seconds", float("nan")),
        "status": "ok",
    }


def cmd_sweep(args) -> int:
    cfg = _build_config(args)
    if args.axis:
        values = tuple(float(v) for v in args.values or ())
        if not values:
            raise ConfigError("--axis needs --values")
        cfg = replace(cfg, sweep=SweepSpec(args.axis, values))
    if cfg.sweep is None:
        raise ConfigError("no sweep specified: pass --axis/--values or a config with sweep")
    if cfg.method == "pfunction":
        raise ConfigError("sweep drives the grid-based methods; run pfunction directly")
    out = _outdir(args)
    tag = cfg.digest()
    axis, values = cfg.sweep.axis, cfg.sweep.values

    rows = []
    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        futures = [pool.submit(_sweep_point, cfg, axis, v) for v in values]
        for v, fut in zip(values, futures):
            try:
                rows.append(fut.result())
            except Exception as exc:  # record and continue with other points
                rows.append(
                    {
                        "axis": axis,
                        "value": v,
                        "fidelity": float("nan"),
                        "relative_error": float("nan"),
                        "seconds": float("nan"),
                        "status": f"error: {exc}",
                    }
                )

    path = out / f"sweep_{tag}.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("axis,value,fidelity,relative_error,status\n")
        for r in rows:
            fh.write(
                f"{r['axis']},{r['value']!r},{r['fidelity']!r},"
                f"{r['relative_error']!r},{r['status']}\n"
            )
    print(f"wrote {path}")
    print(f"{'value':>12}  {'fidelity':>10}  {'rel_error':>10}  status")
    for r in rows:
        print(
            f"{r['value']!r:>12}  {r['fidelity']:>10.4f}  "
            f"{r['relative_error']:>10.4f}  {r['status']}"
        )
    failed = [r for r in rows if r["status"] != "ok"]
    if failed:
        raise SolverError(f"{len(failed)} of {len(rows)} sweep points failed")
    return 0


def cmd_jitter_check(args) -> int:
    cfg = _build_config(args)
    out = _outdir(args)
    tag = cfg.digest()
    povm = build_povm(cfg.detector())
    pi0 = povm.outcomes[0]

    rows = []
    all_passed = True
    for deg in args.delta_degrees:
        delta = jitter.JitterSpec.from_degrees(deg).delta
        blurred = jitter.apply_jitter(pi0, delta)
        rep = jitter.decay_bound_check(pi0, blurred, delta)
        all_passed &= rep.passed
        for l, (ratio, bound) in enumerate(zip(rep.ratio_per_l, rep.bound_per_l)):
            rows.append((deg, l, ratio, bound, rep.passed))
        w = jitter.phase_diffusion_weights(delta, args.ratio_l)
        print(
            f"delta={deg:g}deg: bound {'holds' if rep.passed else 'VIOLATED'}; "
            f"w_{args.ratio_l}/w_0 = {w[args.ratio_l] / w[0]:.6f}"
        )

    path = out / f"jitter_{tag}.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("delta_degrees,l,max_ratio,bound,passed\n")
        for deg, l, ratio, bound, ok in rows:
            fh.write(f"{deg!r},{l},{ratio!r},{bound!r},{ok}\n")
    print(f"wrote {path}")
    if not all_passed:
        raise ModelInvalidError("jitter decay bound violated; see CSV for offenders")
    return 0


def cmd_compare(args) -> int:
    a = _load_operator(args.first, args.element)
    b = _load_operator(args.second, args.element)
    if a.shape != b.shape:
        side = min(a.shape[0], b.shape[0])
        a, b = a[:side, :side], b[:side, :side]
    l_max = args.l_max if args.l_max is not None else a.shape[0] - 1
    report = _compare_report(a, b, l_max)
    print(json.dumps(_strip_volatile(report), indent=2, sort_keys=True))
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        _comparison_csv(out, report)
    return 0


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="qdtkit",
        description="simulate and reconstruct click-detector tomography experiments",
    )
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("simulate", help="synthesize a dataset from the detector model")
    _add_config_flags(ps)
    ps.add_argument("--lattice", action="store_true", help="also write phase-space lattice data")
    ps.set_defaults(func=cmd_simulate)

    pr = sub.add_parser("reconstruct", help="estimate a POVM from a dataset")
    _add_config_flags(pr)
    pr.add_argument("--dataset", help="dataset file from simulate")
    pr.add_argument("--lattice-file", help="lattice file from simulate --lattice")
    pr.add_argument("--truth", help="truth file for comparison output")
    pr.add_argument("--element", type=int, default=0, help="POVM element index in truth")
    pr.set_defaults(func=cmd_reconstruct)

    pw = sub.add_parser("sweep", help="rerun the pipeline along one parameter axis")
    _add_config_flags(pw)
    pw.add_argument("--axis", choices=("gamma", "phases", "trials", "eta", "reflectivity"))
    pw.add_argument("--values", nargs="+", help="axis values")
    pw.add_argument("--jobs", type=int, default=1, help="concurrent sweep points")
    pw.set_defaults(func=cmd_sweep)

    pj = sub.add_parser("jitter-check", help="verify the phase-jitter decay bound")
    _add_config_flags(pj)
    pj.add_argument(
        "--delta-degrees", type=float, nargs="+", default=[5.0, 10.0, 20.0]
    )
    pj.add_argument("--ratio-l", type=int, default=18, help="report w_l/w_0 at this l")
    pj.set_defaults(func=cmd_jitter_check)

    pc = sub.add_parser("compare", help="metrics between two stored operators")
    pc.add_argument("first")
    pc.add_argument("second")
    pc.add_argument("--element", type=int, default=0)
    pc.add_argument("--l-max", type=int, default=None)
    pc.add_argument("--out", help="also write a CSV here")
    pc.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return int(args.func(args) or 0)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    except ModelInvalidError as exc:
        print(f"model invalid: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
