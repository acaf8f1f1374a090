"""Command-line front end: ``sadyn {simulate,stability,goodfn,linearise,report}``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import traceback
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import scipy.linalg

from . import dynamics, goodfn, groups, linearise
from .config import ScenarioConfig
from .errors import ConfigError, MissingArtifact, SadynError
from .qs_arith import INF, BallQS, Place

EXIT_PASS, EXIT_MISMATCH, EXIT_CONFIG, EXIT_INTERNAL = 0, 1, 2, 3
CSV_COLUMNS = ("scenario", "i", "translator_param", "test_fn", "empirical", "reference",
               "mc_err", "distance")


def bundled_configs() -> dict[str, Path]:
    """Bundled scenario configs by stem."""
    root = resources.files("sadyn") / "scenarios"
    return {Path(p.name).stem: Path(str(p)) for p in root.iterdir() if p.name.endswith(".cfg")}


def resolve_config(ref: str) -> Path:
    p = Path(ref)
    if p.exists():
        return p
    bundled = bundled_configs()
    if ref in bundled:
        return bundled[ref]
    raise ConfigError(f"no config file or bundled scenario named {ref!r}")


@dataclass
class RunResult:
    name: str
    passed: bool
    summary: str
    rows: list
    record: dict
    plots: dict


def _fmt(x) -> str:
    if isinstance(x, float):
        return "nan" if math.isnan(x) else repr(x)
    return str(x)


def _csv_text(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _diag(t: float) -> np.ndarray:
    return np.diag([math.exp(t), math.exp(-t)])


def _translators(cfg: ScenarioConfig, H: groups.SubgroupDescriptor) -> list[np.ndarray]:
    family = cfg.get("translator", "family", "diag")
    params = [float(t) for t in cfg.get("translator", "params")]
    size = groups.matrix_size(H.group_tag)
    out = []
    for t in params:
        if family == "diag":
            g = _diag(t)
        elif family == "rotation":
            g = dynamics._rot(t)
        elif family == "identity":
            g = np.eye(2)
        else:
            raise ConfigError(f"family {family!r} is not available for this pipeline",
                              field="translator.family")
        if size == 4:
            g = scipy.linalg.block_diag(g, np.eye(2))
        elif size != 2:
            raise ConfigError("translator families are defined for SL(2) groups", field="subgroup.H")
        out.append(g)
    return out


# --------------------------------------------------------------------------
# pipelines


def _run_simulate(cfg: ScenarioConfig, seed, workers, scale) -> RunResult:
    scn = cfg.to_scenario(scale, seed)
    rep = dynamics.convergence_experiment(scn, workers=workers)
    rows = [tuple(r) for r in rep.rows]
    curve = rep.distances if scn.expected == "limit" else rep.compact_mass
    witness = {"checks": rep.checks, "tightness": rep.tightness, "strong_tv": rep.strong_tv,
               "distance_errors": rep.distance_errors}
    witness.update(rep.extra)
    inputs = {"config": cfg.serialize(), "seed": scn.seed, "samples": scn.samples,
              "ref_samples": scn.ref_samples}
    record = linearise.report_record("simulate", inputs, rep.verdict, witness, curve)
    plots = {
        "distance": [("translator_param", "distance", "mc_err")]
        + [(t, d, e) for t, d, e in zip(scn.params, rep.distances, rep.distance_errors)],
        "systole": [("translator_param",) + tuple(f"mass_sys<{x:g}" for x in scn.thresholds)]
        + [(t,) + tuple(m) for t, m in zip(scn.params, rep.tightness)],
    }
    return RunResult(cfg.name, rep.verdict == "pass", rep.summary, rows, record, plots)


def _omega_grid(H: groups.SubgroupDescriptor, window, n: int = 64) -> list[np.ndarray]:
    """Deterministic sample of Ω on an even grid of the chart coordinate."""
    if H.factor == "Rotation":
        lo, hi = window or (0.0, 2 * math.pi)
        ts = lo + (hi - lo) * (np.arange(n) + 0.5) / n
        return [dynamics._rot(t) for t in ts]
    if not H.lie_basis:
        return [np.eye(groups.matrix_size(H.group_tag))]
    if len(H.lie_basis) != 1:
        raise ConfigError("stability windows must be one-parameter", field="subgroup.H")
    lo, hi = window or (-0.25, 0.25)
    X = np.asarray(H.lie_basis[0], float)
    ts = lo + (hi - lo) * (np.arange(n) + 0.5) / n
    return list(dynamics.expm_batch(ts[:, None, None] * X[None]))


def _run_stability(cfg: ScenarioConfig, seed, workers, scale) -> RunResult:
    H = groups.catalogue(cfg.get("subgroup", "H"))
    window = cfg.get("subgroup", "window")
    window = tuple(float(w) for w in window) if window else None
    Y = _translators(cfg, H)
    omega = _omega_grid(H, window)
    mode = cfg.get("stability", "mode", "analytic")
    factor = float(cfg.get("thresholds", "factor", 10))
    rep = linearise.stability_check(Y, omega, mode=mode, factor=factor)
    expected = cfg.get("expected", "outcome")
    passed = rep.verdict == expected
    params = [float(t) for t in cfg.get("translator", "params")]
    rows = []
    traj = rep.witness["trajectory"] if rep.witness else [None] * len(Y)
    for i, t in enumerate(params):
        val = float(traj[i]) if traj[i] is not None else float("nan")
        rows.append((cfg.name, i, t, f"{mode}_sup_norm", val, rep.baseline, 0.0, rep.c_or_C))
    record = linearise.report_record("stability", {"config": cfg.serialize()}, rep.verdict,
                                     rep.witness, [rep.c_or_C, rep.baseline])
    word = "c" if mode == "analytic" else "C"
    summary = (f"{cfg.name}: {'PASS' if passed else 'FAIL'} (stability {rep.verdict}, expected "
               f"{expected}; {word} = {rep.c_or_C:.4g}, baseline {rep.baseline:.4g})")
    if rep.witness:
        summary += f"; witness v = {np.round(rep.witness['vector'], 6).tolist()}"
    return RunResult(cfg.name, passed, summary, rows, record, {})


def _run_goodfn(cfg: ScenarioConfig, seed, workers, scale) -> RunResult:
    coeffs = cfg.get("goodfn", "coeffs")
    place_word = str(cfg.get("goodfn", "place", "inf"))
    depth = int(cfg.get("goodfn", "depth", 6))
    eps = [float(e) for e in cfg.get("goodfn", "eps", [1e-3, 1e-2, 1e-1, 0.5])]
    if place_word in ("inf", "R", "real"):
        f = goodfn.GoodCandidate(BallQS({INF: (0.0,)}, 1.0), goodfn.Polynomial(coeffs), "P")
    else:
        try:
            p = int(place_word)
            place = Place(p)
        except ValueError:
            raise ConfigError(f"place must be 'inf' or a prime, got {place_word!r}",
                              field="goodfn.place") from None
        f = goodfn.GoodCandidate(BallQS({place: (0,)}, 1.0), goodfn.PadicPolynomialAbs(coeffs, p), "P")
    n_points = max(1000, int(100_000 * scale))
    C, alpha = cfg.get("goodfn", "C"), cfg.get("goodfn", "alpha")
    if C is None or alpha is None:
        fitted = goodfn.fit_good(f, np.logspace(-4, -1, 13), n_points=n_points, depth=depth)
        C = fitted.C if C is None else C
        alpha = fitted.alpha if alpha is None else alpha
    consts = goodfn.GoodConstants(float(C), float(alpha))
    verdict = goodfn.verify_good(f, consts, eps, n_points=n_points, depth=depth)
    got = "pass" if verdict.passed else "fail"
    expected = cfg.get("expected", "outcome")
    rows = [(cfg.name, i, e, "sublevel_fraction", m, consts.C * e**consts.alpha, verdict.resolution,
             max(0.0, m - consts.C * e**consts.alpha))
            for i, (e, m) in enumerate(verdict.measured.items())]
    record = linearise.report_record(
        "goodfn", {"config": cfg.serialize()}, got,
        None if verdict.passed else {"eps": verdict.worst_eps, "ratio": verdict.worst_ratio,
                                     "bound": verdict.bound},
        [[e, m] for e, m in verdict.measured.items()])
    summary = (f"{cfg.name}: {'PASS' if got == expected else 'FAIL'} ((C, α) = "
               f"({consts.C:.4g}, {consts.alpha:.4g}) {got}, expected {expected})")
    return RunResult(cfg.name, got == expected, summary, rows, record, {})


def _run_linearise(cfg: ScenarioConfig, seed, workers, scale) -> RunResult:
    H = groups.catalogue(cfg.get("subgroup", "H"))
    seq = _translators(cfg, H)
    params = [float(t) for t in cfg.get("translator", "params")]
    factor = float(cfg.get("thresholds", "factor", 10))
    res = linearise.focusing_class_test(H, seq, params, factor)
    expected = cfg.get("expected", "outcome")
    got = "O1Z" if res.cls == "O1Z" else "not-O1Z"
    rows = [(cfg.name, i, t, "max_ad_norm", c, res.curve[0], 0.0, c / res.curve[0] if res.curve[0] else 0.0)
            for i, (t, c) in enumerate(zip(params, res.curve))]
    record = linearise.report_record("linearise", {"config": cfg.serialize()}, got,
                                     {"growth_exponent": res.growth_exponent, "ratio": res.ratio},
                                     res.curve)
    slope = "n/a" if res.growth_exponent is None else f"{res.growth_exponent:.3f}"
    summary = (f"{cfg.name}: {'PASS' if got == expected else 'FAIL'} (class {got}, expected "
               f"{expected}, growth exponent {slope})")
    return RunResult(cfg.name, got == expected, summary, rows, record, {})


PIPELINES = {"simulate": _run_simulate, "stability": _run_stability, "goodfn": _run_goodfn,
             "linearise": _run_linearise}


def run_scenario(config_path, out_dir=".", seed=None, workers=1, samples_scale=1.0,
                 pipeline: str | None = None) -> int:
    """Run one config and write ``<name>.csv``, ``<name>.json`` and ``<name>.summary.txt``.

    Returns the exit status: 0 when the verdict matches the expected outcome,
    1 on a mismatch. Config problems raise :class:`ConfigError`.
    """
    cfg = ScenarioConfig.load(resolve_config(str(config_path)))
    if pipeline is not None and cfg.pipeline != pipeline:
        raise ConfigError(f"config is a {cfg.pipeline!r} pipeline, not {pipeline!r}",
                          field="scenario.pipeline")
    try:
        result = PIPELINES[cfg.pipeline](cfg, seed, workers, samples_scale)
    except ConfigError:
        raise
    except SadynError as exc:
        raise SadynError(f"scenario {cfg.name}: {exc}") from exc
    write_artifacts(result, Path(out_dir))
    return EXIT_PASS if result.passed else EXIT_MISMATCH


def _table_text(rows) -> str:
    return "".join("\t".join(_fmt(v) for v in r) + "\n" for r in rows)


def write_artifacts(result: RunResult, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"{result.name}.csv").write_text(_csv_text(result.rows))
    record = dict(result.record, passed=result.passed, summary=result.summary)
    (out_dir / f"{result.name}.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
    (out_dir / f"{result.name}.summary.txt").write_text(result.summary + "\n")
    for kind, table in result.plots.items():
        (out_dir / f"{result.name}.{kind}.tsv").write_text(_table_text(table))


def emit_report(artifact_dir, names=None) -> str:
    """Combine the JSON artifacts of a directory into ``report.summary.txt``.

    One line per scenario (sorted by name) with its verdict and worst margin.
    Raises :class:`MissingArtifact` when there is nothing to report or a
    requested scenario has no artifact.
    """
    d = Path(artifact_dir)
    if names:
        paths = [d / f"{n}.json" for n in names]
        missing = [p.name for p in paths if not p.exists()]
        if missing:
            raise MissingArtifact(f"missing artifacts: {', '.join(missing)}")
    else:
        paths = sorted(p for p in d.glob("*.json")) if d.is_dir() else []
    if not paths:
        raise MissingArtifact(f"no artifacts in {d}")
    lines = []
    for p in sorted(paths):
        try:
            rec = json.loads(p.read_text())
            lines.append(rec["summary"])
        except (ValueError, KeyError) as exc:
            raise MissingArtifact(f"{p.name} is not a scenario artifact ({exc})") from None
    text = "\n".join(lines) + "\n"
    (d / "report.summary.txt").write_text(text)
    return text


# --------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sadyn", description=__doc__)
    ap.add_argument("--seed", type=int, default=None, help="override the config seed")
    ap.add_argument("--out-dir", default=".", help="directory for artifacts")
    ap.add_argument("--workers", type=int, default=1, help="sampling threads")
    ap.add_argument("--samples-scale", type=float, default=1.0, help="multiply sample counts")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in PIPELINES:
        sp = sub.add_parser(name, help=f"run {name} configs")
        sp.add_argument("configs", nargs="+", help="config paths or bundled scenario names")
    rp = sub.add_parser("report", help="summarise artifacts in --out-dir")
    rp.add_argument("names", nargs="*", help="scenario names (default: all)")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.workers < 1 or args.samples_scale <= 0:
        print("error: --workers must be ≥ 1 and --samples-scale positive", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "report":
            sys.stdout.write(emit_report(args.out_dir, args.names))
            return EXIT_PASS
        status = EXIT_PASS
        for ref in args.configs:
            code = run_scenario(ref, args.out_dir, args.seed, args.workers, args.samples_scale,
                                pipeline=args.command)
            name = ScenarioConfig.load(resolve_config(ref)).name
            print((Path(args.out_dir) / f"{name}.summary.txt").read_text(), end="")
            status = max(status, code)
        return status
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingArtifact as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - mapped to the internal-error exit code
        traceback.print_exc()
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
