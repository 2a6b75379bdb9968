"""Command-line front end: binds configs to protocols and writes reports.

Exit codes: 0 success, 1 validation error (flags, config schema), 2 runtime
failure. Diagnostics go to stderr as single machine-parsable lines of the
form "ugatlab: error: <category>: <message>".
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from ugatlab.dqn import DqnConfig
from ugatlab.experiment import (
    ExperimentConfig,
    compare_uncertainty_methods,
    compute_gap,
    io,
    run_ablation,
    run_direct_transfer,
    run_ugat,
    sweep_static_alpha,
)
from ugatlab.grounding import GroundingConfig
from ugatlab.numnet import MlpSpec, cce_loss, edl_loss, gradcheck, init_model, mse_loss
from ugatlab.sim import SimConfig, generate_demand, save_demand

DEFAULT_ALPHAS = (0.2, 0.4, 0.5, 0.6, 0.8)

_SECTIONS = {
    "experiment": ExperimentConfig,
    "dqn": DqnConfig,
    "grounding": GroundingConfig,
    "sim": SimConfig,
}
# algorithm is owned by the subcommand; nested configs have their own sections
_EXPERIMENT_SKIP = {"dqn", "grounding", "sim", "layout", "out_dir", "algorithm"}


class ValidationFailure(Exception):
    pass


def _fail(category: str, message: str, code: int) -> int:
    print(f"ugatlab: error: {category}: {message}", file=sys.stderr)
    return code


def _parse_value(raw: str, field: dataclasses.Field):
    raw = raw.strip()
    ftype = str(field.type)
    if "tuple[int" in ftype:
        return tuple(int(v) for v in raw.split(",") if v.strip())
    if "tuple[float" in ftype:
        return tuple(float(v) for v in raw.split(",") if v.strip())
    if ftype.startswith("bool"):
        if raw.lower() in ("1", "true", "yes"):
            return True
        if raw.lower() in ("0", "false", "no"):
            return False
        raise ValidationFailure(f"expected a boolean, got {raw!r}")
    if ftype.startswith("int"):
        return int(raw)
    if "float" in ftype:  # float and float | None
        return float(raw)
    return raw


def load_config_file(path: str) -> dict[str, dict]:
    """Parse the line-oriented section/key=value config; unknown keys fail."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ValidationFailure(f"config file not readable: {path}")
    overrides: dict[str, dict] = {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ValidationFailure(
                f"unknown section [{section}] (known: {', '.join(sorted(_SECTIONS))})"
            )
        target = _SECTIONS[section]
        fields = {f.name: f for f in dataclasses.fields(target)}
        if section == "experiment":
            fields = {k: v for k, v in fields.items() if k not in _EXPERIMENT_SKIP}
        section_values = {}
        for key, raw in parser.items(section):
            if key not in fields:
                raise ValidationFailure(f"unknown key {key!r} in section [{section}]")
            try:
                section_values[key] = _parse_value(raw, fields[key])
            except ValidationFailure:
                raise
            except ValueError as exc:
                raise ValidationFailure(f"bad value for {section}.{key}: {exc}") from exc
        overrides[section] = section_values
    return overrides


def resolve_out_dir(args) -> str:
    if getattr(args, "out", None):
        return args.out
    return os.environ.get("UGATLAB_OUT", "runs")


def build_experiment_config(args, algorithm: str) -> ExperimentConfig:
    overrides = load_config_file(args.config) if args.config else {}
    dqn = DqnConfig(
        state_scale=tuple([1.0 / 50.0] * 12 + [1.0] * 8), **overrides.get("dqn", {})
    )
    grounding = GroundingConfig(**overrides.get("grounding", {}))
    sim = SimConfig(**overrides.get("sim", {}))
    exp = dict(overrides.get("experiment", {}))
    exp["algorithm"] = algorithm
    if args.scenario:
        exp["scenario"] = args.scenario
    if args.seeds:
        exp["seeds"] = tuple(int(s) for s in args.seeds.split(","))
    if getattr(args, "head", None):
        exp["head"] = args.head
    alpha = getattr(args, "alpha", None)
    if algorithm != "direct" and alpha:
        values = [float(v) for v in alpha.split(",")]
        if len(values) == 1:
            exp["algorithm"] = "ugat_static"
            exp["static_alpha"] = values[0]
    elif exp.get("static_alpha") is not None and exp["algorithm"] == "ugat":
        exp["algorithm"] = "ugat_static"
    try:
        return ExperimentConfig(
            dqn=dqn, grounding=grounding, sim=sim, out_dir=resolve_out_dir(args), **exp
        )
    except (TypeError, ValueError) as exc:
        raise ValidationFailure(str(exc)) from exc


def _sweep_alphas(args) -> tuple[float, ...]:
    if getattr(args, "alpha", None):
        return tuple(float(v) for v in args.alpha.split(","))
    return DEFAULT_ALPHAS


def _emit(rows, out_dir: str, quiet: bool) -> None:
    io.write_gap_reports(out_dir, rows)
    summary = io.write_summary(out_dir, rows)
    if not quiet:
        sys.stdout.write(summary.read_text())


def _run_arm(payload):
    label, cfg = payload
    runner = run_direct_transfer if cfg.algorithm == "direct" else run_ugat
    return label, runner(cfg)


def _run_arms(arms, jobs: int):
    if jobs <= 1 or len(arms) <= 1:
        return [_run_arm(a) for a in arms]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_arm, arms))


# --- subcommand handlers ------------------------------------------------------


def cmd_train_direct(args) -> int:
    cfg = build_experiment_config(args, "direct")
    report = run_direct_transfer(cfg)
    _emit([("direct", report)], cfg.out_dir, args.quiet)
    return 0


def cmd_train_ugat(args) -> int:
    cfg = build_experiment_config(args, "ugat")
    report = run_ugat(cfg)
    _emit([(cfg.protocol_label, report)], cfg.out_dir, args.quiet)
    return 0


def cmd_ablate(args) -> int:
    cfg = build_experiment_config(args, "ugat")
    if args.jobs > 1:
        from dataclasses import replace

        arms = [
            ("ugat", replace(cfg, algorithm="ugat")),
            ("no_dynamic_alpha", replace(cfg, algorithm="ugat_static", static_alpha=0.5)),
            ("no_alpha_no_uncertainty", replace(cfg, algorithm="gat", head="logits")),
            ("no_grounding", replace(cfg, algorithm="direct")),
        ]
        rows = _run_arms(arms, args.jobs)
    else:
        rows = run_ablation(cfg)
    _emit(rows, cfg.out_dir, args.quiet)
    return 0


def cmd_sweep_alpha(args) -> int:
    cfg = build_experiment_config(args, "ugat")
    alphas = _sweep_alphas(args)
    if args.jobs > 1:
        from dataclasses import replace

        arms = [("dynamic", replace(cfg, algorithm="ugat"))] + [
            (f"alpha_{a:g}", replace(cfg, algorithm="ugat_static", static_alpha=float(a)))
            for a in alphas
        ]
        rows = _run_arms(arms, args.jobs)
    else:
        rows = sweep_static_alpha(cfg, alphas)
    _emit(rows, cfg.out_dir, args.quiet)
    return 0


def cmd_compare_uncertainty(args) -> int:
    cfg = build_experiment_config(args, "ugat")
    if args.jobs > 1:
        from dataclasses import replace

        arms = [(h, replace(cfg, algorithm="ugat", head=h)) for h in ("edl", "dropout", "ensemble")]
        arms.append(("gat", replace(cfg, algorithm="gat", head="logits")))
        rows = _run_arms(arms, args.jobs)
    else:
        rows = compare_uncertainty_methods(cfg)
    _emit(rows, cfg.out_dir, args.quiet)
    return 0


def cmd_gap_report(args) -> int:
    """Merge per-seed metrics.csv files from completed run dirs."""
    from ugatlab.experiment.protocols import METRIC_KEYS

    incomplete = []
    out_rows = []
    for run_dir in args.run_dirs:
        base = Path(run_dir)
        seed_dirs = sorted(base.glob("seed*"))
        per_seed = []
        for sd in seed_dirs:
            metrics = sd / "metrics.csv"
            if not metrics.exists():
                incomplete.append(str(sd))
                continue
            rows = io.read_metrics_csv(metrics)
            sim = io.seed_mean_metrics(rows, "sim")
            real = io.seed_mean_metrics(rows, "real")
            per_seed.append((sim, real, compute_gap(real, sim)))
        if not per_seed:
            incomplete.append(str(base))
            continue
        label = f"{base.parent.name}/{base.name}" if base.parent.name else base.name
        for metric in METRIC_KEYS:
            sims = np.array([s[metric] for s, _, _ in per_seed])
            reals = np.array([r[metric] for _, r, _ in per_seed])
            deltas = np.array([d[metric] for _, _, d in per_seed])
            std = lambda v: float(v.std(ddof=1)) if len(v) > 1 else 0.0
            out_rows.append(
                (
                    label,
                    metric,
                    float(sims.mean()),
                    std(sims),
                    float(reals.mean()),
                    std(reals),
                    float(deltas.mean()),
                    std(deltas),
                    len(per_seed),
                )
            )
    out = Path(resolve_out_dir(args))
    out.mkdir(parents=True, exist_ok=True)
    path = out / "gap_report.csv"
    io._write_csv(
        path,
        ("label", "metric", "sim_mean", "sim_std", "real_mean", "real_std", "delta_mean", "delta_std", "seeds"),
        out_rows,
    )
    if not args.quiet:
        print(f"wrote {path}")
    if incomplete:
        for d in incomplete:
            print(f"ugatlab: error: gap-report: incomplete run dir skipped: {d}", file=sys.stderr)
        return 1
    return 0


def cmd_gradcheck(args) -> int:
    """Randomized gradient checks of the MLP kernel under all three losses."""
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    cases = 0
    for _ in range(args.cases):
        sizes = (int(rng.integers(3, 7)), int(rng.integers(4, 10)), int(rng.integers(2, 6)))
        x = rng.normal(size=sizes[0])
        t = int(rng.integers(sizes[-1]))
        target = rng.normal(size=sizes[-1])
        checks = [
            (MlpSpec(layer_sizes=sizes), lambda y: mse_loss(y, target)),
            (MlpSpec(layer_sizes=sizes), lambda y: cce_loss(y, t)),
            (
                MlpSpec(layer_sizes=sizes, output_activation="relu"),
                lambda y: edl_loss(y, t, anneal=0.5),
            ),
        ]
        for spec, loss in checks:
            model = init_model(spec, rng)
            res = gradcheck(model, loss, x, tolerance=args.tolerance)
            worst = max(worst, res.max_rel_error)
            cases += 1
            if not res.passed:
                print(
                    f"ugatlab: error: gradcheck: rel error {res.max_rel_error:g} at {res.worst}",
                    file=sys.stderr,
                )
                return 2
    if not args.quiet:
        print(f"gradcheck: {cases} cases, max relative error {worst:.3g} < {args.tolerance:g}")
    return 0


def cmd_demand_gen(args) -> int:
    schedule = generate_demand(args.vph, args.duration, args.seed)
    save_demand(schedule, args.out_file)
    if not args.quiet:
        print(f"wrote {len(schedule)} arrivals to {args.out_file}")
    return 0


# --- parser ------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser, head: bool = False, alpha: bool = False):
    p.add_argument("--config", help="structured-text config file")
    p.add_argument("--out", help="output directory (default $UGATLAB_OUT or ./runs)")
    p.add_argument("--seeds", help="comma-separated seed list, e.g. 1,2,3")
    p.add_argument("--scenario", help="environment variant playing reality (Default..V4)")
    p.add_argument("--jobs", type=int, default=1, help="parallel protocol arms")
    p.add_argument("--quiet", action="store_true")
    if head:
        p.add_argument("--head", help="uncertainty head: edl, dropout, ensemble, logits")
    if alpha:
        p.add_argument("--alpha", help="static grounding rate (comma list for sweep-alpha)")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ugatlab",
        description="Sim-to-real transfer laboratory for RL traffic signal control",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-direct", help="train in the sim twin, evaluate in both")
    _add_common(p)
    p.set_defaults(handler=cmd_train_direct)

    p = sub.add_parser("train-ugat", help="grounded training with uncertainty gating")
    _add_common(p, head=True, alpha=True)
    p.set_defaults(handler=cmd_train_ugat)

    p = sub.add_parser("ablate", help="ugat / fixed-alpha / vanilla / no-grounding table")
    _add_common(p, head=True)
    p.set_defaults(handler=cmd_ablate)

    p = sub.add_parser("sweep-alpha", help="static grounding rates vs the dynamic rule")
    _add_common(p, head=True, alpha=True)
    p.set_defaults(handler=cmd_sweep_alpha)

    p = sub.add_parser("compare-uncertainty", help="edl vs dropout vs ensemble vs vanilla")
    _add_common(p)
    p.set_defaults(handler=cmd_compare_uncertainty)

    p = sub.add_parser("gap-report", help="merge completed run dirs into a gap table")
    p.add_argument("run_dirs", nargs="+", help="<protocol>/<scenario> directories")
    p.add_argument("--out", help="output directory")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(handler=cmd_gap_report)

    p = sub.add_parser("gradcheck", help="finite-difference check of the numeric kernel")
    p.add_argument("--cases", type=int, default=25)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(handler=cmd_gradcheck)

    p = sub.add_parser("demand-gen", help="materialize a seeded arrival schedule")
    p.add_argument("--vph", type=float, default=2600.0)
    p.add_argument("--duration", type=float, default=3600.0)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out-file", required=True)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(handler=cmd_demand_gen)

    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except ValidationFailure as exc:
        return _fail("config", str(exc), 1)
    except (ValueError, TypeError) as exc:
        return _fail("config", str(exc), 1)
    except OSError as exc:
        return _fail("io", str(exc), 2)
    except Exception as exc:  # noqa: BLE001 - surface anything else as runtime
        return _fail("runtime", f"{type(exc).__name__}: {exc}", 2)


if __name__ == "__main__":
    sys.exit(main())
