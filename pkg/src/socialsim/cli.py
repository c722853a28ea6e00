"""socialsim command line: run, controls, eval, classify.

Exit codes: 0 success, 1 invalid input or unreadable files, 2 provider failure.
Metric values never change the exit code.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import yaml

from .artifacts import (
    ArtifactError,
    RunBundle,
    attitudes_tsv,
    load_bundle,
    load_engagement,
    parse_attitudes_tsv,
    run_log_jsonl,
    trajectory_tsv,
)
from .dynamics import classify_evolution
from .engine import CONTROLS, Simulation, Trajectory, apply_control, build_providers
from .errors import ProviderError, SeriesTooShort, SimError, SimulationAborted
from .metrics import evaluate
from .model import ScenarioConfig, load_scenario
from .plots import attitudes_svg, overlay_svg, overview_svg

log = logging.getLogger("socialsim")

OK, BAD_INPUT, PROVIDER_FAILURE = 0, 1, 2


def _err(msg: str) -> None:
    print(f"socialsim: error: {msg}", file=sys.stderr)


def _load(args) -> tuple[ScenarioConfig, Path]:
    path = Path(args.scenario)
    config = load_scenario(path)
    if args.seed is not None:
        config = replace(config, rng_seed=args.seed)
    return config, path.parent


def _simulate(config: ScenarioConfig, args, base_dir: Path) -> Trajectory:
    providers = build_providers(
        config, args.provider, endpoint=args.endpoint, model_name=args.model, timeout=args.timeout
    )
    return Simulation(config, providers, base_dir=base_dir).run()


def write_run(out: Path, config: ScenarioConfig, traj: Trajectory, metrics=None) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    bundle = RunBundle.from_run(config, traj, metrics)
    files = {
        "trajectory.tsv": trajectory_tsv(traj.engagement),
        "attitudes.tsv": attitudes_tsv(traj.agent_ids, traj.attitudes),
        "run_log.jsonl": run_log_jsonl(traj.run_log),
        "overview.svg": overview_svg(
            traj.views,
            bundle.interventions,
            [bool(d) for d in traj.discussions],
            title=f"{config.event.id}: views",
        ),
        "bundle.json": bundle.dumps(),
    }
    written = []
    for name, text in files.items():
        p = out / name
        p.write_text(text, encoding="utf-8")
        written.append(p)
    return written


def cmd_run(args) -> int:
    try:
        config, base = _load(args)
        metrics = None
        traj = _simulate(config, args, base)
        if args.reference:
            metrics = evaluate(traj, load_engagement(args.reference)).to_dict()
    except (SimulationAborted, ProviderError) as exc:
        _err(str(exc))
        return PROVIDER_FAILURE
    except (SimError, OSError, yaml.YAMLError) as exc:
        _err(str(exc))
        return BAD_INPUT
    for p in write_run(Path(args.out), config, traj, metrics):
        print(p)
    return OK


def _parse_controls(text: str) -> list[int]:
    if not text.strip():
        return []
    ids = sorted({int(x) for x in text.split(",") if x.strip()})
    bad = [i for i in ids if i not in CONTROLS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown control(s) {bad}; choose from 1..5")
    return ids


def cmd_controls(args) -> int:
    try:
        config, base = _load(args)
        variants = {"baseline": config}
        for c in args.controls:
            variants[f"control_{c}"] = replace(apply_control(config, c, args.offset), control=None)
        with ThreadPoolExecutor(max_workers=min(4, len(variants))) as pool:
            futures = {name: pool.submit(_simulate, cfg, args, base) for name, cfg in variants.items()}
            results = {name: f.result() for name, f in futures.items()}
    except (SimulationAborted, ProviderError) as exc:
        _err(str(exc))
        return PROVIDER_FAILURE
    except (SimError, OSError, yaml.YAMLError) as exc:
        _err(str(exc))
        return BAD_INPUT
    out = Path(args.out)
    for name, traj in results.items():
        write_run(out / name, variants[name], traj)
    T = config.event.horizon_T
    lines = ["# socialsim comparison v1", "\t".join(["condition", "total_views"] + [f"day{t}" for t in range(1, T + 1)])]
    for name, traj in results.items():
        lines.append("\t".join([name, repr(sum(traj.views))] + [repr(v) for v in traj.views]))
    (out / "comparison.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    (out / "overlay.svg").write_text(
        overlay_svg({name: traj.views for name, traj in results.items()}, title=f"{config.event.id}: views by condition"),
        encoding="utf-8",
    )
    print("\n".join(lines[1:]))
    return OK


def cmd_eval(args) -> int:
    try:
        sim = load_engagement(args.simulated)
        ref = load_engagement(args.reference)
        reps = [load_engagement(p) for p in args.repeats]
        report = evaluate(sim, ref, reps or None)
    except (SimError, OSError) as exc:
        _err(str(exc))
        return BAD_INPUT
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return OK


def _load_series(path: Path) -> dict[str, list[float]]:
    text = path.read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        return load_bundle(path).attitude_series()
    return parse_attitudes_tsv(text)


def cmd_classify(args) -> int:
    path = Path(args.bundle)
    try:
        series = _load_series(path)
        mode = classify_evolution(series)
    except SeriesTooShort as exc:
        _err(f"{exc}")
        return BAD_INPUT
    except (SimError, OSError) as exc:
        _err(str(exc))
        return BAD_INPUT
    out = Path(args.out) if args.out else path.parent / "attitudes.svg"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(attitudes_svg(series, title=f"attitudes: {mode.value}"), encoding="utf-8")
    print(mode.value)
    return OK


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("scenario", help="scenario YAML file")
    p.add_argument("--seed", type=int, help="override the scenario's rng_seed")
    p.add_argument("--out", default="out", help="output directory (default: out)")
    p.add_argument("--provider", choices=("scripted", "rules", "remote"), default="rules",
                   help="backend for crowd agents and sources with policy 'inherit' (default: rules)")
    p.add_argument("--endpoint", help="chat-completions URL for --provider remote")
    p.add_argument("--model", default="llama3-8b", help="model name sent to the remote endpoint")
    p.add_argument("--timeout", type=float, default=60.0, help="per-request timeout in seconds")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="socialsim", description="Simulate public response to interventions on social events.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate one scenario and write a run bundle")
    _add_run_flags(p)
    p.add_argument("--reference", help="reference trajectory to score the run against")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("controls", help="run the baseline and counterfactual controls")
    _add_run_flags(p)
    p.add_argument("--controls", type=_parse_controls, default=[1, 2, 3, 4, 5],
                   help="comma-separated control ids, e.g. 4,5 (default: all)")
    p.add_argument("--offset", type=int, help="day shift for control 3 (default from scenario)")
    p.set_defaults(func=cmd_controls)

    p = sub.add_parser("eval", help="score a trajectory against a reference")
    p.add_argument("simulated")
    p.add_argument("reference")
    p.add_argument("--repeats", nargs="*", default=[], help="repeat runs for the z-score")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("classify", help="classify the opinion evolution of a run")
    p.add_argument("bundle", help="bundle.json or attitudes.tsv")
    p.add_argument("--out", help="where to write the attitude plot (default: next to the input)")
    p.set_defaults(func=cmd_classify)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
