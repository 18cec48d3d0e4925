"""Command-line driver: length search, evolution, single-genome evaluation,
and history reporting.

Exit codes are a stable contract: 0 success, 2 usage/config error,
3 no optimal space, 4 fitness backend unavailable.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import statistics
import sys
from dataclasses import replace

from .config import ConfigError, EvolutionConfig, RunConfig, load_run_config
from .evolution import (
    evolve,
    load_checkpoint,
    write_history_csv,
)
from .fitness import BackendUnavailable, make_evaluator
from .genome import MalformedGenome, OutOfShape, deserialize, effective_length, infer_shapes, to_json_obj
from .lengthsearch import (
    LengthSpace,
    NoOptimalSpace,
    OptimalSpace,
    run_length_search,
    write_space_reports,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NO_SPACE = 3
EXIT_BACKEND = 4


def _load_config(args) -> RunConfig:
    run = load_run_config(args.config)
    evo = run.evolution
    if getattr(args, "seed", None) is not None:
        evo = replace(evo, master_seed=args.seed)
    if getattr(args, "jobs", None) is not None:
        evo = replace(evo, jobs=args.jobs)
    out_dir = getattr(args, "out", None) or run.out_dir or "."
    return RunConfig(evolution=evo, backend=run.backend, out_dir=out_dir)


def cmd_length_search(args) -> int:
    try:
        run = _load_config(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    os.makedirs(run.out_dir, exist_ok=True)
    try:
        evaluator = make_evaluator(run.backend, run.evolution, cache_path=os.path.join(run.out_dir, "cache.jsonl"))
    except BackendUnavailable as e:
        print(f"backend unavailable: {e}", file=sys.stderr)
        return EXIT_BACKEND
    try:
        optimal, results = run_length_search(run.evolution, evaluator)
    except NoOptimalSpace as e:
        write_space_reports(run.out_dir, e.results, None, run.evolution)
        print("no optimal space: every candidate fell below the fitness floor", file=sys.stderr)
        return EXIT_NO_SPACE
    finally:
        evaluator.close()
    write_space_reports(run.out_dir, results, optimal, run.evolution)
    print(f"[{optimal.selected.label}] (effective max {optimal.effective_max_length})")
    return EXIT_OK


def _space_from_flag(text: str, cfg: EvolutionConfig) -> LengthSpace:
    try:
        lo, hi = (int(part) for part in text.split(":"))
    except ValueError:
        raise ConfigError(f"--space must look like MIN:MAX, got {text!r}") from None
    if lo < 0 or hi <= lo:
        raise ConfigError(f"--space bounds must satisfy 0 <= MIN < MAX, got {text!r}")
    return LengthSpace(
        index=lo // cfg.space_width + 1,
        min_length=lo,
        max_length=hi,
        candidate_length=(lo + hi) // 2,
    )


def _space_from_report(out_dir: str, margin: int) -> OptimalSpace | None:
    path = os.path.join(out_dir, "spaces.json")
    if not os.path.exists(path):
        return None
    with open(path, "r", encoding="utf-8") as fh:
        report = json.load(fh)
    optimal = report.get("optimal")
    if not optimal or not optimal.get("selected"):
        return None
    return OptimalSpace(selected=LengthSpace.from_json(optimal["selected"]), margin=optimal["margin"])


def cmd_evolve(args) -> int:
    try:
        run = _load_config(args)
        cfg = run.evolution
        resume_state = None
        if args.resume:
            pop, rows, space = load_checkpoint(args.resume)
            resume_state = (pop, rows)
        elif args.space:
            space = OptimalSpace(selected=_space_from_flag(args.space, cfg), margin=cfg.margin)
        else:
            space = _space_from_report(run.out_dir, cfg.margin)
            if space is None:
                print(
                    "no space given: pass --space MIN:MAX or run length-search into the same --out first",
                    file=sys.stderr,
                )
                return EXIT_CONFIG
    except (ConfigError, OSError, json.JSONDecodeError, KeyError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    os.makedirs(run.out_dir, exist_ok=True)
    try:
        evaluator = make_evaluator(run.backend, cfg, cache_path=os.path.join(run.out_dir, "cache.jsonl"))
    except BackendUnavailable as e:
        print(f"backend unavailable: {e}", file=sys.stderr)
        return EXIT_BACKEND

    try:
        best, history = evolve(
            cfg,
            space,
            evaluator,
            checkpoint_path=os.path.join(run.out_dir, "checkpoint.json"),
            resume_state=resume_state,
        )
    finally:
        evaluator.close()

    history_path = args.history or os.path.join(run.out_dir, "history.csv")
    write_history_csv(history_path, history.rows)
    best_payload = {
        "id": best.id,
        "genome": to_json_obj(best),
        "effective_length": effective_length(best),
        "fitness": history.best_record.fitness,
        "loss": history.best_record.loss,
        "num_params": history.best_record.num_params,
    }
    with open(os.path.join(run.out_dir, "best.json"), "w", encoding="utf-8") as fh:
        json.dump(best_payload, fh, sort_keys=True, indent=2)
        fh.write("\n")

    if history.best_record.fitness <= 0.0:
        print("warning: best fitness is 0 (every member may be out of shape for this input)", file=sys.stderr)
    print(f"best {best.id}: length {effective_length(best)}, fitness {history.best_record.fitness}")
    return EXIT_OK


def cmd_eval(args) -> int:
    try:
        run = _load_config(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    cfg = run.evolution
    try:
        with open(args.genome, "r", encoding="utf-8") as fh:
            genome = deserialize(fh.read())
    except (OSError, MalformedGenome) as e:
        print(f"cannot load genome: {e}", file=sys.stderr)
        return EXIT_CONFIG

    out: dict = {"genome": to_json_obj(genome), "effective_length": effective_length(genome)}
    try:
        report = infer_shapes(genome, cfg.input_shape)
    except OutOfShape as e:
        out.update({"out_of_shape": True, "layer_index": e.layer_index, "fitness": 0.0})
        print(json.dumps(out, sort_keys=True, indent=2))
        return EXIT_OK
    out.update(
        {
            "out_of_shape": False,
            "input_shape": list(report.input_shape),
            "layer_shapes": [list(s) for s in report.layer_shapes],
            "num_params": report.total_params,
        }
    )
    try:
        evaluator = make_evaluator(run.backend, cfg)
    except BackendUnavailable as e:
        print(f"backend unavailable: {e}", file=sys.stderr)
        return EXIT_BACKEND
    try:
        record = evaluator.evaluate(genome, cfg.eval_budget)
    finally:
        evaluator.close()
    out["record"] = record.to_json()
    print(json.dumps(out, sort_keys=True, indent=2))
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        with open(args.history, "r", encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            rows = list(reader)
    except OSError as e:
        print(f"cannot read history: {e}", file=sys.stderr)
        return EXIT_CONFIG
    if not rows:
        print("history is empty", file=sys.stderr)
        return EXIT_CONFIG
    try:
        parsed = [
            (int(r["generation"]), float(r["fitness"]), int(r["effective_length"]))
            for r in rows
        ]
    except (KeyError, TypeError, ValueError) as e:
        print(f"malformed history: {e}", file=sys.stderr)
        return EXIT_CONFIG

    out_dir = args.out or os.path.dirname(os.path.abspath(args.history))
    os.makedirs(out_dir, exist_ok=True)

    by_gen: dict[int, list[float]] = {}
    for gen, fitness, _ in parsed:
        by_gen.setdefault(gen, []).append(fitness)
    with open(os.path.join(out_dir, "generations.csv"), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["generation", "best_fitness", "mean_fitness"])
        for gen in sorted(by_gen):
            writer.writerow([gen, max(by_gen[gen]), statistics.fmean(by_gen[gen])])

    width = args.space_width
    by_space: dict[int, list[float]] = {}
    for _, fitness, length in parsed:
        by_space.setdefault(max(0, (length - 1) // width), []).append(fitness)
    with open(os.path.join(out_dir, "space_fitness.csv"), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["space", "best_fitness", "mean_fitness", "count"])
        for idx in sorted(by_space):
            label = f"{idx * width}-{(idx + 1) * width}"
            values = by_space[idx]
            writer.writerow([label, max(values), statistics.fmean(values), len(values)])
    print(f"wrote {os.path.join(out_dir, 'generations.csv')} and {os.path.join(out_dir, 'space_fitness.csv')}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evolen", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    ls = sub.add_parser("length-search", help="find the optimal architecture-length space")
    ls.add_argument("-c", "--config", required=True, help="run config JSON")
    ls.add_argument("--seed", type=int, help="override the master seed")
    ls.add_argument("--out", help="output directory")
    ls.add_argument("--jobs", type=int, help="concurrent fitness evaluations")
    ls.set_defaults(func=cmd_length_search)

    ev = sub.add_parser("evolve", help="run the genetic search inside a space")
    ev.add_argument("-c", "--config", required=True, help="run config JSON")
    ev.add_argument("--space", help="length space as MIN:MAX (default: prior spaces.json in --out)")
    ev.add_argument("--resume", help="checkpoint file to continue from")
    ev.add_argument("--history", help="history CSV path (default: <out>/history.csv)")
    ev.add_argument("--seed", type=int, help="override the master seed")
    ev.add_argument("--out", help="output directory")
    ev.add_argument("--jobs", type=int, help="concurrent fitness evaluations")
    ev.set_defaults(func=cmd_evolve)

    ee = sub.add_parser("eval", help="shape-check, count, and score one genome")
    ee.add_argument("genome", help="genome JSON file")
    ee.add_argument("-c", "--config", required=True, help="run config JSON")
    ee.set_defaults(func=cmd_eval)

    rp = sub.add_parser("report", help="summarize a history.csv for plotting")
    rp.add_argument("history", help="history CSV from evolve")
    rp.add_argument("--out", help="output directory (default: alongside the history)")
    rp.add_argument("--space-width", type=int, default=4, help="bucket width for the per-space summary")
    rp.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
