"""Command line entry point: ``python -m gps_replay <command> ...``.

Failures print one JSON object ``{"error": <category>, "message": ...}`` on
stderr and exit with the category's code (contract 2, config 3, ingestion 4,
numeric 5, internal 1).
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import experiment as ex
from .errors import GPSError
from .gps import sweep_switching_point
from .seeding import Seeds

NUMERIC_EXIT = 5


def _config(args) -> ex.ExperimentConfig:
    return ex.load_config(args.config)


def cmd_run(args, method=None) -> int:
    cfg = _config(args)
    if method:
        cfg = dataclasses.replace(cfg, method=method)
    if args.repeat is not None:
        cfg = dataclasses.replace(cfg, repeat=args.repeat)
    res = ex.run_experiment(cfg, args.out, args.data_root)
    print(ex.report([res]), end="")
    print(f"results written to {Path(args.out) / (cfg.name + '.result.json')}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args)
    seeds = Seeds(Seeds(cfg.seed).seed("repeat", 0))
    stream = ex.build_stream(cfg, seeds, args.data_root)
    learner = ex.make_learner(cfg, stream, seeds)
    rows = sweep_switching_point(learner, args.task, step=args.step, sim=cfg.sim)
    text = ex.sweep_csv(rows)
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text, end="")
    return 0


def cmd_report(args) -> int:
    results = [ex.read_result(p) for p in args.results]
    print(ex.report(results), end="")
    if args.csv_dir:
        out = Path(args.csv_dir)
        out.mkdir(parents=True, exist_ok=True)
        for r in results:
            (out / f"{r.config['name']}.forgetting.csv").write_text(ex.forgetting_csv(r))
    return 0


def cmd_diagnose(args) -> int:
    cfg = _config(args)
    fn = ex.diagnose_difficulty if args.kind == "difficulty" else ex.diagnose_zeroshot
    print(json.dumps(fn(cfg, args.tasks, args.data_root), indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gps_replay",
                                description="Switching-point search for replay memories.")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp):
        sp.add_argument("config", help="config JSON path or preset name "
                        f"({', '.join(ex.list_presets())})")
        sp.add_argument("--data-root", help="MNIST IDX directory (default $GPS_DATA_ROOT)")
        return sp

    for name in ("run", "oracle"):
        sp = with_config(sub.add_parser(name, help=f"{name} an experiment config"))
        sp.add_argument("--out", default="results")
        sp.add_argument("--repeat", type=int)
    sp = with_config(sub.add_parser("sweep", help="loss/accuracy of task j over a grid of a_j"))
    sp.add_argument("--task", type=int, required=True)
    sp.add_argument("--step", type=int)
    sp.add_argument("--out", help="CSV path (default stdout)")
    sp = sub.add_parser("report", help="compare result files")
    sp.add_argument("results", nargs="+")
    sp.add_argument("--csv-dir", help="also write forgetting-curve CSVs here")
    sp = sub.add_parser("diagnose", help="task difficulty and zero-shot checks")
    sp.add_argument("kind", choices=("difficulty", "zeroshot"))
    with_config(sp)
    sp.add_argument("--tasks", type=int, default=5)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"run": cmd_run, "oracle": lambda a: cmd_run(a, "oracle"),
                "sweep": cmd_sweep, "report": cmd_report, "diagnose": cmd_diagnose}
    try:
        return handlers[args.command](args)
    except GPSError as e:
        return _fail(e.category, str(e), e.exit_code)
    except FloatingPointError as e:
        return _fail("numeric", str(e), NUMERIC_EXIT)
    except OSError as e:
        return _fail("ingestion", str(e), 4)
    except Exception as e:  # noqa: BLE001 - reported, never swallowed silently
        return _fail("internal", f"{type(e).__name__}: {e}", 1)


def _fail(category: str, message: str, code: int) -> int:
    print(json.dumps({"error": category, "message": message}), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
