"""Command-line front end: the pipeline as file-composable subcommands.

Stages read and write the library's JSON formats so they chain through
files: `discretize` turns raw CSV into an ordinal dataset (spending budget
for numeric bin edges), `synth` spends the plan's budget to produce
synthetic datasets plus a ledger, `train` fits the ensemble members from a
synth bundle (no budget), `eval` scores a trained model on a real test set,
`account` does budget arithmetic and certifies ledgers, and `bench` runs a
whole plan grid. Every subcommand honors --seed and writes outputs
atomically, so identical inputs give byte-identical outputs.

Exit codes follow sysexits bands: 0 success, 2 accounting refusals
(DeltaOverflow, BudgetExceeded, CertificationError), 64 usage, 65 invalid
configs or data, 66 missing input files.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

from . import __version__
from .accounting import (BudgetLedger, PrivacyBudget, SamplingRate,
                         amplify_by_subsampling, compose, per_run_budget)
from .data import (Dataset, SchemaConfig, dataset_and_ledger_from_json,
                   dataset_to_json, discretize_staging, load_csv)
from .ensembles import SynthesisPlan, EnsembleModel, synthesize_plan, train_members
from .errors import (BudgetExceeded, CertificationError, DatasetNotFound,
                     DeltaOverflow, DpSynthError, InvalidBudget, InvalidConfig)
from .evaluation import (BenchmarkConfig, atomic_write, evaluate,
                         run_benchmark, write_benchmark_outputs)
from .seeding import STREAM_MECHANISM, child_rng

EXIT_OK = 0
EXIT_BUDGET = 2
EXIT_USAGE = 64
EXIT_DATA = 65
EXIT_NOINPUT = 66

SYNTH_FORMAT = "dpsynth-synth-v1"
MODEL_FORMAT = "dpsynth-model-v1"


class _UsageError(Exception):
    """Flag-level mistakes discovered after argparse (mapped to exit 64)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits 2; we follow sysexits
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _read_text(path: str) -> str:
    if not os.path.isfile(path):
        raise DatasetNotFound(f"no such file: {path}")
    with open(path, encoding="utf-8") as handle:
        return handle.read()


def _load_json(path: str) -> dict:
    return json.loads(_read_text(path))


def _dump(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _emit(doc: dict, out: str | None) -> None:
    if out:
        atomic_write(out, _dump(doc))
        print(f"wrote {out}")
    else:
        sys.stdout.write(_dump(doc))


# ---------------------------------------------------------------------------
# account
# ---------------------------------------------------------------------------

def _certify_file(path: str) -> dict:
    doc = _load_json(path)
    if "ledger" not in doc:
        raise CertificationError(f"{path} has no ledger block; nothing to certify")
    ledger = BudgetLedger.from_dict(doc["ledger"])
    if doc.get("not_private"):
        raise CertificationError(
            f"{path} is marked NOT-PRIVATE; refusing to certify")
    if not ledger.certified:
        raise CertificationError(
            f"{path} ledger is uncertified: {ledger.uncertified_reason}")
    ledger.assert_certified()
    spent = ledger.spent()
    return {"certified": True, "file": path,
            "declared": ledger.declared_total.to_dict(),
            "spent": spent.to_dict(), "entries": len(ledger.entries)}


def cmd_account(args) -> int:
    if args.certify is not None:
        _emit(_certify_file(args.certify), None)
        return EXIT_OK
    try:
        total = PrivacyBudget(args.eps, args.delta)
        rate = None if args.p is None else SamplingRate(args.p)
        if args.k < 1:
            raise InvalidBudget(f"k must be >= 1, got {args.k}")
    except InvalidBudget as exc:
        raise _UsageError(str(exc)) from exc
    per_run = per_run_budget(total, args.k, rate)
    if rate is None:
        back = compose([per_run] * args.k)
    else:
        back = compose([amplify_by_subsampling(per_run, rate)] * args.k)
    verified = (abs(back.epsilon - total.epsilon) <= 1e-9
                and abs(back.delta - total.delta) <= 1e-9)
    if not verified:
        raise BudgetExceeded(
            f"compose-back check failed: {back.to_dict()} != {total.to_dict()}")
    _emit({"total": total.to_dict(), "k": args.k, "p": args.p,
           "per_run": per_run.to_dict(), "composed_back": back.to_dict(),
           "verified": True}, None)
    return EXIT_OK


# ---------------------------------------------------------------------------
# discretize
# ---------------------------------------------------------------------------

def cmd_discretize(args) -> int:
    schema_cfg = SchemaConfig.from_json(_read_text(args.schema))
    if not os.path.isfile(args.data):
        raise DatasetNotFound(f"no such file: {args.data}")
    staging = load_csv(args.data, schema_cfg)
    rng = child_rng(args.seed, STREAM_MECHANISM, 0, 0)
    dataset, ledger = discretize_staging(staging, args.eps, rng)
    atomic_write(args.out, dataset_to_json(dataset, ledger) + "\n")
    spent = ledger.spent()
    print(f"wrote {args.out}: {dataset.n} rows, "
          f"{len(dataset.schema.attributes)} columns")
    print(f"ledger: epsilon={spent.epsilon} delta={spent.delta} "
          f"certified={ledger.certified}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    real, _ = dataset_and_ledger_from_json(_read_text(args.data))
    plan = SynthesisPlan.from_dict(_load_json(args.plan))
    if args.seed is not None:
        plan = plan.replace_seed(args.seed)
    synths, ledger = synthesize_plan(real, plan)
    doc = {
        "format": SYNTH_FORMAT,
        "plan": plan.to_dict(),
        "ledger": ledger.to_dict(),
        "not_private": not ledger.certified,
        "datasets": [d.to_dict() for d in synths],
    }
    atomic_write(args.out, _dump(doc))
    spent = ledger.spent()
    print(f"wrote {args.out}: {len(synths)} synthetic dataset(s), "
          f"{sum(d.n for d in synths)} rows total")
    if ledger.certified:
        print(f"ledger: epsilon={spent.epsilon} delta={spent.delta} certified=True")
    else:
        print(f"NOT-PRIVATE: {ledger.uncertified_reason}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def cmd_train(args) -> int:
    bundle = _load_json(args.synth)
    if bundle.get("format") != SYNTH_FORMAT:
        raise InvalidConfig(f"{args.synth} is not a {SYNTH_FORMAT} file")
    plan = SynthesisPlan.from_dict(bundle["plan"])
    synths = [Dataset.from_dict(d) for d in bundle["datasets"]]
    model = train_members(plan, synths, seed=args.seed)
    doc = {
        "format": MODEL_FORMAT,
        "plan": plan.to_dict(),
        "plan_digest": plan.digest(),
        "ledger": bundle["ledger"],
        "not_private": bundle.get("not_private", False),
        "model": model.to_dict(),
    }
    atomic_write(args.out, _dump(doc))
    print(f"wrote {args.out}: {len(model.members)} x {plan.model.kind}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def cmd_eval(args) -> int:
    bundle = _load_json(args.model)
    if bundle.get("format") != MODEL_FORMAT:
        raise InvalidConfig(f"{args.model} is not a {MODEL_FORMAT} file")
    ledger_doc = bundle.get("ledger")
    if not args.allow_uncertified:
        if ledger_doc is None:
            raise CertificationError(
                f"{args.model} has no ledger block; pass --allow-uncertified "
                "to evaluate anyway")
        ledger = BudgetLedger.from_dict(ledger_doc)
        if bundle.get("not_private") or not ledger.certified:
            raise CertificationError(
                f"{args.model} is not certified private "
                f"({ledger.uncertified_reason or 'marked not private'}); "
                "pass --allow-uncertified to evaluate anyway")
    test, _ = dataset_and_ledger_from_json(_read_text(args.data))
    model = EnsembleModel.from_dict(bundle["model"])
    ledger_total = None
    if ledger_doc is not None:
        ledger_total = BudgetLedger.from_dict(ledger_doc).spent().to_dict()
    report = evaluate(model, test, bins=args.bins, seed=args.seed,
                      plan_digest=bundle.get("plan_digest"),
                      ledger_total=ledger_total)
    _emit(report.to_dict(), args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------

def _resolve_dataset(path: str, config_path: str) -> str:
    if os.path.isabs(path):
        if os.path.isfile(path):
            return path
        raise DatasetNotFound(f"no such file: {path}")
    for base in (os.getcwd(), os.path.dirname(os.path.abspath(config_path))):
        candidate = os.path.join(base, path)
        if os.path.isfile(candidate):
            return candidate
    raise DatasetNotFound(f"dataset {path!r} not found relative to the "
                          "working directory or the config file")


def cmd_bench(args) -> int:
    try:
        cfg = BenchmarkConfig.from_dict(_load_json(args.config))
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidConfig(f"malformed benchmark config: {exc}") from exc
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.jobs < 1:
        raise _UsageError(f"--jobs must be >= 1, got {args.jobs}")
    if cfg.dataset is None:
        raise InvalidConfig("benchmark config must name a dataset file")
    data_path = _resolve_dataset(cfg.dataset, args.config)
    real, _ = dataset_and_ledger_from_json(_read_text(data_path))
    rows, summary = run_benchmark(cfg, real)
    write_benchmark_outputs(rows, summary, args.out_csv, args.out_summary)
    n_ok = sum(r["status"] == "ok" for r in rows)
    print(f"{len(rows)} runs ({n_ok} ok) on {data_path}")
    print(f"wrote {args.out_csv}")
    print(f"wrote {args.out_summary}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser and entry point
# ---------------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="dpsynth",
                     description="Differentially private synthetic-data "
                                 "ensemble pipelines.")
    parser.add_argument("--version", action="version",
                        version=f"dpsynth {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("account", help="budget arithmetic and certification")
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--eps", type=float, help="total epsilon to split")
    mode.add_argument("--certify", metavar="PATH",
                      help="certify the ledger embedded in an output file")
    p.add_argument("--delta", type=float, default=0.0, help="total delta")
    p.add_argument("--k", type=int, default=1, help="number of mechanism runs")
    p.add_argument("--p", type=float, default=None,
                   help="Poisson sampling rate (omit for no subsampling)")
    p.add_argument("--seed", type=int, default=0, help="unused; accepted "
                   "for interface uniformity")
    p.set_defaults(func=cmd_account)

    p = sub.add_parser("discretize", help="CSV to ordinal dataset JSON")
    p.add_argument("--data", required=True, help="input CSV path")
    p.add_argument("--schema", required=True, help="column-spec JSON path")
    p.add_argument("--eps", type=float, required=True,
                   help="budget for numeric bin edges")
    p.add_argument("--out", required=True, help="output dataset JSON path")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_discretize)

    p = sub.add_parser("synth", help="spend the plan budget on synthetic data")
    p.add_argument("--data", required=True, help="real dataset JSON path")
    p.add_argument("--plan", required=True, help="synthesis plan JSON path")
    p.add_argument("--out", required=True, help="output synth bundle path")
    p.add_argument("--seed", type=int, default=None,
                   help="override the plan seed")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="fit ensemble members from a synth bundle")
    p.add_argument("--synth", required=True, help="synth bundle JSON path")
    p.add_argument("--out", required=True, help="output model JSON path")
    p.add_argument("--seed", type=int, default=None,
                   help="override the plan seed for training streams")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a trained model on real data")
    p.add_argument("--model", required=True, help="model JSON path")
    p.add_argument("--data", required=True, help="test dataset JSON path")
    p.add_argument("--bins", type=int, default=10, help="calibration bins")
    p.add_argument("--allow-uncertified", action="store_true",
                   help="evaluate even without a certified ledger")
    p.add_argument("--out", default=None,
                   help="report JSON path (default: stdout)")
    p.add_argument("--seed", type=int, default=None,
                   help="recorded in the report; evaluation is deterministic")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="run a benchmark config")
    p.add_argument("--config", required=True, help="benchmark config JSON path")
    p.add_argument("--out-csv", default="bench_results.csv")
    p.add_argument("--out-summary", default="bench_summary.json")
    p.add_argument("--seed", type=int, default=None,
                   help="override the config seed")
    p.add_argument("--jobs", type=int, default=1,
                   help="worker cap (runs are currently sequential)")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DeltaOverflow, BudgetExceeded, CertificationError) as exc:
        print(f"{parser.prog}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except DatasetNotFound as exc:
        print(f"{parser.prog}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NOINPUT
    except DpSynthError as exc:
        print(f"{parser.prog}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
