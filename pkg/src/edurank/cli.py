"""Command-line front end.

Options come from an optional JSON config file (``--config``) overridden by
flags.  Exit status: 0 success, 1 runtime failure, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

from .baselines import EigenRankLite, ExpertRanker, MFRanker, TopicRanker, UBCFRanker
from .base import RankingTask
from .copeland import EduRankRanker
from .core import FORMATS, infer_ranking, ingest_log, write_log
from .evaluation import (
    SplitSpec,
    agreement_table,
    coldstart_csv,
    coldstart_removal,
    coldstart_windows,
    evaluate,
    rank_tasks,
    temporal_split,
)
from .exceptions import EduRankError
from .synth import SynthSpec, generate_synthetic

log = logging.getLogger("edurank")

RANKERS = ("edurank", "edurank+prior", "ubcf", "mf", "eigenrank", "tbr", "cer")
STOCHASTIC_RANKERS = {"mf"}
DEFAULTS = {
    "data": None,
    "format": None,
    "rankers": None,
    "k_neighbors": 50,
    "use_prior": False,
    "seed": None,
    "workers": None,
    "out": None,
    "split": "half",
    "per_student": None,
    "protocol": "weekly",
    "windows": "1,1-2,1-4",
    "test_week": 41,
    "targets": 50,
    "removal": 0.9,
    "spec": None,
}


class UsageError(Exception):
    pass


def _parse_k(value):
    if value is None or (isinstance(value, str) and value.lower() == "all"):
        return None
    try:
        k = int(value)
    except (TypeError, ValueError):
        raise UsageError(f"--k-neighbors must be a positive integer or 'all', got {value!r}")
    if k < 1:
        raise UsageError("--k-neighbors must be >= 1")
    return k


def _parse_rankers(value):
    if value is None:
        return []
    names = value.split(",") if isinstance(value, str) else list(value)
    names = [n.strip() for n in names if n.strip()]
    unknown = [n for n in names if n not in RANKERS]
    if unknown:
        raise UsageError(f"unknown ranker(s) {unknown}; choose from {', '.join(RANKERS)}")
    return names


def _parse_windows(value):
    windows = []
    items = value.split(",") if isinstance(value, str) else value
    for item in items:
        item = str(item).strip()
        try:
            a, _, b = item.partition("-")
            windows.append((int(a), int(b or a)))
        except ValueError:
            raise UsageError(f"bad window {item!r}; use N or N-M")
    return windows


def make_ranker(name, opts):
    k = opts["k_neighbors"]
    if name == "edurank":
        return EduRankRanker(n_neighbors=k, use_prior=bool(opts["use_prior"]))
    if name == "edurank+prior":
        return EduRankRanker(n_neighbors=k, use_prior=True)
    if name == "ubcf":
        return UBCFRanker(n_neighbors=k or 50)
    if name == "mf":
        return MFRanker(seed=opts["seed"])
    if name == "eigenrank":
        return EigenRankLite(n_neighbors=k or 50)
    if name == "tbr":
        return TopicRanker()
    if name == "cer":
        return ExpertRanker()
    raise UsageError(f"unknown ranker {name!r}")


def _load_config(path):
    if path is None:
        return {}
    try:
        config = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}")
    if not isinstance(config, dict):
        raise UsageError("config file must hold a JSON object")
    config = {k.replace("-", "_"): v for k, v in config.items()}
    unknown = sorted(set(config) - set(DEFAULTS))
    if unknown:
        raise UsageError(f"unknown config keys {unknown}")
    return config


def resolve(args) -> dict:
    """Merge defaults < config file < flags."""
    opts = dict(DEFAULTS)
    opts.update(_load_config(args.config))
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            opts[key] = value
    opts["k_neighbors"] = _parse_k(opts["k_neighbors"])
    if opts["workers"] is None:
        opts["workers"] = os.cpu_count() or 1
    if int(opts["workers"]) < 1:
        raise UsageError("--workers must be >= 1")
    opts["workers"] = int(opts["workers"])
    if opts["format"] is not None and opts["format"] not in FORMATS:
        raise UsageError(f"--format must be one of {FORMATS}")
    return opts


def _require(opts, *keys):
    for key in keys:
        if opts[key] is None:
            raise UsageError(f"--{key.replace('_', '-')} is required")


def _load_data(opts):
    _require(opts, "data", "format")
    with open(opts["data"], encoding="utf-8", newline="") as fh:
        return ingest_log(fh, opts["format"])


def _emit(opts, text):
    if opts["out"]:
        Path(opts["out"]).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _needs_seed(opts, names):
    if STOCHASTIC_RANKERS & set(names) and opts["seed"] is None:
        raise UsageError("--seed is required when a stochastic ranker (mf) is selected")


def cmd_rank(opts):
    names = _parse_rankers(opts["rankers"] or ["edurank"])
    if not names:
        raise UsageError("no rankers selected")
    _needs_seed(opts, names)
    dataset = _load_data(opts)
    if opts["split"] == "half":
        split = temporal_split(dataset, SplitSpec("half"))
        tasks, training = split.tasks, split.training
    elif opts["split"] == "unanswered":
        everything = set(dataset.questions)
        tasks = [RankingTask(s, dataset.answered(s), everything - dataset.answered(s))
                 for s in dataset.students if everything - dataset.answered(s)]
        training = dataset
    else:
        raise UsageError(f"unknown split {opts['split']!r}")

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("ranker", "student_id", "question_id", "tier", "copeland_score"))
    for name in names:
        ranker = make_ranker(name, opts).fit(training)
        for student, ranking, scores in rank_tasks(tasks, ranker, opts["workers"]):
            for tier, members in enumerate(ranking.tiers):
                for q in sorted(members):
                    writer.writerow([name, student, q, tier, "" if scores is None else scores[q]])
    _emit(opts, buf.getvalue())
    return 0


def cmd_evaluate(opts):
    names = _parse_rankers(opts["rankers"] if opts["rankers"] is not None else ["edurank"])
    if not names:
        raise UsageError("empty ranker list")
    _needs_seed(opts, names)
    dataset = _load_data(opts)
    split = temporal_split(dataset, SplitSpec("half"))
    rankers = {name: make_ranker(name, opts) for name in names}
    report = evaluate(split.tasks, rankers, dataset, split.training, workers=opts["workers"])
    _emit(opts, report.to_csv())
    if opts["per_student"]:
        Path(opts["per_student"]).write_text(report.per_student_csv(), encoding="utf-8")
    print(report.summary(), file=sys.stderr)
    return 0


def cmd_coldstart(opts):
    dataset = _load_data(opts)
    k = opts["k_neighbors"] or 50
    if opts["protocol"] == "weekly":
        rows = coldstart_windows(dataset, _parse_windows(opts["windows"]), int(opts["test_week"]),
                                 n_neighbors=k, workers=opts["workers"])
        _emit(opts, coldstart_csv(rows))
        for row in rows:
            print(f"weeks {row.window[0]}-{row.window[1]}: {row.n_students} students, "
                  f"{row.new_student_fraction:.0%} new, AP {row.edurank_ap:.4f} -> "
                  f"{row.edurank_prior_ap:.4f} with prior", file=sys.stderr)
    elif opts["protocol"] == "removal":
        _require(opts, "seed")
        report = coldstart_removal(dataset, int(opts["targets"]), float(opts["removal"]),
                                   int(opts["seed"]), k, opts["workers"])
        _emit(opts, report.to_csv())
        print(report.summary(), file=sys.stderr)
    else:
        raise UsageError(f"unknown protocol {opts['protocol']!r}")
    return 0


def cmd_synth(opts):
    _require(opts, "out")
    data = {}
    if opts["spec"]:
        try:
            data = json.loads(Path(opts["spec"]).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read spec {opts['spec']}: {exc}")
    if opts["seed"] is not None:
        data["seed"] = int(opts["seed"])
    if opts["format"] is not None:
        data["format"] = opts["format"]
    if "seed" not in data:
        raise UsageError("a seed is required (--seed or 'seed' in the spec file)")
    try:
        spec = SynthSpec.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid synth spec: {exc}")
    dataset = generate_synthetic(spec)
    buf = io.StringIO()
    write_log(dataset, buf, spec.format)
    _emit(opts, buf.getvalue())
    print(f"wrote {len(dataset)} records for {len(dataset.students)} students", file=sys.stderr)
    return 0


def cmd_agreement(opts):
    _require(opts, "seed")
    dataset = _load_data(opts)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("topic", "num_questions", "num_students", "ap"))
    for topic, n_q, n_s, ap in agreement_table(dataset, int(opts["seed"])):
        writer.writerow([topic, n_q, n_s, f"{ap:.6f}"])
    _emit(opts, buf.getvalue())
    return 0


def cmd_ingest_check(opts):
    dataset = _load_data(opts)
    tiers = [len(infer_ranking(dataset, s).tiers) for s in dataset.students]
    print(f"{len(dataset)} records, {len(dataset.students)} students, "
          f"{len(dataset.questions)} questions, mean {sum(tiers) / len(tiers):.2f} tiers/student")
    return 0


COMMANDS = {
    "rank": cmd_rank,
    "evaluate": cmd_evaluate,
    "coldstart": cmd_coldstart,
    "synth": cmd_synth,
    "agreement": cmd_agreement,
    "ingest-check": cmd_ingest_check,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with option defaults")
    common.add_argument("--data", help="answer log (comma-delimited, with header)")
    common.add_argument("--format", choices=FORMATS)
    common.add_argument("--seed", type=int)
    common.add_argument("--workers", type=int, help="parallel workers (default: all cores)")
    common.add_argument("--out", help="output file (default: stdout)")
    common.add_argument("-v", "--verbose", action="store_true")

    ranking = argparse.ArgumentParser(add_help=False)
    ranking.add_argument("--rankers", help=f"comma list from: {', '.join(RANKERS)}")
    ranking.add_argument("--k-neighbors", dest="k_neighbors", help="neighbourhood size or 'all'")
    ranking.add_argument("--use-prior", dest="use_prior", action="store_true", default=None)

    parser = argparse.ArgumentParser(prog="edurank", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rank", parents=[common, ranking], help="rank each student's test questions")
    p.add_argument("--split", choices=("half", "unanswered"))

    p = sub.add_parser("evaluate", parents=[common, ranking], help="AP/NDPM on a temporal half split")
    p.add_argument("--per-student", dest="per_student", help="also write per-student scores here")

    p = sub.add_parser("coldstart", parents=[common, ranking], help="EduRank with and without prior")
    p.add_argument("--protocol", choices=("weekly", "removal"))
    p.add_argument("--windows", help="training windows, e.g. 1,1-2,1-4")
    p.add_argument("--test-week", dest="test_week", type=int)
    p.add_argument("--targets", type=int)
    p.add_argument("--removal", type=float)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic answer log")
    p.add_argument("--spec", help="JSON synth spec")

    sub.add_parser("agreement", parents=[common], help="within-topic AP agreement table")
    sub.add_parser("ingest-check", parents=[common], help="validate an answer log")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        opts = resolve(args)
        return COMMANDS[args.command](opts)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"edurank {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (EduRankError, OSError, ValueError) as exc:
        print(f"edurank {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
