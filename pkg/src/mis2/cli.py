"""``mis`` command-line entry point.

Subcommands::

    mis prep      --input RAW --lexicon LEX --out DIR
    mis fit       --corpus-dir DIR --years 2021:2023 --members 8 --seed 42 --out RUN
    mis adjust    --run RUN --network NET [--firm ID ...] --out DIR
    mis similar   --run RUN --firm ID [--returns CSV] [--weights 1,0,0] --out DIR
    mis thematic  --run RUN --network NET --theme LABEL --market-caps CSV --out DIR
    mis evaluate  --run RUN --returns CSV --gics CSV --train 2021:2022 --test 2023 --out DIR

Every command writes ``manifest.json`` next to its outputs. Exit status is 0
on success, 1 for invalid input and 2 for failures during computation; in
the latter two cases a one-line JSON error record goes to stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import io as mio
from .hdp import HdpConfig
from .kernels import backend
from .lda import FitConfig
from .network import (IndustryNetwork, baseball_card, format_card, load_network, relevance_scores,
                      validate_network)
from .pipeline import EnsembleConfig, PipelineConfig, run_pipeline
from .portfolio import (FirmRecord, SimilarityWeights, nearest_neighbors, oos_test,
                        plot_report, thematic_portfolio)
from .textprep import build_corpus, coverage_report, load_lexicon

log = logging.getLogger("mis2")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# --------------------------------------------------------------------------
# argument helpers
# --------------------------------------------------------------------------

def parse_years(spec: str) -> list[int]:
    """``2021:2023`` (inclusive), ``2021,2023`` or ``2021``."""
    try:
        if ":" in spec:
            a, b = (int(x) for x in spec.split(":"))
            if b < a:
                raise UsageError(f"empty year range {spec!r}")
            return list(range(a, b + 1))
        return [int(x) for x in spec.split(",")]
    except ValueError:
        raise UsageError(f"bad year specification {spec!r}") from None


def parse_weights(spec: str) -> SimilarityWeights:
    try:
        parts = [float(x) for x in spec.split(",")]
    except ValueError:
        raise UsageError(f"bad --weights {spec!r}") from None
    if len(parts) != 3:
        raise UsageError("--weights takes three comma-separated numbers: text,returns,factors")
    return SimilarityWeights(*parts)


def _existing(path, what) -> Path:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"{what} not found: {p}")
    return p


def _write_json(path: Path, obj):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(mio._jsonable(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_jsonl(path: Path, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(mio._jsonable(row), sort_keys=True) + "\n")


def _manifest(args, **extra) -> dict:
    opts = {k: v for k, v in vars(args).items() if k not in ("func", "config")}
    return {"command": args.command, "seed": args.seed, "options": opts, "backend": backend(), **extra}


def _network(path) -> IndustryNetwork:
    return IndustryNetwork() if path is None else load_network(_existing(path, "network file"))


def _checked_network(path, labels) -> IndustryNetwork:
    net = _network(path)
    report = validate_network(net, labels)
    if not report.ok:
        raise ValueError("invalid network: " + "; ".join(report.errors))
    return net


def _universe(snap, network, caps=None, gics=None, factors=None, require_caps=False) -> list[FirmRecord]:
    firms = []
    for fid, theta in zip(snap.model.firm_ids, snap.model.theta):
        if require_caps and fid not in caps:
            raise ValueError(f"no market cap for firm {fid}")
        sector, industry = (gics or {}).get(fid, ("", ""))
        firms.append(FirmRecord(fid, (caps or {}).get(fid, 0.0), theta,
                                relevance_scores(fid, theta, network, snap.topic_labels).scores,
                                sector, industry, (factors or {}).get(fid)))
    return firms


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def _raw_inputs(path: Path) -> dict[str, list[tuple[str, str]]]:
    """Named raw corpora: a JSONL file, a directory of JSONL files, or a directory of .txt files."""
    if path.is_file():
        return {path.stem: [(r["firm_id"], r.get("text", "")) for r in mio.read_records(path)]}
    files = sorted(path.glob("*.jsonl"))
    if files:
        return {f.stem: [(r["firm_id"], r.get("text", "")) for r in mio.read_records(f)] for f in files}
    texts = sorted(path.glob("*.txt"))
    if not texts:
        raise ValueError(f"no .jsonl or .txt documents in {path}")
    return {"corpus": [(t.stem, t.read_text(encoding="utf-8")) for t in texts]}


def cmd_prep(args) -> int:
    lexicon = load_lexicon(_existing(args.lexicon, "lexicon"))
    inputs = _raw_inputs(_existing(args.input, "input"))
    out = Path(args.out)
    report = {}
    for name, docs in inputs.items():
        corpus = build_corpus(docs, lexicon)
        mio.write_corpus(corpus, out / f"{name}.jsonl")
        rows = coverage_report(docs, lexicon)
        report[name] = {
            "documents": len(docs),
            "tokens": sum(r["tokens"] for r in rows.values()),
            "keyphrases": sum(r["keyphrases"] for r in rows.values()),
            "empty_firms": list(corpus.empty_firms),
            "per_firm": rows,
        }
    _write_json(out / "prep_report.json", report)
    mio.write_manifest(out, _manifest(args, corpora=sorted(inputs)))
    for name, r in report.items():
        print(f"{name}: {r['documents']} docs, {r['tokens']} tokens, {r['keyphrases']} keyphrases, "
              f"{len(r['empty_firms'])} empty")
    return EXIT_OK


def pipeline_config(args) -> PipelineConfig:
    return PipelineConfig(
        ensemble=EnsembleConfig(args.members, args.quorum, args.match_threshold, args.prior_strength,
                                args.dilution),
        hdp=HdpConfig(gamma=args.gamma, alpha0=args.alpha0, word_prior=args.word_prior,
                      sweeps=args.hdp_sweeps, burn_in=args.hdp_burn_in),
        fit=FitConfig(args.sweeps, args.burn_in, args.thin),
        seed=args.seed, workers=args.workers, allow_gaps=args.allow_gaps,
    )


def cmd_fit(args) -> int:
    corpus_dir = _existing(args.corpus_dir, "corpus directory")
    if args.years:
        years = parse_years(args.years)
    else:
        years = sorted(int(p.stem) for p in corpus_dir.glob("*.jsonl") if p.stem.isdigit())
        if not years:
            raise ValueError(f"no <year>.jsonl corpora in {corpus_dir}")
    lexicon = load_lexicon(_existing(args.lexicon, "lexicon")) if args.lexicon else None
    corpora = {y: mio.load_corpus(_existing(corpus_dir / f"{y}.jsonl", f"corpus for {y}"), lexicon)
               for y in years}
    config = pipeline_config(args)
    snapshots = run_pipeline(corpora, config)
    stability = {s.year: {k: s.provenance[k] for k in ("phi_cosine_vs_prev", "max_share_increase")
                          if k in s.provenance} for s in snapshots}
    manifest = _manifest(args, years=years, config=asdict(config), config_digest=config.digest(),
                         k=snapshots[0].k, topic_labels=snapshots[-1].topic_labels,
                         hdp_seeds=snapshots[0].provenance.get("hdp_seeds"),
                         lda_seeds={s.year: s.provenance["lda_seed"] for s in snapshots},
                         vocab_union=snapshots[-1].model.vocab, stability=stability)
    mio.write_run(args.out, snapshots, manifest)
    for s in snapshots:
        print(f"{s.year}: K={s.k} firms={len(s.model.firm_ids)} topics={', '.join(s.topic_labels)}")
    return EXIT_OK


def cmd_adjust(args) -> int:
    snap = mio.load_run(_existing(args.run, "run directory"), args.year)
    net = _checked_network(args.network, snap.topic_labels)
    firms = args.firm or snap.model.firm_ids
    index = {f: i for i, f in enumerate(snap.model.firm_ids)}
    unknown = [f for f in firms if f not in index]
    if unknown:
        raise ValueError(f"unknown firm ids: {unknown}")
    cards, text = [], []
    for fid in firms:
        scores = relevance_scores(fid, snap.model.theta[index[fid]], net, snap.topic_labels)
        cards += baseball_card(scores, args.cutoff)
        text.append(format_card(scores, args.cutoff))
    out = Path(args.out)
    _write_jsonl(out / "cards.jsonl", cards)
    (out / "cards.txt").write_text("\n\n".join(text) + "\n", encoding="utf-8")
    mio.write_manifest(out, _manifest(args, year=snap.year))
    print("\n\n".join(text))
    return EXIT_OK


def _panel(path):
    return mio.read_returns(_existing(path, "returns file")) if path else None


def cmd_similar(args) -> int:
    snap = mio.load_run(_existing(args.run, "run directory"), args.year)
    weights = parse_weights(args.weights)
    panel = _panel(args.returns)
    if weights.lambda_returns and panel is None:
        raise ValueError("--returns is required when the returns weight is positive")
    factors = mio.read_vectors(_existing(args.factors, "factor file")) if args.factors else None
    if weights.lambda_factors and factors is None:
        raise ValueError("--factors is required when the factor weight is positive")
    universe = _universe(snap, IndustryNetwork(), factors=factors)
    if panel is not None:
        universe = [f for f in universe if f.firm_id in panel or f.firm_id == args.firm]
    firm = next((f for f in universe if f.firm_id == args.firm), None)
    if firm is None:
        raise ValueError(f"unknown firm id {args.firm!r}")
    peers = nearest_neighbors(firm, universe, weights, panel, args.n)
    rows = [{"rank": r, "firm_id": p, "similarity": s} for r, (p, s) in enumerate(peers, 1)]
    out = Path(args.out)
    _write_jsonl(out / "neighbors.jsonl", rows)
    mio.write_manifest(out, _manifest(args, year=snap.year))
    for row in rows:
        print(f"{row['rank']:>4}  {row['firm_id']}  {row['similarity']:.4f}")
    return EXIT_OK


def cmd_thematic(args) -> int:
    snap = mio.load_run(_existing(args.run, "run directory"), args.year)
    net = _checked_network(args.network, snap.topic_labels)
    if args.theme not in snap.topic_labels:
        raise ValueError(f"unknown theme {args.theme!r}; topics are {snap.topic_labels}")
    caps = mio.read_table(_existing(args.market_caps, "market-cap file"), "market_cap")
    universe = _universe(snap, net, caps=caps, require_caps=True)
    covariance = None
    panel = _panel(args.returns)
    if panel is not None:
        universe = [f for f in universe if f.firm_id in panel]
        cols = [panel.firm_ids.index(f.firm_id) for f in universe]
        covariance = np.cov(panel.values[:, cols], rowvar=False)
    holdings = thematic_portfolio(universe, args.theme, args.n, covariance)
    rows = [asdict(h) for h in holdings]
    out = Path(args.out)
    _write_jsonl(out / "portfolio.jsonl", rows)
    mio.write_manifest(out, _manifest(args, year=snap.year))
    for h in holdings:
        print(f"{h.firm_id}  weight={h.weight:.4f}  exposure={h.exposure:.6g}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    train, test = parse_years(args.train), parse_years(args.test)
    if min(test) <= max(train):
        raise ValueError("test years must follow the training years")
    run = _existing(args.run, "run directory")
    year = args.year
    if year is None:
        fitted = sorted(int(q.stem.split("_")[1]) for q in run.glob("snapshot_*.json"))
        usable = [y for y in fitted if y <= max(train)]
        year = usable[-1] if usable else (fitted[0] if fitted else None)
    snap = mio.load_run(run, year)
    if snap.year > max(train):
        raise ValueError(f"snapshot year {snap.year} is after the training window; pass --year")
    panel = _panel(args.returns)
    gics = mio.read_gics(_existing(args.gics, "GICS map"))
    factors = mio.read_vectors(_existing(args.factors, "factor file")) if args.factors else None
    weights = parse_weights(args.weights)
    universe = [f for f in _universe(snap, IndustryNetwork(), gics=gics, factors=factors) if f.firm_id in panel]
    report = oos_test(universe, panel.years(min(train), max(train)), panel.years(min(test), max(test)),
                      weights, gics, args.n)
    out = Path(args.out)
    _write_jsonl(out / "per_firm.jsonl", report.records())
    _write_json(out / "summary.json", {"median_diff": float(np.median(report.diffs())) if report.per_firm else None,
                                       "firms": len(report.per_firm), "skipped": report.skipped,
                                       "groups": report.group_stats})
    plot_report(report, out / f"boxplot_{args.level}.png", args.level)
    mio.write_manifest(out, _manifest(args, year=snap.year))
    if report.per_firm:
        print(f"{len(report.per_firm)} firms; median MIS - GICS correlation {np.median(report.diffs()):+.4f}")
    else:
        print("no firm could be evaluated")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON file of option values; overrides command-line flags")
    common.add_argument("--seed", type=int, default=42, help="master seed (default 42)")
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="mis", description="Probabilistic multi-industry classification.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("prep", parents=[common], help="extract keyphrase corpora from raw text")
    s.add_argument("--input", required=True, help="JSONL file, directory of JSONL files, or directory of .txt")
    s.add_argument("--lexicon", required=True)
    s.set_defaults(func=cmd_prep)

    s = sub.add_parser("fit", parents=[common], help="ensemble discovery plus yearly chained LDA")
    s.add_argument("--corpus-dir", required=True, help="directory of <year>.jsonl corpora")
    s.add_argument("--years", help="e.g. 2021:2023; default: every year found")
    s.add_argument("--lexicon", help="needed only for raw-text corpora")
    s.add_argument("--members", type=int, default=8)
    s.add_argument("--quorum", type=int, default=None)
    s.add_argument("--match-threshold", type=float, default=0.8)
    s.add_argument("--prior-strength", type=float, default=100.0)
    s.add_argument("--dilution", type=float, default=0.5)
    s.add_argument("--gamma", type=float, default=1.0)
    s.add_argument("--alpha0", type=float, default=1.0)
    s.add_argument("--word-prior", type=float, default=0.1)
    s.add_argument("--hdp-sweeps", type=int, default=300)
    s.add_argument("--hdp-burn-in", type=int, default=100)
    s.add_argument("--sweeps", type=int, default=1000)
    s.add_argument("--burn-in", type=int, default=200)
    s.add_argument("--thin", type=int, default=5)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--allow-gaps", action="store_true")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("adjust", parents=[common], help="relevance scores and baseball cards")
    s.add_argument("--run", required=True)
    s.add_argument("--year", type=int)
    s.add_argument("--network", help="network file; omitted means no adjustment")
    s.add_argument("--firm", action="append", help="repeatable; default every firm")
    s.add_argument("--cutoff", type=float, default=0.0)
    s.set_defaults(func=cmd_adjust)

    s = sub.add_parser("similar", parents=[common], help="nearest-neighbour peers of one firm")
    s.add_argument("--run", required=True)
    s.add_argument("--year", type=int)
    s.add_argument("--firm", required=True)
    s.add_argument("--returns")
    s.add_argument("--factors")
    s.add_argument("--weights", default="1,0,0", help="text,returns,factors (default 1,0,0)")
    s.add_argument("--n", type=int, default=50)
    s.set_defaults(func=cmd_similar)

    s = sub.add_parser("thematic", parents=[common], help="thematic portfolio by dollar exposure")
    s.add_argument("--run", required=True)
    s.add_argument("--year", type=int)
    s.add_argument("--network")
    s.add_argument("--theme", required=True)
    s.add_argument("--market-caps", required=True, help="CSV with firm_id,market_cap")
    s.add_argument("--returns", help="enables long-only minimum-variance weights")
    s.add_argument("--n", type=int, default=50)
    s.set_defaults(func=cmd_thematic)

    s = sub.add_parser("evaluate", parents=[common], help="out-of-sample MIS vs GICS peer test")
    s.add_argument("--run", required=True)
    s.add_argument("--year", type=int, help="snapshot year; default the latest one inside the training window")
    s.add_argument("--returns", required=True)
    s.add_argument("--gics", required=True, help="CSV with firm_id,sector,industry")
    s.add_argument("--factors")
    s.add_argument("--train", required=True)
    s.add_argument("--test", required=True)
    s.add_argument("--weights", default="1,0,0")
    s.add_argument("--n", type=int, default=50)
    s.add_argument("--level", choices=("sector", "industry"), default="sector")
    s.set_defaults(func=cmd_evaluate)
    return p


def _apply_config(args, parser):
    if not args.config:
        return args
    doc = json.loads(_existing(args.config, "config file").read_text(encoding="utf-8"))
    if not isinstance(doc, dict):
        raise UsageError("config file must hold a JSON object")
    known = set(vars(args)) - {"func", "command", "config"}
    for key, value in doc.items():
        dest = key.replace("-", "_")
        if dest not in known:
            raise UsageError(f"config key {key!r} is not an option of {args.command!r}")
        setattr(args, dest, value)
    if not isinstance(args.seed, int) or isinstance(args.seed, bool):
        raise UsageError("seed must be an integer")
    return args


def _error(kind: str, exc: BaseException, command: str | None):
    rec = {"error": kind, "type": type(exc).__name__, "message": str(exc), "command": command}
    print(json.dumps(rec), file=sys.stderr)


def main(argv=None) -> int:
    parser = build_parser()
    command = None
    try:
        args = parser.parse_args(argv)
        command = args.command
        args = _apply_config(args, parser)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except (UsageError, ValueError, FileNotFoundError, KeyError, json.JSONDecodeError) as exc:
        _error("usage" if isinstance(exc, UsageError) else "validation", exc, command)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure record
        _error("runtime", exc, command)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
