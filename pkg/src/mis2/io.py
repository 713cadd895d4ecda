"""File formats: corpora, model snapshots, run manifests, returns panels, GICS maps.

Snapshots are JSON with a ``schema`` id and integer ``version``. Floats are
written with ``repr`` precision, so arrays round-trip bit-exactly.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .hdp import HdpResult
from .lda import DirichletPrior, LdaModel
from .pipeline import YearSnapshot
from .portfolio import ReturnsPanel
from .textprep import BagOfWords, Corpus, SemanticLexicon, build_corpus

LDA_SCHEMA = "mis2/lda-snapshot"
HDP_SCHEMA = "mis2/hdp-snapshot"
MANIFEST_SCHEMA = "mis2/run-manifest"
SCHEMA_VERSION = 1


class SchemaError(ValueError):
    pass


def _check_schema(doc: dict, schema: str):
    if doc.get("schema") != schema:
        raise SchemaError(f"expected schema {schema!r}, found {doc.get('schema')!r}")
    if doc.get("version") != SCHEMA_VERSION:
        raise SchemaError(f"unsupported {schema} version {doc.get('version')!r} (reader knows {SCHEMA_VERSION})")


def _dump(doc: dict, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, allow_nan=False, indent=None, separators=(",", ":")) + "\n", encoding="utf-8")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


# --------------------------------------------------------------------------
# corpora (JSON lines: {"firm_id", "text"} or {"firm_id", "counts"})
# --------------------------------------------------------------------------

def read_records(path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            if "firm_id" not in rec or not ("text" in rec or "counts" in rec):
                raise ValueError(f"{path}:{lineno}: record needs 'firm_id' and 'text' or 'counts'")
            out.append(rec)
    return out


def load_corpus(path, lexicon: SemanticLexicon | None = None) -> Corpus:
    records = read_records(path)
    if any("counts" not in r for r in records):
        if lexicon is None:
            raise ValueError(f"{path}: raw-text records need a lexicon")
        return build_corpus([(r["firm_id"], r["text"]) for r in records], lexicon)
    vocab = lexicon.vocab if lexicon is not None else sorted({w for r in records for w in r["counts"]})
    docs = [(r["firm_id"], BagOfWords({w: int(c) for w, c in r["counts"].items() if int(c) > 0}))
            for r in records]
    return Corpus(docs, vocab, [f for f, b in docs if b.total == 0])


def write_corpus(corpus: Corpus, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for fid, bag in corpus.docs:
            fh.write(json.dumps({"firm_id": fid, "counts": bag.counts}, sort_keys=True) + "\n")


# --------------------------------------------------------------------------
# snapshots
# --------------------------------------------------------------------------

def model_to_dict(model: LdaModel) -> dict:
    return {
        "schema": LDA_SCHEMA,
        "version": SCHEMA_VERSION,
        "vocab": list(model.vocab),
        "firm_ids": list(model.firm_ids),
        "prior": {"alpha": model.prior.alpha.tolist(), "beta": model.prior.beta.tolist()},
        "posterior_alpha": model.posterior_alpha.tolist(),
        "phi": model.phi.tolist(),
        "theta": model.theta.tolist(),
        "fit_meta": _jsonable(model.fit_meta),
    }


def model_from_dict(doc: dict) -> LdaModel:
    _check_schema(doc, LDA_SCHEMA)
    return LdaModel(
        phi=np.array(doc["phi"], dtype=float),
        theta=np.array(doc["theta"], dtype=float).reshape(len(doc["firm_ids"]), -1),
        prior=DirichletPrior(np.array(doc["prior"]["alpha"]), np.array(doc["prior"]["beta"])),
        posterior_alpha=np.array(doc["posterior_alpha"], dtype=float),
        vocab=list(doc["vocab"]),
        firm_ids=list(doc["firm_ids"]),
        fit_meta=dict(doc["fit_meta"]),
    )


def save_model(model: LdaModel, path):
    _dump(model_to_dict(model), path)


def load_model(path) -> LdaModel:
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def save_snapshot(snap: YearSnapshot, path):
    doc = model_to_dict(snap.model)
    doc["prior"] = {"alpha": snap.prior.alpha.tolist(), "beta": snap.prior.beta.tolist()}
    doc.update(year=snap.year, k=snap.k, topic_labels=list(snap.topic_labels), provenance=_jsonable(snap.provenance))
    _dump(doc, path)


def load_snapshot(path) -> YearSnapshot:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    model = model_from_dict(doc)
    if "year" not in doc:
        raise SchemaError(f"{path} is a bare model snapshot, not a year snapshot")
    return YearSnapshot(int(doc["year"]), model.prior, model, int(doc["k"]), list(doc["topic_labels"]),
                        dict(doc.get("provenance", {})))


def hdp_to_dict(result: HdpResult) -> dict:
    return {
        "schema": HDP_SCHEMA,
        "version": SCHEMA_VERSION,
        "vocab": list(result.vocab),
        "k_found": result.k_found,
        "phi": result.phi.tolist(),
        "eta": result.eta.tolist(),
        "topic_masses": result.topic_masses.tolist(),
        "topic_word_counts": result.topic_word_counts.tolist(),
        "fit_meta": _jsonable(result.fit_meta),
    }


def hdp_from_dict(doc: dict) -> HdpResult:
    _check_schema(doc, HDP_SCHEMA)
    V = len(doc["vocab"])
    return HdpResult(
        phi=np.array(doc["phi"], dtype=float).reshape(-1, V),
        eta=np.array(doc["eta"], dtype=float),
        topic_masses=np.array(doc["topic_masses"], dtype=float),
        topic_word_counts=np.array(doc["topic_word_counts"], dtype=np.int64).reshape(-1, V),
        vocab=list(doc["vocab"]),
        fit_meta=dict(doc["fit_meta"]),
    )


def save_hdp(result: HdpResult, path):
    _dump(hdp_to_dict(result), path)


def load_hdp(path) -> HdpResult:
    return hdp_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# --------------------------------------------------------------------------
# run directories
# --------------------------------------------------------------------------

def snapshot_path(run_dir, year: int) -> Path:
    return Path(run_dir) / f"snapshot_{year}.json"


def write_run(run_dir, snapshots: list[YearSnapshot], manifest: dict):
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    for snap in snapshots:
        save_snapshot(snap, snapshot_path(run_dir, snap.year))
    write_manifest(run_dir, manifest)


def write_manifest(out_dir, manifest: dict):
    doc = {"schema": MANIFEST_SCHEMA, "version": SCHEMA_VERSION, **_jsonable(manifest)}
    path = Path(out_dir) / "manifest.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_manifest(run_dir) -> dict:
    doc = json.loads((Path(run_dir) / "manifest.json").read_text(encoding="utf-8"))
    _check_schema(doc, MANIFEST_SCHEMA)
    return doc


def load_run(run_dir, year: int | None = None) -> YearSnapshot:
    """Snapshot for ``year``, or the latest year in the run directory."""
    run_dir = Path(run_dir)
    if year is None:
        years = sorted(int(p.stem.split("_")[1]) for p in run_dir.glob("snapshot_*.json"))
        if not years:
            raise FileNotFoundError(f"no snapshots in {run_dir}")
        year = years[-1]
    path = snapshot_path(run_dir, year)
    if not path.exists():
        raise FileNotFoundError(f"no snapshot for year {year} in {run_dir}")
    return load_snapshot(path)


# --------------------------------------------------------------------------
# delimited inputs
# --------------------------------------------------------------------------

def read_returns(path) -> ReturnsPanel:
    """Header ``date,<firm_id>,...``; first column ISO dates."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or len(rows[0]) < 2:
        raise ValueError(f"{path}: expected a header row of firm ids")
    firms = [f.strip() for f in rows[0][1:]]
    dates, values = [], []
    for lineno, row in enumerate(rows[1:], 2):
        if not row:
            continue
        if len(row) != len(firms) + 1:
            raise ValueError(f"{path}:{lineno}: expected {len(firms) + 1} fields, got {len(row)}")
        dates.append(row[0].strip())
        try:
            values.append([float(x) for x in row[1:]])
        except ValueError:
            raise ValueError(f"{path}:{lineno}: non-numeric return") from None
    return ReturnsPanel(np.array(dates, dtype="datetime64[D]"), firms, np.array(values).reshape(len(dates), len(firms)))


def write_returns(panel: ReturnsPanel, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["date", *panel.firm_ids])
        for d, row in zip(panel.dates, panel.values):
            w.writerow([str(d), *map(repr, row.tolist())])


def read_gics(path) -> dict[str, tuple[str, str]]:
    """``firm_id,sector,industry`` with a header row."""
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.DictReader(fh), 2):
            try:
                out[row["firm_id"].strip()] = (row["sector"].strip(), row["industry"].strip())
            except (KeyError, AttributeError):
                raise ValueError(f"{path}:{lineno}: need firm_id, sector and industry columns") from None
    return out


def read_table(path, value_column: str) -> dict[str, float]:
    """Two-column ``firm_id,<value_column>`` CSV, e.g. market caps."""
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.DictReader(fh), 2):
            try:
                out[row["firm_id"].strip()] = float(row[value_column])
            except (KeyError, TypeError, ValueError):
                raise ValueError(f"{path}:{lineno}: need firm_id and numeric {value_column}") from None
    return out


def read_vectors(path) -> dict[str, np.ndarray]:
    """``firm_id,f1,f2,...`` CSV of factor loadings."""
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader, None)
        for row in reader:
            if row:
                out[row[0].strip()] = np.array([float(x) for x in row[1:]])
    return out
