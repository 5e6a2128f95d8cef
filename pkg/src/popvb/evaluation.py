"""Held-out evaluation and metrics output.

Documents are scored by an infer/score split: the document's tokens are
expanded, shuffled with a per-document seed, and alternated into two halves;
topic proportions inferred on the first half score the second half.  Vector
observations are scored directly (optionally conditioning on a subset of
dimensions), so they skip the split.  Metric rows go to a flat CSV with a
fixed header; floats are written with repr-faithful precision so reruns are
byte-identical.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from popvb.models.lda import Document

METRICS_HEADER = "iteration,data_seen,heldout_avg_ll,felbo,seconds,alpha,algorithm"


@dataclass
class MetricsRecord:
    iteration: int
    data_seen: int
    heldout_avg_ll: float
    felbo: float | None
    seconds: float
    alpha: float
    algorithm: str


def _fmt(value):
    return "%.17g" % float(value)


def format_metrics_row(rec: MetricsRecord) -> str:
    felbo = "" if rec.felbo is None else _fmt(rec.felbo)
    return ",".join([
        str(int(rec.iteration)),
        str(int(rec.data_seen)),
        _fmt(rec.heldout_avg_ll),
        felbo,
        _fmt(rec.seconds),
        _fmt(rec.alpha),
        rec.algorithm,
    ])


class MetricsWriter:
    """Appends one CSV row per evaluation, flushing eagerly so partial runs
    leave usable files behind."""

    def __init__(self, path):
        self._fh = open(path, "w", encoding="utf-8")
        self._fh.write(METRICS_HEADER + "\n")
        self._fh.flush()
        self.n_rows = 0

    def write(self, rec: MetricsRecord):
        self._fh.write(format_metrics_row(rec) + "\n")
        self._fh.flush()
        self.n_rows += 1

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def parse_metrics_csv(path):
    records = []
    with open(path, encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            records.append(MetricsRecord(
                iteration=int(row["iteration"]),
                data_seen=int(row["data_seen"]),
                heldout_avg_ll=float(row["heldout_avg_ll"]),
                felbo=float(row["felbo"]) if row["felbo"] else None,
                seconds=float(row["seconds"]),
                alpha=float(row["alpha"]),
                algorithm=row["algorithm"],
            ))
    return records


# -- document splitting ------------------------------------------------------


def expand_tokens(doc: Document) -> np.ndarray:
    """Token ids repeated by count, in ascending word-id order."""
    return np.repeat(doc.ids, doc.counts)


def alternating_split(token_ids):
    """Deal a token sequence into two halves: even positions to the
    inference half, odd positions to the scoring half."""
    token_ids = np.asarray(token_ids)
    return token_ids[0::2], token_ids[1::2]


def split_half(doc: Document, seed):
    """Seeded 50/50 split of one document into (infer, score) halves.

    Returns None for documents with fewer than two tokens, which cannot
    populate both halves.
    """
    if doc.token_total < 2:
        return None
    shuffled = expand_tokens(doc)[np.random.default_rng(seed)
                                  .permutation(int(doc.token_total))]
    first, second = alternating_split(shuffled)
    return Document.from_tokens(first), Document.from_tokens(second)


# -- window scoring ----------------------------------------------------------


@dataclass
class WindowResult:
    """Held-out summary for one evaluation window.

    avg_ll averages per-datum scores (each datum's log likelihood divided
    by its own unit count) unless pooled_tokens was set, in which case it
    is the total log likelihood over total units.  Items skipped (too few
    tokens to split) or excluded (non-finite score) are counted, not
    averaged in.
    """

    avg_ll: float
    n_scored: int
    n_skipped: int
    n_zero_mass: int


def evaluate_window(model, state, window, seed, pooled_tokens=False):
    """Score every item in a held-out window against the current state.

    Each document's split depends only on the datum and the window seed, so
    a datum's score does not change when the window is reordered and
    identical documents receive identical scores.
    """
    per_datum = []
    totals = []
    units = 0
    skipped = 0
    zero_mass = 0
    for datum in window:
        if model.needs_split:
            halves = split_half(datum, seed=seed)
            if halves is None:
                skipped += 1
                continue
            score, n = model.predictive_score(state, halves)
        else:
            score, n = model.predictive_score(state, datum)
        if n == 0:
            skipped += 1
            continue
        if not np.isfinite(score):
            zero_mass += 1
            continue
        per_datum.append(score / n)
        totals.append(score)
        units += n
    if not per_datum:
        avg = float("nan")
    elif pooled_tokens:
        avg = float(np.sum(np.sort(np.asarray(totals))) / units)
    else:
        avg = float(np.mean(np.sort(np.asarray(per_datum))))
    return WindowResult(avg, len(per_datum), skipped, zero_mass)


def aggregate_run(records):
    """Digest of one run's metric rows (used by the sweep summary)."""
    finite = [r.heldout_avg_ll for r in records
              if np.isfinite(r.heldout_avg_ll)]
    return {
        "n_rows": len(records),
        "final_heldout_avg_ll": finite[-1] if finite else float("nan"),
        "best_heldout_avg_ll": max(finite) if finite else float("nan"),
    }
