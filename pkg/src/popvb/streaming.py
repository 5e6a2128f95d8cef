"""Data sources: file parsers, synthetic generators, and the stream facade.

A StreamSource delivers minibatches in one of four modes: ``ordered`` (a
finite corpus in file order), ``permuted`` (one seeded pass in shuffled
order), ``resample`` (endless draws with replacement from the empirical
distribution), and ``synthetic`` (endless draws from a generative model).
``heldout_window`` peeks at the upcoming points without advancing the
training cursor, so evaluation between minibatches sees exactly the data
that training is about to consume; the peeked items are re-delivered to
training afterwards.  Items are drawn one at a time internally, which makes
the training sequence invariant to when and how often peeks happen.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from popvb.models.lda import Document

# Seconds in a week, and the first Monday 00:00 UTC of the unix epoch
# (1970-01-05; the epoch itself fell on a Thursday).
WEEK_SECONDS = 604800
_FIRST_MONDAY = 345600


class ParseError(ValueError):
    """Malformed input line; carries the 1-based line number when known."""

    def __init__(self, message, line_no=None):
        self.line_no = line_no
        if line_no is not None:
            message = "line %d: %s" % (line_no, message)
        super().__init__(message)


def parse_corpus_line(line, vocab_size=None, line_no=None):
    """One bag-of-words document per line: whitespace-separated id:count
    pairs.  An empty line is an empty document.  Duplicate ids add up."""
    pairs = []
    for pos, token in enumerate(line.split()):
        head, sep, tail = token.partition(":")
        if not sep:
            raise ParseError("token %d (%r) is not an id:count pair"
                             % (pos, token), line_no)
        try:
            wid = int(head)
            cnt = int(tail)
        except ValueError:
            raise ParseError("token %d (%r) has a non-integer field"
                             % (pos, token), line_no) from None
        if wid < 0:
            raise ParseError("token %d: word id %d is negative" % (pos, wid),
                             line_no)
        if vocab_size is not None and wid >= vocab_size:
            raise ParseError("token %d: word id %d outside vocabulary of %d"
                             % (pos, wid, vocab_size), line_no)
        if cnt <= 0:
            raise ParseError("token %d: count %d is not positive"
                             % (pos, cnt), line_no)
        pairs.append((wid, cnt))
    return Document.from_pairs(pairs)


def time_of_week(timestamp):
    """Fraction of the week elapsed since the most recent Monday 00:00 UTC,
    in [0, 1)."""
    return ((float(timestamp) - _FIRST_MONDAY) % WEEK_SECONDS) / WEEK_SECONDS


def parse_location_line(line, line_no=None):
    """One check-in per line: ``user_id,timestamp,lat,lon``.  Returns the
    observation vector (lat, lon, time_of_week)."""
    fields = [f.strip() for f in line.strip().split(",")]
    if len(fields) != 4:
        raise ParseError("expected 4 comma-separated fields, got %d"
                         % len(fields), line_no)
    try:
        ts = float(fields[1])
        lat = float(fields[2])
        lon = float(fields[3])
    except ValueError:
        raise ParseError("timestamp/lat/lon must be numeric, got %r"
                         % (fields[1:],), line_no) from None
    if not np.isfinite([ts, lat, lon]).all():
        raise ParseError("timestamp/lat/lon must be finite", line_no)
    if not -90.0 <= lat <= 90.0:
        raise ParseError("latitude %r outside [-90, 90]" % lat, line_no)
    if not -180.0 <= lon <= 180.0:
        raise ParseError("longitude %r outside [-180, 180]" % lon, line_no)
    return np.array([lat, lon, time_of_week(ts)])


def load_vocabulary(path):
    """Vocabulary file: one term per line; V is the line count."""
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh]


def load_corpus(path, vocab_size=None):
    """Parse a whole corpus file into documents, reporting line numbers on
    malformed input."""
    docs = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            docs.append(parse_corpus_line(line, vocab_size, line_no))
    return docs


def load_locations(path, min_gap_seconds=None):
    """Parse a check-in CSV (header ``user_id,timestamp,lat,lon``) into
    observation vectors.  ``min_gap_seconds`` optionally keeps at most one
    check-in per user per gap, in file order."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        if not header:
            return []
        for line_no, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            fields = [f.strip() for f in line.strip().split(",")]
            if len(fields) != 4:
                raise ParseError("expected 4 comma-separated fields, got %d"
                                 % len(fields), line_no)
            obs = parse_location_line(line, line_no)
            rows.append((fields[0], float(fields[1]), obs))
    if min_gap_seconds is None:
        return [obs for _, _, obs in rows]
    kept = []
    last_seen = {}
    for user, ts, obs in rows:
        prev = last_seen.get(user)
        if prev is None or ts - prev >= min_gap_seconds:
            kept.append(obs)
            last_seen[user] = ts
    return kept


@dataclass(frozen=True, eq=False)
class SyntheticSpec:
    """True parameters for an endless synthetic stream.

    kind="lda": ``topics`` is the true topic-word matrix, documents draw
    proportions from Dir(theta_conc) and lengths from Poisson(doc_length)
    clamped to at least one token.  kind="gaussian_mixture": component
    ``means`` (C, D), mixture ``weights`` (C,), and per-dimension
    ``precision`` of the observation noise.
    """

    kind: str
    topics: np.ndarray | None = None
    theta_conc: float = 0.3
    doc_length: float = 40.0
    means: np.ndarray | None = None
    weights: np.ndarray | None = None
    precision: np.ndarray | None = None

    def __post_init__(self):
        if self.kind == "lda":
            if self.topics is None:
                raise ValueError("lda stream needs a topics matrix")
            topics = np.asarray(self.topics, dtype=np.float64)
            if topics.ndim != 2 or (topics < 0).any():
                raise ValueError("topics must be a nonnegative matrix")
            topics = topics / topics.sum(axis=1, keepdims=True)
            object.__setattr__(self, "topics", topics)
            if self.theta_conc <= 0 or self.doc_length <= 0:
                raise ValueError("theta_conc and doc_length must be positive")
        elif self.kind == "gaussian_mixture":
            if self.means is None or self.weights is None \
                    or self.precision is None:
                raise ValueError("gaussian_mixture stream needs means, "
                                 "weights, and precision")
            means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
            weights = np.asarray(self.weights, dtype=np.float64)
            prec = np.broadcast_to(
                np.asarray(self.precision, dtype=np.float64),
                (means.shape[1],)).copy()
            if weights.shape != (means.shape[0],) or (weights < 0).any():
                raise ValueError("weights must match the component count")
            if (prec <= 0).any():
                raise ValueError("precision must be positive")
            object.__setattr__(self, "means", means)
            object.__setattr__(self, "weights", weights / weights.sum())
            object.__setattr__(self, "precision", prec)
        else:
            raise ValueError("unknown synthetic kind %r" % self.kind)

    def draw_one(self, rng):
        if self.kind == "lda":
            n_topics, vocab = self.topics.shape
            theta = rng.dirichlet(np.full(n_topics, self.theta_conc))
            length = max(1, int(rng.poisson(self.doc_length)))
            assignments = rng.choice(n_topics, size=length, p=theta)
            tokens = [int(rng.choice(vocab, p=self.topics[z]))
                      for z in assignments]
            return Document.from_tokens(tokens)
        comp = int(rng.choice(self.means.shape[0], p=self.weights))
        noise = rng.standard_normal(self.means.shape[1])
        return self.means[comp] + noise / np.sqrt(self.precision)


class StreamSource:
    """Minibatch reader with peek-ahead held-out windows."""

    def __init__(self, mode, records=None, synth=None, seed=0):
        if mode not in ("ordered", "permuted", "resample", "synthetic"):
            raise ValueError("unknown stream mode %r" % mode)
        if mode == "synthetic":
            if synth is None:
                raise ValueError("synthetic mode needs a SyntheticSpec")
        elif not records:
            raise ValueError("%s mode needs a nonempty record list" % mode)
        self.mode = mode
        self._records = list(records) if records is not None else None
        self._synth = synth
        self._rng = np.random.default_rng(seed)
        self._cursor = 0
        self._buffer = []
        if mode == "permuted":
            self._order = self._rng.permutation(len(self._records))

    @classmethod
    def ordered(cls, records):
        return cls("ordered", records=records)

    @classmethod
    def permuted(cls, records, seed):
        return cls("permuted", records=records, seed=seed)

    @classmethod
    def resample(cls, records, seed):
        return cls("resample", records=records, seed=seed)

    @classmethod
    def synthetic(cls, synth, seed):
        return cls("synthetic", synth=synth, seed=seed)

    @property
    def endless(self):
        return self.mode in ("resample", "synthetic")

    def _draw_one(self):
        """Next fresh item, or None when a finite mode is exhausted."""
        if self.mode == "ordered":
            if self._cursor >= len(self._records):
                return None
            item = self._records[self._cursor]
        elif self.mode == "permuted":
            if self._cursor >= len(self._records):
                return None
            item = self._records[self._order[self._cursor]]
        elif self.mode == "resample":
            return self._records[int(self._rng.integers(len(self._records)))]
        else:
            return self._synth.draw_one(self._rng)
        self._cursor += 1
        return item

    def next_minibatch(self, batch_size):
        """Up to batch_size items; short or empty when the stream runs out.
        Peeked items are delivered first."""
        if batch_size < 1:
            raise ValueError("batch_size must be positive")
        batch = self._buffer[:batch_size]
        del self._buffer[:len(batch)]
        while len(batch) < batch_size:
            item = self._draw_one()
            if item is None:
                break
            batch.append(item)
        return batch

    def heldout_window(self, window):
        """The next ``window`` upcoming points, without consuming them."""
        if window < 0:
            raise ValueError("window must be nonnegative")
        while len(self._buffer) < window:
            item = self._draw_one()
            if item is None:
                break
            self._buffer.append(item)
        return list(self._buffer[:window])


def synthesize_stream(spec, seed=0):
    """Endless stream drawing from the given generative description."""
    return StreamSource.synthetic(spec, seed)
