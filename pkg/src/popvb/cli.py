"""Experiment runner: flat key=value configs, a training/evaluation loop,
and alpha-sensitivity sweeps.

Config files are flat ``key = value`` text (one key per line, ``#`` starts a
comment line); every key is a RunConfig field and common ones have CLI flag
overrides.  ``popvb run config.txt`` executes one experiment and writes a
metrics CSV; ``popvb sweep config.txt --alpha-grid 100,1000,dataset`` reruns
it across alpha values and writes per-run CSVs plus a combined summary.

Exit codes: 0 success, 2 config error, 3 I/O error, 4 numeric failure
(non-finite global state).  ``POPVB_LOG`` sets log verbosity (DEBUG, INFO,
WARNING, ERROR; default WARNING).
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
import time
from dataclasses import dataclass

import numpy as np

from popvb.evaluation import (MetricsRecord, MetricsWriter, aggregate_run,
                              evaluate_window, parse_metrics_csv)
from popvb.expfam import FamilyKind
from popvb.inference import (ALGORITHMS, OptimizerConfig, estimate_felbo,
                             initialize_engine, popvb_step, state_is_finite,
                             svb_step)
from popvb.models.dpmix import DpMixModel, DpMixSpec
from popvb.models.lda import LdaModel, LdaSpec
from popvb.streaming import (ParseError, StreamSource, SyntheticSpec,
                             load_corpus, load_locations, load_vocabulary)

log = logging.getLogger("popvb")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4

STREAM_MODES = ("ordered", "permuted", "resample", "synthetic")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


@dataclass(frozen=True)
class RunConfig:
    """One experiment, fully described by flat key=value pairs.

    alpha is a float or the literal string "dataset" (= the finite dataset
    size).  eval_every = 0 means the default cadence of one evaluation per
    10 minibatches.  max_data = 0 means run until a finite stream is
    exhausted (endless streams require a positive max_data).  List-valued
    keys (precision, prior_mean, conditioned_dims, synth_*) are
    comma-separated scalars; synth_means separates components with ';'.
    """

    model: str = "lda"
    algorithm: str = "popvb"
    alpha: float | str = 1000.0
    batch_size: int = 100
    learning_rate: float = 0.05
    seed: int = 0
    stream: str = "synthetic"
    corpus: str = ""
    vocab: str = ""
    locations: str = ""
    min_gap_seconds: float = 0.0
    eval_every: int = 0
    heldout_window: int = 25
    max_data: int = 0
    out: str = "metrics.csv"
    workers: int = 1
    final_eval: bool = True
    record_timing: bool = False
    compute_felbo: bool = False
    pooled_tokens: bool = False
    # LDA hyperparameters
    K: int = 100
    V: int = 0
    eta: float = 0.01
    gamma_doc: float = 0.1
    local_tol: float = 1e-4
    local_max_iters: int = 100
    # DP mixture hyperparameters
    K_trunc: int = 100
    stick_eta: float = 1.0
    dp_component: str = "gaussian"
    obs_dim: int = 3
    precision: str = "1.0"
    prior_mean: str = "0.0"
    prior_count: float = 1.0
    conditioned_dims: str = ""
    # synthetic stream description
    synth_kind: str = ""
    synth_seed: int = 0
    synth_K: int = 5
    synth_topic_conc: float = 0.1
    synth_theta_conc: float = 0.3
    synth_doc_length: float = 40.0
    synth_means: str = ""
    synth_weights: str = ""
    synth_precision: str = ""


# -- config text format ------------------------------------------------------

_DEFAULTS = RunConfig()
_BOOL_WORDS = {"true": True, "false": False, "yes": True, "no": False,
               "1": True, "0": False}


def _parse_bool(name, text):
    try:
        return _BOOL_WORDS[text.strip().lower()]
    except KeyError:
        raise ConfigError("%s: expected a boolean, got %r"
                          % (name, text)) from None


def _parse_alpha(name, text):
    text = text.strip()
    if text == "dataset":
        return "dataset"
    try:
        return float(text)
    except ValueError:
        raise ConfigError("%s: expected a number or 'dataset', got %r"
                          % (name, text)) from None


def _format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_field(name, text):
    default = getattr(_DEFAULTS, name)
    if name == "alpha":
        return _parse_alpha(name, text)
    if isinstance(default, bool):
        return _parse_bool(name, text)
    try:
        if isinstance(default, int):
            return int(text.strip())
        if isinstance(default, float):
            return float(text.strip())
    except ValueError:
        raise ConfigError("%s: expected a %s, got %r"
                          % (name, type(default).__name__, text)) from None
    return text.strip()


_FIELD_NAMES = tuple(f.name for f in dataclasses.fields(RunConfig))


def parse_config_text(text):
    values = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError("line %d: expected key = value, got %r"
                              % (line_no, raw))
        key = key.strip()
        if key not in _FIELD_NAMES:
            raise ConfigError("line %d: unknown key %r" % (line_no, key))
        values[key] = _parse_field(key, value)
    return RunConfig(**values)


def serialize_config(config: RunConfig) -> str:
    lines = ["%s = %s" % (name, _format_value(getattr(config, name)))
             for name in _FIELD_NAMES]
    return "\n".join(lines) + "\n"


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def apply_overrides(config: RunConfig, pairs) -> RunConfig:
    """Apply 'key=value' override strings on top of a parsed config."""
    updates = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        key = key.strip()
        if not sep or key not in _FIELD_NAMES:
            raise ConfigError("override %r is not a known key=value pair"
                              % pair)
        updates[key] = _parse_field(key, value)
    return dataclasses.replace(config, **updates)


# -- model and stream construction -------------------------------------------


def _parse_scalar_list(name, text):
    try:
        values = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ConfigError("%s: expected comma-separated numbers, got %r"
                          % (name, text)) from None
    if not values:
        raise ConfigError("%s: empty list" % name)
    return np.array(values)


def _parse_int_list(name, text):
    try:
        return [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ConfigError("%s: expected comma-separated integers, got %r"
                          % (name, text)) from None


def _broadcast_dims(name, text, dim):
    values = _parse_scalar_list(name, text)
    if values.size == 1:
        return np.full(dim, values[0])
    if values.size != dim:
        raise ConfigError("%s: expected 1 or %d values, got %d"
                          % (name, dim, values.size))
    return values


def _resolve_vocab_size(config):
    """V from the vocabulary file when given, else the V key."""
    if config.vocab:
        vocab = load_vocabulary(config.vocab)
        if config.V and config.V != len(vocab):
            raise ConfigError("V: %d disagrees with vocabulary of %d terms"
                              % (config.V, len(vocab)))
        return len(vocab)
    if config.V > 0:
        return config.V
    raise ConfigError("V: document models need V > 0 or a vocab file")


def build_model(config, vocab_size=None):
    if config.model == "lda":
        try:
            spec = LdaSpec(K=config.K, V=vocab_size,
                           eta=config.eta, gamma_doc=config.gamma_doc,
                           local_tol=config.local_tol,
                           local_max_iters=config.local_max_iters)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return LdaModel(spec)
    # dpmix
    try:
        if config.dp_component == "gaussian":
            prec = _broadcast_dims("precision", config.precision,
                                   config.obs_dim)
            mean = _broadcast_dims("prior_mean", config.prior_mean,
                                   config.obs_dim)
            family = FamilyKind.gaussian(config.obs_dim, prec)
            prior = prec * mean
            dims = tuple(_parse_int_list("conditioned_dims",
                                         config.conditioned_dims))
        elif config.dp_component == "dirichlet":
            family = FamilyKind.dirichlet(vocab_size)
            prior = np.full(vocab_size, config.eta)
            dims = ()
        else:
            raise ConfigError("dp_component: expected gaussian or "
                              "dirichlet, got %r" % config.dp_component)
        spec = DpMixSpec(n_components=config.K_trunc,
                         stick_eta=config.stick_eta,
                         component_family=family, component_prior=prior,
                         prior_count=config.prior_count,
                         conditioned_dims=dims)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return DpMixModel(spec)


def build_synth_spec(config, vocab_size=None):
    kind = config.synth_kind
    if not kind:
        kind = "lda" if config.model == "lda" else "gaussian_mixture"
    try:
        if kind == "lda":
            if config.synth_K < 1:
                raise ConfigError("synth_K: need at least one topic")
            rng = np.random.default_rng([config.synth_seed, 2])
            topics = rng.dirichlet(
                np.full(vocab_size, config.synth_topic_conc),
                size=config.synth_K)
            return SyntheticSpec(kind="lda", topics=topics,
                                 theta_conc=config.synth_theta_conc,
                                 doc_length=config.synth_doc_length)
        if kind == "gaussian_mixture":
            if not config.synth_means:
                raise ConfigError("synth_means: required for a "
                                  "gaussian_mixture stream")
            rows = [_parse_scalar_list("synth_means", row)
                    for row in config.synth_means.split(";") if row.strip()]
            if len({r.size for r in rows}) != 1:
                raise ConfigError("synth_means: ragged component rows")
            means = np.stack(rows)
            if means.shape[1] != config.obs_dim:
                raise ConfigError("synth_means: %d dims but obs_dim = %d"
                                  % (means.shape[1], config.obs_dim))
            if config.synth_weights:
                weights = _parse_scalar_list("synth_weights",
                                             config.synth_weights)
            else:
                weights = np.full(len(rows), 1.0 / len(rows))
            prec_text = config.synth_precision or config.precision
            prec = _broadcast_dims("synth_precision", prec_text,
                                   means.shape[1])
            return SyntheticSpec(kind="gaussian_mixture", means=means,
                                 weights=weights, precision=prec)
        raise ConfigError("synth_kind: expected lda or gaussian_mixture, "
                          "got %r" % kind)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


@dataclass
class RunContext:
    model: object
    source: StreamSource
    alpha_value: float
    dataset_size: int | None
    eval_every: int


def _load_records(config, vocab_size):
    if config.model == "lda" or config.dp_component == "dirichlet":
        if not config.corpus:
            raise ConfigError("corpus: required for stream=%s"
                              % config.stream)
        return load_corpus(config.corpus, vocab_size)
    if not config.locations:
        raise ConfigError("locations: required for stream=%s" % config.stream)
    records = load_locations(config.locations,
                             config.min_gap_seconds or None)
    for obs in records:
        if obs.size != config.obs_dim:
            raise ConfigError("obs_dim: %d but location rows have %d dims"
                              % (config.obs_dim, obs.size))
    return records


def prepare_run(config: RunConfig) -> RunContext:
    """Validate a config and construct the model and stream it describes.

    Raises ConfigError for contract violations, and OSError/ParseError for
    unreadable or malformed input files.
    """
    if config.model not in ("lda", "dpmix"):
        raise ConfigError("model: expected lda or dpmix, got %r"
                          % config.model)
    if config.algorithm not in ALGORITHMS:
        raise ConfigError("algorithm: expected one of %s, got %r"
                          % ("/".join(ALGORITHMS), config.algorithm))
    if config.stream not in STREAM_MODES:
        raise ConfigError("stream: expected one of %s, got %r"
                          % ("/".join(STREAM_MODES), config.stream))
    if config.batch_size < 1:
        raise ConfigError("batch_size: must be positive")
    if config.heldout_window < 1:
        raise ConfigError("heldout_window: must be positive")
    if config.eval_every < 0 or config.max_data < 0:
        raise ConfigError("eval_every/max_data: must be nonnegative")
    if config.workers < 1:
        raise ConfigError("workers: must be positive")

    needs_vocab = config.model == "lda" or (config.model == "dpmix"
                                            and config.dp_component
                                            == "dirichlet")
    vocab_size = _resolve_vocab_size(config) if needs_vocab else None
    model = build_model(config, vocab_size)

    if config.stream == "synthetic":
        records = None
        synth = build_synth_spec(config, vocab_size)
        source = StreamSource.synthetic(synth, seed=[config.synth_seed, 1])
    else:
        records = _load_records(config, vocab_size)
        if config.stream == "ordered":
            source = StreamSource.ordered(records)
        elif config.stream == "permuted":
            source = StreamSource.permuted(records, seed=[config.seed, 1])
        else:
            source = StreamSource.resample(records, seed=[config.seed, 1])

    if source.endless and config.max_data == 0:
        raise ConfigError("max_data: required for endless stream %r"
                          % config.stream)

    if config.alpha == "dataset":
        if records is None:
            raise ConfigError("alpha: 'dataset' needs a finite data file, "
                              "not a synthetic stream")
        alpha_value = float(len(records))
    else:
        alpha_value = float(config.alpha)

    if config.algorithm == "svi":
        if config.stream != "resample":
            raise ConfigError("algorithm: svi resamples a finite dataset; "
                              "set stream = resample")
        if alpha_value != float(len(records)):
            raise ConfigError("alpha: svi needs alpha = 'dataset' "
                              "(= %d), got %s" % (len(records),
                                                  config.alpha))
    if config.algorithm != "svb":
        if alpha_value <= 0:
            raise ConfigError("alpha: must be positive")
        if not 0.0 < config.learning_rate <= 1.0:
            raise ConfigError("learning_rate: must be in (0, 1]")

    eval_every = config.eval_every or 10 * config.batch_size
    return RunContext(model=model, source=source, alpha_value=alpha_value,
                      dataset_size=None if records is None else len(records),
                      eval_every=eval_every)


# -- the experiment loop -----------------------------------------------------


def _eval_row(model, engine, ctx, config, felbo_sample, started_at):
    window = ctx.source.heldout_window(config.heldout_window)
    result = evaluate_window(model, engine.model_state, window,
                             seed=config.seed,
                             pooled_tokens=config.pooled_tokens)
    felbo = None
    if felbo_sample:
        felbo = estimate_felbo(model, engine.model_state, felbo_sample,
                               ctx.alpha_value)
    seconds = time.perf_counter() - started_at if config.record_timing \
        else 0.0
    alpha_col = 0.0 if config.algorithm == "svb" else ctx.alpha_value
    rec = MetricsRecord(iteration=engine.step_count,
                        data_seen=engine.data_seen,
                        heldout_avg_ll=result.avg_ll, felbo=felbo,
                        seconds=seconds, alpha=alpha_col,
                        algorithm=config.algorithm)
    log.info("step %d, seen %d: heldout %.4f (%d scored, %d skipped, "
             "%d zero-mass)", rec.iteration, rec.data_seen,
             result.avg_ll, result.n_scored, result.n_skipped,
             result.n_zero_mass)
    return rec


def _train_loop(ctx, config, writer):
    opt = OptimizerConfig(alpha=ctx.alpha_value,
                          batch_size=config.batch_size,
                          learning_rate=config.learning_rate,
                          seed=config.seed,
                          algorithm="svb" if config.algorithm == "svb"
                          else "popvb",
                          workers=config.workers)
    engine = initialize_engine(ctx.model, opt)
    step = svb_step if config.algorithm == "svb" else popvb_step

    felbo_sample = []
    if config.compute_felbo and config.algorithm != "svb":
        # Fixed reference sample: the F-ELBO series is then a deterministic
        # function of the state, so its trend is legible.
        felbo_sample = ctx.source.heldout_window(config.heldout_window)

    started_at = time.perf_counter()
    next_mark = ctx.eval_every
    while True:
        take = config.batch_size
        if config.max_data:
            if engine.data_seen >= config.max_data:
                break
            take = min(take, config.max_data - engine.data_seen)
        batch = ctx.source.next_minibatch(take)
        if not batch:
            break
        engine = step(engine, batch, opt, ctx.model)
        if not state_is_finite(ctx.model, engine.model_state):
            log.error("non-finite global state after step %d; aborting",
                      engine.step_count)
            return EXIT_NUMERIC
        while next_mark <= engine.data_seen:
            writer.write(_eval_row(ctx.model, engine, ctx, config,
                                   felbo_sample, started_at))
            next_mark += ctx.eval_every
    if config.final_eval:
        writer.write(_eval_row(ctx.model, engine, ctx, config,
                               felbo_sample, started_at))
    return EXIT_OK


def run_experiment(config: RunConfig) -> int:
    """Run one configured experiment; returns the process exit code."""
    try:
        ctx = prepare_run(config)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except ParseError as exc:
        log.error("input error: %s", exc)
        return EXIT_IO
    except OSError as exc:
        log.error("i/o error: %s", exc)
        return EXIT_IO
    try:
        writer = MetricsWriter(config.out)
    except OSError as exc:
        log.error("i/o error opening %s: %s", config.out, exc)
        return EXIT_IO
    with writer:
        return _train_loop(ctx, config, writer)


def _alpha_slug(entry):
    if entry == "dataset":
        return "dataset"
    return ("%g" % float(entry)).replace("+", "")


def alpha_sweep(config: RunConfig, alpha_grid) -> int:
    """Rerun one config across alpha values (shared seed and stream).

    Per-run CSVs land next to the combined summary, which maps each alpha
    to its run's final heldout_avg_ll.  A failing sub-run aborts the sweep;
    everything already written stays on disk.
    """
    if not alpha_grid:
        log.error("config error: alpha grid is empty")
        return EXIT_CONFIG
    stem, ext = os.path.splitext(config.out)
    ext = ext or ".csv"
    try:
        combined = open(config.out, "w", encoding="utf-8")
    except OSError as exc:
        log.error("i/o error opening %s: %s", config.out, exc)
        return EXIT_IO
    with combined:
        combined.write("alpha,final_heldout_avg_ll\n")
        combined.flush()
        for entry in alpha_grid:
            sub = dataclasses.replace(
                config, alpha=entry,
                out="%s_alpha_%s%s" % (stem, _alpha_slug(entry), ext))
            log.info("sweep: alpha=%s -> %s", entry, sub.out)
            code = run_experiment(sub)
            if code != EXIT_OK:
                log.error("sweep aborted at alpha=%s (exit %d)", entry, code)
                return code
            records = parse_metrics_csv(sub.out)
            summary = aggregate_run(records)
            alpha_value = records[-1].alpha if records else float("nan")
            combined.write("%.17g,%.17g\n"
                           % (alpha_value, summary["final_heldout_avg_ll"]))
            combined.flush()
    return EXIT_OK


# -- entry point -------------------------------------------------------------


def _setup_logging():
    name = os.environ.get("POPVB_LOG", "WARNING").upper()
    level = getattr(logging, name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level,
                        format="%(levelname)s %(name)s: %(message)s")


_FLAG_KEYS = ("alpha", "batch_size", "learning_rate", "stream", "eval_every",
              "heldout_window", "seed", "out", "workers")


def _add_common_args(sub):
    sub.add_argument("config", help="flat key=value config file")
    sub.add_argument("--alpha", default=None,
                     help="population size (number or 'dataset')")
    sub.add_argument("--batch-size", dest="batch_size", type=int,
                     default=None)
    sub.add_argument("--learning-rate", dest="learning_rate", type=float,
                     default=None)
    sub.add_argument("--stream", choices=STREAM_MODES, default=None)
    sub.add_argument("--eval-every", dest="eval_every", type=int,
                     default=None)
    sub.add_argument("--heldout-window", dest="heldout_window", type=int,
                     default=None)
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--out", default=None)
    sub.add_argument("--workers", type=int, default=None)
    sub.add_argument("--pooled-tokens", dest="pooled_tokens",
                     action="store_true", default=None,
                     help="token-pooled held-out average instead of "
                          "per-document means")
    sub.add_argument("--set", dest="extra", action="append", default=[],
                     metavar="KEY=VALUE", help="override any config key")


def _config_from_args(args) -> RunConfig:
    config = load_config(args.config)
    pairs = []
    for key in _FLAG_KEYS:
        value = getattr(args, key)
        if value is not None:
            pairs.append("%s=%s" % (key, value))
    if args.pooled_tokens is not None:
        pairs.append("pooled_tokens=true")
    pairs.extend(args.extra)
    return apply_overrides(config, pairs)


def _parse_grid(text):
    grid = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        grid.append("dataset" if tok == "dataset" else _parse_alpha(
            "alpha-grid", tok))
    return grid


def main(argv=None) -> int:
    _setup_logging()
    parser = argparse.ArgumentParser(
        prog="popvb",
        description="Streaming variational inference experiment runner.")
    subs = parser.add_subparsers(dest="command", required=True)
    run_p = subs.add_parser("run", help="run one experiment")
    _add_common_args(run_p)
    sweep_p = subs.add_parser("sweep", help="alpha-sensitivity sweep")
    _add_common_args(sweep_p)
    sweep_p.add_argument("--alpha-grid", dest="alpha_grid", required=True,
                         help="comma-separated alphas (numbers or "
                              "'dataset')")
    args = parser.parse_args(argv)

    try:
        config = _config_from_args(args)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except OSError as exc:
        log.error("i/o error: %s", exc)
        return EXIT_IO

    if args.command == "run":
        return run_experiment(config)
    try:
        grid = _parse_grid(args.alpha_grid)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    return alpha_sweep(config, grid)


if __name__ == "__main__":
    sys.exit(main())
