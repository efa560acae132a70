"""Back-off next-symbol prediction and the split-halves forecasting experiment.

Prediction at order k looks up the k most recent symbols in the order-k table
and samples the next symbol from that row's empirical distribution. When the
context was never seen in training the context is shortened one symbol at a
time (dropping the oldest) until a seen context supplies a row; if nothing
matches down to order 1 the training marginal is used (fallback order 0), so
every prediction is well defined.

All randomness flows from a RandomStream: a seeded PCG64 stream addressed by
a derivation path, so runs, orders and purposes get independent,
platform-stable substreams and the whole experiment is reproducible from
(data, config, master seed).
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .coding import CodingScheme, SymbolSequence, encode_series, make_scheme
from .errors import SplitTooSmall
from .ingest import ReturnSeries, SeriesStats, compute_stats, split_halves
from .markov import ConditionalTableSet, ContextRow, build_conditional_tables

__all__ = [
    "RandomStream",
    "PredictionOutcome",
    "RunErrors",
    "ExperimentConfig",
    "ExperimentReport",
    "FallbackResolution",
    "predict_next",
    "random_baseline_next",
    "resolve_fallback",
    "evaluate_run",
    "prediction_outcomes",
    "run_experiment",
    "report_to_json_dict",
]

SCHEMES = ("five", "three")
METRICS = ("abs", "signed")
BASELINES = ("uniform", "marginal")
MODES = ("sample", "argmax")

REPORT_SCHEMA_VERSION = 1

_MAX_K = 12


def _tag_code(tag: int | str) -> int:
    if isinstance(tag, str):
        return zlib.crc32(tag.encode("utf-8"))
    if tag < 0:
        raise ValueError(f"stream tags must be nonnegative, got {tag}")
    return int(tag)


@dataclass(frozen=True)
class RandomStream:
    """Seeded, addressable source of reproducible randomness.

    The generator is PCG64 keyed by (seed, path) through numpy's SeedSequence,
    which guarantees identical draws for identical keys on every platform.
    Substreams extend the path, so (seed, run, order, purpose) streams are
    mutually independent and do not depend on evaluation order.
    """

    seed: int
    path: tuple[int, ...] = ()

    algorithm = "pcg64-seedsequence"

    def __post_init__(self):
        if self.seed < 0 or self.seed >= 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")

    def substream(self, *tags: int | str) -> "RandomStream":
        return RandomStream(self.seed, self.path + tuple(_tag_code(t) for t in tags))

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=self.path)
        return np.random.Generator(np.random.PCG64(seq))


def _as_generator(rng: RandomStream | np.random.Generator) -> np.random.Generator:
    if isinstance(rng, RandomStream):
        return rng.generator()
    return rng


@dataclass(frozen=True)
class PredictionOutcome:
    """Audit record for one predicted position."""

    position: int
    context: tuple[int, ...]
    fallback_order: int
    predicted: int
    actual: int
    error: int  # predicted - actual


@dataclass(frozen=True)
class RunErrors:
    """Averaged model and baseline error of one run at one order."""

    order: int
    e: float
    e_rand: float
    metric: str
    n_predictions: int


def _sample_index(cum: np.ndarray, u: float) -> int:
    return min(int(np.searchsorted(cum, u, side="right")), len(cum) - 1)


def predict_next(
    tables: ConditionalTableSet,
    context: Sequence[int],
    rng: RandomStream | np.random.Generator,
) -> tuple[int, int]:
    """Sample the next symbol for one context. Returns (symbol, order used).

    Accepts a stateful numpy Generator for sequential draws, or a RandomStream
    whose first draw is used (handy for one-shot deterministic calls).
    """
    row, order = tables.lookup(context)
    gen = _as_generator(rng)
    idx = _sample_index(row.cum, float(gen.random()))
    return int(tables.alphabet[idx]), order


def random_baseline_next(
    alphabet: CodingScheme | Sequence[int],
    rng: RandomStream | np.random.Generator,
) -> int:
    """Uniform draw over the alphabet, the comparison floor for predictions."""
    symbols = alphabet.symbols if isinstance(alphabet, CodingScheme) else tuple(alphabet)
    if not symbols:
        raise ValueError("alphabet must be nonempty")
    gen = _as_generator(rng)
    return int(symbols[int(gen.integers(0, len(symbols)))])


@dataclass(frozen=True, eq=False)
class FallbackResolution:
    """Per-position back-off outcome over a test half, reusable across runs.

    Which row answers each position depends only on the tables and the symbol
    sequence, never on the random stream, so one resolution serves every run.
    """

    split: int
    order: int
    orders: np.ndarray  # fallback order used per test position
    row_ids: np.ndarray  # per test position, index into cum_rows/prob_rows
    cum_rows: np.ndarray  # (n_rows, |alphabet|)
    prob_rows: np.ndarray
    actual_idx: np.ndarray  # alphabet index of the realized symbol

    @property
    def n_test(self) -> int:
        return len(self.orders)

    def order_histogram(self) -> dict[int, int]:
        counts = np.bincount(self.orders, minlength=self.order + 1)
        return {j: int(counts[j]) for j in range(self.order + 1)}


def resolve_fallback(
    tables: ConditionalTableSet, seq: SymbolSequence, n: int, k: int
) -> FallbackResolution:
    """Resolve the back-off chain for every test position t = n .. len(seq)-1.

    Contexts are the k symbols immediately preceding t and may reach back
    across the split boundary into the training half for the first positions.
    """
    total = len(seq)
    n_test = total - n
    if n_test < 1:
        raise SplitTooSmall(f"split index {n} leaves no test positions in {total}")
    if not 1 <= k <= tables.k_max:
        raise ValueError(f"order {k} outside built range 1..{tables.k_max}")
    if n < k:
        raise ValueError(f"first test context would precede the series (n={n}, k={k})")

    alpha = tables.alphabet
    sym_to_idx = {s: i for i, s in enumerate(alpha)}
    symbols = seq.symbols.tolist()

    orders = np.empty(n_test, dtype=np.int64)
    row_ids = np.empty(n_test, dtype=np.int64)
    actual_idx = np.empty(n_test, dtype=np.int64)
    row_index: dict[int, int] = {}
    rows: list[ContextRow] = []
    for i, t in enumerate(range(n, total)):
        ctx = tuple(reversed(symbols[t - k : t]))
        row, order = tables.lookup(ctx)
        rid = row_index.get(id(row))
        if rid is None:
            rid = len(rows)
            row_index[id(row)] = rid
            rows.append(row)
        orders[i] = order
        row_ids[i] = rid
        actual_idx[i] = sym_to_idx[symbols[t]]

    cum_rows = np.stack([r.cum for r in rows])
    prob_rows = np.stack([r.probs for r in rows])
    return FallbackResolution(
        split=n,
        order=k,
        orders=orders,
        row_ids=row_ids,
        cum_rows=cum_rows,
        prob_rows=prob_rows,
        actual_idx=actual_idx,
    )


def _model_indices(
    res: FallbackResolution, gen: np.random.Generator, mode: str
) -> np.ndarray:
    a = res.cum_rows.shape[1]
    if mode == "argmax":
        return np.argmax(res.prob_rows, axis=1)[res.row_ids]
    u = gen.random(res.n_test)
    cum = res.cum_rows[res.row_ids]
    return np.minimum((cum <= u[:, None]).sum(axis=1), a - 1)


def _baseline_indices(
    tables: ConditionalTableSet,
    n_test: int,
    gen: np.random.Generator,
    baseline: str,
) -> np.ndarray:
    a = len(tables.alphabet)
    if baseline == "marginal":
        u = gen.random(n_test)
        return np.minimum(np.searchsorted(tables.marginal.cum, u, side="right"), a - 1)
    return gen.integers(0, a, size=n_test)


def evaluate_run(
    tables: ConditionalTableSet,
    seq: SymbolSequence,
    n: int,
    k: int,
    metric: str,
    rng: RandomStream,
    *,
    baseline: str = "uniform",
    mode: str = "sample",
    resolution: FallbackResolution | None = None,
) -> RunErrors:
    """One pass over the test half: model error e and baseline error e_rand.

    With metric "abs" both are mean |predicted - actual| over symbol values;
    with "signed" the mean of (predicted - actual). Model draws and baseline
    draws come from independent substreams of ``rng``, so the two never
    perturb each other. Passing a precomputed ``resolution`` skips the
    back-off search and changes nothing else.
    """
    if metric not in METRICS:
        raise ValueError(f"metric must be one of {METRICS}")
    if baseline not in BASELINES:
        raise ValueError(f"baseline must be one of {BASELINES}")
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    res = resolution if resolution is not None else resolve_fallback(tables, seq, n, k)
    if res.split != n or res.order != k:
        raise ValueError("resolution does not match the requested split/order")

    alpha_arr = np.asarray(tables.alphabet, dtype=np.int64)
    pred_idx = _model_indices(res, rng.substream("model").generator(), mode)
    base_idx = _baseline_indices(
        tables, res.n_test, rng.substream("baseline").generator(), baseline
    )
    pred_err = alpha_arr[pred_idx] - alpha_arr[res.actual_idx]
    base_err = alpha_arr[base_idx] - alpha_arr[res.actual_idx]
    if metric == "abs":
        e = float(np.abs(pred_err).mean())
        e_rand = float(np.abs(base_err).mean())
    else:
        e = float(pred_err.mean())
        e_rand = float(base_err.mean())
    return RunErrors(order=k, e=e, e_rand=e_rand, metric=metric, n_predictions=res.n_test)


def prediction_outcomes(
    tables: ConditionalTableSet,
    seq: SymbolSequence,
    n: int,
    k: int,
    rng: RandomStream,
    *,
    mode: str = "sample",
) -> list[PredictionOutcome]:
    """Per-position audit of one model pass, same draws as evaluate_run."""
    res = resolve_fallback(tables, seq, n, k)
    pred_idx = _model_indices(res, rng.substream("model").generator(), mode)
    alpha_arr = np.asarray(tables.alphabet, dtype=np.int64)
    symbols = seq.symbols.tolist()
    out = []
    for i, t in enumerate(range(n, len(seq))):
        predicted = int(alpha_arr[pred_idx[i]])
        actual = int(symbols[t])
        out.append(
            PredictionOutcome(
                position=t,
                context=tuple(reversed(symbols[t - k : t])),
                fallback_order=int(res.orders[i]),
                predicted=predicted,
                actual=actual,
                error=predicted - actual,
            )
        )
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything the experiment depends on besides the data itself."""

    inputs: tuple[tuple[str, Path], ...] = ()
    scheme: str = "five"
    k_min: int = 1
    k_max: int = 8
    runs: int = 50
    master_seed: int = 0
    metric: str = "abs"
    baseline: str = "uniform"
    mode: str = "sample"
    stats_on: str = "full"
    out_dir: Path | None = None

    def validate_params(self) -> None:
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if not 1 <= self.k_min <= self.k_max <= _MAX_K:
            raise ValueError(f"need 1 <= k_min <= k_max <= {_MAX_K}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}")
        if self.baseline not in BASELINES:
            raise ValueError(f"baseline must be one of {BASELINES}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.stats_on not in ("full", "train"):
            raise ValueError("stats_on must be 'full' or 'train'")

    def validate(self) -> None:
        self.validate_params()
        for label, p in self.inputs:
            if not Path(p).exists():
                raise FileNotFoundError(f"{label}: {p} does not exist")


@dataclass(eq=False)
class ExperimentReport:
    """Across-run averages of e_k and eRand_k plus the audit trail."""

    instrument: str
    scheme: str
    master_seed: int
    runs: int
    k_values: tuple[int, ...]
    metric: str
    baseline: str
    mode: str
    stats_on: str
    n_returns: int
    n_train: int
    n_test: int
    stats: SeriesStats
    cut_points: tuple[float, ...]
    alphabet: tuple[int, ...]
    e_mean: tuple[float, ...]
    e_std: tuple[float, ...]
    rand_mean: tuple[float, ...]
    rand_std: tuple[float, ...]
    fallback_histogram: dict[int, dict[int, int]]
    per_run: dict[int, tuple[RunErrors, ...]]


def run_experiment(config: ExperimentConfig, returns: ReturnSeries) -> ExperimentReport:
    """Full protocol on one instrument: code, split, estimate, predict, average.

    Tables are estimated on the first half only; every run j and order k gets
    the substream (master seed, instrument, j, k), so reports are invariant to
    run scheduling and to which other instruments are processed alongside.
    """
    config.validate_params()
    h1, h2 = split_halves(returns)
    n = len(h1)
    stats = compute_stats(returns if config.stats_on == "full" else h1)
    scheme = make_scheme(config.scheme, stats)
    seq = encode_series(returns, stats, scheme)
    train = replace(seq, symbols=seq.symbols[:n])
    tables = build_conditional_tables(train, config.k_max)

    stream = RandomStream(config.master_seed).substream(returns.instrument)
    k_values = tuple(range(config.k_min, config.k_max + 1))
    resolutions = {k: resolve_fallback(tables, seq, n, k) for k in k_values}

    per_run: dict[int, list[RunErrors]] = {k: [] for k in k_values}
    for j in range(1, config.runs + 1):
        for k in k_values:
            per_run[k].append(
                evaluate_run(
                    tables,
                    seq,
                    n,
                    k,
                    config.metric,
                    stream.substream(j, k),
                    baseline=config.baseline,
                    mode=config.mode,
                    resolution=resolutions[k],
                )
            )

    e_mean, e_std, r_mean, r_std = [], [], [], []
    for k in k_values:
        es = np.array([r.e for r in per_run[k]])
        rs = np.array([r.e_rand for r in per_run[k]])
        e_mean.append(float(es.mean()))
        e_std.append(float(es.std()))
        r_mean.append(float(rs.mean()))
        r_std.append(float(rs.std()))

    return ExperimentReport(
        instrument=returns.instrument,
        scheme=config.scheme,
        master_seed=config.master_seed,
        runs=config.runs,
        k_values=k_values,
        metric=config.metric,
        baseline=config.baseline,
        mode=config.mode,
        stats_on=config.stats_on,
        n_returns=len(returns),
        n_train=n,
        n_test=len(h2),
        stats=stats,
        cut_points=scheme.cut_points,
        alphabet=scheme.symbols,
        e_mean=tuple(e_mean),
        e_std=tuple(e_std),
        rand_mean=tuple(r_mean),
        rand_std=tuple(r_std),
        fallback_histogram={k: resolutions[k].order_histogram() for k in k_values},
        per_run={k: tuple(v) for k, v in per_run.items()},
    )


def report_to_json_dict(report: ExperimentReport) -> dict:
    """Stable wire form of a report; key order is fixed so dumps are byte-stable."""
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "instrument": report.instrument,
        "master_seed": report.master_seed,
        "config": {
            "scheme": report.scheme,
            "k_min": report.k_values[0],
            "k_max": report.k_values[-1],
            "runs": report.runs,
            "metric": report.metric,
            "baseline": report.baseline,
            "mode": report.mode,
            "stats_on": report.stats_on,
            "master_seed": report.master_seed,
        },
        "series": {
            "n_returns": report.n_returns,
            "n_train": report.n_train,
            "n_test": report.n_test,
        },
        "coding": {
            "scheme": report.scheme,
            "mean": report.stats.mean,
            "std": report.stats.std,
            "count": report.stats.count,
            "symbols": list(report.alphabet),
            "cut_points": list(report.cut_points),
        },
        "results": [
            {
                "k": k,
                "e_mean": report.e_mean[i],
                "e_std": report.e_std[i],
                "e_rand_mean": report.rand_mean[i],
                "e_rand_std": report.rand_std[i],
            }
            for i, k in enumerate(report.k_values)
        ],
        "fallback_histogram": {
            str(k): {str(o): c for o, c in sorted(hist.items())}
            for k, hist in sorted(report.fallback_histogram.items())
        },
    }


def plot_rows(report: ExperimentReport) -> list[tuple[int, float, float]]:
    """The (k, e_k, eRand_k) rows behind the error curves."""
    return [
        (k, report.e_mean[i], report.rand_mean[i])
        for i, k in enumerate(report.k_values)
    ]
