"""Empirical block statistics: census, conditional tables, transition matrix.

Context convention: a context block is ordered most-recent-first, so the
context of position t at order k is (seq[t-1], seq[t-2], ..., seq[t-k]).
Dropping the oldest symbol of a block is then a simple prefix slice, which is
what the back-off predictor relies on.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .coding import CodingScheme, SymbolSequence
from .errors import SequenceTooShort

__all__ = [
    "BlockCensus",
    "ContextRow",
    "ConditionalTable",
    "ConditionalTableSet",
    "TransitionMatrix",
    "census_blocks",
    "build_conditional_tables",
    "transition_matrix",
    "dump_tables_json",
    "write_census_csv",
]


@dataclass(frozen=True)
class BlockCensus:
    """Distinct k-block count against the |alphabet|^k ceiling."""

    order: int
    distinct_count: int
    max_possible: int
    total_windows: int


@dataclass(frozen=True, eq=False)
class ContextRow:
    """Next-symbol counts and probabilities for one context."""

    counts: np.ndarray  # int64, one slot per alphabet symbol
    probs: np.ndarray  # counts / total
    cum: np.ndarray  # inclusive cumulative sum of probs, for sampling

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def _make_row(counts: np.ndarray) -> ContextRow:
    total = counts.sum()
    probs = counts / total
    return ContextRow(counts=counts, probs=probs, cum=np.cumsum(probs))


@dataclass(frozen=True, eq=False)
class ConditionalTable:
    """Order-k conditional next-symbol distributions keyed by context block."""

    order: int
    alphabet: tuple[int, ...]
    rows: Mapping[tuple[int, ...], ContextRow]


@dataclass(frozen=True, eq=False)
class ConditionalTableSet:
    """Tables for orders 1..k_max plus the order-0 marginal fallback."""

    alphabet: tuple[int, ...]
    k_max: int
    tables: Mapping[int, ConditionalTable]
    marginal: ContextRow
    n_train: int

    def lookup(self, context: Sequence[int]) -> tuple[ContextRow, int]:
        """Longest-suffix match: the row of the largest order j with the j most
        recent context symbols present, else the marginal at order 0."""
        ctx = tuple(context)
        for j in range(min(len(ctx), self.k_max), 0, -1):
            row = self.tables[j].rows.get(ctx[:j])
            if row is not None:
                return row, j
        return self.marginal, 0


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    """Dense order-1 matrix; unseen-state rows are imputed with the marginal."""

    alphabet: tuple[int, ...]
    matrix: np.ndarray
    imputed: tuple[bool, ...]


def _symbol_indices(seq: SymbolSequence, alphabet: tuple[int, ...]) -> np.ndarray:
    if any(a >= b for a, b in zip(alphabet, alphabet[1:])):
        raise ValueError(f"alphabet must be strictly increasing, got {alphabet}")
    alpha = np.asarray(alphabet, dtype=np.int64)
    idx = np.searchsorted(alpha, seq.symbols)
    if np.any(idx >= len(alpha)) or np.any(alpha[np.minimum(idx, len(alpha) - 1)] != seq.symbols):
        raise ValueError("sequence contains symbols outside the alphabet")
    return idx


def _check_packable(alphabet_size: int, k_max: int) -> None:
    # blocks are packed into int64 codes; fails loudly instead of wrapping
    if alphabet_size ** (k_max + 1) > 2**62:
        raise ValueError(f"order {k_max} too large to pack over {alphabet_size} symbols")


def census_blocks(seq: SymbolSequence, k_max: int) -> list[BlockCensus]:
    """Count distinct contiguous k-blocks for every k up to k_max."""
    n = len(seq)
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    if n < k_max:
        raise SequenceTooShort(f"sequence of length {n} has no block of size {k_max}")
    alphabet = tuple(seq.alphabet)
    a = len(alphabet)
    _check_packable(a, k_max)
    idx = _symbol_indices(seq, alphabet)
    out = []
    for k in range(1, k_max + 1):
        windows = n - k + 1
        codes = np.zeros(windows, dtype=np.int64)
        for j in range(k):
            codes += idx[j : j + windows] * (a**j)
        out.append(
            BlockCensus(
                order=k,
                distinct_count=int(len(np.unique(codes))),
                max_possible=a**k,
                total_windows=windows,
            )
        )
    return out


def build_conditional_tables(
    train: SymbolSequence,
    k_max: int,
    alphabet: CodingScheme | Sequence[int] | None = None,
) -> ConditionalTableSet:
    """Count every (context, next) transition inside the training sequence.

    For order k, every position t with k preceding symbols contributes one
    count to row context=(train[t-1],...,train[t-k]), column train[t]. Row
    totals therefore sum to n_train - k. The marginal is the plain symbol
    frequency over all of train.
    """
    if isinstance(alphabet, CodingScheme):
        alpha = tuple(alphabet.symbols)
    elif alphabet is not None:
        alpha = tuple(alphabet)
    else:
        alpha = tuple(train.alphabet)
    n = len(train)
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    if n < k_max + 1:
        raise SequenceTooShort(
            f"training sequence of length {n} cannot support order {k_max}"
        )
    a = len(alpha)
    _check_packable(a, k_max)
    idx = _symbol_indices(train, alpha)
    alpha_arr = np.asarray(alpha, dtype=np.int64)

    tables: dict[int, ConditionalTable] = {}
    for k in range(1, k_max + 1):
        # context code: digit j-1 (weight a^(j-1)) is the j-th most recent symbol
        ctx_codes = np.zeros(n - k, dtype=np.int64)
        for j in range(1, k + 1):
            ctx_codes += idx[k - j : n - j] * (a ** (j - 1))
        combined = ctx_codes * a + idx[k:]
        uniq, counts = np.unique(combined, return_counts=True)

        count_vectors: dict[int, np.ndarray] = {}
        for code, c in zip(uniq.tolist(), counts.tolist()):
            ctx_code, next_i = divmod(code, a)
            vec = count_vectors.get(ctx_code)
            if vec is None:
                vec = np.zeros(a, dtype=np.int64)
                count_vectors[ctx_code] = vec
            vec[next_i] = c

        rows: dict[tuple[int, ...], ContextRow] = {}
        for ctx_code, vec in count_vectors.items():
            digits = []
            rem = ctx_code
            for _ in range(k):
                rem, d = divmod(rem, a)
                digits.append(int(alpha_arr[d]))
            rows[tuple(digits)] = _make_row(vec)
        tables[k] = ConditionalTable(order=k, alphabet=alpha, rows=rows)

    marginal_counts = np.bincount(idx, minlength=a).astype(np.int64)
    return ConditionalTableSet(
        alphabet=alpha,
        k_max=k_max,
        tables=tables,
        marginal=_make_row(marginal_counts),
        n_train=n,
    )


def transition_matrix(tables: ConditionalTableSet) -> TransitionMatrix:
    """Dense row-stochastic order-1 matrix, marginal-imputed for unseen states."""
    order1 = tables.tables[1]
    a = len(tables.alphabet)
    matrix = np.empty((a, a), dtype=np.float64)
    imputed = []
    for i, sym in enumerate(tables.alphabet):
        row = order1.rows.get((sym,))
        if row is None:
            matrix[i] = tables.marginal.probs
            imputed.append(True)
        else:
            matrix[i] = row.probs
            imputed.append(False)
    return TransitionMatrix(
        alphabet=tables.alphabet, matrix=matrix, imputed=tuple(imputed)
    )


def _context_key(context: tuple[int, ...]) -> str:
    return ",".join(str(s) for s in context)


def dump_tables_json(tables: ConditionalTableSet, path: str | Path) -> None:
    """Serialize the table set: rows keyed by 'a1,a2,...,ak', most recent first."""
    payload = {
        "alphabet": list(tables.alphabet),
        "k_max": tables.k_max,
        "n_train": tables.n_train,
        "marginal": {
            "counts": tables.marginal.counts.tolist(),
            "probs": tables.marginal.probs.tolist(),
        },
        "tables": [
            {
                "k": k,
                "rows": {
                    _context_key(ctx): {
                        "counts": row.counts.tolist(),
                        "probs": row.probs.tolist(),
                    }
                    for ctx, row in sorted(tables.tables[k].rows.items())
                },
            }
            for k in sorted(tables.tables)
        ],
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def write_census_csv(census: Iterable[BlockCensus], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "distinct", "max_possible", "total_windows"])
        for c in census:
            writer.writerow([c.order, c.distinct_count, c.max_possible, c.total_windows])
