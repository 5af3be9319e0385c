"""Conditioning families, p-value tables and the Gaussian CI test.

The p-value CSV has header ``i,j,C,p,w``; node ids are 1-based and ``C`` is a
``;``-joined list (empty for the empty set).
"""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy import stats

from .graph import from_mask, to_mask

log = logging.getLogger(__name__)


class TableError(ValueError):
    """Malformed p-value table or inconsistent key."""


class SingularDesignError(ValueError):
    """The conditioning design for a partial correlation is rank deficient."""


# -- conditioning families -------------------------------------------------------

def _canonical(sets) -> tuple[int, ...]:
    return tuple(sorted(set(sets), key=lambda m: (bin(m).count("1"), m)))


@dataclass(frozen=True)
class ConditioningFamily:
    """A homogeneous family of conditioning sets over ``d`` nodes.

    ``sets`` are bitmasks, ordered by size and then by mask value.
    """

    d: int
    sets: tuple

    def __post_init__(self):
        sets = tuple(int(s) for s in self.sets)
        if len(set(sets)) != len(sets):
            raise ValueError("duplicate conditioning sets")
        full = (1 << self.d) - 1
        if any(s & ~full for s in sets):
            raise ValueError("conditioning set outside the node range")
        object.__setattr__(self, "sets", _canonical(sets))

    def __iter__(self):
        return iter(self.sets)

    def __len__(self):
        return len(self.sets)

    def __contains__(self, mask) -> bool:
        return mask in self._lookup

    @property
    def _lookup(self) -> frozenset:
        return frozenset(self.sets)

    def triples(self):
        """Non-trivial triples ``(i, j, C)``, ``i < j``, ``i, j`` not in ``C``."""
        for C in self.sets:
            for i in range(self.d):
                if C >> i & 1:
                    continue
                for j in range(i + 1, self.d):
                    if not C >> j & 1:
                        yield i, j, C

    @property
    def max_size(self) -> int:
        return max((bin(s).count("1") for s in self.sets), default=0)


def family_k(d: int, k: int | str) -> ConditioningFamily:
    """All subsets of size at most ``k``; ``k="full"`` means ``d - 2``.

    Examples
    --------
    >>> len(family_k(4, 2))
    11
    """
    if k == "full":
        k = max(d - 2, 0)
    k = int(k)
    if not 0 <= k <= max(d - 2, 0):
        raise ValueError(f"k must be in [0, {max(d - 2, 0)}], got {k}")
    sets = [to_mask(c) for m in range(k + 1) for c in combinations(range(d), m)]
    return ConditioningFamily(d, tuple(sets))


def full_family(d: int) -> ConditioningFamily:
    return family_k(d, "full")


# -- p-value tables ----------------------------------------------------------

@dataclass
class PValueTable:
    """Map ``(i, j, C) -> (p, w)`` with ``i < j`` and ``i, j`` outside ``C``."""

    d: int
    entries: dict = field(default_factory=dict)
    n_failed: int = 0

    def set(self, i: int, j: int, C, p: float, w: float = 1.0) -> None:
        C = to_mask(C)
        if i == j:
            raise TableError("i and j must differ")
        i, j = min(i, j), max(i, j)
        if not (0 <= i and j < self.d):
            raise TableError(f"node outside [1, {self.d}]")
        if C >> i & 1 or C >> j & 1:
            raise TableError("i and j must not be in C")
        if C >> self.d:
            raise TableError("conditioning set outside the node range")
        if not 0.0 <= p <= 1.0 or math.isnan(p):
            raise TableError(f"p-value {p} outside [0, 1]")
        if w < 0 or math.isnan(w):
            raise TableError(f"weight {w} must be nonnegative")
        self.entries[(i, j, C)] = (float(p), float(w))

    def get(self, i: int, j: int, C):
        i, j = min(i, j), max(i, j)
        return self.entries.get((i, j, to_mask(C)))

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(sorted(self.entries, key=_key_order))

    def __eq__(self, other):
        return isinstance(other, PValueTable) and self.d == other.d and self.entries == other.entries

    def restrict(self, family: ConditioningFamily, missing: str = "error") -> "PValueTable":
        """Entries for the triples of ``family``; ``missing`` is ``error`` or ``zero-weight``."""
        out = PValueTable(self.d)
        for key in family.triples():
            val = self.entries.get(key)
            if val is None:
                if missing == "error":
                    raise TableError(f"no p-value for triple {_fmt_key(key)}")
                val = (1.0, 0.0)
            out.entries[key] = val
        return out

    def covers(self, family: ConditioningFamily) -> bool:
        return all(key in self.entries for key in family.triples())

    @classmethod
    def from_separations(cls, d: int, seps: dict, w: float = 1.0) -> "PValueTable":
        """Oracle table: ``p = 1`` for separated triples and ``p = 0`` otherwise."""
        out = cls(d)
        for (i, j, C), sep in seps.items():
            out.set(i, j, C, 1.0 if sep else 0.0, w)
        return out


def _key_order(key):
    i, j, C = key
    return (bin(C).count("1"), C, i, j)


def _fmt_key(key) -> str:
    i, j, C = key
    return f"({i + 1},{j + 1}|{format_c(C)})"


def format_c(C: int) -> str:
    return ";".join(str(v + 1) for v in from_mask(C))


def parse_c(text: str) -> int:
    text = text.strip()
    if not text:
        return 0
    return to_mask(int(tok) - 1 for tok in text.split(";"))


def write_table(table: PValueTable, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(table_to_csv(table))


def table_to_csv(table: PValueTable) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["i", "j", "C", "p", "w"])
    for key in table:
        i, j, C = key
        p, w = table.entries[key]
        writer.writerow([i + 1, j + 1, format_c(C), repr(p), repr(w)])
    return buf.getvalue()


def read_table(path, d: int | None = None) -> PValueTable:
    """Read a p-value CSV.  ``d`` defaults to the largest node id mentioned."""
    with open(path, encoding="utf-8", newline="") as fh:
        return table_from_csv(fh.read(), d)


def table_from_csv(text: str, d: int | None = None) -> PValueTable:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != ["i", "j", "C", "p", "w"]:
        raise TableError("line 1: expected header 'i,j,C,p,w'")
    rows = []
    top = 0
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 5:
            raise TableError(f"line {lineno}: expected 5 fields, got {len(row)}")
        try:
            i, j = int(row[0]) - 1, int(row[1]) - 1
            C = parse_c(row[2])
            p, w = float(row[3]), float(row[4])
        except ValueError as exc:
            raise TableError(f"line {lineno}: {exc}") from None
        if i < 0 or j < 0:
            raise TableError(f"line {lineno}: node ids are 1-based")
        top = max(top, i + 1, j + 1, C.bit_length())
        rows.append((lineno, i, j, C, p, w))
    table = PValueTable(top if d is None else d)
    for lineno, i, j, C, p, w in rows:
        key = (min(i, j), max(i, j), C)
        if key in table.entries:
            raise TableError(f"line {lineno}: duplicate triple {_fmt_key(key)}")
        try:
            table.set(i, j, C, p, w)
        except TableError as exc:
            raise TableError(f"line {lineno}: {exc}") from None
    return table


# -- Gaussian CI testing -----------------------------------------------------

_CLAMP = 1.0 - 1e-12


def partial_correlation(data: np.ndarray, i: int, j: int, C=0) -> float:
    """Partial correlation of columns ``i`` and ``j`` given columns ``C``.

    Both columns are residualised on ``C`` (plus an intercept) by least
    squares, and the residuals are correlated.
    """
    X = np.asarray(data, dtype=float)
    cols = list(from_mask(to_mask(C)))
    n = X.shape[0]
    design = np.column_stack([np.ones(n), X[:, cols]]) if cols else np.ones((n, 1))
    if np.linalg.matrix_rank(design) < design.shape[1]:
        raise SingularDesignError(f"conditioning design on columns {cols} is singular")
    targets = X[:, [i, j]]
    coef, *_ = np.linalg.lstsq(design, targets, rcond=None)
    resid = targets - design @ coef
    ri, rj = resid[:, 0], resid[:, 1]
    si, sj = np.sqrt(ri @ ri), np.sqrt(rj @ rj)
    scale = max(np.abs(targets).max(), 1.0)
    tol = 1e-10 * scale * math.sqrt(n)
    if si <= tol or sj <= tol:
        # a column fully explained by C: no residual variation to correlate
        if si <= tol and sj <= tol:
            raise SingularDesignError("both residuals vanish")
        return 0.0
    return float(ri @ rj / (si * sj))


def fisher_z_test(data: np.ndarray, i: int, j: int, C=0) -> float:
    """Two-sided Fisher-z p-value for zero partial correlation.

    Parameters
    ----------
    data : ndarray, shape (n, d)
    i, j : int
        Column indices (0-based).
    C : int or iterable of int
        Conditioning columns, as a bitmask or an iterable.

    Returns
    -------
    float
        ``2 * (1 - Phi(sqrt(n - |C| - 3) * |atanh(r)|))``.

    Raises
    ------
    SingularDesignError
        If the conditioning design is rank deficient.
    ValueError
        If there are too few samples for the statistic.
    """
    X = np.asarray(data, dtype=float)
    C = to_mask(C)
    n = X.shape[0]
    size = bin(C).count("1")
    if n <= size + 3:
        raise ValueError(f"need n > |C| + 3 samples, got n={n}, |C|={size}")
    r = partial_correlation(X, i, j, C)
    r = min(max(r, -_CLAMP), _CLAMP)
    stat = math.sqrt(n - size - 3) * abs(math.atanh(r))
    return float(2.0 * stats.norm.sf(stat))


def run_all_tests(data: np.ndarray, family: ConditioningFamily, weight: float = 1.0,
                  test=fisher_z_test) -> PValueTable:
    """One test per family triple; failed tests are recorded as ``p = 1``.

    The number of failures is kept in ``table.n_failed``.
    """
    X = np.asarray(data, dtype=float)
    if X.shape[1] != family.d:
        raise ValueError(f"data has {X.shape[1]} columns, family expects {family.d}")
    table = PValueTable(family.d)
    for i, j, C in family.triples():
        try:
            p = test(X, i, j, C)
        except (SingularDesignError, ValueError) as exc:
            log.warning("test %s failed (%s); recording p = 1", _fmt_key((i, j, C)), exc)
            table.n_failed += 1
            p = 1.0
        table.set(i, j, C, p, weight)
    return table


# -- data CSV ----------------------------------------------------------------

def read_data(path) -> tuple[np.ndarray, list[str]]:
    """Numeric CSV with a header row; columns map to nodes 1..d in order."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        names = next(reader)
        rows = [[float(x) for x in row] for row in reader if row]
    data = np.array(rows, dtype=float).reshape(len(rows), len(names))
    return data, [n.strip() for n in names]


def write_data(data: np.ndarray, path, names=None) -> None:
    data = np.asarray(data, dtype=float)
    names = names or [f"X{k + 1}" for k in range(data.shape[1])]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names)
        for row in data:
            writer.writerow([repr(float(x)) for x in row])
