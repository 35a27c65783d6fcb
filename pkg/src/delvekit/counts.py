"""Sparse count-matrix containers, group partitions, and group summaries.

The data model for K-sample multinomial testing: an n x p matrix of
nonnegative integer counts in coordinate form (one row per observation, one
column per category), a partition of the rows into K non-empty groups, and
the group / pooled mean-PMF estimates that every statistic consumes.

Group totals are kept as exact integers. The centering coefficient
(1/C_k - 1/C) used by the statistics is formed from the integer numerator
(C - C_k) so that near-balanced groups do not suffer catastrophic
cancellation.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

__all__ = [
    "CountMatrix",
    "GroupPartition",
    "GroupSummaries",
    "build_count_matrix",
    "group_summaries",
    "load_counts_csv",
    "load_counts_mm",
    "load_groups_csv",
    "save_counts_csv",
    "save_groups_csv",
]


@dataclass(frozen=True)
class CountMatrix:
    """Sparse n x p matrix of multinomial counts in canonical COO form.

    Entries are sorted by (row, col), hold only positive counts, and are
    immutable after construction. ``row_totals[i]`` is the multinomial
    total N_i of row i; a row with no stored entries has total 0.

    Attributes
    ----------
    n, p : int
        Number of rows (observations) and columns (categories).
    rows, cols, vals : ndarray of int64
        Coordinate entries, sorted lexicographically by (row, col).
    row_totals : ndarray of int64
        Per-row totals N_i, length n.
    """

    n: int
    p: int
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    row_totals: np.ndarray

    @property
    def nnz(self) -> int:
        return int(self.vals.size)

    @property
    def total(self) -> int:
        """Grand total count over all entries."""
        return int(self.row_totals.sum())

    def row_entries(self, i: int):
        """Return (cols, vals) views of row i's nonzero entries."""
        lo = np.searchsorted(self.rows, i, side="left")
        hi = np.searchsorted(self.rows, i, side="right")
        return self.cols[lo:hi], self.vals[lo:hi]

    def column_totals(self) -> np.ndarray:
        """Dense length-p vector of column sums."""
        out = np.bincount(self.cols, weights=self.vals, minlength=self.p)
        return out.astype(np.int64)

    def to_dense(self) -> np.ndarray:
        """Dense int64 array; intended for small matrices only."""
        out = np.zeros((self.n, self.p), dtype=np.int64)
        out[self.rows, self.cols] = self.vals
        return out

    def to_csr(self):
        """scipy CSR view with float64 values."""
        from scipy.sparse import csr_matrix

        return csr_matrix(
            (self.vals.astype(np.float64), (self.rows, self.cols)),
            shape=(self.n, self.p),
        )

    def take_rows(self, indices) -> "CountMatrix":
        """New matrix holding the requested rows, renumbered 0..len-1.

        Row order follows ``indices``; column space is unchanged.
        """
        idx = np.asarray(indices, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= self.n):
            raise ValueError("row index out of range in take_rows")
        starts = np.searchsorted(self.rows, idx, side="left")
        stops = np.searchsorted(self.rows, idx, side="right")
        lengths = stops - starts
        take = np.concatenate(
            [np.arange(a, b) for a, b in zip(starts, stops)]
        ) if idx.size else np.empty(0, dtype=np.int64)
        new_rows = np.repeat(np.arange(idx.size, dtype=np.int64), lengths)
        return CountMatrix(
            n=int(idx.size),
            p=self.p,
            rows=new_rows,
            cols=self.cols[take],
            vals=self.vals[take],
            row_totals=self.row_totals[idx],
        )

    @classmethod
    def from_dense(cls, array) -> "CountMatrix":
        """Build from a dense 2-D array of nonnegative integers."""
        arr = np.asarray(array)
        if arr.ndim != 2:
            raise ValueError("expected a 2-D array of counts")
        if np.any(arr < 0):
            raise ValueError("negative count in dense input")
        if not np.all(arr == np.floor(arr)):
            raise ValueError("non-integer count in dense input")
        arr = arr.astype(np.int64)
        rows, cols = np.nonzero(arr)
        return cls(
            n=arr.shape[0],
            p=arr.shape[1],
            rows=rows.astype(np.int64),
            cols=cols.astype(np.int64),
            vals=arr[rows, cols],
            row_totals=arr.sum(axis=1),
        )


def build_count_matrix(triples, n: int, p: int) -> CountMatrix:
    """Build a canonical CountMatrix from (row, col, count) triples.

    Parameters
    ----------
    triples : iterable of (int, int, int) or three array-likes zipped
        Coordinate entries. Counts must be >= 1 (zeros are implicit in the
        sparse representation and are rejected here).
    n, p : int
        Matrix shape; indices must lie in range.

    Raises
    ------
    ValueError
        On nonpositive counts, out-of-range indices, or duplicate
        (row, col) pairs.
    """
    if n < 0 or p < 0:
        raise ValueError("matrix shape must be nonnegative")
    items = list(triples)
    if items:
        arr = np.asarray(items, dtype=np.int64)
        if arr.ndim != 2 or arr.shape[1] != 3:
            raise ValueError("triples must be (row, col, count)")
        rows, cols, vals = arr[:, 0], arr[:, 1], arr[:, 2]
    else:
        rows = cols = vals = np.empty(0, dtype=np.int64)
    if np.any(vals <= 0):
        bad = int(np.flatnonzero(vals <= 0)[0])
        raise ValueError(
            f"count must be >= 1, got {vals[bad]} at entry {bad} "
            "(omit zero counts; they are implicit)"
        )
    if np.any(rows < 0) or np.any(rows >= n):
        raise ValueError(f"row index out of range [0, {n})")
    if np.any(cols < 0) or np.any(cols >= p):
        raise ValueError(f"column index out of range [0, {p})")
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    if rows.size > 1:
        dup = (rows[1:] == rows[:-1]) & (cols[1:] == cols[:-1])
        if np.any(dup):
            d = int(np.flatnonzero(dup)[0])
            raise ValueError(f"duplicate entry at (row={rows[d]}, col={cols[d]})")
    totals = np.bincount(rows, weights=vals, minlength=n).astype(np.int64) \
        if n else np.empty(0, dtype=np.int64)
    return CountMatrix(n=n, p=p, rows=rows, cols=cols, vals=vals, row_totals=totals)


@dataclass(frozen=True)
class GroupPartition:
    """Assignment of the n rows to K disjoint non-empty groups.

    ``labels[i]`` is the group id of row i, an integer in [0, K).
    """

    labels: np.ndarray
    K: int

    @property
    def n(self) -> int:
        return int(self.labels.size)

    def group_rows(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.labels == k)

    @classmethod
    def from_labels(cls, labels, K: int | None = None) -> "GroupPartition":
        """Validate labels and infer K when not given.

        Every id in [0, K) must be assigned to at least one row.
        """
        lab = np.asarray(labels, dtype=np.int64)
        if lab.ndim != 1:
            raise ValueError("labels must be one-dimensional")
        if lab.size == 0:
            raise ValueError("partition needs at least one row")
        if lab.min() < 0:
            raise ValueError("group labels must be nonnegative")
        k = int(lab.max()) + 1 if K is None else int(K)
        if lab.max() >= k:
            raise ValueError(f"group label {lab.max()} out of range [0, {k})")
        sizes = np.bincount(lab, minlength=k)
        if np.any(sizes == 0):
            empty = int(np.flatnonzero(sizes == 0)[0])
            raise ValueError(f"group {empty} is empty")
        return cls(labels=lab, K=k)

    @classmethod
    def singletons(cls, n: int) -> "GroupPartition":
        """The K = n partition with one row per group."""
        return cls(labels=np.arange(n, dtype=np.int64), K=n)


@dataclass(frozen=True)
class GroupSummaries:
    """Aggregated group counts and mean-PMF estimates.

    Group column sums are stored as sparse triplets (group, col, Y_kj)
    sorted by (group, col); column totals are a dense integer vector.
    Group totals C_k = n_k * Nbar_k are exact integers.
    """

    K: int
    p: int
    group_sizes: np.ndarray      # n_k
    group_counts: np.ndarray     # C_k, int64
    total_count: int             # C
    group_idx: np.ndarray        # triplet group ids
    col_idx: np.ndarray          # triplet column ids
    y_vals: np.ndarray           # triplet Y_kj values, int64
    col_totals: np.ndarray       # dense length-p Y_j, int64

    @property
    def nbar_k(self) -> np.ndarray:
        """Mean length per group, as floats."""
        return self.group_counts / self.group_sizes

    @property
    def nbar(self) -> float:
        return self.total_count / float(self.group_sizes.sum())

    def mu_hat(self) -> np.ndarray:
        """Pooled mean PMF estimate, dense length p."""
        return self.col_totals / float(self.total_count)

    def mu_hat_norm(self) -> float:
        """Euclidean norm of the pooled mean PMF estimate."""
        mu = self.col_totals / float(self.total_count)
        return float(np.sqrt(np.sum(mu * mu)))

    def group_mean(self, k: int) -> np.ndarray:
        """Group-mean PMF estimate for group k, dense length p."""
        lo = np.searchsorted(self.group_idx, k, side="left")
        hi = np.searchsorted(self.group_idx, k, side="right")
        out = np.zeros(self.p)
        out[self.col_idx[lo:hi]] = self.y_vals[lo:hi] / float(self.group_counts[k])
        return out


def group_summaries(X: CountMatrix, g: GroupPartition) -> GroupSummaries:
    """Aggregate counts within groups in one pass over the nonzeros.

    Parameters
    ----------
    X : CountMatrix
    g : GroupPartition
        Must cover exactly the rows of X.

    Returns
    -------
    GroupSummaries

    Raises
    ------
    ValueError
        If the partition length mismatches or a group has zero total count.
    """
    if g.n != X.n:
        raise ValueError(f"partition covers {g.n} rows, matrix has {X.n}")
    sizes = np.bincount(g.labels, minlength=g.K)
    counts = np.bincount(g.labels, weights=X.row_totals, minlength=g.K)
    counts = counts.astype(np.int64)
    if np.any(counts <= 0):
        k = int(np.flatnonzero(counts <= 0)[0])
        raise ValueError(f"zero total count in group {k}")
    entry_groups = g.labels[X.rows]
    key = entry_groups * np.int64(X.p) + X.cols
    order = np.argsort(key, kind="stable")
    key_sorted = key[order]
    uniq, starts = np.unique(key_sorted, return_index=True)
    y = np.add.reduceat(X.vals[order], starts) if uniq.size else np.empty(0, np.int64)
    col_totals = X.column_totals()
    return GroupSummaries(
        K=g.K,
        p=X.p,
        group_sizes=sizes.astype(np.int64),
        group_counts=counts,
        total_count=int(counts.sum()),
        group_idx=(uniq // X.p).astype(np.int64),
        col_idx=(uniq % X.p).astype(np.int64),
        y_vals=y.astype(np.int64),
        col_totals=col_totals,
    )


def _read_csv_rows(path, expected_header):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        got = [h.strip().lower() for h in header]
        if got[: len(expected_header)] != expected_header:
            raise ValueError(
                f"{path}: expected header {','.join(expected_header)}, "
                f"got {','.join(header)}"
            )
        return [row for row in reader if row and any(c.strip() for c in row)]


def load_counts_csv(path, n: int | None = None, p: int | None = None) -> CountMatrix:
    """Load counts from a CSV of ``row,col,count`` triples with a header.

    Indices are 0-based. Explicit zero counts are dropped; negative counts
    are an error. Shape is inferred from the maximum indices unless given.
    """
    body = _read_csv_rows(path, ["row", "col", "count"])
    triples = []
    for ln, row in enumerate(body, start=2):
        try:
            r, c, v = int(row[0]), int(row[1]), int(row[2])
        except (ValueError, IndexError):
            raise ValueError(f"{path}:{ln}: malformed triple {row!r}") from None
        if v < 0:
            raise ValueError(f"{path}:{ln}: negative count {v}")
        if v > 0:
            triples.append((r, c, v))
    if n is None:
        n = 1 + max((t[0] for t in triples), default=-1)
    if p is None:
        p = 1 + max((t[1] for t in triples), default=-1)
    return build_count_matrix(triples, n=n, p=p)


def load_counts_mm(path) -> CountMatrix:
    """Load counts from a MatrixMarket coordinate integer file."""
    from scipy.io import mminfo, mmread

    rows_n, cols_n, _, fmt, field, _ = mminfo(path)
    if fmt != "coordinate" or field != "integer":
        raise ValueError(
            f"{path}: expected MatrixMarket coordinate integer, "
            f"got {fmt}/{field}"
        )
    coo = mmread(path).tocoo()
    vals = np.asarray(coo.data)
    if np.any(vals < 0):
        raise ValueError(f"{path}: negative count in MatrixMarket data")
    keep = vals > 0
    triples = list(zip(coo.row[keep].tolist(), coo.col[keep].tolist(),
                       vals[keep].astype(np.int64).tolist()))
    return build_count_matrix(triples, n=int(rows_n), p=int(cols_n))


def load_groups_csv(path, n: int | None = None):
    """Load a group assignment from a CSV of ``row,group`` pairs.

    Group names may be arbitrary strings; ids are assigned by sorted name.
    Every row index in [0, n) must appear exactly once.

    Returns
    -------
    (GroupPartition, list of str)
        The partition and the group name for each id.
    """
    body = _read_csv_rows(path, ["row", "group"])
    seen = {}
    for ln, row in enumerate(body, start=2):
        try:
            r = int(row[0])
            name = row[1].strip()
        except (ValueError, IndexError):
            raise ValueError(f"{path}:{ln}: malformed pair {row!r}") from None
        if r in seen:
            raise ValueError(f"{path}:{ln}: duplicate row {r}")
        seen[r] = name
    if n is None:
        n = 1 + max(seen, default=-1)
    missing = [i for i in range(n) if i not in seen]
    if missing:
        raise ValueError(f"{path}: missing group for row {missing[0]}")
    extra = [r for r in seen if r < 0 or r >= n]
    if extra:
        raise ValueError(f"{path}: row {extra[0]} out of range [0, {n})")
    names = sorted(set(seen.values()))
    name_to_id = {nm: i for i, nm in enumerate(names)}
    labels = np.array([name_to_id[seen[i]] for i in range(n)], dtype=np.int64)
    return GroupPartition.from_labels(labels, K=len(names)), names


def save_counts_csv(X: CountMatrix, path) -> None:
    """Write a CountMatrix as a row,col,count CSV."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row", "col", "count"])
        for r, c, v in zip(X.rows.tolist(), X.cols.tolist(), X.vals.tolist()):
            writer.writerow([r, c, v])


def save_groups_csv(g: GroupPartition, path, names=None) -> None:
    """Write a GroupPartition as a row,group CSV."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row", "group"])
        for i, k in enumerate(g.labels.tolist()):
            writer.writerow([i, names[k] if names is not None else k])
