"""Interview-grade datasets: CSV ingestion, chronological splits, synthetic generation.

Observations are stored column-wise as integer arrays with dense indices.
Original identifiers are kept in lookup tuples so reports can map back.
"""

from __future__ import annotations

import csv
import hashlib
import io
import os
from dataclasses import dataclass, field
from datetime import datetime
from typing import IO, Iterator, Sequence

import numpy as np


class DataError(ValueError):
    """Base class for dataset problems."""


class SchemaError(DataError):
    def __init__(self, column: str):
        super().__init__(f"missing column {column!r}")
        self.column = column


class RowError(DataError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class EmptyDatasetError(DataError):
    pass


class UnsupportedSplitError(DataError):
    pass


class UnsupportedScaleError(DataError):
    pass


@dataclass(frozen=True)
class GradeScale:
    K: int = 4

    def __post_init__(self):
        if self.K < 3:
            raise UnsupportedScaleError(f"grade scale needs K >= 3, got {self.K}")


@dataclass(frozen=True)
class Observation:
    candidate: int
    interviewer: int
    round: int
    grade: int
    order_key: float | None = None


@dataclass(frozen=True)
class CsvSchema:
    """Column names and round ordering for CSV ingestion."""

    candidate: str = "candidate"
    interviewer: str = "interviewer"
    round: str = "round"
    grade: str = "grade"
    order_key: str | None = None
    hired: str | None = None
    round_order: tuple[str, ...] | None = None
    K: int = 4

    @classmethod
    def from_dict(cls, d: dict) -> "CsvSchema":
        d = dict(d)
        if d.get("round_order") is not None:
            d["round_order"] = tuple(str(x) for x in d["round_order"])
        return cls(**d)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Dense-indexed interview grades.

    For a test split produced by :func:`chronological_split`, the lookup
    tables are the training tables extended with newly seen IDs, so ``C``
    and ``I`` may exceed the number of entities referenced by the rows.
    ``unseen_candidate`` / ``unseen_interviewer`` flag those rows.
    """

    candidate: np.ndarray
    interviewer: np.ndarray
    round: np.ndarray
    grade: np.ndarray
    candidate_ids: tuple[str, ...]
    interviewer_ids: tuple[str, ...]
    round_labels: tuple[str, ...]
    scale: GradeScale = field(default_factory=GradeScale)
    order_key: np.ndarray | None = None
    hired: np.ndarray | None = None  # per candidate: 1, 0, or -1 for unknown
    unseen_candidate: np.ndarray | None = None
    unseen_interviewer: np.ndarray | None = None

    def __post_init__(self):
        for name in ("candidate", "interviewer", "round", "grade"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.int64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        n = len(self.grade)
        if not (len(self.candidate) == len(self.interviewer) == len(self.round) == n):
            raise DataError("column lengths differ")
        if n:
            if self.grade.min() < 1 or self.grade.max() > self.K:
                raise DataError("grade out of range")
            for arr, bound, name in ((self.candidate, self.C, "candidate"),
                                     (self.interviewer, self.I, "interviewer"),
                                     (self.round, self.R, "round")):
                if arr.min() < 0 or arr.max() >= bound:
                    raise DataError(f"{name} index out of range")
        if self.order_key is not None:
            ok = np.asarray(self.order_key, dtype=float)
            ok.setflags(write=False)
            object.__setattr__(self, "order_key", ok)

    @property
    def N(self) -> int:
        return len(self.grade)

    @property
    def C(self) -> int:
        return len(self.candidate_ids)

    @property
    def I(self) -> int:  # noqa: E743
        return len(self.interviewer_ids)

    @property
    def R(self) -> int:
        return len(self.round_labels)

    @property
    def K(self) -> int:
        return self.scale.K

    @property
    def observations(self) -> list[Observation]:
        keys = self.order_key if self.order_key is not None else [None] * self.N
        return [Observation(int(c), int(i), int(r), int(y), None if k is None else float(k))
                for c, i, r, y, k in zip(self.candidate, self.interviewer, self.round,
                                         self.grade, keys)]

    @property
    def unseen(self) -> np.ndarray:
        """Row mask: candidate or interviewer absent from the fitting data."""
        out = np.zeros(self.N, dtype=bool)
        if self.unseen_candidate is not None:
            out |= self.unseen_candidate
        if self.unseen_interviewer is not None:
            out |= self.unseen_interviewer
        return out

    def __iter__(self) -> Iterator[Observation]:
        return iter(self.observations)

    def __len__(self) -> int:
        return self.N

    def fingerprint(self) -> str:
        """SHA-256 over indexed content and lookup tables."""
        h = hashlib.sha256()
        h.update(f"K={self.K};N={self.N}".encode())
        for arr in (self.candidate, self.interviewer, self.round, self.grade):
            h.update(arr.astype("<i8").tobytes())
        if self.order_key is not None:
            h.update(self.order_key.astype("<f8").tobytes())
        for ids in (self.candidate_ids, self.interviewer_ids, self.round_labels):
            h.update("\x1f".join(ids).encode("utf-8"))
            h.update(b"\x1e")
        return h.hexdigest()

    def take(self, rows: np.ndarray) -> "Dataset":
        """Row subset that keeps the lookup tables unchanged."""
        rows = np.asarray(rows)
        return Dataset(
            self.candidate[rows], self.interviewer[rows], self.round[rows], self.grade[rows],
            self.candidate_ids, self.interviewer_ids, self.round_labels, self.scale,
            None if self.order_key is None else self.order_key[rows], self.hired,
        )


# --------------------------------------------------------------------- CSV

_TRUE = {"1", "true", "yes", "y", "t", "hired"}
_FALSE = {"0", "false", "no", "n", "f", "rejected"}


def _parse_order_key(text: str, line: int) -> float:
    try:
        return float(text)
    except ValueError:
        pass
    try:
        return datetime.fromisoformat(text).timestamp()
    except ValueError:
        raise RowError(line, f"unparseable order key {text!r}") from None


def _open_text(source) -> tuple[IO[str], bool]:
    if isinstance(source, (str, os.PathLike)):
        return open(source, newline="", encoding="utf-8"), True
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(bytes(source).decode("utf-8"), newline=""), True
    if isinstance(source, io.TextIOBase):
        return source, False
    # binary stream
    return io.TextIOWrapper(source, encoding="utf-8", newline=""), False


def load_csv(source, schema: CsvSchema | None = None) -> Dataset:
    """Read a UTF-8 CSV of interview grades.

    Parameters
    ----------
    source : path, bytes, or text/binary stream
    schema : CsvSchema
        Column names. Dense indices are assigned in order of first
        appearance, except rounds when ``schema.round_order`` is given.
    """
    schema = schema or CsvSchema()
    scale = GradeScale(schema.K)
    fh, close = _open_text(source)
    try:
        reader = csv.DictReader(fh)
        header = reader.fieldnames
        if not header:
            raise EmptyDatasetError("empty file")
        required = [schema.candidate, schema.interviewer, schema.round, schema.grade]
        required += [c for c in (schema.order_key, schema.hired) if c]
        for col in required:
            if col not in header:
                raise SchemaError(col)

        cmap: dict[str, int] = {}
        imap: dict[str, int] = {}
        if schema.round_order is not None:
            rmap = {lab: k for k, lab in enumerate(schema.round_order)}
            fixed_rounds = True
        else:
            rmap = {}
            fixed_rounds = False
        cols: list[list] = [[], [], [], [], []]
        hired: dict[int, int] = {}
        for line, row in enumerate(reader, start=2):
            g_text = (row[schema.grade] or "").strip()
            try:
                g = int(g_text)
            except ValueError:
                raise RowError(line, f"non-integer grade {g_text!r}") from None
            if not 1 <= g <= scale.K:
                raise RowError(line, f"grade {g} outside 1..{scale.K}")
            c = cmap.setdefault(row[schema.candidate].strip(), len(cmap))
            i = imap.setdefault(row[schema.interviewer].strip(), len(imap))
            lab = row[schema.round].strip()
            if lab not in rmap:
                if fixed_rounds:
                    raise RowError(line, f"round label {lab!r} not in round_order")
                rmap[lab] = len(rmap)
            cols[0].append(c)
            cols[1].append(i)
            cols[2].append(rmap[lab])
            cols[3].append(g)
            if schema.order_key:
                cols[4].append(_parse_order_key(row[schema.order_key].strip(), line))
            if schema.hired:
                h_text = (row[schema.hired] or "").strip().lower()
                if h_text in _TRUE:
                    h = 1
                elif h_text in _FALSE:
                    h = 0
                elif h_text == "":
                    continue
                else:
                    raise RowError(line, f"unrecognised hired flag {h_text!r}")
                if hired.setdefault(c, h) != h:
                    raise RowError(line, "conflicting hired flags for candidate")
    finally:
        if close:
            fh.close()
    if not cols[0]:
        raise EmptyDatasetError("no data rows")

    hired_arr = None
    if schema.hired:
        hired_arr = np.full(len(cmap), -1, dtype=np.int8)
        for c, h in hired.items():
            hired_arr[c] = h
    return Dataset(
        np.array(cols[0]), np.array(cols[1]), np.array(cols[2]), np.array(cols[3]),
        tuple(cmap), tuple(imap), tuple(rmap), scale,
        np.array(cols[4], dtype=float) if schema.order_key else None,
        hired_arr,
    )


def _fmt_key(k: float) -> str:
    return str(int(k)) if float(k).is_integer() else repr(float(k))


def write_csv(ds: Dataset, dest, schema: CsvSchema | None = None) -> None:
    """Write ``ds`` so that :func:`load_csv` with the same schema reproduces it."""
    schema = schema or CsvSchema(K=ds.K, round_order=ds.round_labels,
                                 order_key="order_key" if ds.order_key is not None else None,
                                 hired="hired" if ds.hired is not None else None)
    header = [schema.candidate, schema.interviewer, schema.round, schema.grade]
    if schema.order_key:
        header.append(schema.order_key)
    if schema.hired:
        header.append(schema.hired)
    own = isinstance(dest, (str, os.PathLike))
    fh = open(dest, "w", newline="", encoding="utf-8") if own else dest
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for n in range(ds.N):
            c = ds.candidate[n]
            row = [ds.candidate_ids[c], ds.interviewer_ids[ds.interviewer[n]],
                   ds.round_labels[ds.round[n]], int(ds.grade[n])]
            if schema.order_key:
                row.append(_fmt_key(ds.order_key[n]))
            if schema.hired:
                h = -1 if ds.hired is None else int(ds.hired[c])
                row.append({1: "1", 0: "0"}.get(h, ""))
            w.writerow(row)
    finally:
        if own:
            fh.close()


def schema_for(ds: Dataset) -> CsvSchema:
    """Schema matching the columns :func:`write_csv` emits by default."""
    return CsvSchema(K=ds.K, round_order=ds.round_labels,
                     order_key="order_key" if ds.order_key is not None else None,
                     hired="hired" if ds.hired is not None else None)


# ------------------------------------------------------------------- split

def chronological_split(ds: Dataset, cutoff: float) -> tuple[Dataset, Dataset]:
    """Rows with ``order_key <= cutoff`` train; later rows test.

    The training set is re-indexed densely. The test set shares the
    training lookup tables, extended by any new IDs, and carries
    ``unseen_candidate`` / ``unseen_interviewer`` row flags.
    """
    if ds.order_key is None:
        raise UnsupportedSplitError("dataset has no order key")
    mask = ds.order_key <= cutoff
    if not mask.any():
        raise EmptyDatasetError(f"cutoff {cutoff} precedes every order key")
    tr_rows = np.flatnonzero(mask)
    te_rows = np.flatnonzero(~mask)

    def reindex(idx_tr, idx_te, ids):
        new_of_old: dict[int, int] = {}
        for o in idx_tr:
            new_of_old.setdefault(int(o), len(new_of_old))
        n_train = len(new_of_old)
        unseen = np.zeros(len(idx_te), dtype=bool)
        for k, o in enumerate(idx_te):
            if int(o) not in new_of_old:
                new_of_old[int(o)] = len(new_of_old)
            unseen[k] = new_of_old[int(o)] >= n_train
        old_order = sorted(new_of_old, key=new_of_old.get)
        tr = np.array([new_of_old[int(o)] for o in idx_tr], dtype=np.int64)
        te = np.array([new_of_old[int(o)] for o in idx_te], dtype=np.int64)
        table = tuple(ids[o] for o in old_order)
        return tr, te, table, n_train, unseen, old_order

    c_tr, c_te, c_tab, nc, c_unseen, c_old = reindex(ds.candidate[tr_rows], ds.candidate[te_rows],
                                                     ds.candidate_ids)
    i_tr, i_te, i_tab, ni, i_unseen, _ = reindex(ds.interviewer[tr_rows], ds.interviewer[te_rows],
                                                 ds.interviewer_ids)
    hired_all = None if ds.hired is None else ds.hired[np.array(c_old, dtype=np.int64)]
    train = Dataset(c_tr, i_tr, ds.round[tr_rows], ds.grade[tr_rows],
                    c_tab[:nc], i_tab[:ni], ds.round_labels, ds.scale,
                    ds.order_key[tr_rows], None if hired_all is None else hired_all[:nc])
    test = Dataset(c_te, i_te, ds.round[te_rows], ds.grade[te_rows],
                   c_tab, i_tab, ds.round_labels, ds.scale, ds.order_key[te_rows], hired_all,
                   unseen_candidate=c_unseen, unseen_interviewer=i_unseen)
    return train, test


# --------------------------------------------------------------- summarize

@dataclass(frozen=True)
class DataSummary:
    total: int
    unique_candidates: int
    unique_interviewers: int
    per_round: dict[str, int]
    per_grade: dict[int, int]

    def to_dict(self) -> dict:
        return {"total": self.total, "unique_candidates": self.unique_candidates,
                "unique_interviewers": self.unique_interviewers,
                "per_round": dict(self.per_round),
                "per_grade": {str(k): v for k, v in self.per_grade.items()}}


def summarize(ds: Dataset) -> DataSummary:
    per_round = np.bincount(ds.round, minlength=ds.R)
    per_grade = np.bincount(ds.grade, minlength=ds.K + 1)[1:]
    return DataSummary(
        total=ds.N,
        unique_candidates=len(np.unique(ds.candidate)),
        unique_interviewers=len(np.unique(ds.interviewer)),
        per_round={lab: int(per_round[r]) for r, lab in enumerate(ds.round_labels)},
        per_grade={k + 1: int(v) for k, v in enumerate(per_grade)},
    )


def empty_dataset(K: int = 4, round_labels: Sequence[str] = ()) -> Dataset:
    z = np.zeros(0, dtype=np.int64)
    return Dataset(z, z, z, z, (), (), tuple(round_labels), GradeScale(K))
