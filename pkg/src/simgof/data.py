"""Reference tables: ingestion, validation, splitting, and seeding.

A reference table is an ordered, immutable collection of particles. Each
particle is one simulated draw: a parameter vector and the summary-statistic
vector computed from the corresponding pseudo-dataset. Files are CSV (or TSV)
with a header; parameter columns are prefixed ``param:`` and statistic columns
``stat:``. Foreign files (e.g. exports of external simulators) can instead be
described by a schema mapping column names to roles.

All randomness in the package flows through counter-based Philox generators
seeded from explicit integers or ``numpy.random.SeedSequence`` children, so
every stochastic operation is reproducible bit-for-bit.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    EmptyTableError,
    SchemaError,
    SizeError,
    SpecError,
    ValidationError,
)

PARAM_PREFIX = "param:"
STAT_PREFIX = "stat:"


def rng_from(seed) -> np.random.Generator:
    """Counter-based generator for an integer seed or a SeedSequence."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.Philox(seed))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def child_seeds(seed, n: int) -> list[np.random.SeedSequence]:
    """n independent child streams of a master seed, in a fixed order."""
    if isinstance(seed, np.random.SeedSequence):
        return seed.spawn(n)
    return np.random.SeedSequence(seed).spawn(n)


def _as_readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Particle:
    """One simulated draw: parameter vector plus summary-statistic vector."""

    params: np.ndarray
    summaries: np.ndarray


@dataclass(frozen=True)
class ReferenceTable:
    """Immutable table of particles with a stable, index-addressable order.

    ``row_ids`` records the identity of each row in whatever table it was
    originally drawn from; subsetting (splits, localization) carries the ids
    through, which is what the parameter-export round-trip relies on.
    """

    params: np.ndarray
    summaries: np.ndarray
    param_names: tuple[str, ...]
    stat_names: tuple[str, ...]
    row_ids: np.ndarray = None

    def __post_init__(self):
        params = np.ascontiguousarray(self.params, dtype=np.float64)
        summaries = np.ascontiguousarray(self.summaries, dtype=np.float64)
        if params.ndim != 2 or summaries.ndim != 2:
            raise SpecError("params and summaries must be 2-d arrays")
        if params.shape[0] != summaries.shape[0]:
            raise SpecError(
                f"row mismatch: {params.shape[0]} parameter rows vs "
                f"{summaries.shape[0]} summary rows"
            )
        if summaries.shape[0] == 0:
            raise EmptyTableError("reference table has zero rows")
        if len(self.param_names) != params.shape[1]:
            raise SpecError("param_names length does not match parameter count")
        if len(self.stat_names) != summaries.shape[1]:
            raise SpecError("stat_names length does not match statistic count")
        if not np.isfinite(summaries).all():
            raise ValidationError("summaries contain NaN or infinite entries")
        if not np.isfinite(params).all():
            raise ValidationError("params contain NaN or infinite entries")
        row_ids = self.row_ids
        if row_ids is None:
            row_ids = np.arange(summaries.shape[0])
        row_ids = np.ascontiguousarray(row_ids, dtype=np.int64)
        if row_ids.shape != (summaries.shape[0],):
            raise SpecError("row_ids length does not match table size")
        row_ids.flags.writeable = False
        object.__setattr__(self, "params", _as_readonly(params))
        object.__setattr__(self, "summaries", _as_readonly(summaries))
        object.__setattr__(self, "param_names", tuple(self.param_names))
        object.__setattr__(self, "stat_names", tuple(self.stat_names))
        object.__setattr__(self, "row_ids", row_ids)

    def __len__(self) -> int:
        return self.summaries.shape[0]

    @property
    def n_params(self) -> int:
        return self.params.shape[1]

    @property
    def n_stats(self) -> int:
        return self.summaries.shape[1]

    def particle(self, i: int) -> Particle:
        return Particle(self.params[i], self.summaries[i])

    def subset(self, indices) -> "ReferenceTable":
        idx = np.asarray(indices, dtype=np.int64)
        return ReferenceTable(
            self.params[idx],
            self.summaries[idx],
            self.param_names,
            self.stat_names,
            row_ids=self.row_ids[idx],
        )


@dataclass(frozen=True)
class SplitSpec:
    """How to split a table into reference and calibration parts."""

    n_calib: int
    seed: int = 0

    def __post_init__(self):
        if self.n_calib < 1:
            raise SpecError("n_calib must be a positive integer")


def split_calibration(table: ReferenceTable, spec: SplitSpec):
    """Partition a table into disjoint (reference, calibration) tables.

    Calibration rows are sampled uniformly without replacement; both halves
    keep the original row order. Deterministic given ``spec.seed``.
    """
    n = len(table)
    if spec.n_calib >= n:
        raise SizeError(
            f"n_calib={spec.n_calib} must be smaller than the table size {n}"
        )
    rng = rng_from(spec.seed)
    calib_idx = np.sort(rng.choice(n, size=spec.n_calib, replace=False))
    mask = np.ones(n, dtype=bool)
    mask[calib_idx] = False
    ref_idx = np.nonzero(mask)[0]
    return table.subset(ref_idx), table.subset(calib_idx)


def _read_schema(schema) -> dict:
    if schema is None:
        return None
    if isinstance(schema, (str, Path)):
        with open(schema, "r", encoding="utf-8") as fh:
            schema = json.load(fh)
    if not isinstance(schema, dict) or not {"params", "stats"} <= set(schema):
        raise SchemaError("schema must map 'params' and 'stats' to column lists")
    return {"params": list(schema["params"]), "stats": list(schema["stats"])}


def _resolve_columns(header, schema):
    """Return ([(col_index, name)] for params, same for stats)."""
    if schema is not None:
        pos = {name: i for i, name in enumerate(header)}
        missing = [c for c in schema["params"] + schema["stats"] if c not in pos]
        if missing:
            raise SchemaError(f"schema names columns absent from file: {missing}")
        params = [(pos[c], c) for c in schema["params"]]
        stats = [(pos[c], c) for c in schema["stats"]]
    else:
        params = [
            (i, name[len(PARAM_PREFIX):])
            for i, name in enumerate(header)
            if name.startswith(PARAM_PREFIX)
        ]
        stats = [
            (i, name[len(STAT_PREFIX):])
            for i, name in enumerate(header)
            if name.startswith(STAT_PREFIX)
        ]
    if not stats:
        raise SchemaError("no statistic columns found (stat: prefix or schema)")
    return params, stats


def _delimiter_for(path, delimiter):
    if delimiter is not None:
        return delimiter
    return "\t" if str(path).endswith((".tsv", ".txt")) else ","


def load_reference_table(path, schema=None, delimiter=None) -> ReferenceTable:
    """Load a reference table from a delimited text file.

    Column roles come from ``param:``/``stat:`` header prefixes, or from
    ``schema`` (a dict or JSON file path with ``params`` and ``stats`` column
    lists) for foreign files. Unassigned columns are ignored. Every assigned
    cell must parse as a finite float; offending cells are reported with their
    1-based data row and column name.
    """
    path = Path(path)
    schema = _read_schema(schema)
    delim = _delimiter_for(path, delimiter)
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh, delimiter=delim)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise EmptyTableError(f"{path} is empty") from None
        param_cols, stat_cols = _resolve_columns(header, schema)
        cols = param_cols + stat_cols
        rows = []
        for r, record in enumerate(reader, start=1):
            if not record or all(not c.strip() for c in record):
                continue
            if len(record) < len(header):
                raise ValidationError(
                    f"row {r} has {len(record)} fields, expected {len(header)}",
                    row=r,
                )
            vals = np.empty(len(cols))
            for j, (ci, name) in enumerate(cols):
                cell = record[ci].strip()
                try:
                    v = float(cell)
                except ValueError:
                    raise ValidationError(
                        f"non-numeric value {cell!r} at row {r}, column {name!r}",
                        row=r,
                        column=name,
                    ) from None
                if not math.isfinite(v):
                    raise ValidationError(
                        f"non-finite value {cell!r} at row {r}, column {name!r}",
                        row=r,
                        column=name,
                    )
                vals[j] = v
            rows.append(vals)
    if not rows:
        raise EmptyTableError(f"{path} contains a header but zero data rows")
    data = np.vstack(rows)
    n_p = len(param_cols)
    return ReferenceTable(
        params=data[:, :n_p],
        summaries=data[:, n_p:],
        param_names=tuple(name for _, name in param_cols),
        stat_names=tuple(name for _, name in stat_cols),
    )


def save_reference_table(table: ReferenceTable, path, delimiter=None):
    """Write a table in the self-describing prefixed-header format."""
    path = Path(path)
    delim = _delimiter_for(path, delimiter)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter=delim)
        writer.writerow(
            [PARAM_PREFIX + n for n in table.param_names]
            + [STAT_PREFIX + n for n in table.stat_names]
        )
        for i in range(len(table)):
            writer.writerow(
                [repr(float(v)) for v in table.params[i]]
                + [repr(float(v)) for v in table.summaries[i]]
            )
