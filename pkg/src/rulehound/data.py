"""Typed tabular datasets.

A :class:`Schema` names every state (column) of a dataset and says whether it
is discrete or continuous and whether it acts as an input, a target, or pure
context that is carried along for judging but never conditioned on.  A
:class:`Dataset` couples a schema with a float matrix, one row per observed
sample.  CSV ingestion accepts an optional JSON sidecar describing the schema
and label-encodes string-valued discrete columns deterministically.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

DISCRETE = "discrete"
CONTINUOUS = "continuous"

KINDS = (DISCRETE, CONTINUOUS)
ROLES = ("input", "target", "context")

# A sample is just a name -> value mapping over (a subset of) schema states.
Sample = dict[str, float]


class DataError(ValueError):
    """Malformed input data: bad files, bad schemas, bad values."""


@dataclass(frozen=True)
class StateSpec:
    """One named state: its kind (discrete/continuous) and role.

    ``categories`` holds the label-encoding table for string-valued discrete
    columns; encoded values are indices into it.
    """

    name: str
    kind: str
    role: str = "input"
    categories: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if not self.name:
            raise DataError("state name must be non-empty")
        if self.kind not in KINDS:
            raise DataError(f"state {self.name!r}: kind must be one of {KINDS}, got {self.kind!r}")
        if self.role not in ROLES:
            raise DataError(f"state {self.name!r}: role must be one of {ROLES}, got {self.role!r}")
        if self.categories is not None:
            if self.kind != DISCRETE:
                raise DataError(f"state {self.name!r}: only discrete states may carry categories")
            if len(set(self.categories)) != len(self.categories):
                raise DataError(f"state {self.name!r}: duplicate categories")

    def decode(self, value: float) -> str | float:
        """Map an encoded value back to its category label, if any."""
        if self.categories is None:
            return value
        idx = int(value)
        if not (0 <= idx < len(self.categories) and idx == value):
            raise DataError(f"state {self.name!r}: {value!r} is not a valid category code")
        return self.categories[idx]


@dataclass(frozen=True)
class Schema:
    """An ordered collection of uniquely named states."""

    states: tuple[StateSpec, ...]

    def __post_init__(self) -> None:
        names = [s.name for s in self.states]
        if len(set(names)) != len(names):
            raise DataError("duplicate state names in schema")
        if not any(s.role == "input" for s in self.states):
            raise DataError("schema needs at least one input state")
        if not any(s.role == "target" for s in self.states):
            raise DataError("schema needs at least one target state")

    def __iter__(self) -> Iterator[StateSpec]:
        return iter(self.states)

    def __len__(self) -> int:
        return len(self.states)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.states)

    @property
    def input_states(self) -> tuple[StateSpec, ...]:
        return tuple(s for s in self.states if s.role == "input")

    @property
    def target_states(self) -> tuple[StateSpec, ...]:
        return tuple(s for s in self.states if s.role == "target")

    @property
    def input_names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.input_states)

    @property
    def target_names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.target_states)

    def state(self, name: str) -> StateSpec:
        for s in self.states:
            if s.name == name:
                return s
        raise DataError(f"unknown state {name!r}")

    def index(self, name: str) -> int:
        for i, s in enumerate(self.states):
            if s.name == name:
                return i
        raise DataError(f"unknown state {name!r}")

    def to_dict(self) -> dict:
        fields = []
        for s in self.states:
            entry: dict = {"name": s.name, "kind": s.kind, "role": s.role}
            if s.categories is not None:
                entry["categories"] = list(s.categories)
            fields.append(entry)
        return {"fields": fields}

    @classmethod
    def from_dict(cls, payload: Mapping) -> "Schema":
        try:
            raw = payload["fields"]
        except (KeyError, TypeError):
            raise DataError("schema payload needs a 'fields' list") from None
        if not isinstance(raw, list) or not raw:
            raise DataError("schema payload needs a non-empty 'fields' list")
        states = []
        for i, entry in enumerate(raw):
            if not isinstance(entry, Mapping) or "name" not in entry or "kind" not in entry:
                raise DataError(f"schema field {i} needs at least 'name' and 'kind'")
            cats = entry.get("categories")
            states.append(
                StateSpec(
                    name=str(entry["name"]),
                    kind=str(entry["kind"]),
                    role=str(entry.get("role", "input")),
                    categories=tuple(str(c) for c in cats) if cats is not None else None,
                )
            )
        return cls(states=tuple(states))


def load_schema(path: str | Path) -> Schema:
    """Read a schema sidecar file (JSON with a 'fields' list)."""
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except OSError as exc:
        raise DataError(f"cannot read schema file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"schema file {path} is not valid JSON: {exc}") from exc
    return Schema.from_dict(payload)


@dataclass
class Dataset:
    """A schema plus one float64 row per sample, in schema column order.

    ``provenance`` records which split the rows belong to ("full", "seen" or
    "unseen"); it travels with the data so reports can label themselves.
    """

    schema: Schema
    values: np.ndarray
    provenance: str = "full"

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DataError(f"dataset values must be 2-D, got shape {self.values.shape}")
        if self.values.shape[1] != len(self.schema):
            raise DataError(
                f"dataset has {self.values.shape[1]} columns but schema names {len(self.schema)}"
            )
        if self.values.size and not np.all(np.isfinite(self.values)):
            raise DataError("dataset contains non-finite values")

    def __len__(self) -> int:
        return int(self.values.shape[0])

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.schema.index(name)]

    def columns(self, names: Sequence[str]) -> np.ndarray:
        idx = [self.schema.index(n) for n in names]
        return self.values[:, idx]

    def inputs(self) -> np.ndarray:
        return self.columns(self.schema.input_names)

    def targets(self) -> np.ndarray:
        return self.columns(self.schema.target_names)

    def row(self, i: int) -> Sample:
        return {name: float(v) for name, v in zip(self.schema.names, self.values[i])}

    def target_row(self, i: int) -> Sample:
        idx = [self.schema.index(n) for n in self.schema.target_names]
        return {n: float(self.values[i, j]) for n, j in zip(self.schema.target_names, idx)}

    def iter_rows(self) -> Iterator[Sample]:
        for i in range(len(self)):
            yield self.row(i)

    def with_target_values(self, rows: Sequence[Mapping[str, float]]) -> "Dataset":
        """Copy of the dataset with target columns replaced, row by row."""
        if len(rows) != len(self):
            raise DataError("target replacement needs one mapping per row")
        values = self.values.copy()
        for name in self.schema.target_names:
            j = self.schema.index(name)
            for i, mapping in enumerate(rows):
                values[i, j] = float(mapping[name])
        return Dataset(schema=self.schema, values=values, provenance=self.provenance)

    def observed_ranges(self, names: Sequence[str] | None = None) -> dict[str, tuple[float, float]]:
        if names is None:
            names = self.schema.names
        if not len(self):
            raise DataError("cannot take ranges of an empty dataset")
        out = {}
        for n in names:
            col = self.column(n)
            out[n] = (float(col.min()), float(col.max()))
        return out


def _looks_like_header(row: Sequence[str], schema: Schema) -> bool:
    # A row is taken for a header when any cell equals a schema name, or any
    # continuous cell refuses to parse as a number.
    stripped = [cell.strip() for cell in row]
    if any(cell in schema.names for cell in stripped):
        return True
    for spec, cell in zip(schema.states, stripped):
        if spec.kind == CONTINUOUS:
            try:
                float(cell)
            except ValueError:
                return True
    return False


def load_csv(
    path: str | Path,
    schema: Schema,
    has_header: bool | None = None,
    provenance: str = "full",
) -> Dataset:
    """Read a CSV file against a schema.

    Columns are matched positionally.  String-valued discrete columns are
    label encoded: against ``categories`` when the schema carries them, else
    against the sorted set of strings seen in the file (and the returned
    dataset's schema records the table used).  ``has_header=None`` sniffs the
    first row.  Parse failures report the offending row index.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc

    rows = [row for row in csv.reader(text.splitlines()) if row and any(c.strip() for c in row)]
    if not rows:
        raise DataError(f"{path}: no data rows")
    if has_header is None:
        has_header = _looks_like_header(rows[0], schema)
    if has_header:
        rows = rows[1:]
        if not rows:
            raise DataError(f"{path}: header only, no data rows")

    ncol = len(schema)
    cells: list[list[str]] = []
    for i, row in enumerate(rows):
        if len(row) != ncol:
            raise DataError(f"{path}: row {i} has {len(row)} cells, expected {ncol}")
        cells.append([c.strip() for c in row])

    # First pass: build encoding tables for string-valued discrete columns
    # that do not declare categories up front.
    tables: dict[int, tuple[str, ...]] = {}
    for j, spec in enumerate(schema.states):
        if spec.categories is not None:
            tables[j] = spec.categories
            continue
        if spec.kind != DISCRETE:
            continue
        raw = [cells[i][j] for i in range(len(cells))]
        needs_encoding = False
        for v in raw:
            try:
                float(v)
            except ValueError:
                needs_encoding = True
                break
        if needs_encoding:
            tables[j] = tuple(sorted(set(raw)))

    values = np.empty((len(cells), ncol), dtype=np.float64)
    for i, row in enumerate(cells):
        for j, spec in enumerate(schema.states):
            cell = row[j]
            if j in tables:
                try:
                    values[i, j] = tables[j].index(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: row {i}, state {spec.name!r}: {cell!r} not in categories"
                    ) from None
            else:
                try:
                    values[i, j] = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: row {i}, state {spec.name!r}: cannot parse {cell!r}"
                    ) from None

    out_states = tuple(
        replace(spec, categories=tables[j]) if j in tables and spec.categories is None else spec
        for j, spec in enumerate(schema.states)
    )
    return Dataset(schema=Schema(states=out_states), values=values, provenance=provenance)


def save_csv(path: str | Path, dataset: Dataset, header: bool = True) -> None:
    """Write a dataset back out as CSV, decoding labelled columns.

    Numeric cells use repr formatting so doubles survive a round trip
    exactly; category-coded cells are written as their labels, which is what
    ``load_csv`` expects back.
    """
    path = Path(path)
    states = dataset.schema.states
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if header:
            writer.writerow(dataset.schema.names)
        for i in range(len(dataset)):
            row = dataset.values[i]
            writer.writerow(
                [
                    spec.decode(float(v)) if spec.categories else repr(float(v))
                    for spec, v in zip(states, row)
                ]
            )


def split_seen_unseen(
    dataset: Dataset,
    ratio: float,
    rng: np.random.Generator,
) -> tuple[Dataset, Dataset]:
    """Split into seen/unseen parts, stratified by the target combination.

    Each distinct target tuple contributes round(ratio * count) rows to the
    seen side, chosen uniformly at random; row order inside each side follows
    the original dataset.  The two sides are disjoint and cover the input.
    """
    if not (0.0 < ratio < 1.0):
        raise DataError(f"split ratio must lie strictly between 0 and 1, got {ratio}")
    if len(dataset) < 2:
        raise DataError("cannot split a dataset with fewer than two rows")

    targets = dataset.targets()
    groups: dict[tuple[float, ...], list[int]] = {}
    for i in range(len(dataset)):
        groups.setdefault(tuple(targets[i]), []).append(i)

    seen_idx: list[int] = []
    for key in sorted(groups):
        members = groups[key]
        take = int(round(ratio * len(members)))
        perm = rng.permutation(len(members))
        seen_idx.extend(members[p] for p in perm[:take])

    seen_set = set(seen_idx)
    if not seen_set or len(seen_set) == len(dataset):
        raise DataError(f"split ratio {ratio} leaves one side empty")
    seen_rows = sorted(seen_set)
    unseen_rows = [i for i in range(len(dataset)) if i not in seen_set]
    seen = Dataset(schema=dataset.schema, values=dataset.values[seen_rows], provenance="seen")
    unseen = Dataset(schema=dataset.schema, values=dataset.values[unseen_rows], provenance="unseen")
    return seen, unseen
