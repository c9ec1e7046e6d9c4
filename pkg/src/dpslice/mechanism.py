"""Table encoding and the noisy slicing release.

A mixed-type table is encoded into an n x d matrix with row 2-norm <= 1
(min-max scaling, one-hot blocks, uniform 1/sqrt(d) row scaling), optionally
Poisson-subsampled, and released as (U, XU + V) with U_ij ~ N(0, 1/d) and
V_ij ~ N(0, sigma^2). Downstream code only ever sees the resulting
SliceBundle, never the encoded data.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence, Union

import numpy as np
import pandas as pd

from .accounting import MechanismDims

_BUNDLE_MAGIC = b"DPSLB1\n"
_BUNDLE_VERSION = 1

# fixed labels for seed substreams so evaluation order cannot change draws
_STREAM_U = 1
_STREAM_V = 2
_STREAM_SUBSAMPLE = 3


class SchemaError(ValueError):
    """A table cell violates the declared column schema."""


def substream(seed: int, label: int, *extra: int) -> np.random.Generator:
    """Generator for a fixed labelled substream of a master seed."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), label, *map(int, extra)]))


@dataclass(frozen=True)
class ColumnSpec:
    """One column: numerical with declared public bounds, or categorical."""

    name: str
    kind: str  # "numerical" | "categorical"
    min: Optional[float] = None
    max: Optional[float] = None
    categories: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        if self.kind == "numerical":
            if self.min is None or self.max is None or not (
                np.isfinite(self.min) and np.isfinite(self.max) and self.min < self.max
            ):
                raise SchemaError(
                    f"column {self.name!r}: numerical bounds must be finite with min < max"
                )
        elif self.kind == "categorical":
            if not self.categories or len(set(self.categories)) != len(self.categories):
                raise SchemaError(
                    f"column {self.name!r}: categories must be non-empty and duplicate-free"
                )
        else:
            raise SchemaError(f"column {self.name!r}: unknown kind {self.kind!r}")

    @property
    def width(self) -> int:
        return 1 if self.kind == "numerical" else len(self.categories)


@dataclass(frozen=True)
class ColumnSchema:
    columns: tuple[ColumnSpec, ...]

    @property
    def encoded_width(self) -> int:
        return sum(c.width for c in self.columns)

    @staticmethod
    def from_dict(obj: dict) -> "ColumnSchema":
        cols = []
        for c in obj["columns"]:
            if c["kind"] == "categorical":
                cols.append(ColumnSpec(c["name"], "categorical",
                                       categories=tuple(str(v) for v in c["categories"])))
            else:
                cols.append(ColumnSpec(c["name"], "numerical",
                                       min=float(c["min"]), max=float(c["max"])))
        return ColumnSchema(tuple(cols))

    def to_dict(self) -> dict:
        out = []
        for c in self.columns:
            if c.kind == "categorical":
                out.append({"name": c.name, "kind": c.kind, "categories": list(c.categories)})
            else:
                out.append({"name": c.name, "kind": c.kind, "min": c.min, "max": c.max})
        return {"columns": out}

    @staticmethod
    def load(path) -> "ColumnSchema":
        with open(path) as fh:
            return ColumnSchema.from_dict(json.load(fh))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


@dataclass(frozen=True)
class EncodedMatrix:
    """Encoded private table; every row has 2-norm <= 1 by construction."""

    data: np.ndarray
    schema: ColumnSchema
    row_scale: float


def encode(table: pd.DataFrame, schema: ColumnSchema) -> EncodedMatrix:
    """Encode a schema-conforming table into a norm-bounded real matrix.

    Numerical columns are min-max scaled to [0, 1] from the declared public
    bounds; categorical columns become one-hot blocks; every entry is then
    multiplied by 1 / sqrt(d), which bounds each row 2-norm by 1.
    """
    n = len(table)
    d = schema.encoded_width
    scale = 1.0 / np.sqrt(d)
    out = np.zeros((n, d))
    col = 0
    for spec in schema.columns:
        if spec.name not in table.columns:
            raise SchemaError(f"column {spec.name!r} missing from table")
        values = table[spec.name]
        if values.isna().any():
            row = int(values.isna().idxmax())
            raise SchemaError(f"missing cell at row {row}, column {spec.name!r}")
        if spec.kind == "numerical":
            v = values.to_numpy(dtype=float)
            bad = (v < spec.min) | (v > spec.max)
            if bad.any():
                row = int(np.argmax(bad))
                raise SchemaError(
                    f"value {v[row]!r} out of bounds [{spec.min}, {spec.max}] "
                    f"at row {row}, column {spec.name!r}"
                )
            out[:, col] = (v - spec.min) / (spec.max - spec.min) * scale
            col += 1
        else:
            index = {c: i for i, c in enumerate(spec.categories)}
            for row, v in enumerate(values.astype(str)):
                j = index.get(v)
                if j is None:
                    raise SchemaError(
                        f"unknown category {v!r} at row {row}, column {spec.name!r}"
                    )
                out[row, col + j] = scale
            col += spec.width
    return EncodedMatrix(data=out, schema=schema, row_scale=scale)


def decode(rows: np.ndarray, schema: ColumnSchema) -> pd.DataFrame:
    """Inverse of encode for generator output: numerical entries are
    inverse-scaled and clipped to the declared bounds, one-hot blocks are
    decoded by argmax."""
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    d = schema.encoded_width
    if rows.shape[1] != d:
        raise ValueError(f"width mismatch: got {rows.shape[1]}, schema encodes {d}")
    scale = 1.0 / np.sqrt(d)
    out = {}
    col = 0
    for spec in schema.columns:
        if spec.kind == "numerical":
            v = rows[:, col] / scale * (spec.max - spec.min) + spec.min
            out[spec.name] = np.clip(v, spec.min, spec.max)
            col += 1
        else:
            block = rows[:, col:col + spec.width]
            idx = np.argmax(block, axis=1)
            out[spec.name] = [spec.categories[i] for i in idx]
            col += spec.width
    return pd.DataFrame(out)


def poisson_subsample(
    matrix: EncodedMatrix, rate: float, rng: np.random.Generator
) -> EncodedMatrix:
    """Keep each row independently with probability rate, preserving order."""
    if not 0 < rate <= 1:
        raise ValueError(f"rate must be in (0,1], got {rate}")
    if rate == 1.0:
        return matrix
    keep = rng.random(matrix.data.shape[0]) < rate
    return EncodedMatrix(
        data=matrix.data[keep], schema=matrix.schema, row_scale=matrix.row_scale
    )


@dataclass(frozen=True)
class SliceBundle:
    """The mechanism output (U, O = XU + V) plus the metadata needed to
    train against it; the raw data does not appear anywhere in here."""

    U: np.ndarray  # d x m'
    O: np.ndarray  # n x m'
    sigma: float
    dims: MechanismDims
    seed: int

    @property
    def n(self) -> int:
        return self.O.shape[0]

    def slices(self) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        """Per-slice views (theta_s: d x k, o_s: n x k); concatenating them
        reconstructs (U, O) exactly."""
        k = self.dims.k
        for s in range(self.dims.m):
            yield self.U[:, s * k:(s + 1) * k], self.O[:, s * k:(s + 1) * k]

    def save(self, path) -> None:
        header = json.dumps({
            "version": _BUNDLE_VERSION,
            "d": self.dims.d, "k": self.dims.k, "m": self.dims.m,
            "n": int(self.O.shape[0]),
            "sigma": self.sigma, "seed": self.seed,
        }).encode()
        with open(path, "wb") as fh:
            fh.write(_BUNDLE_MAGIC)
            fh.write(struct.pack("<I", len(header)))
            fh.write(header)
            # row-major little-endian float64, U then O
            fh.write(np.ascontiguousarray(self.U, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(self.O, dtype="<f8").tobytes())

    @staticmethod
    def load(path) -> "SliceBundle":
        with open(path, "rb") as fh:
            magic = fh.read(len(_BUNDLE_MAGIC))
            if magic != _BUNDLE_MAGIC:
                raise ValueError(f"not a slice bundle: {path}")
            (hlen,) = struct.unpack("<I", fh.read(4))
            h = json.loads(fh.read(hlen))
            if h["version"] != _BUNDLE_VERSION:
                raise ValueError(f"unsupported bundle version {h['version']}")
            dims = MechanismDims(d=h["d"], k=h["k"], m=h["m"])
            mp = dims.m_prime
            U = np.frombuffer(fh.read(8 * h["d"] * mp), dtype="<f8").reshape(h["d"], mp)
            O = np.frombuffer(fh.read(8 * h["n"] * mp), dtype="<f8").reshape(h["n"], mp)
        return SliceBundle(U=U.copy(), O=O.copy(), sigma=h["sigma"], dims=dims,
                           seed=h["seed"])


def apply_mechanism(
    X: EncodedMatrix, dims: MechanismDims, sigma: float, seed: int
) -> SliceBundle:
    """Release (U, XU + V) with U_ij ~ N(0, 1/d) and V_ij ~ N(0, sigma^2).

    Randomness comes from fixed labelled substreams of the master seed, so
    the bundle is bit-reproducible. X is read exactly once and not retained.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    if X.data.shape[1] != dims.d:
        raise ValueError(
            f"encoded width {X.data.shape[1]} does not match dims.d={dims.d}"
        )
    mp = dims.m_prime
    U = substream(seed, _STREAM_U).normal(0.0, 1.0 / np.sqrt(dims.d), size=(dims.d, mp))
    V = substream(seed, _STREAM_V).normal(0.0, sigma, size=(X.data.shape[0], mp))
    O = X.data @ U + V
    return SliceBundle(U=U, O=O, sigma=sigma, dims=dims, seed=seed)


def release(
    table: pd.DataFrame,
    schema: ColumnSchema,
    dims: MechanismDims,
    sigma: float,
    seed: int,
    subsample_rate: float = 1.0,
) -> SliceBundle:
    """encode -> Poisson subsample -> slicing mechanism, on one master seed."""
    X = encode(table, schema)
    if subsample_rate < 1.0:
        X = poisson_subsample(X, subsample_rate, substream(seed, _STREAM_SUBSAMPLE))
    return apply_mechanism(X, dims, sigma, seed)
