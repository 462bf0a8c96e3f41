"""MILP data model, standardization and the bipartite-graph encoding.

Every instance handled by the toolkit is kept in the standardized form

    min c^T x  s.t.  A x <= b,  l <= x <= u,  x_j integral for j in I

with ``A`` stored as a row-sorted coordinate list. Instances are immutable:
arrays are copied on construction and flagged read-only.
"""

from __future__ import annotations

import enum
import json
import logging
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

logger = logging.getLogger(__name__)

JSON_FORMAT = "milpgen-instance"
JSON_VERSION = 1


class VarType(enum.IntEnum):
    """Variable type; the value is the position in the 4-dim one-hot feature."""

    BINARY = 0
    CONTINUOUS = 1
    INTEGER = 2
    IMPLICIT_INTEGER = 3

    @property
    def is_discrete(self) -> bool:
        return self != VarType.CONTINUOUS


class UnsupportedFeatureError(ValueError):
    """Raised for model features outside the supported subset (e.g. RANGES)."""


class MalformedGraphError(ValueError):
    """Raised when a bipartite graph cannot be decoded into an instance."""


def _frozen(a, dtype) -> np.ndarray:
    out = np.array(a, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


def _no_negzero(a: np.ndarray) -> np.ndarray:
    # -0.0 + 0.0 == +0.0, everything else unchanged
    return a + 0.0


@dataclass(frozen=True, eq=False)
class MilpInstance:
    """A standardized MILP (all constraints ``<=``, minimization)."""

    name: str
    c: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    b: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    vtype: np.ndarray

    def __post_init__(self):
        for attr, dtype in (("c", np.float64), ("rows", np.int64), ("cols", np.int64),
                            ("vals", np.float64), ("b", np.float64), ("lower", np.float64),
                            ("upper", np.float64), ("vtype", np.int8)):
            object.__setattr__(self, attr, _frozen(getattr(self, attr), dtype))
        n, m = self.c.shape[0], self.b.shape[0]
        if self.c.ndim != 1 or self.b.ndim != 1:
            raise ValueError("c and b must be one-dimensional")
        if not (self.lower.shape == self.upper.shape == self.vtype.shape == (n,)):
            raise ValueError("bounds and types must have one entry per variable")
        if not (self.rows.shape == self.cols.shape == self.vals.shape):
            raise ValueError("coefficient triplets must have equal length")
        nnz = self.rows.shape[0]
        if nnz:
            if self.rows.min() < 0 or self.rows.max() >= m or self.cols.min() < 0 or self.cols.max() >= n:
                raise ValueError("coefficient index out of range")
            key = self.rows * max(n, 1) + self.cols
            if np.any(np.diff(key) <= 0):
                raise ValueError("coefficients must be sorted by (row, col) without duplicates")
            if np.any(self.vals == 0.0) or not np.all(np.isfinite(self.vals)):
                raise ValueError("stored coefficients must be finite and nonzero")
        if not np.all(np.isfinite(self.c)) or not np.all(np.isfinite(self.b)):
            raise ValueError("c and b must be finite")
        if np.any(np.isnan(self.lower)) or np.any(np.isnan(self.upper)):
            raise ValueError("bounds must not be NaN")
        if np.any(self.lower == np.inf) or np.any(self.upper == -np.inf):
            raise ValueError("lower bound +inf or upper bound -inf")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")
        if np.any((self.vtype < 0) | (self.vtype > 3)):
            raise ValueError("unknown variable type code")
        binary = self.vtype == VarType.BINARY
        if np.any(self.lower[binary] != 0.0) or np.any(self.upper[binary] != 1.0):
            raise ValueError("binary variables must have bounds [0, 1]")

    @classmethod
    def from_triplets(cls, name, c, rows, cols, vals, b, lower, upper, vtype) -> "MilpInstance":
        """Build an instance from unsorted triplets; duplicates are summed, zeros dropped."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        rows, cols, vals = canonical_triplets(rows, cols, vals, len(c))
        return cls(name, c, rows, cols, vals, b, lower, upper, vtype)

    @property
    def n(self) -> int:
        return int(self.c.shape[0])

    @property
    def m(self) -> int:
        return int(self.b.shape[0])

    @property
    def nnz(self) -> int:
        return int(self.vals.shape[0])

    def matrix(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.vals, (self.rows, self.cols)), shape=(self.m, self.n))

    def dense(self) -> np.ndarray:
        a = np.zeros((self.m, self.n))
        a[self.rows, self.cols] = self.vals
        return a

    def row_degrees(self) -> np.ndarray:
        return np.bincount(self.rows, minlength=self.m)

    def discrete_mask(self) -> np.ndarray:
        return self.vtype != VarType.CONTINUOUS

    def replace(self, **changes) -> "MilpInstance":
        fields = {k: getattr(self, k) for k in
                  ("name", "c", "rows", "cols", "vals", "b", "lower", "upper", "vtype")}
        fields.update(changes)
        return MilpInstance(**fields)

    def __eq__(self, other):
        if not isinstance(other, MilpInstance):
            return NotImplemented
        return self.name == other.name and all(
            np.array_equal(getattr(self, k), getattr(other, k))
            for k in ("c", "rows", "cols", "vals", "b", "lower", "upper", "vtype"))

    def __hash__(self):
        return hash((self.name, self.m, self.n, self.nnz))

    def __repr__(self):
        return f"MilpInstance(name={self.name!r}, m={self.m}, n={self.n}, nnz={self.nnz})"


def canonical_triplets(rows, cols, vals, n):
    """Sort by (row, col), sum duplicate entries (with a warning) and drop zeros."""
    key = rows * max(int(n), 1) + cols
    order = np.argsort(key, kind="stable")
    key, rows, cols, vals = key[order], rows[order], cols[order], vals[order]
    if key.size and np.any(np.diff(key) == 0):
        warnings.warn("duplicate (row, col) coefficients were summed", stacklevel=3)
        uniq, start = np.unique(key, return_index=True)
        vals = np.add.reduceat(vals, start)
        rows, cols = rows[start], cols[start]
    keep = vals != 0.0
    return rows[keep], cols[keep], vals[keep]


@dataclass(frozen=True)
class RawMilp:
    """A MILP with arbitrary row senses ('L', 'G', 'E') and objective direction."""

    name: str
    c: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    senses: tuple
    rhs: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    vtype: np.ndarray
    maximize: bool = False
    has_ranges: bool = False


def standardize(raw) -> MilpInstance:
    """Bring ``raw`` into minimization form with ``<=`` rows only.

    ``>=`` rows are negated and ``=`` rows are split into a ``<=`` row followed
    by its negation. Variable data is left untouched. Passing an already
    standardized :class:`MilpInstance` returns it unchanged.
    """
    if isinstance(raw, MilpInstance):
        return raw
    if raw.has_ranges:
        raise UnsupportedFeatureError("RANGES (double-bounded rows) are not supported")
    c = np.asarray(raw.c, dtype=np.float64)
    if raw.maximize:
        c = _no_negzero(-c)
    rows = np.asarray(raw.rows, dtype=np.int64)
    cols = np.asarray(raw.cols, dtype=np.int64)
    vals = np.asarray(raw.vals, dtype=np.float64)
    rhs = np.asarray(raw.rhs, dtype=np.float64)
    rows, cols, vals = canonical_triplets(rows, cols, vals, len(c))

    senses = [str(s).upper() for s in raw.senses]
    if len(senses) != len(rhs):
        raise ValueError("one sense per constraint required")
    bad = set(senses) - {"L", "G", "E"}
    if bad:
        raise ValueError(f"unknown constraint senses {sorted(bad)}")

    # each source row maps to one or two output rows, each with a sign
    out_src, out_sign = [], []
    for i, s in enumerate(senses):
        if s == "L":
            out_src.append(i); out_sign.append(1.0)
        elif s == "G":
            out_src.append(i); out_sign.append(-1.0)
        else:
            out_src += [i, i]; out_sign += [1.0, -1.0]
    out_src = np.asarray(out_src, dtype=np.int64)
    out_sign = np.asarray(out_sign)

    starts = np.searchsorted(rows, np.arange(len(rhs) + 1))
    new_rows, new_cols, new_vals = [], [], []
    for k, (src, sign) in enumerate(zip(out_src, out_sign)):
        lo, hi = starts[src], starts[src + 1]
        new_rows.append(np.full(hi - lo, k, dtype=np.int64))
        new_cols.append(cols[lo:hi])
        new_vals.append(_no_negzero(sign * vals[lo:hi]))
    cat = (lambda parts, dt: np.concatenate(parts) if parts else np.zeros(0, dtype=dt))
    b = _no_negzero(out_sign * rhs[out_src]) if len(out_src) else np.zeros(0)
    return MilpInstance(raw.name, c, cat(new_rows, np.int64), cat(new_cols, np.int64),
                        cat(new_vals, np.float64), b, raw.lower, raw.upper, raw.vtype)


# --------------------------------------------------------------------------
# bipartite representation

N_VAR_FEATURES = 9


@dataclass(frozen=True, eq=False)
class BipartiteGraph:
    """Constraint features ``V`` (m x 1), variable features ``W`` (n x 9),
    edges ``edge_index`` (2 x |E|: constraint, variable) with features ``E`` (|E| x 1)."""

    V: np.ndarray
    W: np.ndarray
    edge_index: np.ndarray
    E: np.ndarray
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "V", _frozen(self.V, np.float64).reshape(-1, 1))
        object.__setattr__(self, "W", _frozen(self.W, np.float64).reshape(-1, N_VAR_FEATURES))
        object.__setattr__(self, "edge_index", _frozen(self.edge_index, np.int64).reshape(2, -1))
        object.__setattr__(self, "E", _frozen(self.E, np.float64).reshape(-1, 1))
        if self.E.shape[0] != self.edge_index.shape[1]:
            raise ValueError("one feature per edge required")
        if self.num_edges:
            ci, vi = self.edge_index
            if ci.min() < 0 or ci.max() >= self.m or vi.min() < 0 or vi.max() >= self.n:
                raise ValueError("edge endpoint out of range")
            if np.unique(ci * self.n + vi).size != ci.size:
                raise ValueError("duplicate edge")
            if np.any(self.E == 0.0):
                raise ValueError("zero-weight edge")

    @property
    def m(self) -> int:
        return int(self.V.shape[0])

    @property
    def n(self) -> int:
        return int(self.W.shape[0])

    @property
    def num_edges(self) -> int:
        return int(self.edge_index.shape[1])

    def __eq__(self, other):
        if not isinstance(other, BipartiteGraph):
            return NotImplemented
        return self.name == other.name and all(
            np.array_equal(getattr(self, k), getattr(other, k)) for k in ("V", "W", "edge_index", "E"))

    __hash__ = None


def variable_features(inst: MilpInstance) -> np.ndarray:
    n = inst.n
    W = np.zeros((n, N_VAR_FEATURES))
    W[np.arange(n), inst.vtype.astype(np.int64)] = 1.0
    W[:, 4] = inst.c
    has_lo = np.isfinite(inst.lower)
    has_up = np.isfinite(inst.upper)
    W[:, 5] = has_lo
    W[:, 6] = has_up
    W[:, 7] = np.where(has_lo, inst.lower, 0.0)
    W[:, 8] = np.where(has_up, inst.upper, 0.0)
    return W


def to_bipartite(inst: MilpInstance) -> BipartiteGraph:
    """Lossless bipartite encoding; one edge per stored nonzero."""
    return BipartiteGraph(
        V=inst.b.reshape(-1, 1),
        W=variable_features(inst),
        edge_index=np.vstack([inst.rows, inst.cols]),
        E=inst.vals.reshape(-1, 1),
        name=inst.name,
    )


def from_bipartite(g: BipartiteGraph) -> MilpInstance:
    if getattr(g, "masked_index", None) is not None:
        raise MalformedGraphError("cannot decode a masked graph")
    W = g.W
    onehot = W[:, :4]
    if not np.all((onehot == 0.0) | (onehot == 1.0)) or np.any(onehot.sum(axis=1) != 1.0):
        raise MalformedGraphError("variable type must be a one-hot vector")
    ind = W[:, 5:7]
    if not np.all((ind == 0.0) | (ind == 1.0)):
        raise MalformedGraphError("bound indicators must be 0 or 1")
    vtype = np.argmax(onehot, axis=1).astype(np.int8)
    lower = np.where(W[:, 5] == 1.0, W[:, 7], -np.inf)
    upper = np.where(W[:, 6] == 1.0, W[:, 8], np.inf)
    ci, vi = g.edge_index
    order = np.lexsort((vi, ci))
    try:
        return MilpInstance(g.name, W[:, 4], ci[order], vi[order], g.E[order, 0],
                            g.V[:, 0], lower, upper, vtype)
    except ValueError as exc:
        raise MalformedGraphError(str(exc)) from exc


# --------------------------------------------------------------------------
# dataset statistics used for output normalization


@dataclass(frozen=True)
class NormBounds:
    """Dataset ranges of biases, constraint degrees and nonzero coefficients."""

    b_min: float
    b_max: float
    d_min: int
    d_max: int
    e_min: float
    e_max: float

    def __post_init__(self):
        vals = (self.b_min, self.b_max, self.d_min, self.d_max, self.e_min, self.e_max)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError("normalization bounds must be finite")
        if self.b_min > self.b_max or self.d_min > self.d_max or self.e_min > self.e_max:
            raise ValueError("normalization bounds require min <= max")

    @property
    def b_degenerate(self) -> bool:
        return self.b_min == self.b_max

    @property
    def d_degenerate(self) -> bool:
        return self.d_min == self.d_max

    @property
    def e_degenerate(self) -> bool:
        return self.e_min == self.e_max

    def to_dict(self) -> dict:
        return {"b_min": self.b_min, "b_max": self.b_max, "d_min": self.d_min,
                "d_max": self.d_max, "e_min": self.e_min, "e_max": self.e_max}

    @classmethod
    def from_dict(cls, d: dict) -> "NormBounds":
        return cls(float(d["b_min"]), float(d["b_max"]), int(d["d_min"]), int(d["d_max"]),
                   float(d["e_min"]), float(d["e_max"]))


def dataset_norm_bounds(instances) -> NormBounds:
    instances = list(instances)
    if not instances:
        raise ValueError("dataset is empty")
    if sum(inst.m for inst in instances) == 0:
        raise ValueError("dataset has no constraints")
    bs = np.concatenate([inst.b for inst in instances])
    degs = np.concatenate([inst.row_degrees() for inst in instances])
    coefs = np.concatenate([inst.vals for inst in instances])
    if coefs.size == 0:
        raise ValueError("dataset has no nonzero coefficients")
    nb = NormBounds(float(bs.min()), float(bs.max()), int(degs.min()), int(degs.max()),
                    float(coefs.min()), float(coefs.max()))
    for what, flag in (("bias", nb.b_degenerate), ("degree", nb.d_degenerate),
                       ("coefficient", nb.e_degenerate)):
        if flag:
            logger.warning("degenerate %s range in dataset; predictor emits a constant", what)
    return nb


# --------------------------------------------------------------------------
# JSON debug format


def _bound_list(a):
    return [None if not np.isfinite(x) else float(x) for x in a]


def instance_to_json(inst: MilpInstance) -> str:
    doc = {
        "format": JSON_FORMAT,
        "version": JSON_VERSION,
        "name": inst.name,
        "n": inst.n,
        "m": inst.m,
        "c": inst.c.tolist(),
        "A": [[int(r), int(k), float(v)] for r, k, v in zip(inst.rows, inst.cols, inst.vals)],
        "b": inst.b.tolist(),
        "lower": _bound_list(inst.lower),
        "upper": _bound_list(inst.upper),
        "var_type": [VarType(int(t)).name.lower() for t in inst.vtype],
    }
    return json.dumps(doc)


def instance_from_json(text: str) -> MilpInstance:
    doc = json.loads(text)
    if doc.get("format") != JSON_FORMAT:
        raise ValueError("not a milpgen instance document")
    if doc.get("version") != JSON_VERSION:
        raise ValueError(f"unsupported instance format version {doc.get('version')}")
    A = doc["A"]
    lower = [-np.inf if v is None else v for v in doc["lower"]]
    upper = [np.inf if v is None else v for v in doc["upper"]]
    vtype = [VarType[t.upper()] for t in doc["var_type"]]
    inst = MilpInstance.from_triplets(
        doc["name"], doc["c"], [a[0] for a in A], [a[1] for a in A], [a[2] for a in A],
        doc["b"], lower, upper, vtype)
    if inst.n != doc["n"] or inst.m != doc["m"]:
        raise ValueError("declared sizes do not match the data")
    return inst
