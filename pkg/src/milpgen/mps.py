"""Free-format MPS reading and writing.

Supported: NAME, OBJSENSE, ROWS (N/L/G/E), COLUMNS with INTORG/INTEND markers,
RHS, BOUNDS (UP, LO, FX, FR, BV, MI, PL, plus LI/UI), ENDATA. RANGES is
rejected. Rows are standardized on load.

Implicit-integer columns have no MPS encoding; the writer records them in
``* @implint <col>`` comment lines, which other readers ignore.
"""

from __future__ import annotations

import logging
import warnings

import numpy as np

from .milp import MilpInstance, RawMilp, UnsupportedFeatureError, VarType, standardize

logger = logging.getLogger(__name__)

_SECTIONS = {"NAME", "ROWS", "COLUMNS", "RHS", "RANGES", "BOUNDS", "ENDATA", "OBJSENSE"}
_VALUE_BOUNDS = {"UP", "LO", "FX", "LI", "UI"}
_FLAG_BOUNDS = {"FR", "MI", "PL", "BV"}


class MpsParseError(ValueError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


def _num(tok: str, lineno: int) -> float:
    try:
        return float(tok)
    except ValueError:
        raise MpsParseError(lineno, f"bad number {tok!r}") from None


def read_mps(path) -> MilpInstance:
    with open(path, "r") as fh:
        return parse_mps(fh.read())


def write_mps_file(inst: MilpInstance, path) -> None:
    with open(path, "w") as fh:
        fh.write(write_mps(inst))


def parse_mps(text: str) -> MilpInstance:
    return standardize(parse_mps_raw(text))


def parse_mps_raw(text: str) -> RawMilp:
    name = ""
    maximize = False
    obj_row = None
    row_index: dict[str, int] = {}
    senses: list[str] = []
    col_index: dict[str, int] = {}
    col_discrete: list[bool] = []
    implint: set[str] = set()
    obj: dict[int, float] = {}
    entries: dict[tuple[int, int], float] = {}
    rhs: dict[int, float] = {}
    bounds: dict[str, list] = {}
    section = None
    in_int = False
    saw_end = False

    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("*"):
            parts = stripped[1:].split()
            if len(parts) == 2 and parts[0] == "@implint":
                implint.add(parts[1])
            continue
        tokens = stripped.split()
        head = tokens[0].upper()
        if not line[0].isspace() and head in _SECTIONS:
            section = head
            if head == "NAME":
                name = tokens[1] if len(tokens) > 1 else ""
            elif head == "RANGES":
                raise UnsupportedFeatureError(f"line {lineno}: RANGES section is not supported")
            elif head == "OBJSENSE" and len(tokens) > 1:
                maximize = tokens[1].upper().startswith("MAX")
            elif head == "ENDATA":
                saw_end = True
                break
            continue

        if section == "OBJSENSE":
            maximize = head.startswith("MAX")
        elif section == "ROWS":
            if len(tokens) != 2:
                raise MpsParseError(lineno, "ROWS entry needs a type and a name")
            kind, rname = head, tokens[1]
            if kind == "N":
                if obj_row is None:
                    obj_row = rname
                else:
                    raise UnsupportedFeatureError(f"line {lineno}: extra free row {rname!r}")
            elif kind in ("L", "G", "E"):
                if rname in row_index:
                    raise MpsParseError(lineno, f"duplicate row {rname!r}")
                row_index[rname] = len(senses)
                senses.append(kind)
            else:
                raise MpsParseError(lineno, f"unknown row type {tokens[0]!r}")
        elif section == "COLUMNS":
            if len(tokens) >= 3 and tokens[1].strip("'\"").upper() == "MARKER":
                marker = tokens[2].strip("'\"").upper()
                if marker == "INTORG":
                    in_int = True
                elif marker == "INTEND":
                    in_int = False
                else:
                    raise MpsParseError(lineno, f"unknown marker {tokens[2]!r}")
                continue
            if len(tokens) not in (3, 5):
                raise MpsParseError(lineno, "COLUMNS entry needs name and 1 or 2 (row, value) pairs")
            cname = tokens[0]
            if cname not in col_index:
                col_index[cname] = len(col_discrete)
                col_discrete.append(in_int)
            j = col_index[cname]
            for rname, tok in zip(tokens[1::2], tokens[2::2]):
                val = _num(tok, lineno)
                if rname == obj_row:
                    if j in obj:
                        raise MpsParseError(lineno, f"duplicate objective entry for {cname!r}")
                    obj[j] = val
                elif rname in row_index:
                    key = (row_index[rname], j)
                    if key in entries:
                        raise MpsParseError(lineno, f"duplicate entry for column {cname!r} in row {rname!r}")
                    entries[key] = val
                else:
                    raise MpsParseError(lineno, f"unknown row {rname!r}")
        elif section == "RHS":
            pairs = tokens[1:] if len(tokens) % 2 == 1 else tokens
            for rname, tok in zip(pairs[0::2], pairs[1::2]):
                val = _num(tok, lineno)
                if rname == obj_row:
                    warnings.warn("objective offset in RHS ignored", stacklevel=2)
                elif rname in row_index:
                    rhs[row_index[rname]] = val
                else:
                    raise MpsParseError(lineno, f"unknown row {rname!r}")
        elif section == "BOUNDS":
            kind = head
            if kind in _VALUE_BOUNDS or (kind == "BV" and len(tokens) == 4):
                if len(tokens) == 4:
                    cname, tok = tokens[2], tokens[3]
                elif len(tokens) == 3:
                    cname, tok = tokens[1], tokens[2]
                else:
                    raise MpsParseError(lineno, f"malformed {kind} bound")
                val = _num(tok, lineno)
            elif kind in _FLAG_BOUNDS:
                if len(tokens) == 3:
                    cname = tokens[2]
                elif len(tokens) == 2:
                    cname = tokens[1]
                else:
                    raise MpsParseError(lineno, f"malformed {kind} bound")
                val = None
            else:
                raise MpsParseError(lineno, f"unknown bound type {tokens[0]!r}")
            if cname not in col_index:
                raise MpsParseError(lineno, f"bound on unknown column {cname!r}")
            bounds.setdefault(cname, []).append((kind, val, lineno))
        elif section is None:
            raise MpsParseError(lineno, "data before any section header")
        else:
            raise MpsParseError(lineno, f"unexpected data in section {section}")

    if not saw_end:
        raise MpsParseError(len(text.splitlines()), "missing ENDATA")
    if obj_row is None:
        raise MpsParseError(1, "no objective (N) row")

    n = len(col_discrete)
    lower = np.zeros(n)
    upper = np.full(n, np.inf)
    vtype = np.array([VarType.INTEGER if d else VarType.CONTINUOUS for d in col_discrete], dtype=np.int8)
    for cname in implint:
        if cname in col_index:
            vtype[col_index[cname]] = VarType.IMPLICIT_INTEGER
    for cname, items in bounds.items():
        j = col_index[cname]
        lower_set = False
        for kind, val, lineno in items:
            if kind in ("UP", "UI"):
                if val < 0 and not lower_set and lower[j] == 0.0:
                    logger.warning("line %d: negative upper bound on %s; lower bound set to -inf",
                                   lineno, cname)
                    lower[j] = -np.inf
                upper[j] = val
            elif kind in ("LO", "LI"):
                lower[j] = val
                lower_set = True
            elif kind == "FX":
                lower[j] = upper[j] = val
                lower_set = True
            elif kind == "FR":
                lower[j], upper[j] = -np.inf, np.inf
                lower_set = True
            elif kind == "MI":
                lower[j] = -np.inf
                lower_set = True
            elif kind == "PL":
                upper[j] = np.inf
            elif kind == "BV":
                lower[j], upper[j] = 0.0, 1.0
                vtype[j] = VarType.BINARY
                lower_set = True
            if kind in ("LI", "UI") and vtype[j] == VarType.CONTINUOUS:
                vtype[j] = VarType.INTEGER
        if vtype[j] == VarType.BINARY and (lower[j] != 0.0 or upper[j] != 1.0):
            raise MpsParseError(items[-1][2], f"binary column {cname!r} with bounds other than [0, 1]")
        if lower[j] > upper[j]:
            raise MpsParseError(items[-1][2], f"inconsistent bounds on column {cname!r}")

    m = len(senses)
    keys = sorted(entries)
    rows = np.array([k[0] for k in keys], dtype=np.int64)
    cols = np.array([k[1] for k in keys], dtype=np.int64)
    vals = np.array([entries[k] for k in keys], dtype=np.float64)
    c = np.zeros(n)
    for j, v in obj.items():
        c[j] = v
    b = np.zeros(m)
    for i, v in rhs.items():
        b[i] = v
    return RawMilp(name=name, c=c, rows=rows, cols=cols, vals=vals, senses=tuple(senses),
                   rhs=b, lower=lower, upper=upper, vtype=vtype, maximize=maximize)


def _fmt(x: float) -> str:
    # repr is the shortest string that round-trips a float64 exactly
    return repr(float(x))


def write_mps(inst: MilpInstance) -> str:
    """Serialize a standardized instance; ``parse_mps(write_mps(x)) == x``."""
    out = [f"NAME {inst.name}" if inst.name else "NAME"]
    for j in np.flatnonzero(inst.vtype == VarType.IMPLICIT_INTEGER):
        out.append(f"* @implint x{j}")
    out.append("ROWS")
    out.append(" N obj")
    out.extend(f" L c{i}" for i in range(inst.m))
    out.append("COLUMNS")

    A = inst.matrix().tocsc()
    in_int = False
    marker = 0
    for j in range(inst.n):
        discrete = inst.vtype[j] in (VarType.BINARY, VarType.INTEGER)
        if discrete and not in_int:
            out.append(f" M{marker} 'MARKER' 'INTORG'")
            in_int = True
            marker += 1
        elif not discrete and in_int:
            out.append(f" M{marker} 'MARKER' 'INTEND'")
            in_int = False
            marker += 1
        lo, hi = A.indptr[j], A.indptr[j + 1]
        if inst.c[j] != 0.0 or np.signbit(inst.c[j]) or lo == hi:
            out.append(f" x{j} obj {_fmt(inst.c[j])}")
        for i, v in zip(A.indices[lo:hi], A.data[lo:hi]):
            out.append(f" x{j} c{i} {_fmt(v)}")
    if in_int:
        out.append(f" M{marker} 'MARKER' 'INTEND'")

    out.append("RHS")
    for i in range(inst.m):
        if inst.b[i] != 0.0 or np.signbit(inst.b[i]):
            out.append(f" RHS c{i} {_fmt(inst.b[i])}")

    out.append("BOUNDS")
    for j in range(inst.n):
        lo, hi = inst.lower[j], inst.upper[j]
        if inst.vtype[j] == VarType.BINARY:
            out.append(f" BV BND x{j}")
        elif lo == hi:
            out.append(f" FX BND x{j} {_fmt(lo)}")
        elif lo == -np.inf and hi == np.inf:
            out.append(f" FR BND x{j}")
        else:
            if lo == -np.inf:
                out.append(f" MI BND x{j}")
            elif lo != 0.0 or np.signbit(lo):
                out.append(f" LO BND x{j} {_fmt(lo)}")
            if hi != np.inf:
                out.append(f" UP BND x{j} {_fmt(hi)}")
    out.append("ENDATA")
    return "\n".join(out) + "\n"
