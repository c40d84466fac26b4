"""Free-format MPS export/import for :class:`~droopsat.milp.MilpInstance`.

Dialect written here:

* free MPS (whitespace separated); names never contain whitespace;
* objective row ``OBJ`` (type ``N``), minimization;
* the objective constant is stored as ``RHS OBJ -offset`` (the usual
  convention that the objective row's right-hand side is subtracted);
* integer columns are wrapped in ``'MARKER' 'INTORG'`` / ``'INTEND'``
  blocks and always carry explicit ``LO``/``UP`` (or ``FX``) bounds in
  ``[0, 1]``, so they are binaries;
* every column gets explicit bounds: ``FX`` when ``lb == ub``, else ``LO``
  and ``UP`` (``MI``/``PL`` for infinite ends);
* numbers are printed with 17 significant digits so they round-trip exactly.
"""
from __future__ import annotations

import numpy as np
from scipy import sparse

from .milp import EQ, GE, LE, MilpInstance

OBJ_ROW = "OBJ"


def _num(v: float) -> str:
    return format(float(v), ".17g")


def write_mps(inst: MilpInstance, path, name: str = "DROOPSAT") -> None:
    with open(path, "w") as fh:
        fh.write(mps_string(inst, name))


def mps_string(inst: MilpInstance, name: str = "DROOPSAT") -> str:
    lines = [f"NAME {name}", "ROWS", f" N {OBJ_ROW}"]
    row_names = inst.row_names or tuple(f"c{i}" for i in range(inst.n_rows))
    for rn, s in zip(row_names, inst.sense):
        lines.append(f" {s} {rn}")
    lines.append("COLUMNS")
    csc = inst.A.tocsc()
    in_int = False
    marker = 0
    for j, vn in enumerate(inst.names):
        if inst.binary[j] and not in_int:
            lines.append(f" MARKER{marker} 'MARKER' 'INTORG'")
            marker += 1
            in_int = True
        elif not inst.binary[j] and in_int:
            lines.append(f" MARKER{marker} 'MARKER' 'INTEND'")
            marker += 1
            in_int = False
        entries = []
        if inst.c[j] != 0.0:
            entries.append((OBJ_ROW, inst.c[j]))
        start, stop = csc.indptr[j], csc.indptr[j + 1]
        for r, v in zip(csc.indices[start:stop], csc.data[start:stop]):
            entries.append((row_names[r], v))
        if not entries:
            # keep the column visible to readers
            entries.append((OBJ_ROW, 0.0))
        for rn, v in entries:
            lines.append(f" {vn} {rn} {_num(v)}")
    if in_int:
        lines.append(f" MARKER{marker} 'MARKER' 'INTEND'")
    lines.append("RHS")
    if inst.objective_offset != 0.0:
        lines.append(f" RHS {OBJ_ROW} {_num(-inst.objective_offset)}")
    for rn, v in zip(row_names, inst.rhs):
        if v != 0.0:
            lines.append(f" RHS {rn} {_num(v)}")
    lines.append("BOUNDS")
    for j, vn in enumerate(inst.names):
        lo, hi = inst.lb[j], inst.ub[j]
        if lo == hi:
            lines.append(f" FX BND {vn} {_num(lo)}")
            continue
        if np.isneginf(lo):
            lines.append(f" MI BND {vn}")
        else:
            lines.append(f" LO BND {vn} {_num(lo)}")
        if np.isposinf(hi):
            lines.append(f" PL BND {vn}")
        else:
            lines.append(f" UP BND {vn} {_num(hi)}")
    lines.append("ENDATA")
    return "\n".join(lines) + "\n"


def read_mps(path) -> MilpInstance:
    with open(path) as fh:
        return parse_mps(fh.read())


def parse_mps(text: str) -> MilpInstance:
    section = None
    obj_row = None
    row_sense: dict[str, str] = {}
    row_order: list[str] = []
    col_order: list[str] = []
    col_index: dict[str, int] = {}
    binary: list[bool] = []
    coefs: list[tuple[int, int, float]] = []
    obj: dict[int, float] = {}
    rhs: dict[str, float] = {}
    lb: dict[int, float] = {}
    ub: dict[int, float] = {}
    offset = 0.0
    in_int = False

    for raw in text.splitlines():
        if not raw.strip() or raw.startswith("*"):
            continue
        tok = raw.split()
        if not raw[0].isspace():
            section = tok[0].upper()
            if section == "ENDATA":
                break
            continue
        if section == "ROWS":
            kind, rn = tok[0].upper(), tok[1]
            if kind == "N":
                if obj_row is None:
                    obj_row = rn
                continue
            row_sense[rn] = kind
            row_order.append(rn)
        elif section == "COLUMNS":
            if len(tok) >= 3 and tok[1] == "'MARKER'":
                in_int = tok[2] == "'INTORG'"
                continue
            cn = tok[0]
            if cn not in col_index:
                col_index[cn] = len(col_order)
                col_order.append(cn)
                binary.append(in_int)
            j = col_index[cn]
            for rn, val in zip(tok[1::2], tok[2::2]):
                if rn == obj_row:
                    obj[j] = obj.get(j, 0.0) + float(val)
                else:
                    coefs.append((rn, j, float(val)))
        elif section == "RHS":
            pairs = tok[1:] if len(tok) % 2 == 1 else tok
            for rn, val in zip(pairs[0::2], pairs[1::2]):
                if rn == obj_row:
                    offset = -float(val)
                else:
                    rhs[rn] = float(val)
        elif section == "BOUNDS":
            kind, cn = tok[0].upper(), tok[2]
            j = col_index[cn]
            val = float(tok[3]) if len(tok) > 3 else None
            if kind == "LO":
                lb[j] = val
            elif kind == "UP":
                ub[j] = val
            elif kind == "FX":
                lb[j] = ub[j] = val
            elif kind == "FR":
                lb[j], ub[j] = -np.inf, np.inf
            elif kind == "MI":
                lb[j] = -np.inf
            elif kind == "PL":
                ub[j] = np.inf
            elif kind == "BV":
                lb[j], ub[j] = 0.0, 1.0
                binary[j] = True
            else:
                raise ValueError(f"unsupported bound type {kind}")
        elif section in ("RANGES",):
            raise ValueError("RANGES section not supported")

    n = len(col_order)
    row_pos = {rn: i for i, rn in enumerate(row_order)}
    if coefs:
        r, c, v = zip(*((row_pos[rn], j, val) for rn, j, val in coefs))
    else:
        r, c, v = (), (), ()
    A = sparse.csr_matrix((np.array(v, float), (np.array(r, int), np.array(c, int))),
                          shape=(len(row_order), n))
    is_bin = np.array(binary, bool)
    lo = np.array([lb.get(j, 0.0) for j in range(n)], float)
    hi = np.array([ub.get(j, 1.0 if is_bin[j] else np.inf) for j in range(n)], float)
    cvec = np.zeros(n)
    for j, val in obj.items():
        cvec[j] = val
    sense = np.array([row_sense[rn] for rn in row_order], dtype="<U1")
    assert set(sense.tolist()) <= {LE, GE, EQ}
    return MilpInstance(
        names=tuple(col_order), lb=lo, ub=hi, binary=is_bin, c=cvec, A=A, sense=sense,
        rhs=np.array([rhs.get(rn, 0.0) for rn in row_order], float),
        row_names=tuple(row_order), objective_offset=offset,
    )
