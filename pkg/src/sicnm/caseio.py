"""MATPOWER case files and their JSON mirror.

Only the subset needed for AC power flow is read: ``mpc.baseMVA`` and the
numeric matrix literals ``mpc.bus``, ``mpc.gen`` and ``mpc.branch``. Column
order follows MATPOWER::

    bus:    BUS_I TYPE PD QD GS BS AREA VM VA BASE_KV ZONE VMAX VMIN ...
    gen:    GEN_BUS PG QG QMAX QMIN VG MBASE STATUS [PMAX PMIN ...]
    branch: F_BUS T_BUS R X B RATE_A RATE_B RATE_C TAP SHIFT STATUS ...

Trailing columns (costs, solved-case multipliers) are ignored. Records keep
engineering units (MW, MVAr, degrees); conversion to per unit happens when a
problem is assembled.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import asdict, dataclass, fields
from importlib import resources
from pathlib import Path

from .errors import CaseError, DanglingBranch, InvalidCase, MalformedRow, MissingSection, NoSlack

PQ, PV, REF = 1, 2, 3

_BUS_COLS = 13
_GEN_COLS = 8
_BRANCH_COLS = 11

_NUMBER = re.compile(r"[+-]?(?:(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?|Inf|inf)")
_SPLIT = re.compile(r"[\s,]+")


@dataclass(frozen=True)
class BusRecord:
    id: int
    btype: int
    pd: float
    qd: float
    gs: float
    bs: float
    vm: float
    va: float
    base_kv: float
    vmax: float
    vmin: float


@dataclass(frozen=True)
class BranchRecord:
    from_bus: int
    to_bus: int
    r: float
    x: float
    b: float
    tap: float
    shift: float
    status: int


@dataclass(frozen=True)
class GenRecord:
    bus: int
    pg: float
    qg: float
    qmax: float
    qmin: float
    vg: float
    status: int


@dataclass(frozen=True)
class NetworkCase:
    base_mva: float
    buses: tuple[BusRecord, ...]
    branches: tuple[BranchRecord, ...]
    gens: tuple[GenRecord, ...]
    name: str = "case"

    def bus_ids(self) -> list[int]:
        return [b.id for b in self.buses]


# ---------------------------------------------------------------------------
# .m parsing


def _strip_comments(text: str) -> str:
    return "\n".join(line.split("%", 1)[0] for line in text.splitlines())


def _line_of(text: str, pos: int) -> int:
    return text.count("\n", 0, pos) + 1


def _to_float(tok: str, line: int) -> float:
    if not _NUMBER.fullmatch(tok):
        raise MalformedRow(f"non-numeric token {tok!r}", line)
    return float(tok)


def _matrix(text: str, name: str, min_cols: int) -> list[tuple[int, list[float]]]:
    m = re.search(rf"mpc\.{name}\s*=\s*\[", text)
    if m is None:
        raise MissingSection(f"mpc.{name} matrix not found")
    end = text.find("]", m.end())
    if end < 0:
        raise MalformedRow(f"unterminated mpc.{name} matrix", _line_of(text, m.start()))
    body = text[m.end():end]
    first_line = _line_of(text, m.end())

    rows: list[tuple[int, list[float]]] = []
    for offset, line in enumerate(body.split("\n")):
        lineno = first_line + offset
        for chunk in line.split(";"):
            toks = [t for t in _SPLIT.split(chunk.strip()) if t]
            if toks:
                rows.append((lineno, [_to_float(t, lineno) for t in toks]))

    if rows:
        width = len(rows[0][1])
        for lineno, vals in rows:
            if len(vals) != width:
                raise MalformedRow(
                    f"mpc.{name} row has {len(vals)} columns, expected {width}", lineno
                )
        if width < min_cols:
            raise MalformedRow(
                f"mpc.{name} needs at least {min_cols} columns, got {width}", rows[0][0]
            )
    return rows


def _as_int(val: float, what: str, line: int | None) -> int:
    if not math.isfinite(val) or not float(val).is_integer():
        raise MalformedRow(f"{what} must be an integer, got {val!r}", line)
    return int(val)


def parse_case(text: str) -> NetworkCase:
    """Parse a MATPOWER ``.m`` document into a validated :class:`NetworkCase`."""
    if not isinstance(text, str):
        raise CaseError("case document must be text")
    clean = _strip_comments(text)

    m = re.search(r"mpc\.baseMVA\s*=\s*([^;\n]*)", clean)
    if m is None:
        raise MissingSection("mpc.baseMVA not found")
    base_mva = _to_float(m.group(1).strip(), _line_of(clean, m.start()))

    name_match = re.search(r"function\s+mpc\s*=\s*([A-Za-z_]\w*)", clean)
    name = name_match.group(1) if name_match else "case"

    buses = []
    for line, r in _matrix(clean, "bus", _BUS_COLS):
        buses.append(
            BusRecord(
                id=_as_int(r[0], "bus id", line),
                btype=_as_int(r[1], "bus type", line),
                pd=r[2], qd=r[3], gs=r[4], bs=r[5],
                vm=r[7], va=r[8], base_kv=r[9], vmax=r[11], vmin=r[12],
            )
        )
    gens = []
    for line, r in _matrix(clean, "gen", _GEN_COLS):
        gens.append(
            GenRecord(
                bus=_as_int(r[0], "generator bus", line),
                pg=r[1], qg=r[2], qmax=r[3], qmin=r[4], vg=r[5],
                status=_as_int(r[7], "generator status", line),
            )
        )
    branches = []
    for line, r in _matrix(clean, "branch", _BRANCH_COLS):
        branches.append(
            BranchRecord(
                from_bus=_as_int(r[0], "from bus", line),
                to_bus=_as_int(r[1], "to bus", line),
                r=r[2], x=r[3], b=r[4],
                tap=r[8] if r[8] != 0.0 else 1.0,
                shift=r[9],
                status=_as_int(r[10], "branch status", line),
            )
        )

    case = NetworkCase(base_mva, tuple(buses), tuple(branches), tuple(gens), name)
    validate_case(case)
    return case


def load_case(path: str | Path) -> NetworkCase:
    """Read a ``.m`` or ``.json`` case file, choosing the parser by suffix."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".json":
        return parse_case_json(text)
    return parse_case(text)


# ---------------------------------------------------------------------------
# validation


def bundled_cases() -> list[str]:
    """Names of the case files shipped with the package."""
    data = resources.files("sicnm") / "data"
    return sorted(p.name for p in data.iterdir() if p.name.endswith((".m", ".json")))


def resolve_case_path(ref: str | Path) -> Path:
    """``ref`` itself if it exists, else the bundled case of that name (``.m`` optional)."""
    path = Path(ref)
    if path.exists():
        return path
    data = resources.files("sicnm") / "data"
    for name in (path.name, path.name + ".m"):
        cand = data / name
        if path.parent == Path(".") and cand.is_file():
            return Path(str(cand))
    raise FileNotFoundError(f"case file not found: {ref}")


def validate_case(case: NetworkCase) -> None:
    for name in ("base_mva",):
        if not (math.isfinite(case.base_mva) and case.base_mva > 0):
            raise InvalidCase(f"{name} must be positive, got {case.base_mva!r}")

    ids = set()
    for b in case.buses:
        if b.id in ids:
            raise InvalidCase(f"duplicate bus id {b.id}")
        ids.add(b.id)
        if b.btype not in (PQ, PV, REF):
            raise InvalidCase(f"bus {b.id} has unsupported type {b.btype}")
        if not (b.vmax >= b.vmin > 0):
            raise InvalidCase(f"bus {b.id} voltage limits invalid (vmin={b.vmin}, vmax={b.vmax})")
        for f in ("pd", "qd", "gs", "bs", "vm", "va"):
            if not math.isfinite(getattr(b, f)):
                raise InvalidCase(f"bus {b.id} field {f} is not finite")

    n_ref = sum(1 for b in case.buses if b.btype == REF)
    if n_ref == 0:
        raise NoSlack("no slack (type 3) bus")
    if n_ref > 1:
        raise InvalidCase(f"{n_ref} slack buses, expected exactly one")

    for k, br in enumerate(case.branches):
        for end in (br.from_bus, br.to_bus):
            if end not in ids:
                raise DanglingBranch(f"branch {k + 1} references unknown bus {end}")
        if br.status not in (0, 1):
            raise InvalidCase(f"branch {k + 1} status must be 0 or 1")
        for f in ("r", "x", "b", "tap", "shift"):
            if not math.isfinite(getattr(br, f)):
                raise InvalidCase(f"branch {k + 1} field {f} is not finite")

    for k, g in enumerate(case.gens):
        if g.bus not in ids:
            raise InvalidCase(f"generator {k + 1} references unknown bus {g.bus}")
        if g.status not in (0, 1):
            raise InvalidCase(f"generator {k + 1} status must be 0 or 1")
        if not g.qmax >= g.qmin:
            raise InvalidCase(f"generator {k + 1} has qmax < qmin")
        for f in ("pg", "qg", "vg"):
            if not math.isfinite(getattr(g, f)):
                raise InvalidCase(f"generator {k + 1} field {f} is not finite")


# ---------------------------------------------------------------------------
# JSON mirror


def write_case_json(case: NetworkCase) -> str:
    doc = {
        "name": case.name,
        "base_mva": case.base_mva,
        "buses": [asdict(b) for b in case.buses],
        "branches": [asdict(b) for b in case.branches],
        "gens": [asdict(g) for g in case.gens],
    }
    # json emits floats with repr(), which round-trips exactly
    return json.dumps(doc, indent=1)


def _num(x: float) -> str:
    return repr(int(x)) if isinstance(x, int) else repr(float(x))


def write_case_m(case: NetworkCase) -> str:
    """Serialize ``case`` as a MATPOWER version-2 case file.

    Columns the model does not carry (area, zone, mBase, ratings, angle
    limits) are written as neutral placeholders; every modelled field
    round-trips exactly through :func:`parse_case`.
    """
    name = case.name if re.fullmatch(r"[A-Za-z_]\w*", case.name) else "case"
    out = [
        f"function mpc = {name}",
        "mpc.version = '2';",
        f"mpc.baseMVA = {_num(case.base_mva)};",
        "",
        "%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin",
        "mpc.bus = [",
    ]
    for b in case.buses:
        row = [b.id, b.btype, b.pd, b.qd, b.gs, b.bs, 1, b.vm, b.va, b.base_kv, 1, b.vmax, b.vmin]
        out.append("\t" + "\t".join(_num(v) for v in row) + ";")
    out += ["];", "", "%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus", "mpc.gen = ["]
    for g in case.gens:
        row = [g.bus, g.pg, g.qg, g.qmax, g.qmin, g.vg, case.base_mva, g.status]
        out.append("\t" + "\t".join(_num(v) for v in row) + ";")
    out += ["];", "", "%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus", "mpc.branch = ["]
    for br in case.branches:
        row = [br.from_bus, br.to_bus, br.r, br.x, br.b, 0, 0, 0, br.tap, br.shift, br.status]
        out.append("\t" + "\t".join(_num(v) for v in row) + ";")
    out += ["];", ""]
    return "\n".join(out)


def _records(doc: dict, key: str, cls: type) -> tuple:
    if key not in doc:
        raise MissingSection(f"{key!r} missing")
    rows = doc[key]
    if not isinstance(rows, list):
        raise MalformedRow(f"{key!r} must be an array")
    names = [f.name for f in fields(cls)]
    ints = {f.name for f in fields(cls) if f.type in ("int", int)}
    out = []
    for i, row in enumerate(rows):
        if not isinstance(row, dict) or set(names) - set(row):
            raise MalformedRow(f"{key}[{i}] must be an object with fields {names}")
        vals = {}
        for n in names:
            v = row[n]
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise MalformedRow(f"{key}[{i}].{n} is not a number")
            vals[n] = _as_int(v, f"{key}[{i}].{n}", None) if n in ints else float(v)
        out.append(cls(**vals))
    return tuple(out)


def parse_case_json(text: str) -> NetworkCase:
    try:
        doc = json.loads(text)
    except (json.JSONDecodeError, TypeError) as exc:
        raise MalformedRow(f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise MalformedRow("case JSON must be an object")
    if "base_mva" not in doc:
        raise MissingSection("'base_mva' missing")
    base = doc["base_mva"]
    if isinstance(base, bool) or not isinstance(base, (int, float)):
        raise MalformedRow("'base_mva' is not a number")
    case = NetworkCase(
        base_mva=float(base),
        buses=_records(doc, "buses", BusRecord),
        branches=_records(doc, "branches", BranchRecord),
        gens=_records(doc, "gens", GenRecord),
        name=str(doc.get("name", "case")),
    )
    validate_case(case)
    return case
