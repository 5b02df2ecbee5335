"""Text formats for systems and web maps.

System file::

    # comments start with '#'
    vars: x1 x2
    f1 = x1*x2
    f2 = x2
    box: x1 in [1, 2]

Map file, over the variables of the source system::

    phi0 = 2*t + 1
    phi1 = exp(x1)

Missing ``phi`` lines default to the identity.
"""

from __future__ import annotations

import re
from pathlib import Path

from .coframe import DEFAULT_INTERVAL, OdeSystem
from .equivalence import WebMap
from .errors import ExprSyntaxError, FileFormatError, UnknownVariable
from .expr import Var
from .parser import parse

NAME = re.compile(r"[A-Za-z][A-Za-z0-9_]*\Z")
_VARS = re.compile(r"vars\s*:(.*)\Z")
_BOX = re.compile(r"box\s*:\s*([A-Za-z][A-Za-z0-9_]*)\s+in\s+\[([^,\]]+),([^\]]+)\]\s*\Z")
_RHS = re.compile(r"(f|phi)(\d+)\s*=(.*)\Z")

TIME = "t"


def _lines(text: str):
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield no, line


def _parse_expr(src: str, names, line: int):
    try:
        return parse(src.strip(), names)
    except ExprSyntaxError as exc:
        lead = len(src) - len(src.lstrip())
        raise FileFormatError(f"{exc.msg} at byte offset {exc.offset} of {src.strip()!r}"
                              f" (column {exc.offset + lead})", line) from None
    except UnknownVariable as exc:
        raise FileFormatError(str(exc), line) from None


def _parse_vars(rest: str, line: int) -> tuple:
    names = tuple(rest.split())
    if not names:
        raise FileFormatError("empty variable list", line)
    for n in names:
        if not NAME.match(n):
            raise FileFormatError(f"bad variable name {n!r}", line)
        if n == TIME:
            raise FileFormatError(f"{TIME!r} is reserved for time", line)
    if len(set(names)) != len(names):
        raise FileFormatError("duplicate variable names", line)
    return names


def parse_system(text: str) -> OdeSystem:
    names = None
    rhs: dict[int, tuple] = {}
    boxes: dict[str, tuple] = {}
    for no, line in _lines(text):
        if m := _VARS.match(line):
            if names is not None:
                raise FileFormatError("duplicate 'vars:' line", no)
            names = _parse_vars(m.group(1), no)
        elif m := _BOX.match(line):
            try:
                lo, hi = float(m.group(2)), float(m.group(3))
            except ValueError:
                raise FileFormatError(f"bad interval in {line!r}", no) from None
            if not lo < hi:
                raise FileFormatError(f"empty interval [{lo}, {hi}]", no)
            boxes[m.group(1)] = (lo, hi)
        elif (m := _RHS.match(line)) and m.group(1) == "f":
            if names is None:
                raise FileFormatError("'vars:' must come before the equations", no)
            i = int(m.group(2))
            if not 1 <= i <= len(names):
                raise FileFormatError(f"f{i} has no matching variable", no)
            if i in rhs:
                raise FileFormatError(f"duplicate right-hand side f{i}", no)
            rhs[i] = (m.group(3), no)
        else:
            raise FileFormatError(f"unrecognized line {line!r}", no)
    if names is None:
        raise FileFormatError("missing 'vars:' line")
    missing = [f"f{i}" for i in range(1, len(names) + 1) if i not in rhs]
    if missing:
        raise FileFormatError(f"missing right-hand sides: {', '.join(missing)}")
    unknown = set(boxes) - set(names)
    if unknown:
        raise FileFormatError(f"box given for undeclared variables {sorted(unknown)}")
    f = tuple(_parse_expr(rhs[i][0], (*names, TIME), rhs[i][1]) for i in range(1, len(names) + 1))
    box = tuple(boxes.get(n, DEFAULT_INTERVAL) for n in names)
    return OdeSystem(f, names, box, TIME)


def parse_map(text: str, sys: OdeSystem) -> WebMap:
    coords = sys.coords
    phi = {}
    for no, line in _lines(text):
        if m := _VARS.match(line):
            if _parse_vars(m.group(1), no) != sys.names:
                raise FileFormatError("map variables differ from the source system", no)
        elif (m := _RHS.match(line)) and m.group(1) == "phi":
            k = int(m.group(2))
            if k > sys.n:
                raise FileFormatError(f"phi{k} has no matching coordinate", no)
            e = _parse_expr(m.group(3), coords, no)
            extra = e.free_vars - {coords[k]}
            if extra:
                raise FileFormatError(f"phi{k} may depend on {coords[k]} only, found {sorted(extra)}", no)
            phi[k] = e
        else:
            raise FileFormatError(f"unrecognized line {line!r}", no)
    return WebMap(tuple(phi.get(k, Var(c)) for k, c in enumerate(coords)), sys.names, sys.time)


def load_system(path) -> OdeSystem:
    return parse_system(Path(path).read_text(encoding="utf-8"))


def load_map(path, sys: OdeSystem) -> WebMap:
    return parse_map(Path(path).read_text(encoding="utf-8"), sys)


def format_system(sys: OdeSystem) -> str:
    lines = [f"vars: {' '.join(sys.names)}"]
    lines += [f"f{i} = {f}" for i, f in enumerate(sys.f, start=1)]
    lines += [f"box: {n} in [{lo!r}, {hi!r}]" for n, (lo, hi) in zip(sys.names, sys.box)]
    return "\n".join(lines) + "\n"
