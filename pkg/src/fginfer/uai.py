"""Reader and writer for the UAI ``MARKOV`` text format.

Tables are stored in linear space in files and converted to log space on
read. Zero entries are clamped to ``zero_log``; pass ``zero_log=None`` to
reject them instead.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .core import ZERO_LOG, FactorGraph


class UAIFormatError(ValueError):
    pass


def read_uai(text, zero_log: float | None = ZERO_LOG) -> FactorGraph:
    if isinstance(text, bytes):
        text = text.decode("ascii")
    tokens = text.split()
    pos = 0

    def take(what):
        nonlocal pos
        if pos >= len(tokens):
            raise UAIFormatError(f"unexpected end of file while reading {what}")
        tok = tokens[pos]
        pos += 1
        return tok

    def take_int(what):
        tok = take(what)
        try:
            return int(tok)
        except ValueError:
            raise UAIFormatError(f"expected integer for {what}, got {tok!r}") from None

    header = take("header")
    if header.upper() != "MARKOV":
        raise UAIFormatError(f"unsupported network type {header!r}")
    n = take_int("variable count")
    if n < 0:
        raise UAIFormatError("negative variable count")
    cards = [take_int("cardinality") for _ in range(n)]
    if any(c < 1 for c in cards):
        raise UAIFormatError("cardinalities must be positive")
    m = take_int("factor count")
    if m < 0:
        raise UAIFormatError("negative factor count")
    scopes = []
    for a in range(m):
        k = take_int(f"scope size of factor {a}")
        scope = [take_int(f"scope of factor {a}") for _ in range(k)]
        if any(i < 0 or i >= n for i in scope):
            raise UAIFormatError(f"factor {a} references an unknown variable")
        scopes.append(scope)
    tables = []
    for a, scope in enumerate(scopes):
        t = take_int(f"table size of factor {a}")
        expected = int(np.prod([cards[i] for i in scope], dtype=np.int64))
        if t != expected:
            raise UAIFormatError(f"factor {a} table has {t} entries, expected {expected}")
        try:
            vals = np.array([float(take(f"table of factor {a}")) for _ in range(t)])
        except ValueError as e:
            raise UAIFormatError(str(e)) from None
        if (vals < 0).any() or not np.isfinite(vals).all():
            raise UAIFormatError(f"factor {a} has negative or non-finite entries")
        if zero_log is None and (vals == 0).any():
            raise UAIFormatError(f"factor {a} has zero entries and clamping is disabled")
        tables.append(vals.reshape([cards[i] for i in scope]))
    if pos != len(tokens):
        raise UAIFormatError("trailing tokens after the last table")
    try:
        return FactorGraph.from_linear(cards, scopes, tables, zero_log=ZERO_LOG if zero_log is None else zero_log)
    except ValueError as e:
        raise UAIFormatError(str(e)) from None


def write_uai(g: FactorGraph) -> bytes:
    lines = ["MARKOV", str(g.num_vars), " ".join(str(c) for c in g.cardinalities), str(g.num_factors)]
    for s in g.scopes:
        lines.append(" ".join([str(len(s))] + [str(i) for i in s]))
    for pot in g.log_potentials:
        vals = np.exp(pot).ravel()
        lines.append(str(vals.size))
        lines.append(" ".join(format(v, ".17g") for v in vals))
    return ("\n".join(lines) + "\n").encode("ascii")


def load_uai(path, zero_log: float | None = ZERO_LOG) -> FactorGraph:
    return read_uai(Path(path).read_bytes(), zero_log=zero_log)


def save_uai(g: FactorGraph, path) -> None:
    Path(path).write_bytes(write_uai(g))
