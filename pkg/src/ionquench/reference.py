"""Access to the embedded published reference values (``data/reference_values.ini``)."""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources


@dataclass(frozen=True)
class ModeBlock:
    g: float
    frequencies_mhz: tuple
    temperatures_uk: tuple
    occupations: tuple  # rows per mode, columns per temperature


@dataclass(frozen=True)
class Flag:
    name: str
    block: str
    row: int
    column: str
    kind: str
    note: str


def _floats(text: str) -> tuple:
    return tuple(float(x) for x in text.replace("\n", " ").split(",") if x.strip())


@lru_cache(maxsize=1)
def _parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None)
    cp.read_string(resources.files("ionquench").joinpath("data/reference_values.ini").read_text("utf-8"))
    return cp


def critical() -> dict:
    sec = _parser()["critical"]
    return {k: float(v) for k, v in sec.items()}


def conversion_table() -> dict:
    cp = _parser()
    tr, dp = cp["conversion.transverse"], cp["conversion.dipole"]
    return {
        "g": _floats(tr["g"]),
        "nu_y_mhz": _floats(tr["nu_y_mhz"]),
        "delta": _floats(dp["delta"]),
        "nu_dip_khz": _floats(dp["nu_dip_khz"]),
    }


def mode_blocks() -> dict:
    """``{block name: ModeBlock}`` in file order."""
    out = {}
    for name in _parser().sections():
        if not name.startswith("modes "):
            continue
        sec = _parser()[name]
        rows = tuple(_floats(r) for r in sec["occupations"].split(";"))
        out[name.split(" ", 1)[1]] = ModeBlock(
            float(sec["g"]), _floats(sec["frequencies_mhz"]), _floats(sec["temperatures_uk"]), rows
        )
    return out


def flags() -> list:
    out = []
    for name, value in _parser()["flags"].items():
        block, row, column, kind, note = (p.strip() for p in value.split(":", 4))
        out.append(Flag(name, block, int(row), column, kind, " ".join(note.split())))
    return out


def is_flagged(block: str, row: int, column, kind: str) -> Flag | None:
    for f in flags():
        if f.block == block and f.row == row and f.kind == kind and (f.column == "-" or f.column == str(column)):
            return f
    return None
