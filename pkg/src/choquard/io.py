"""Run configuration files and record serialization.

Config format: one `key = value` per line, `#` starts a comment, dotted
keys address nested settings (`potential.well.1.q = 2`).  Duplicate keys
are an error naming both lines.  load(write(cfg)) reproduces cfg exactly;
the config hash is sha256 over the canonical text, truncated to 16 hex
characters, and is embedded in every record a run emits.
"""

from __future__ import annotations

import csv
import hashlib
import json
import re
from dataclasses import dataclass, field as dc_field, replace

from .grid import Grid
from .params import ChoquardParams
from .potentials import PotentialSpec, Well
from .solvers import FlowOptions, PetviashviliOptions

__all__ = [
    "ConfigError",
    "RunConfig",
    "parse_config",
    "load_config",
    "write_config",
    "config_hash",
    "write_records",
    "read_records",
]


class ConfigError(ValueError):
    pass


_INT, _FLOAT, _STR, _VEC = "int", "float", "str", "vec"

_SCHEMA: dict[str, str] = {
    "params.N": _INT,
    "params.alpha": _FLOAT,
    "params.p": _FLOAT,
    "grid.M": _INT,
    "grid.L": _FLOAT,
    "solver.tol_residual": _FLOAT,
    "solver.max_iters": _INT,
    "solver.gamma": _FLOAT,
    "solver.init_width": _FLOAT,
    "flow.step0": _FLOAT,
    "flow.backtrack": _FLOAT,
    "flow.tol_grad": _FLOAT,
    "flow.max_iters": _INT,
    "flow.blowup_A_factor": _FLOAT,
    "flow.vanish_peak_ratio": _FLOAT,
    "flow.energy_floor": _FLOAT,
    "sweep.points": _INT,
    "sweep.gap_lo": _FLOAT,
    "sweep.gap_hi": _FLOAT,
    "sweep.tol_grad": _FLOAT,
    "sweep.max_iters": _INT,
    "run.c": _FLOAT,
    "run.seed": _INT,
    "run.out": _STR,
    "run.format": _STR,
}

_WELL_KEY = re.compile(r"^potential\.well\.([1-9][0-9]*)\.(center|mu|q)$")


@dataclass(frozen=True)
class RunConfig:
    dim: int = 1
    alpha: float = 0.5
    p: float | None = None
    grid_points: int = 512
    box_length: float = 24.0
    wells: tuple[Well, ...] = ()
    pet: PetviashviliOptions = dc_field(default_factory=PetviashviliOptions)
    flow: FlowOptions = dc_field(default_factory=FlowOptions)
    sweep_points: int = 12
    gap_lo: float = 1e-3
    gap_hi: float = 1e-1
    sweep_tol_grad: float = 1e-6
    sweep_max_iters: int = 20000
    c: float | None = None
    seed: int = 0
    out: str | None = None
    format: str = "jsonl"

    def params(self) -> ChoquardParams:
        p = self.p
        if p is None:
            p = (self.dim + self.alpha + 2.0) / self.dim
        return ChoquardParams(self.dim, self.alpha, p)

    def grid(self) -> Grid:
        return Grid(self.dim, self.grid_points, self.box_length)

    def study_flow(self) -> FlowOptions:
        """Flow options for sweep runs: the generic flow settings with the
        sweep's own gradient tolerance and iteration budget.  Trap sweeps
        are energy-driven; the stiff potential caps reachable residuals
        above the generic default."""
        return replace(
            self.flow, tol_grad=self.sweep_tol_grad, max_iters=self.sweep_max_iters
        )

    def vspec(self) -> PotentialSpec | None:
        if not self.wells:
            return None
        for well in self.wells:
            if len(well.center) != self.dim:
                raise ConfigError(
                    f"well center {well.center} has {len(well.center)} coordinates, "
                    f"params.N = {self.dim}"
                )
        return PotentialSpec(self.wells)

    def to_items(self) -> list[tuple[str, str]]:
        items: list[tuple[str, str]] = [
            ("params.N", str(self.dim)),
            ("params.alpha", repr(self.alpha)),
            ("grid.M", str(self.grid_points)),
            ("grid.L", repr(self.box_length)),
            ("solver.tol_residual", repr(self.pet.tol_residual)),
            ("solver.max_iters", str(self.pet.max_iters)),
            ("solver.init_width", repr(self.pet.init_width)),
            ("flow.step0", repr(self.flow.step0)),
            ("flow.backtrack", repr(self.flow.backtrack)),
            ("flow.tol_grad", repr(self.flow.tol_grad)),
            ("flow.max_iters", str(self.flow.max_iters)),
            ("flow.blowup_A_factor", repr(self.flow.blowup_A_factor)),
            ("flow.vanish_peak_ratio", repr(self.flow.vanish_peak_ratio)),
            ("flow.energy_floor", repr(self.flow.energy_floor)),
            ("sweep.points", str(self.sweep_points)),
            ("sweep.gap_lo", repr(self.gap_lo)),
            ("sweep.gap_hi", repr(self.gap_hi)),
            ("sweep.tol_grad", repr(self.sweep_tol_grad)),
            ("sweep.max_iters", str(self.sweep_max_iters)),
            ("run.seed", str(self.seed)),
            ("run.format", self.format),
        ]
        if self.p is not None:
            items.append(("params.p", repr(self.p)))
        if self.pet.gamma is not None:
            items.append(("solver.gamma", repr(self.pet.gamma)))
        if self.c is not None:
            items.append(("run.c", repr(self.c)))
        if self.out is not None:
            items.append(("run.out", self.out))
        for i, well in enumerate(self.wells, start=1):
            items.append(
                (f"potential.well.{i}.center", ",".join(repr(x) for x in well.center))
            )
            items.append((f"potential.well.{i}.mu", repr(well.mu)))
            items.append((f"potential.well.{i}.q", repr(well.q)))
        return sorted(items)


def _parse_value(key: str, raw: str, kind: str, line_no: int):
    try:
        if kind == _INT:
            return int(raw)
        if kind == _FLOAT:
            return float(raw)
        if kind == _VEC:
            return tuple(float(part) for part in raw.split(","))
    except ValueError:
        raise ConfigError(
            f"line {line_no}: key '{key}' expects {kind}, got '{raw}'"
        ) from None
    return raw


def _parse_text(text: str) -> dict[str, tuple[object, int]]:
    seen: dict[str, tuple[object, int]] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {line_no}: expected 'key = value', got '{body}'")
        key, raw = (part.strip() for part in body.split("=", 1))
        m = _WELL_KEY.match(key)
        if m:
            kind = _VEC if m.group(2) == "center" else _FLOAT
        elif key in _SCHEMA:
            kind = _SCHEMA[key]
        else:
            raise ConfigError(f"line {line_no}: unknown key '{key}'")
        if key in seen:
            raise ConfigError(
                f"line {line_no}: duplicate key '{key}' "
                f"(first set on line {seen[key][1]})"
            )
        seen[key] = (_parse_value(key, raw, kind, line_no), line_no)
    return seen


def _build_wells(seen: dict[str, tuple[object, int]]) -> tuple[Well, ...]:
    by_index: dict[int, dict[str, object]] = {}
    for key, (value, line_no) in seen.items():
        m = _WELL_KEY.match(key)
        if not m:
            continue
        by_index.setdefault(int(m.group(1)), {})[m.group(2)] = value
    if not by_index:
        return ()
    indices = sorted(by_index)
    if indices != list(range(1, len(indices) + 1)):
        raise ConfigError(
            f"well indices must be contiguous from 1, got {indices}"
        )
    wells = []
    for i in indices:
        entry = by_index[i]
        missing = {"center", "mu", "q"} - set(entry)
        if missing:
            raise ConfigError(
                f"well {i} is missing {sorted(missing)}"
            )
        wells.append(Well(tuple(entry["center"]), float(entry["mu"]), float(entry["q"])))
    return tuple(wells)


def parse_config(text: str) -> RunConfig:
    seen = _parse_text(text)

    def get(key: str, default):
        return seen[key][0] if key in seen else default

    base = RunConfig()
    pet = PetviashviliOptions(
        tol_residual=get("solver.tol_residual", base.pet.tol_residual),
        max_iters=get("solver.max_iters", base.pet.max_iters),
        gamma=get("solver.gamma", None),
        init_width=get("solver.init_width", base.pet.init_width),
    )
    flow = FlowOptions(
        step0=get("flow.step0", base.flow.step0),
        backtrack=get("flow.backtrack", base.flow.backtrack),
        tol_grad=get("flow.tol_grad", base.flow.tol_grad),
        max_iters=get("flow.max_iters", base.flow.max_iters),
        blowup_A_factor=get("flow.blowup_A_factor", base.flow.blowup_A_factor),
        vanish_peak_ratio=get("flow.vanish_peak_ratio", base.flow.vanish_peak_ratio),
        energy_floor=get("flow.energy_floor", base.flow.energy_floor),
    )
    fmt = get("run.format", base.format)
    if fmt not in ("csv", "jsonl"):
        raise ConfigError(f"run.format must be csv or jsonl, got '{fmt}'")
    return RunConfig(
        dim=get("params.N", base.dim),
        alpha=get("params.alpha", base.alpha),
        p=get("params.p", None),
        grid_points=get("grid.M", base.grid_points),
        box_length=get("grid.L", base.box_length),
        wells=_build_wells(seen),
        pet=pet,
        flow=flow,
        sweep_points=get("sweep.points", base.sweep_points),
        gap_lo=get("sweep.gap_lo", base.gap_lo),
        gap_hi=get("sweep.gap_hi", base.gap_hi),
        sweep_tol_grad=get("sweep.tol_grad", base.sweep_tol_grad),
        sweep_max_iters=get("sweep.max_iters", base.sweep_max_iters),
        c=get("run.c", None),
        seed=get("run.seed", base.seed),
        out=get("run.out", None),
        format=fmt,
    )


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config '{path}': {exc}") from None
    return parse_config(text)


def canonical_text(cfg: RunConfig) -> str:
    return "\n".join(f"{k} = {v}" for k, v in cfg.to_items()) + "\n"


def write_config(cfg: RunConfig, path) -> None:
    with open(path, "w") as fh:
        fh.write(canonical_text(cfg))


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(canonical_text(cfg).encode()).hexdigest()[:16]


def _csv_cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return ""
    return str(value)


def _write_records_to(fh, records: list[dict], fmt: str) -> None:
    if fmt == "jsonl":
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
        return
    if not records:
        return
    columns = list(records[0].keys())
    for rec in records:
        if list(rec.keys()) != columns:
            raise ValueError("records disagree on columns; cannot write CSV")
    writer = csv.writer(fh)
    writer.writerow(columns)
    for rec in records:
        writer.writerow([_csv_cell(rec[k]) for k in columns])


def write_records(records: list[dict], path_or_buffer, fmt: str) -> None:
    """Flat record rows to CSV (fixed column order from the first record)
    or JSON lines.  Float cells use repr in both formats."""
    if fmt not in ("csv", "jsonl"):
        raise ConfigError(f"unknown record format '{fmt}'")
    records = list(records)
    if hasattr(path_or_buffer, "write"):
        _write_records_to(path_or_buffer, records, fmt)
        return
    with open(path_or_buffer, "w", newline="") as fh:
        _write_records_to(fh, records, fmt)


def read_records(path, fmt: str) -> list[dict]:
    if fmt == "jsonl":
        with open(path) as fh:
            return [json.loads(line) for line in fh if line.strip()]
    if fmt == "csv":
        with open(path, newline="") as fh:
            return [dict(row) for row in csv.DictReader(fh)]
    raise ConfigError(f"unknown record format '{fmt}'")
