"""Scheme routing and the three published comparison tables."""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import asdict, dataclass, field

from . import __version__
from .boundary import CetinRoute, DirichletZero, IntegralInfinity, NeumannZero, ThetaJ
from .cetin import default_grid, price_from_u, solve_hitting_prob
from .models import UnsupportedModelError, make_cev, make_geometric, make_log_power, make_qnv
from .pde import SolverConfig, march

TABLE_YS = tuple(1.0 + 0.5 * i for i in range(9))

# column name -> scheme factory, in CSV order
TABLE_SCHEMES = {
    "ekstrom": NeumannZero,
    "song_yang": DirichletZero,
    "cetin": CetinRoute,
    "theta_j": ThetaJ,
    "this_study": IntegralInfinity,
}

TABLES = {
    1: {"model": "cev", "params": {"a": 0.5, "nu": 1.0}},
    2: {"model": "log-power", "params": {"p": 1.0}},
    3: {"model": "log-power", "params": {"p": 0.1}},
}


def build_model(name, **params):
    name = name.lower().replace("_", "-")
    if name == "cev":
        return make_cev(params.get("a", 0.5), params.get("nu", 1.0))
    if name == "qnv":
        return make_qnv(params.get("a", 1.0), params.get("l", -1.0))
    if name == "log-power":
        return make_log_power(params.get("p", 1.0))
    if name == "geometric":
        return make_geometric(params.get("s", 1.0))
    raise ValueError(f"unknown model {name!r}; choose from cev, qnv, log-power, geometric")


def model_params(name, args):
    keys = {"cev": ("a", "nu"), "qnv": ("a", "l"), "log-power": ("p",), "geometric": ("s",)}
    return {k: args[k] for k in keys[name] if args.get(k) is not None}


def price_with_scheme(model, scheme, config, ys, tau, extrapolate=False):
    """Prices at ``(tau, y)`` for every ``y`` under one boundary treatment.

    ``scheme`` may also be the string ``"exact"`` for the closed form.
    """
    if scheme == "exact":
        if model.closed_forward is None:
            raise UnsupportedModelError(f"model {model.name!r} has no closed-form forward")
        return [0.0 if y == 0 else float(model.closed_forward(tau, y)) for y in ys]
    if isinstance(scheme, CetinRoute):
        x_max, dx = default_grid(model)
        surface = solve_hitting_prob(
            model,
            x_max=scheme.x_max or x_max,
            dx=scheme.dx or dx,
            dtau=config.dtau,
            maturity=config.maturity,
            theta=config.theta,
            top=scheme.top,
        )
        return [price_from_u(surface, model, tau, y, extrapolate=extrapolate) for y in ys]
    surface = march(model, config, scheme)
    return [surface.sample(tau, y) for y in ys]


@dataclass
class RunRecord:
    model: str
    model_params: dict
    scheme: str
    scheme_params: dict
    config: dict
    ys: list
    tau: float
    outputs: list
    wall_time: float = 0.0
    version: str = __version__
    seed: int | None = None

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)


@dataclass
class TableSpec:
    """Everything needed to regenerate a comparison table byte for byte."""

    table: int
    model: str
    params: dict
    config: SolverConfig = field(default_factory=SolverConfig)
    tau: float = 1.0
    cetin_x_max: float | None = None
    cetin_dx: float | None = None
    cetin_top: str = "neumann"
    precision: str = "2"

    def metadata(self):
        items = [("tool", "bubblefd"), ("version", __version__), ("table", self.table), ("model", self.model)]
        items += sorted(self.params.items())
        items += [(k, v) for k, v in asdict(self.config).items()]
        items += [
            ("tau", self.tau),
            ("cetin_x_max", self.cetin_x_max),
            ("cetin_dx", self.cetin_dx),
            ("cetin_top", self.cetin_top),
            ("precision", self.precision),
        ]
        return items

    @classmethod
    def from_metadata(cls, pairs):
        meta = dict(pairs)
        model = meta["model"]
        keys = {"cev": ("a", "nu"), "qnv": ("a", "l"), "log-power": ("p",), "geometric": ("s",)}[model]
        return cls(
            table=int(meta["table"]),
            model=model,
            params={k: float(meta[k]) for k in keys},
            config=SolverConfig(
                n=float(meta["n"]),
                dy=float(meta["dy"]),
                dtau=float(meta["dtau"]),
                maturity=float(meta["maturity"]),
                theta=float(meta["theta"]),
            ),
            tau=float(meta["tau"]),
            cetin_x_max=_optional_float(meta.get("cetin_x_max")),
            cetin_dx=_optional_float(meta.get("cetin_dx")),
            cetin_top=meta.get("cetin_top", "neumann"),
            precision=meta.get("precision", "2"),
        )


def _optional_float(text):
    return None if text in (None, "", "None") else float(text)


def table_spec(table, **overrides):
    if table not in TABLES:
        raise ValueError(f"table must be one of {sorted(TABLES)}, got {table}")
    base = TABLES[table]
    return TableSpec(table=table, model=base["model"], params=dict(base["params"]), **overrides)


def run_table(spec):
    """Rows ``{"y", <scheme columns>, ["exact"], "vol_pct"}`` and per-scheme run records."""
    model = build_model(spec.model, **spec.params)
    ys = list(TABLE_YS)
    columns = {}
    records = []
    for name, factory in TABLE_SCHEMES.items():
        scheme = CetinRoute(spec.cetin_x_max, spec.cetin_dx, spec.cetin_top) if factory is CetinRoute else factory()
        start = time.perf_counter()
        columns[name] = price_with_scheme(model, scheme, spec.config, ys, spec.tau, extrapolate=True)
        records.append(
            RunRecord(
                model=spec.model,
                model_params=spec.params,
                scheme=name,
                scheme_params={k: v for k, v in asdict(scheme).items() if k != "curve"},
                config=asdict(spec.config),
                ys=ys,
                tau=spec.tau,
                outputs=columns[name],
                wall_time=time.perf_counter() - start,
            )
        )
    if model.closed_forward is not None:
        columns["exact"] = price_with_scheme(model, "exact", spec.config, ys, spec.tau)
    columns["vol_pct"] = [model.vol_pct(y) for y in ys]
    rows = [{"y": y, **{k: v[i] for k, v in columns.items()}} for i, y in enumerate(ys)]
    return rows, records


def _fmt(value, digits):
    if digits == "full":
        return repr(float(value))
    return f"{value:.{digits}f}"


def table_csv(spec, rows):
    """CSV text with ``# key=value`` metadata lines ahead of the header."""
    out = io.StringIO()
    for key, value in spec.metadata():
        out.write(f"# {key}={value}\n")
    header = ["y", *TABLE_SCHEMES]
    if "exact" in rows[0]:
        header.append("exact")
    header.append("vol_pct")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        cells = []
        for key in header:
            if key == "y":
                cells.append(f"{row[key]:.2f}")
            elif key == "vol_pct":
                cells.append(_fmt(row[key], "full" if spec.precision == "full" else 1))
            else:
                cells.append(_fmt(row[key], spec.precision))
        writer.writerow(cells)
    return out.getvalue()


def read_metadata(text):
    pairs = []
    for line in text.splitlines():
        if not line.startswith("#"):
            continue
        body = line[1:].strip()
        if "=" in body:
            key, value = body.split("=", 1)
            pairs.append((key.strip(), value.strip()))
    return pairs


def read_table(text):
    """Parse a table CSV back into float rows, skipping metadata."""
    lines = [line for line in text.splitlines() if line and not line.startswith("#")]
    reader = csv.DictReader(lines)
    return [{k: float(v) for k, v in row.items()} for row in reader]
