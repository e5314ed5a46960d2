"""Experiment configuration, orchestration and output files."""
from __future__ import annotations

import hashlib
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Callable, Optional
from xml.sax.saxutils import escape

import numpy as np

from .energy import (ExperimentTemplate, PacketResult, boundedness_experiment, datum_decay_experiment,
                     fit_power_law, run_packet)
from .errors import ConfigError, ContractError, PevoError
from .grid import Field, Grid
from .operator import LowerCoeff, ModelOperator, xi_threshold
from .symbols import SampledSymbol, apply, dense_matrix

__all__ = [
    "EXPERIMENTS",
    "SCHEMA",
    "CSV_HEADER",
    "ExperimentConfig",
    "load_config",
    "config_hash",
    "RunRecord",
    "run",
    "emit_outputs",
    "write_record_json",
]

EXPERIMENTS = ("threshold", "simulate", "growth", "bounded", "datum-decay", "oracle-check")
SCHEMA = "pevo-record/1"
CSV_HEADER = "nu,t,log_E,log_E0,lambda_rate"
SIG_DIGITS = 12


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    p: int = 2
    a_p: float = 1.0
    lower: tuple = ()
    nus: tuple = ()
    theta: float = 4.0
    rho0: float = 1.0
    lam: Optional[float] = None
    theta1: float = 3.0
    theta_h: float = 1.1
    dt: Optional[float] = None
    t_star: Optional[float] = None
    gain: float = 0.3
    cap: int = 12
    n_records: int = 5
    cutoff_factor: float = 2.5
    slope_tolerance: float = 0.15
    bound_factor: float = 5.0
    n_points: int = 128
    trials: int = 25
    seed: int = 0
    out_dir: Optional[str] = None

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config: top level must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"config: unknown keys {unknown}")
        if "experiment" not in data:
            raise ConfigError("experiment: required")
        kw = dict(data)
        kw["lower"] = tuple(_lower_entry(e, i) for i, e in enumerate(kw.get("lower", ())))
        kw["nus"] = tuple(kw.get("nus", ()))
        try:
            cfg = cls(**kw)
        except TypeError as exc:
            raise ConfigError(f"config: {exc}") from None
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lower"] = [dict(e) for e in self.lower]
        d["nus"] = list(self.nus)
        return d

    # -- validation ----------------------------------------------------------
    def validate(self):
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.experiment in EXPERIMENTS, f"experiment: must be one of {list(EXPERIMENTS)}")
        need(isinstance(self.p, int) and self.p >= 2, "p: integer >= 2 required")
        need(_num(self.a_p) and self.a_p != 0, "a_p: nonzero number required")
        js = [e["j"] for e in self.lower]
        need(len(set(js)) == len(js), "lower: distinct j required")
        for i, e in enumerate(self.lower):
            need(1 <= e["j"] <= self.p, f"lower[{i}].j: must lie in [1, p]")
        need(all(_num(n) and n >= 1 for n in self.nus), "nus: values >= 1 required")
        need(_num(self.theta) and self.theta > 1, "theta: must exceed 1")
        need(_num(self.rho0) and self.rho0 > 0, "rho0: must be positive")
        need(self.lam is None or (_num(self.lam) and 0 < self.lam < 1), "lam: must lie in (0, 1)")
        need(_num(self.theta_h) and self.theta_h > 1, "theta_h: must exceed 1")
        need(_num(self.theta1) and self.theta1 > self.theta_h, "theta1: must exceed theta_h")
        need(self.dt is None or (_num(self.dt) and self.dt > 0), "dt: must be positive")
        need(self.t_star is None or (_num(self.t_star) and self.t_star > 0), "t_star: must be positive")
        need(_num(self.gain) and self.gain > 0, "gain: must be positive")
        need(isinstance(self.cap, int) and 0 <= self.cap <= 32, "cap: integer in [0, 32] required")
        need(isinstance(self.n_records, int) and self.n_records >= 2, "n_records: integer >= 2 required")
        need(_num(self.cutoff_factor) and self.cutoff_factor >= 1.75,
             "cutoff_factor: must be >= 1.75 (chi_k reaches 7 nu/4)")
        need(isinstance(self.seed, int), "seed: integer required")
        exp = self.experiment
        if exp in ("threshold", "growth", "bounded", "simulate"):
            need(any(e["j"] < self.p for e in self.lower) or exp in ("simulate", "bounded"),
                 "lower: at least one coefficient with j < p required")
        if exp in ("growth", "bounded", "datum-decay"):
            need(len(self.nus) >= 3, "nus: at least 3 required")
        if exp == "simulate":
            need(len(self.nus) >= 1, "nus: at least 1 required")
        if exp == "bounded" and any(e["j"] < self.p for e in self.lower):
            xi = xi_threshold(self.operator()).xi
            need(xi * self.theta < 1, f"theta: boundedness needs Xi < 1/theta, got Xi = {xi:.6g}")
        if exp == "oracle-check":
            n = self.n_points
            need(isinstance(n, int) and n >= 8 and n & (n - 1) == 0 and n <= 1024,
                 "n_points: power of two in [8, 1024] required")
            need(isinstance(self.trials, int) and self.trials >= 1, "trials: integer >= 1 required")

    # -- builders --------------------------------------------------------------
    def operator(self) -> ModelOperator:
        return ModelOperator(self.p, float(self.a_p),
                             tuple(LowerCoeff(e["j"], e["sigma"], e["A"]) for e in self.lower))

    def template(self) -> ExperimentTemplate:
        return ExperimentTemplate(theta=self.theta, rho0=self.rho0, lam=self.lam, theta1=self.theta1,
                                  theta_h=self.theta_h, cap=self.cap, t_star=self.t_star, gain=self.gain,
                                  cutoff_factor=self.cutoff_factor, n_records=self.n_records, dt=self.dt)


def _num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _lower_entry(e, i) -> dict:
    if not isinstance(e, dict) or not {"j", "sigma"} <= set(e):
        raise ConfigError(f"lower[{i}]: object with keys j, sigma (and optional A) required")
    extra = set(e) - {"j", "sigma", "A"}
    if extra:
        raise ConfigError(f"lower[{i}]: unknown keys {sorted(extra)}")
    j, sigma, A = e["j"], e["sigma"], e.get("A", 1.0)
    if not isinstance(j, int) or j < 1:
        raise ConfigError(f"lower[{i}].j: positive integer required")
    if not (_num(sigma) and 0 <= sigma <= 1):
        raise ConfigError(f"lower[{i}].sigma: must lie in [0, 1]")
    if not (_num(A) and A > 0):
        raise ConfigError(f"lower[{i}].A: must be positive")
    return {"j": j, "sigma": float(sigma), "A": float(A)}


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON in {path}: {exc}") from None
    return ExperimentConfig.from_dict(data)


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(cfg: ExperimentConfig) -> str:
    """Git blob hash of the canonical JSON encoding."""
    body = _canonical(cfg.to_dict()).encode()
    return hashlib.sha1(b"blob %d\0" % len(body) + body).hexdigest()


# ---------------------------------------------------------------------------
# records


def _clean(v):
    """JSON-compatible copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_clean(x) for x in v]
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        f = float(v)
        return f if math.isfinite(f) else None
    return v


@dataclass
class RunRecord:
    config: dict
    config_hash: str
    experiment: str
    packets: list = field(default_factory=list)
    fits: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)
    verdict: str = "PENDING"
    complete: bool = False
    timing: dict = field(default_factory=dict)
    schema: str = SCHEMA

    def to_dict(self, with_timing: bool = False) -> dict:
        d = {
            "schema": self.schema,
            "config": self.config,
            "config_hash": self.config_hash,
            "experiment": self.experiment,
            "packets": self.packets,
            "fits": self.fits,
            "details": self.details,
            "verdict": self.verdict,
            "complete": self.complete,
        }
        if with_timing:
            d["timing"] = self.timing
        return _clean(d)

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        if d.get("schema") != SCHEMA:
            raise ContractError(f"unsupported record schema {d.get('schema')!r}")
        return cls(d["config"], d["config_hash"], d["experiment"], d["packets"], d["fits"],
                   d["details"], d["verdict"], d["complete"], d.get("timing", {}), d["schema"])

    def __eq__(self, other):
        if not isinstance(other, RunRecord):
            return NotImplemented
        return self.to_dict() == other.to_dict()


def _packet_summary(pk: PacketResult) -> dict:
    rep = pk.report
    return _clean({
        "nu": pk.nu,
        "n_points": pk.n_points,
        "length": pk.length,
        "t_star": pk.run.t_star,
        "N_k": pk.run.N_k,
        "alpha_beta_cap": pk.run.alpha_beta_cap,
        "lambda": pk.run.lam,
        "theta1": pk.run.theta1,
        "times": rep.times,
        "log_E": rep.log_E,
        "log_E0": rep.E0_log,
        "lambda_rate": pk.lambda_rate,
        "tail_fraction": rep.tail_fraction,
    })


# ---------------------------------------------------------------------------
# orchestration


class _Job:
    def __init__(self, op, template):
        self.op = op
        self.template = template

    def __call__(self, nu):
        return run_packet(self.op, nu, self.template)


def _sweep(cfg: ExperimentConfig, record: RunRecord, jobs: int,
           commit: Optional[Callable[[RunRecord], None]]) -> list:
    """Run one packet per nu; commit results to the record in nu order."""
    op = cfg.operator()
    job = _Job(op, cfg.template())
    nus = sorted(float(n) for n in cfg.nus)
    results = []

    def take(pk):
        results.append(pk)
        record.packets.append(_packet_summary(pk))
        record.timing.setdefault("packet_seconds", []).append(pk.wall_seconds)
        if commit is not None:
            commit(record)

    if jobs > 1 and len(nus) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            futures = [ex.submit(job, nu) for nu in nus]
            for fut in futures:  # waiting in submission order gives nu-ordered commits
                take(fut.result())
    else:
        for nu in nus:
            take(job(nu))
    return results


def _oracle_check(cfg: ExperimentConfig) -> tuple:
    rng = np.random.default_rng(cfg.seed)
    grid = Grid(cfg.n_points, 2 * np.pi * 4)
    worst = 0.0
    for _ in range(cfg.trials):
        terms = tuple((rng.normal(size=grid.n_points) + 1j * rng.normal(size=grid.n_points),
                       rng.normal(size=grid.n_points) + 1j * rng.normal(size=grid.n_points))
                      for _ in range(int(rng.integers(1, 4))))
        sym = SampledSymbol(grid, terms)
        f = Field(grid, rng.normal(size=grid.n_points) + 1j * rng.normal(size=grid.n_points))
        ref = dense_matrix(sym) @ f.samples
        got = apply(sym, f).samples
        worst = max(worst, float(np.linalg.norm(got - ref) / np.linalg.norm(ref)))
    return worst, worst <= 1e-10


def run(cfg: ExperimentConfig, jobs: int = 1,
        commit: Optional[Callable[[RunRecord], None]] = None) -> RunRecord:
    """Execute ``cfg``; ``commit`` is called with the partial record after each completed nu."""
    t0 = time.perf_counter()
    record = RunRecord(_clean(cfg.to_dict()), config_hash(cfg), cfg.experiment)
    exp = cfg.experiment
    if exp == "threshold":
        rep = xi_threshold(cfg.operator())
        record.details = {
            "xi": rep.xi,
            "classification": rep.classification,
            "theta_bound": rep.theta_bound,
            "per_j": [{"j": t.j, "sigma": t.sigma, "value": t.value, "classification": t.classification,
                       "theta_bound": t.theta_bound} for t in rep.per_j],
            "notes": list(rep.notes),
        }
        record.verdict = "PASS"
    elif exp == "simulate":
        pks = _sweep(cfg, record, jobs, commit)
        record.verdict = "PASS" if all(np.all(np.isfinite(pk.report.log_E)) for pk in pks) else "FAIL"
    elif exp == "growth":
        pks = _sweep(cfg, record, jobs, commit)
        rates = [pk.lambda_rate for pk in pks]
        expected = xi_threshold(cfg.operator()).xi
        if all(r > 0 for r in rates):
            fit = fit_power_law([pk.nu for pk in pks], rates)
            record.fits = {"slope": fit.slope, "intercept": fit.intercept, "stderr": fit.stderr,
                           "residuals": list(fit.residuals), "expected": expected,
                           "tolerance": cfg.slope_tolerance}
            ok = abs(fit.slope - expected) <= cfg.slope_tolerance
        else:
            record.fits = {"slope": None, "expected": expected, "tolerance": cfg.slope_tolerance}
            ok = False
        monotone = all(b >= a for a, b in zip(rates, rates[1:]))
        record.details = {"monotone": monotone}
        record.verdict = "PASS" if ok else "FAIL"
    elif exp == "bounded":
        pks = _sweep(cfg, record, jobs, commit)
        logs = [float(pk.report.log_E[-1]) for pk in pks]
        ratio = float(np.exp(max(logs) - min(logs)))
        top = logs[-3:]
        monotone_top = len(top) == 3 and top[0] < top[1] < top[2]
        record.details = {"log_E_star": logs, "ratio": ratio, "factor": cfg.bound_factor,
                          "monotone_top": monotone_top}
        record.verdict = "PASS" if ratio <= cfg.bound_factor and not monotone_top else "FAIL"
    elif exp == "datum-decay":
        res = datum_decay_experiment(cfg.nus, cfg.theta, cfg.rho0, cfg.p,
                                     cfg.lam if cfg.lam is not None else 0.5, cfg.theta1, cfg.theta_h)
        for nu, e0 in zip(res.nus, res.log_E0):
            record.packets.append(_clean({"nu": nu, "times": [0.0], "log_E": [e0], "log_E0": e0,
                                          "lambda_rate": None}))
        expected = 1.0 / cfg.theta
        record.fits = {"slope": res.slope, "intercept": res.fit.intercept, "stderr": res.fit.stderr,
                       "residuals": list(res.fit.residuals), "expected": expected, "tolerance": 0.1}
        record.details = {"g_bounds": list(res.g_bounds), "pos_norms": list(res.pos_norms),
                          "bounds_hold": res.bounds_hold}
        ok = abs(res.slope - expected) <= 0.1 and res.bounds_hold
        record.verdict = "PASS" if ok else "FAIL"
    elif exp == "oracle-check":
        worst, ok = _oracle_check(cfg)
        record.details = {"max_rel_error": worst, "tolerance": 1e-10, "trials": cfg.trials,
                          "n_points": cfg.n_points}
        record.verdict = "PASS" if ok else "FAIL"
    record.complete = True
    record.timing["total_seconds"] = time.perf_counter() - t0
    return record


# ---------------------------------------------------------------------------
# output files


def _g(v) -> str:
    if v is None:
        return "nan"
    return format(float(v), f".{SIG_DIGITS}g")


def _csv(record: RunRecord) -> str:
    lines = [CSV_HEADER]
    for pk in record.packets:
        for t, le in zip(pk["times"], pk["log_E"]):
            lines.append(",".join(_g(v) for v in (pk["nu"], t, le, pk["log_E0"], pk["lambda_rate"])))
    return "\n".join(lines) + "\n"


def _json(record: RunRecord, with_timing: bool = False) -> str:
    return json.dumps(record.to_dict(with_timing), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _write(path: Path, text: str):
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_record_json(record: RunRecord, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{record.experiment}.json"
    _write(path, _json(record))
    return path


class _Plot:
    W, H, M = 640, 420, 60

    def __init__(self, title, xlabel, ylabel, xs, ys):
        fin = lambda a: [v for v in a if v is not None and math.isfinite(v)]
        xs, ys = fin(xs), fin(ys)
        self.x0, self.x1 = (min(xs), max(xs)) if xs else (0.0, 1.0)
        self.y0, self.y1 = (min(ys), max(ys)) if ys else (0.0, 1.0)
        if self.x1 == self.x0:
            self.x0, self.x1 = self.x0 - 0.5, self.x1 + 0.5
        if self.y1 == self.y0:
            self.y0, self.y1 = self.y0 - 0.5, self.y1 + 0.5
        self.parts = [
            f'<rect x="{self.M}" y="{self.M}" width="{self.W - 2 * self.M}" height="{self.H - 2 * self.M}" '
            'fill="none" stroke="black"/>',
            f'<text x="{self.W / 2}" y="{self.M / 2}" text-anchor="middle">{escape(title)}</text>',
            f'<text x="{self.W / 2}" y="{self.H - 15}" text-anchor="middle">{escape(xlabel)}</text>',
            f'<text x="15" y="{self.H / 2}" transform="rotate(-90 15 {self.H / 2})" '
            f'text-anchor="middle">{escape(ylabel)}</text>',
            f'<text x="{self.M}" y="{self.H - self.M + 15}" font-size="10">{_g(self.x0)}</text>',
            f'<text x="{self.W - self.M}" y="{self.H - self.M + 15}" font-size="10" text-anchor="end">{_g(self.x1)}</text>',
            f'<text x="{self.M - 5}" y="{self.H - self.M}" font-size="10" text-anchor="end">{_g(self.y0)}</text>',
            f'<text x="{self.M - 5}" y="{self.M + 10}" font-size="10" text-anchor="end">{_g(self.y1)}</text>',
        ]

    def _pt(self, x, y):
        px = self.M + (x - self.x0) / (self.x1 - self.x0) * (self.W - 2 * self.M)
        py = self.H - self.M - (y - self.y0) / (self.y1 - self.y0) * (self.H - 2 * self.M)
        return f"{_g(px)},{_g(py)}"

    def polyline(self, xs, ys, color, label=None, dash=False):
        pts = " ".join(self._pt(x, y) for x, y in zip(xs, ys)
                       if x is not None and y is not None and math.isfinite(x) and math.isfinite(y))
        extra = ' stroke-dasharray="6,4"' if dash else ""
        lab = f' data-label="{escape(label)}"' if label else ""
        self.parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}"{extra}{lab}/>')

    def text(self, x, y, s):
        self.parts.append(f'<text x="{x}" y="{y}" font-size="12">{escape(s)}</text>')

    def render(self) -> str:
        body = "\n".join(self.parts)
        return (f'<?xml version="1.0" encoding="UTF-8"?>\n'
                f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.W}" height="{self.H}" '
                f'viewBox="0 0 {self.W} {self.H}">\n{body}\n</svg>\n')


_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")


def _energy_svg(record: RunRecord) -> str:
    xs = [t for pk in record.packets for t in pk["times"]]
    ys = [v for pk in record.packets for v in pk["log_E"]]
    plot = _Plot(f"{record.experiment}: log E_k(t)", "t", "log E_k", xs, ys)
    for i, pk in enumerate(record.packets):
        plot.polyline(pk["times"], pk["log_E"], _COLORS[i % len(_COLORS)], label=f"nu={_g(pk['nu'])}")
        plot.text(plot.W - plot.M + 5, plot.M + 15 * (i + 1), f"nu={_g(pk['nu'])}")
    return plot.render()


def _rate_svg(record: RunRecord) -> str:
    if record.experiment == "datum-decay":
        pairs = [(pk["nu"], -pk["log_E0"]) for pk in record.packets
                 if pk["log_E0"] is not None and pk["log_E0"] < 0]
        ylabel = "log(-log E_k(0))"
    else:
        pairs = [(pk["nu"], pk["lambda_rate"]) for pk in record.packets
                 if pk["lambda_rate"] is not None and pk["lambda_rate"] > 0]
        ylabel = "log Lambda"
    lx = [math.log(a) for a, _ in pairs]
    ly = [math.log(b) for _, b in pairs]
    plot = _Plot(f"{record.experiment}: {ylabel} vs log nu", "log nu", ylabel, lx, ly)
    plot.polyline(lx, ly, _COLORS[0], label="measured")
    slope = record.fits.get("slope")
    if slope is not None and lx:
        c = record.fits["intercept"]
        plot.polyline([lx[0], lx[-1]], [slope * lx[0] + c, slope * lx[-1] + c], _COLORS[1],
                      label="fit", dash=True)
        plot.text(plot.M + 10, plot.M + 20, f"slope = {_g(slope)} (expected {_g(record.fits.get('expected'))})")
    return plot.render()


def emit_outputs(record: RunRecord, out_dir) -> list:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ContractError(f"output directory {out} is not writable: {exc}") from None
    if not os.access(out, os.W_OK):
        raise ContractError(f"output directory {out} is not writable")
    name = record.experiment
    files = [out / f"{name}.csv", out / f"{name}.json", out / f"{name}_timing.json"]
    _write(files[0], _csv(record))
    _write(files[1], _json(record))
    _write(files[2], json.dumps(_clean(record.timing), sort_keys=True, indent=2) + "\n")
    if record.packets:
        files.append(out / f"{name}_energy.svg")
        _write(files[-1], _energy_svg(record))
        if len(record.packets) >= 2 and name in ("growth", "bounded", "simulate", "datum-decay"):
            files.append(out / f"{name}_rate.svg")
            _write(files[-1], _rate_svg(record))
    return files
