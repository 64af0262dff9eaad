"""Data loading, analysis reports, the simulation study and the
two-model illustration."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .compat import Procedure, derive
from .core_model import Dataset, ModelId, enumerate_models
from .errors import DataError
from .priors import NigPrior, PriorMeanChoice, log_marginal_likelihood, resolve_prior_mean
from .rng import stream
from .selection import bayes_factor, compare_models, gelfand_ghosh

HALD = "hald"
OUTPUT_FIELDS = ("model", "procedure", "mean_choice", "g", "d", "a",
                 "log_marginal", "post_prob", "gg_D", "gg_G", "gg_P")

MEAN_ALIASES = {"b0": "zero", "bbar": "ybar", "bhat": "ols", "zero": "zero", "ybar": "ybar", "ols": "ols"}


# ------------------------------------------------------------- data


def _read_rows(text: str, source: str) -> Tuple[List[str], List[List[float]]]:
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{source}: empty file")
    header = [h.strip() for h in rows[0]]
    out = []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise DataError(f"{source}: row {i} has {len(row)} fields, header has {len(header)}")
        vals = []
        for j, cell in enumerate(row, start=1):
            try:
                v = float(cell)
            except ValueError:
                raise DataError(f"{source}: non-numeric value {cell.strip()!r} at row {i}, column {j}") from None
            if not math.isfinite(v):
                raise DataError(f"{source}: non-finite value at row {i}, column {j}")
            vals.append(v)
        out.append(vals)
    if not out:
        raise DataError(f"{source}: no data rows")
    return header, out


def _read_text(path) -> Tuple[str, str]:
    if str(path) == HALD:
        return resources.files("compatpriors.data").joinpath("hald.csv").read_text("utf-8"), "hald.csv"
    p = Path(path)
    try:
        return p.read_text(encoding="utf-8"), str(p)
    except FileNotFoundError:
        raise DataError(f"no such file: {p}") from None
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read {p}: {exc}") from None


def load_dataset(path) -> Dataset:
    """CSV with a header; first column is the response, the rest predictors.

    An intercept column is prepended.  ``path`` may be ``"hald"`` for the
    bundled cement data.
    """
    text, source = _read_text(path)
    header, rows = _read_rows(text, source)
    arr = np.array(rows)
    y = arr[:, 0]
    X = np.column_stack([np.ones(len(y)), arr[:, 1:]])
    return Dataset(y, X, ["(intercept)"] + header[1:])


def load_prediction(path, data: Dataset) -> PriorMeanChoice:
    """Prior mean from a one-column CSV of predicted responses (``"hald"`` for the bundled one)."""
    if str(path) == HALD:
        text, source = resources.files("compatpriors.data").joinpath("hald_eta.csv").read_text("utf-8"), "hald_eta.csv"
    else:
        text, source = _read_text(path)
    _, rows = _read_rows(text, source)
    if any(len(r) != 1 for r in rows):
        raise DataError(f"{source}: expected a single column of predictions")
    return PriorMeanChoice.from_prediction([r[0] for r in rows], data)


def hald_dataset() -> Dataset:
    return load_dataset(HALD)


def resolve_g(spec: Union[str, float], n: int, p: int) -> float:
    """``"n"``, ``"max(n,p^2)"`` (p counts the intercept) or a positive number."""
    if isinstance(spec, str):
        s = spec.replace(" ", "").lower()
        if s == "n":
            return float(n)
        if s in ("max(n,p^2)", "max(n,p**2)"):
            return float(max(n, p * p))
        try:
            spec = float(s)
        except ValueError:
            raise ValueError(f"g must be a positive number, 'n' or 'max(n,p^2)', got {spec!r}") from None
    if not spec > 0:
        raise ValueError(f"g must be positive, got {spec}")
    return float(spec)


def parse_mean_choice(text: str) -> PriorMeanChoice:
    key = text.strip().lower()
    if key not in MEAN_ALIASES:
        raise ValueError(f"unknown mean choice {text!r}; expected one of {sorted(MEAN_ALIASES)}")
    return PriorMeanChoice(MEAN_ALIASES[key])


def fmt_num(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return f"{float(x):.12g}"


# ------------------------------------------------------------- analysis


@dataclass
class RunConfig:
    dataset_path: str
    procedures: List[Procedure] = field(default_factory=lambda: [Procedure.STANDARD])
    mean_choices: List[PriorMeanChoice] = field(default_factory=lambda: [PriorMeanChoice("ybar")])
    g: Union[str, float] = "n"
    d: float = 1.0
    a: float = 1.0
    seed: int = 0
    output_format: str = "csv"
    gg_c: float = 1.0
    prediction_path: Optional[str] = None
    uc_rate: str = "exact"

    def __post_init__(self):
        if self.output_format not in ("csv", "json"):
            raise ValueError(f"output format must be csv or json, got {self.output_format!r}")
        if not (0 <= self.seed < 2**64):
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.d < 0 or self.a < 0:
            raise ValueError("d and a must be nonnegative")
        if not self.gg_c > 0:
            raise ValueError("gg_c must be positive")


@dataclass
class ComparisonReport:
    records: List[dict]

    def group(self, procedure: str, mean_choice: str) -> List[dict]:
        return [r for r in self.records if r["procedure"] == procedure and r["mean_choice"] == mean_choice]

    def top(self, procedure: str, mean_choice: str, k: int = 4) -> List[Tuple[str, float]]:
        rows = sorted(self.group(procedure, mean_choice), key=lambda r: -r["post_prob"])
        return [(r["model"], r["post_prob"]) for r in rows[:k]]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(OUTPUT_FIELDS)
        for r in self.records:
            w.writerow([r["model"], r["procedure"], r["mean_choice"]]
                       + [fmt_num(r[k]) for k in OUTPUT_FIELDS[3:]])
        return buf.getvalue()

    def to_json(self) -> str:
        out = []
        for r in self.records:
            rec = {k: r[k] for k in OUTPUT_FIELDS[:3]}
            for k in OUTPUT_FIELDS[3:]:
                s = fmt_num(r[k])
                rec[k] = float(s) if s else None
            out.append(rec)
        return json.dumps(out, indent=1) + "\n"

    def emit(self, fmt: str) -> str:
        return self.to_csv() if fmt == "csv" else self.to_json()

    def summary(self, k: int = 4) -> str:
        seen, lines = [], []
        for r in self.records:
            key = (r["procedure"], r["mean_choice"])
            if key not in seen:
                seen.append(key)
        for proc, mean in seen:
            tops = self.top(proc, mean, k)
            lines.append(f"{proc:>6} {mean:>10}  " + "  ".join(f"{m}:{p:.3f}" for m, p in tops)
                         + f"  total:{sum(p for _, p in tops):.3f}")
        return "\n".join(lines)


def _mean_label(choice: PriorMeanChoice) -> str:
    return "prediction" if choice.kind == "custom" else choice.kind


def analyze_dataset(data: Dataset, procedures: Sequence, mean_choices: Sequence[PriorMeanChoice],
                    g: float, d: float, a: float, gg_c: float = 1.0, uc_rate: str = "exact") -> ComparisonReport:
    """All models x procedures x mean choices, in a fixed order."""
    records = []
    models = enumerate_models(data.p)
    for mean in mean_choices:
        b = resolve_prior_mean(mean, data)
        for proc in procedures:
            proc = Procedure.parse(proc) if isinstance(proc, str) else proc
            if proc is Procedure.IMPROPER:
                full_prior = NigPrior.improper(b, g)
            else:
                full_prior = NigPrior(b, g, d, a)
            try:
                comp = compare_models(proc, full_prior, data, models, uc_rate=uc_rate)
            except Exception as exc:
                exc.args = (f"{proc.value}/{_mean_label(mean)}: {exc.args[0] if exc.args else exc}",) + exc.args[1:]
                raise
            for m in models:
                pk = comp.derived[m].prior
                lm = log_marginal_likelihood(pk, data, m) if pk.proper else math.nan
                try:
                    gg = gelfand_ghosh(pk, m, data, gg_c)
                    ggv = (gg.D, gg.G, gg.P)
                except (ArithmeticError, ValueError):
                    ggv = (math.nan,) * 3
                records.append({
                    "model": m.label(), "procedure": proc.value, "mean_choice": _mean_label(mean),
                    "g": pk.g, "d": pk.d, "a": pk.a, "log_marginal": lm, "post_prob": comp.prob(m),
                    "gg_D": ggv[0], "gg_G": ggv[1], "gg_P": ggv[2],
                })
    return ComparisonReport(records)


def run_analysis(config: RunConfig) -> ComparisonReport:
    data = load_dataset(config.dataset_path)
    means = list(config.mean_choices)
    if config.prediction_path:
        means.append(load_prediction(config.prediction_path, data))
    g = resolve_g(config.g, data.n, data.p)
    return analyze_dataset(data, config.procedures, means, g, config.d, config.a, config.gg_c, config.uc_rate)


# ------------------------------------------------------------- simulation

TABLE1_GRID = ((0.0, 0.0), (1.0, 1.0), (1.0, 10.0), (5.0, 5.0), (10.0, 1.0), (10.0, 50.0))
TRUE_MODELS = {
    "M1": (ModelId.of(0), np.zeros(6)),
    "M2": (ModelId.of(0, 1, 3, 5), np.array([0.0, 2.0, 0.0, -1.0, 0.0, 1.5])),
    "M3": (ModelId.of(0, 1, 3, 4, 5), np.array([0.0, 2.0, 0.0, -1.0, 1.0, 1.5])),
}
SIM_PROCEDURES = (Procedure.KL_CONJUGATE, Procedure.STANDARD, Procedure.UC)
SIM_MEANS = (("b0", PriorMeanChoice("zero")), ("bbar", PriorMeanChoice("ybar")), ("bhat", PriorMeanChoice("ols")))


@dataclass
class SimulationSpec:
    n: int = 30
    replicates: int = 50
    true_model: str = "M1"
    C: float = 0.0
    noise_sd: float = 2.5
    hyper_grid: Sequence[Tuple[float, float]] = TABLE1_GRID
    seed: int = 0
    g: Optional[float] = None
    uc_rate: str = "exact"

    def __post_init__(self):
        if self.true_model not in TRUE_MODELS:
            raise ValueError(f"true model must be one of {sorted(TRUE_MODELS)}")
        if self.n < 7 or self.replicates < 1:
            raise ValueError("need n >= 7 and at least one replicate")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be nonnegative")


def simulate_design(n: int, seed: int, replicate: int) -> np.ndarray:
    """Intercept plus X1..X5, with X4 and X5 both correlated with 0.3 X1 + 0.7 X2."""
    Z = stream(seed, replicate, "Z").standard_normal((n, 5))
    X = np.empty((n, 6))
    X[:, 0] = 1.0
    X[:, 1:4] = Z[:, :3]
    common = 0.3 * Z[:, 0] + 0.7 * Z[:, 1]
    X[:, 4] = common + Z[:, 3]
    X[:, 5] = common + Z[:, 4]
    return X


def simulate_response(X: np.ndarray, spec: SimulationSpec, replicate: int) -> np.ndarray:
    _, beta = TRUE_MODELS[spec.true_model]
    eps = stream(spec.seed, replicate, "eps").standard_normal(X.shape[0])
    return spec.C + X[:, 1:] @ beta[1:] + spec.noise_sd * eps


@dataclass
class SimulationResult:
    spec: SimulationSpec
    hits: Dict[Tuple[str, str, float, float], int]

    def frequency(self, procedure: str, mean: str, d: float, a: float) -> float:
        return self.hits[(procedure, mean, float(d), float(a))] / self.spec.replicates

    def rows(self) -> List[dict]:
        out = []
        for (proc, mean, d, a), h in self.hits.items():
            out.append({"truth": self.spec.true_model, "d": d, "a": a, "procedure": proc,
                        "mean_choice": mean, "frequency": h / self.spec.replicates})
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["truth", "d", "a", "procedure", "mean_choice", "frequency"])
        for r in self.rows():
            w.writerow([r["truth"], fmt_num(r["d"]), fmt_num(r["a"]), r["procedure"], r["mean_choice"],
                        fmt_num(r["frequency"])])
        return buf.getvalue()


def _grid_cells(grid):
    for d, a in grid:
        procs = (Procedure.IMPROPER,) if d == 0 and a == 0 else SIM_PROCEDURES
        for proc in procs:
            for label, mean in SIM_MEANS:
                yield float(d), float(a), proc, label, mean


def run_simulation(spec: SimulationSpec) -> SimulationResult:
    """Frequency with which the highest Bayes factor against the full model
    picks the generating model.

    Predictors and errors are drawn once per replicate (streams keyed by the
    replicate index) and reused across every (d, a) and prior choice.
    """
    truth, _ = TRUE_MODELS[spec.true_model]
    cells = list(_grid_cells(spec.hyper_grid))
    hits = {(c[2].value, c[3], c[0], c[1]): 0 for c in cells}
    models = enumerate_models(6)
    for r in range(spec.replicates):
        X = simulate_design(spec.n, spec.seed, r)
        data = Dataset(simulate_response(X, spec, r), X)
        g = float(spec.n if spec.g is None else spec.g)
        means = {label: resolve_prior_mean(mean, data) for label, mean in SIM_MEANS}
        for d, a, proc, label, _ in cells:
            b = means[label]
            full_prior = NigPrior.improper(b, g) if proc is Procedure.IMPROPER else NigPrior(b, g, d, a)
            comp = compare_models(proc, full_prior, data, models, uc_rate=spec.uc_rate)
            if comp.top() == truth:
                hits[(proc.value, label, d, a)] += 1
    return SimulationResult(spec, hits)


# ------------------------------------------------------------- illustration

ILLUSTRATION_PROCEDURES = (Procedure.STANDARD, Procedure.IMPROPER, Procedure.UC, Procedure.KL_CONJUGATE)


def run_illustration(n: int = 25, g: float = 25.0, hyper_list: Sequence[Tuple[float, float]] = ((5.0, 1.0),),
                     mu_grid: Sequence[float] = tuple(np.linspace(-3, 3, 61)), seed: int = 0) -> List[dict]:
    """Pr(mean model | y) against the zero-mean model, as a function of mu.

    One error vector is drawn and reused for every mu; prior mean is 0 and
    the two models have prior odds 1.
    """
    eps = stream(seed, 0, "eps").standard_normal(n)
    X = np.ones((n, 1))
    full, null = ModelId.of(0), ModelId(())
    out = []
    for d, a in hyper_list:
        base = NigPrior(np.zeros(1), g, d, a)
        for proc in ILLUSTRATION_PROCEDURES:
            if proc is Procedure.IMPROPER:
                pf = NigPrior.improper(np.zeros(1), g)
                p0 = NigPrior.improper(np.zeros(0), g)
            else:
                pf, p0 = base, derive(proc, base, null, X).prior
            for mu in mu_grid:
                data = Dataset(mu + eps, X)
                log_b = bayes_factor(p0, pf, null, full, data)
                prob = 1.0 / (1.0 + math.exp(log_b)) if log_b < 700 else 0.0
                out.append({"mu": float(mu), "procedure": proc.value, "d": float(d), "a": float(a), "prob": prob})
    return out


def illustration_csv(rows: List[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["mu", "procedure", "d", "a", "prob"])
    for r in rows:
        w.writerow([fmt_num(r["mu"]), r["procedure"], fmt_num(r["d"]), fmt_num(r["a"]), fmt_num(r["prob"])])
    return buf.getvalue()
