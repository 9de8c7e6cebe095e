"""Simulation, error accounting and Monte-Carlo table runners.

Randomness: every replicate ``i`` of a run with seed ``s`` draws from
``PCG64(SeedSequence(s).spawn(replicates)[i])``, so a replicate's path does
not depend on how many workers run or in which order they finish.
"""

from __future__ import annotations

import bisect
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Mapping, Sequence

import numpy as np

from .core import PmmModel
from .decoders import (
    DEFAULT_C_MAX,
    HybridConfig,
    check_admissibility,
    find_c0,
    hybrid_decode,
    pmap_decode,
    rabiner_decode,
    viterbi_decode,
)
from .errors import C0ExceedsBound, DecoderRefusal, ValidationError
from .inference import InferenceContext
from .io import assumptions, csv_text, model_from_spec, model_hash
from .zoo import RelatedChainsParams, build_related_chains

WORKERS_ENV = "PMM_WORKERS"
STAT_COLUMNS = ("count", "failures", "mean", "sd", "min", "q1", "median", "q3", "max", "sum")


@dataclass(frozen=True)
class SimulatedPair:
    x: np.ndarray
    y: np.ndarray
    seed: Any
    model_id: str = ""


def _generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


def sample_path(model: PmmModel, n: int, seed, model_id: str = "") -> SimulatedPair:
    """Draw ``z_1 ~ initial`` and ``z_{t+1} ~ kernel[z_t]``; return both coordinates."""
    if n < 1:
        raise ValidationError("sequence length must be at least 1")
    rng = _generator(seed)
    u = rng.random(n)
    cum_init = np.cumsum(model.initial).tolist()
    cum_rows = [np.cumsum(row).tolist() for row in model.kernel]
    last = model.n_states - 1
    z = np.empty(n, dtype=np.intp)
    s = min(bisect.bisect_right(cum_init, u[0] * cum_init[-1]), last)
    z[0] = s
    for t in range(1, n):
        row = cum_rows[s]
        s = min(bisect.bisect_right(row, u[t] * row[-1]), last)
        z[t] = s
    support = np.asarray(model.support, dtype=np.intp)
    return SimulatedPair(x=support[z, 0], y=support[z, 1], seed=seed, model_id=model_id)


# -- constructed sequences ---------------------------------------------------------


def build_pattern_sequence(m: int, suffix: bool = False) -> np.ndarray:
    """``1, (1,2,1)^m`` (plus ``1,1,1`` when ``suffix``) as 0-based X indices."""
    if m < 1:
        raise ValidationError("pattern repetitions m must be at least 1")
    seq = [0] + [0, 1, 0] * m + ([0, 0, 0] if suffix else [])
    return np.array(seq, dtype=np.intp)


PATTERN_PARAMS = RelatedChainsParams(p=6 / 7, q=8 / 35, lambda1=0.9, lambda2=0.2, mu1=0.8, mu2=0.1)
PATTERN_C_A = 0.452328159645


def _filter_step(model: PmmModel, a: float, x0: int, x1: int) -> float:
    m = model.dense_kernel[x0, :, x1, :]
    cond = m / m.sum(axis=1, keepdims=True)
    return float((np.array([a, 1.0 - a]) @ cond)[0])


def pattern_fixed_point(model: PmmModel, pattern: Sequence[int] = (0, 0, 1, 0)) -> float:
    """Fixed point of the filter map ``p(y=a | x^t)`` over one period of ``pattern``.

    The one-step filter of a two-symbol HMM-DN-by-X model is affine in
    ``p(y=a)``, so the period map is ``a -> u + v a`` and the fixed point
    solves a single linear equation.
    """
    def period(a):
        for x0, x1 in zip(pattern[:-1], pattern[1:]):
            a = _filter_step(model, a, x0, x1)
        return a

    u = period(0.0)
    v = period(1.0) - u
    return u / (1.0 - v)


def pattern_model() -> PmmModel:
    """Two-symbol related-chains model started from ``p(y_1 = a | x_1 = 1) = c_a``."""
    base = build_related_chains(PATTERN_PARAMS)
    c_a = pattern_fixed_point(base)
    if abs(c_a - PATTERN_C_A) > 1e-9:
        raise AssertionError(f"pattern fixed point {c_a!r} differs from {PATTERN_C_A}")
    return base.with_initial(np.array([c_a, 1.0 - c_a, 0.0, 0.0]))


# -- error accounting ----------------------------------------------------------------


@dataclass(frozen=True)
class ErrorStats:
    """Type I counts true ``a`` (index 0) decoded as ``b`` (index 1); type II the reverse."""

    type1: int
    type2: int
    total: int
    pointwise_diff: int | None
    confusion: np.ndarray


def error_stats(true_y, decoded_y, second_decoded=None, n_labels: int | None = None) -> ErrorStats:
    true_y = np.asarray(true_y, dtype=np.intp)
    decoded_y = np.asarray(decoded_y, dtype=np.intp)
    if true_y.shape != decoded_y.shape:
        raise ValidationError("true and decoded paths differ in length")
    k = n_labels or int(max(true_y.max(), decoded_y.max(), 1)) + 1
    confusion = np.zeros((k, k), dtype=np.int64)
    np.add.at(confusion, (true_y, decoded_y), 1)
    diff = None
    if second_decoded is not None:
        second = np.asarray(second_decoded, dtype=np.intp)
        if second.shape != decoded_y.shape:
            raise ValidationError("decoded paths differ in length")
        diff = int(np.count_nonzero(second != decoded_y))
    total = int(confusion.sum() - np.trace(confusion))
    return ErrorStats(int(confusion[0, 1]), int(confusion[1, 0]), total, diff, confusion)


# -- experiment configuration ----------------------------------------------------------


DECODER_METHODS = ("pmap", "viterbi", "hybrid", "rabiner")


@dataclass
class DecoderSpec:
    label: str
    method: str
    c: float = 1.0
    b: float = 1.0
    k: int | None = None

    @classmethod
    def from_dict(cls, raw: Mapping) -> "DecoderSpec":
        method = raw.get("method")
        if method not in DECODER_METHODS:
            raise ValidationError(f"unknown decoder method {method!r}; expected one of {DECODER_METHODS}")
        label = raw.get("label", method)
        if method == "rabiner" and "k" not in raw:
            raise ValidationError(f"decoder {label!r}: rabiner needs k")
        if method == "hybrid" and "k" in raw:
            return cls(label, method, c=float(raw["k"]) - 1, b=1.0)
        return cls(label, method, c=float(raw.get("C", 1.0)), b=float(raw.get("B", 1.0)),
                   k=int(raw["k"]) if "k" in raw else None)

    def run(self, model: PmmModel, x, ctx: InferenceContext):
        if self.method == "pmap":
            return pmap_decode(model, x, ctx=ctx)
        if self.method == "viterbi":
            return viterbi_decode(model, x, ctx=ctx)
        if self.method == "hybrid":
            return hybrid_decode(model, x, HybridConfig(self.c, self.b), ctx=ctx)
        return rabiner_decode(model, x, self.k, ctx=ctx)


@dataclass
class ExperimentConfig:
    """Monte-Carlo run description; see the bundled ``configs/*.json`` for the format."""

    name: str
    models: list[tuple[str, dict]]
    n: int
    replicates: int
    seed: int
    decoders: list[DecoderSpec]
    differences: list[tuple[str, str]] = field(default_factory=list)
    k0: bool = False
    c_max: float = DEFAULT_C_MAX
    c0_tol: float = 1e-3

    def __post_init__(self):
        if self.replicates < 1:
            raise ValidationError("replicates must be at least 1")
        if self.n < 1:
            raise ValidationError("n must be at least 1")
        labels = [d.label for d in self.decoders]
        if len(set(labels)) != len(labels):
            raise ValidationError("decoder labels must be unique")
        for a, b in self.differences:
            if a not in labels or b not in labels:
                raise ValidationError(f"difference pair ({a}, {b}) names an unknown decoder")

    @classmethod
    def from_dict(cls, raw: Mapping) -> "ExperimentConfig":
        if "models" in raw:
            models = [(m["label"], m["model"]) for m in raw["models"]]
        elif "model" in raw:
            models = [("model", raw["model"])]
        else:
            raise ValidationError("experiment config needs 'model' or 'models'")
        try:
            return cls(
                name=raw.get("name", "experiment"),
                models=models,
                n=int(raw["n"]),
                replicates=int(raw["replicates"]),
                seed=int(raw["seed"]),
                decoders=[DecoderSpec.from_dict(d) for d in raw.get("decoders", [])],
                differences=[tuple(p) for p in raw.get("differences", [])],
                k0=bool(raw.get("k0", False)),
                c_max=float(raw.get("c_max", DEFAULT_C_MAX)),
                c0_tol=float(raw.get("c0_tol", 1e-3)),
            )
        except KeyError as exc:
            raise ValidationError(f"experiment config is missing {exc.args[0]!r}") from None


def bundled_config(name: str) -> ExperimentConfig:
    """Load one of the packaged configs: ``table1``, ``table2``, ``table3``."""
    text = resources.files("pmm").joinpath(f"configs/{name}.json").read_text(encoding="utf-8")
    return ExperimentConfig.from_dict(json.loads(text))


# -- replicate execution -----------------------------------------------------------------


def run_replicate(model: PmmModel, cfg: ExperimentConfig, seed) -> dict:
    """Sample one pair and evaluate every configured decoder on it."""
    pair = sample_path(model, cfg.n, seed)
    ny = model.y_alphabet.size
    out: dict[str, Any] = {"decoders": {}, "diffs": {}, "paths": {}}
    out["true_freq"] = np.bincount(pair.y, minlength=ny).tolist()
    ctx = InferenceContext(model, pair.x)
    for dec in cfg.decoders:
        try:
            path = dec.run(model, pair.x, ctx)
        except DecoderRefusal as exc:
            out["decoders"][dec.label] = {"error": str(exc)}
            continue
        es = error_stats(pair.y, path.states, n_labels=max(ny, 2))
        adm = check_admissibility(model, pair.x, path.states)
        out["paths"][dec.label] = path.states
        out["decoders"][dec.label] = {
            "type1": es.type1,
            "type2": es.type2,
            "errors": es.total,
            "inadmissible": adm.inadmissible_transition_count,
            "admissible": int(adm.admissible),
            "freq": np.bincount(path.states, minlength=ny).tolist(),
        }
    for a, b in cfg.differences:
        pa, pb = out["paths"].get(a), out["paths"].get(b)
        out["diffs"][f"{a}|{b}"] = None if pa is None or pb is None else int(np.count_nonzero(pa != pb))
    del out["paths"]
    if cfg.k0:
        try:
            bp = find_c0(model, pair.x, c_max=cfg.c_max, tol=cfg.c0_tol, ctx=ctx)
            out["c0"], out["k0"] = bp.c_o, bp.k_o
        except C0ExceedsBound:
            out["c0"], out["k0"] = math.inf, math.inf
    return out


def _replicate_task(args):
    spec, cfg, seed = args
    return run_replicate(model_from_spec(spec), cfg, seed)


def _workers(requested: int | None) -> int:
    if requested is not None:
        return max(1, int(requested))
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


# -- summaries -----------------------------------------------------------------------------


def summarize(values: Sequence[float | None]) -> dict:
    """Mean, sd (n-1), linear quantiles; ``None`` entries count as failures.

    Infinite values (a censored search) are kept, so quantiles stay correct as
    long as they fall below the censored tail.
    """
    vals = np.array([v for v in values if v is not None], dtype=float)
    out = {"count": int(vals.size), "failures": len(values) - int(vals.size)}
    if vals.size == 0:
        return out | {k: None for k in STAT_COLUMNS[2:]}
    vals.sort()
    finite = np.all(np.isfinite(vals))

    def q(p):
        pos = p * (vals.size - 1)
        lo, hi = math.floor(pos), math.ceil(pos)
        if lo == hi or vals[lo] == vals[hi]:
            return float(vals[lo])
        return float(vals[lo] + (pos - lo) * (vals[hi] - vals[lo]))

    return out | {
        "mean": float(vals.mean()) if finite else math.inf,
        "sd": float(vals.std(ddof=1)) if vals.size > 1 and finite else (0.0 if finite else math.nan),
        "min": float(vals[0]),
        "q1": q(0.25),
        "median": q(0.5),
        "q3": q(0.75),
        "max": float(vals[-1]),
        "sum": float(vals.sum()),
    }


@dataclass
class SummaryTable:
    rows: list[dict]
    metadata: dict

    def row(self, model: str, method: str, statistic: str) -> dict:
        for r in self.rows:
            if (r["model"], r["method"], r["statistic"]) == (model, method, statistic):
                return r
        raise KeyError((model, method, statistic))

    def to_csv(self) -> str:
        def fmt(v):
            if v is None:
                return ""
            if isinstance(v, float):
                return f"{v:.10g}"
            return v
        header = ("model", "method", "statistic") + STAT_COLUMNS + ("censored",)
        return csv_text(header, [[fmt(r[h]) for h in header] for r in self.rows])

    def to_json(self) -> dict:
        def clean(v):
            return None if isinstance(v, float) and not math.isfinite(v) else v
        return {"metadata": self.metadata,
                "rows": [{k: clean(v) for k, v in r.items()} for r in self.rows]}


def run_table_experiment(cfg: ExperimentConfig, workers: int | None = None,
                         return_replicates: bool = False):
    """Run every replicate of every model and aggregate into a :class:`SummaryTable`.

    Decoder refusals become per-cell failures.  With ``return_replicates`` the
    raw per-replicate dictionaries are returned as well.
    """
    nworkers = _workers(workers)
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.replicates)
    rows, meta_models, raw = [], [], {}
    for label, spec in cfg.models:
        model = model_from_spec(spec)
        if nworkers > 1:
            with ProcessPoolExecutor(max_workers=nworkers) as pool:
                reps = list(pool.map(_replicate_task, [(spec, cfg, s) for s in seeds]))
        else:
            reps = [run_replicate(model, cfg, s) for s in seeds]
        raw[label] = reps
        ylabels = model.y_alphabet.labels
        meta_models.append({"label": label, "hash": model_hash(model), "assumptions": assumptions(spec)})

        def add(method, statistic, values):
            rows.append({"model": label, "method": method, "statistic": statistic} | summarize(values))

        for y, lab in enumerate(ylabels):
            add("truth", f"freq:{lab}", [r["true_freq"][y] for r in reps])
        for dec in cfg.decoders:
            cells = [r["decoders"][dec.label] for r in reps]
            for stat in ("type1", "type2", "errors", "inadmissible", "admissible"):
                add(dec.label, stat, [None if "error" in c else c[stat] for c in cells])
            for y, lab in enumerate(ylabels):
                add(dec.label, f"freq:{lab}", [None if "error" in c else c["freq"][y] for c in cells])
        for a, b in cfg.differences:
            add(f"{a}|{b}", "difference", [r["diffs"][f"{a}|{b}"] for r in reps])
        if cfg.k0:
            add("hybrid", "c0", [r["c0"] for r in reps])
            add("hybrid", "k0", [r["k0"] for r in reps])
            rows[-1]["censored"] = sum(1 for r in reps if math.isinf(r["k0"]))
            rows[-2]["censored"] = rows[-1]["censored"]
    for r in rows:
        r.setdefault("censored", 0)
    metadata = {
        "name": cfg.name,
        "n": cfg.n,
        "replicates": cfg.replicates,
        "seed": cfg.seed,
        "rng": "PCG64 with SeedSequence(seed).spawn(replicates), one stream per replicate",
        "tie_break": "lowest hidden index",
        "models": meta_models,
        "decoders": [vars(d) for d in cfg.decoders],
        "c_max": cfg.c_max if cfg.k0 else None,
    }
    table = SummaryTable(rows, metadata)
    return (table, raw) if return_replicates else table


def all_cells_failed(table: SummaryTable) -> bool:
    cells = [r for r in table.rows if r["method"] != "truth"]
    return bool(cells) and all(r["count"] == 0 for r in cells)
