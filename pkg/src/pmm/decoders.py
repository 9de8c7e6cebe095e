"""Hidden-path estimators: Viterbi, PMAP, hybrid, Rabiner k-block, and helpers.

Every decoder breaks ties towards the lowest hidden-symbol index at each
argmax, so results are bit-reproducible.  Decoders accept an optional
:class:`~pmm.inference.InferenceContext` to share one forward/backward pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import PmmModel
from .errors import BudgetExceeded, C0ExceedsBound, DecoderRefusal, ValidationError
from .inference import InferenceContext, RiskReport, as_observations, risks
from .oracle import MAX_PATHS, PathEnumeration

RABINER_BUDGET = 2 * 10**8
DEFAULT_C_MAX = 1e4


@dataclass(frozen=True)
class HybridConfig:
    """Weights of ``C log p(s|x) + B sum_t log p_t(s_t|x)``."""

    c_weight: float = 1.0
    b_weight: float = 1.0

    def __post_init__(self):
        for name in ("c_weight", "b_weight"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValidationError(f"{name} must be a finite nonnegative number, got {v}")
        if self.c_weight == 0 and self.b_weight == 0:
            raise ValidationError("hybrid weights C and B cannot both be zero")


@dataclass
class DecodedPath:
    states: np.ndarray
    method: str
    risks: RiskReport
    admissible: bool
    score: float = float("nan")
    params: dict = field(default_factory=dict)

    def as_dict(self, y_labels: Sequence[str] | None = None) -> dict:
        out = {
            "method": self.method,
            "params": self.params,
            "states": [int(s) for s in self.states],
            "admissible": self.admissible,
            "score": self.score,
            "risks": self.risks.as_dict(),
        }
        if y_labels is not None:
            out["labels"] = [y_labels[s] for s in self.states]
        return out


@dataclass(frozen=True)
class COBreakpoint:
    c_o: float
    k_o: int
    tolerance: float


@dataclass(frozen=True)
class AdmissibilityReport:
    """``positions`` are 0-based transition indices ``t`` (step ``t -> t+1``);
    ``-1`` flags an impossible initial state."""

    inadmissible_transition_count: int
    positions: tuple[int, ...]

    @property
    def admissible(self) -> bool:
        return self.inadmissible_transition_count == 0


def _context(model, x, ctx):
    if ctx is None:
        return InferenceContext(model, x)
    if ctx.model is not model or not np.array_equal(ctx.x, as_observations(model, x)):
        raise ValidationError("inference context was built for another model or sequence")
    return ctx


def _finish(ctx: InferenceContext, path: np.ndarray, method: str, score: float, params: dict) -> DecodedPath:
    report = risks(ctx.model, ctx.x, path, ctx=ctx)
    return DecodedPath(states=path, method=method, risks=report,
                       admissible=bool(np.isfinite(report.raw_log_posterior)), score=float(score),
                       params=params)


def hybrid_scores(ctx: InferenceContext, c: float, b: float) -> tuple[np.ndarray, float]:
    """Run the hybrid max-product recursion; return the path and its score."""
    n, ny = ctx.n, ctx.model.y_alphabet.size
    delta = np.zeros(ny)
    if c:
        delta = delta + c * ctx.log_start
    if b:
        delta = delta + b * ctx.log_marginals[0]
    back = np.empty((max(n - 1, 0), ny), dtype=np.intp)
    trans = c * ctx.log_blocks if c else None
    for t in range(n - 1):
        cand = delta[:, None] + trans[t] if c else np.broadcast_to(delta[:, None], (ny, ny))
        back[t] = np.argmax(cand, axis=0)
        delta = cand[back[t], np.arange(ny)]
        if b:
            delta = delta + b * ctx.log_marginals[t + 1]
    last = int(np.argmax(delta))
    score = float(delta[last])
    if score == -np.inf:
        raise DecoderRefusal("no admissible hidden path reaches the end of the sequence")
    path = np.empty(n, dtype=np.intp)
    path[-1] = last
    for t in range(n - 2, -1, -1):
        path[t] = back[t, path[t + 1]]
    return path, score


def hybrid_decode(model: PmmModel, x: Sequence[int], cfg: HybridConfig = HybridConfig(),
                  ctx: InferenceContext | None = None) -> DecodedPath:
    """Maximize ``C log p(s^n|x^n) + B sum log p_t(s_t|x^n)``.

    ``score`` is reported in the joint form used by the recursion, i.e. with
    ``log p(x^n, s^n)`` in place of the posterior.
    """
    ctx = _context(model, x, ctx)
    path, score = hybrid_scores(ctx, cfg.c_weight, cfg.b_weight)
    return _finish(ctx, path, "hybrid", score, {"C": cfg.c_weight, "B": cfg.b_weight})


def viterbi_decode(model: PmmModel, x: Sequence[int], ctx: InferenceContext | None = None) -> DecodedPath:
    ctx = _context(model, x, ctx)
    path, score = hybrid_scores(ctx, 1.0, 0.0)
    return _finish(ctx, path, "viterbi", score, {})


def pmap_decode(model: PmmModel, x: Sequence[int], ctx: InferenceContext | None = None) -> DecodedPath:
    ctx = _context(model, x, ctx)
    path = np.argmax(ctx.marginals, axis=1).astype(np.intp)
    return _finish(ctx, path, "pmap", float(ctx.pointwise_log_scores(path).sum()), {})


def _window_blocks(ctx: InferenceContext, w: int, k: int) -> np.ndarray:
    """``p(s_w^{w+k-1} | x^n)`` for every block, shape ``(|Y|,) * k``."""
    ny = ctx.model.y_alphabet.size
    table = np.array(ctx.marginals[w])
    for j in range(w, w + k - 1):
        table = (table.reshape(-1, ny)[:, :, None] * ctx.transitions[j][None, :, :]).reshape(-1)
    return table.reshape((ny,) * k)


def rabiner_decode(model: PmmModel, x: Sequence[int], k: int, ctx: InferenceContext | None = None,
                   budget: int = RABINER_BUDGET) -> DecodedPath:
    """Maximize the sum over windows of the block posteriors ``p(s_t^{t+k-1} | x^n)``.

    The dynamic program runs over tuples of the last ``k-1`` symbols.
    Refuses when ``|Y|^(k-1) * n`` table entries exceed ``budget``.
    """
    ctx = _context(model, x, ctx)
    n, ny = ctx.n, ctx.model.y_alphabet.size
    if not 2 <= k <= n:
        raise ValidationError(f"block length k={k} outside 2..{n}")
    width = ny ** (k - 1)
    required = width * n
    if required > budget:
        raise BudgetExceeded("Rabiner score table entries", required, budget)
    rest = width // ny
    delta = np.zeros(width)
    back = np.empty((n - k + 1, width), dtype=np.intp)
    for w in range(n - k + 1):
        blocks = _window_blocks(ctx, w, k).reshape(ny, rest, ny)
        cand = delta.reshape(ny, rest)[:, :, None] + blocks
        arg = np.argmax(cand, axis=0)
        back[w] = arg.reshape(-1)
        delta = np.take_along_axis(cand, arg[None], axis=0)[0].reshape(-1)
    code = int(np.argmax(delta))
    score = float(delta[code])
    path = np.empty(n, dtype=np.intp)
    tail = np.unravel_index(code, (ny,) * (k - 1)) if k > 1 else ()
    path[n - k + 1:] = tail
    for w in range(n - k, -1, -1):
        first = back[w, code]
        path[w] = first
        code = first * rest + code // ny
    return _finish(ctx, path, "rabiner", score, {"k": k})


def brute_force_decode(model: PmmModel, x: Sequence[int], objective: str, max_paths: int = MAX_PATHS,
                       **params) -> DecodedPath:
    """Exact optimizer by enumerating ``Y^n``; objectives r1, rinf, hybrid(c, b), rabiner(k), rk(k)."""
    enum = PathEnumeration(model, x, max_paths=max_paths)
    scores = enum.objective(objective, **params)
    i = enum.best(scores)
    ctx = InferenceContext(model, x)
    return _finish(ctx, enum.paths[i].copy(), "oracle", float(scores[i]), {"objective": objective, **params})


def check_admissibility(model: PmmModel, x: Sequence[int], y: Sequence[int]) -> AdmissibilityReport:
    x = as_observations(model, x)
    y = np.asarray(y, dtype=np.intp)
    if y.shape != x.shape:
        raise ValidationError("hidden path and observations differ in length")
    if y.min() < 0 or y.max() >= model.y_alphabet.size:
        raise ValidationError("hidden path index outside the Y alphabet")
    positions = []
    if model.dense_initial[x[0], y[0]] <= 0:
        positions.append(-1)
    if x.size > 1:
        steps = model.dense_kernel[x[:-1], y[:-1], x[1:], y[1:]]
        positions.extend(int(t) for t in np.flatnonzero(steps <= 0))
    return AdmissibilityReport(len(positions), tuple(positions))


def _is_viterbi(ctx: InferenceContext, c: float, best: float, atol: float) -> tuple[bool, np.ndarray]:
    path, _ = hybrid_scores(ctx, c, 1.0)
    return ctx.path_log_joint(path) >= best - atol, path


def find_c0(model: PmmModel, x: Sequence[int], c_max: float = DEFAULT_C_MAX, tol: float = 1e-6,
            ctx: InferenceContext | None = None, atol: float = 1e-9) -> COBreakpoint:
    """Smallest ``C`` beyond which the ``(C, 1)`` hybrid path is a Viterbi path.

    Bisection on ``[0, c_max]`` using Viterbi-score equality (within ``atol``)
    as predicate; the bracket is then sharpened to the exact crossing of the
    two bracketing paths' score lines when that crossing lies inside it.
    Raises :class:`C0ExceedsBound` when the predicate fails at ``c_max``.
    """
    ctx = _context(model, x, ctx)
    vit, _ = hybrid_scores(ctx, 1.0, 0.0)
    best = ctx.path_log_joint(vit)
    ok, _ = _is_viterbi(ctx, 0.0, best, atol)
    if ok:
        return COBreakpoint(0.0, 0, tol)
    ok, hi_path = _is_viterbi(ctx, c_max, best, atol)
    if not ok:
        raise C0ExceedsBound(c_max)
    lo, hi = 0.0, float(c_max)
    lo_path, _ = hybrid_scores(ctx, 0.0, 1.0)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        ok, path = _is_viterbi(ctx, mid, best, atol)
        if ok:
            hi, hi_path = mid, path
        else:
            lo, lo_path = mid, path
    c_o = hi
    a_lo, a_hi = ctx.pointwise_log_scores(lo_path).sum(), ctx.pointwise_log_scores(hi_path).sum()
    l_lo, l_hi = ctx.path_log_joint(lo_path), ctx.path_log_joint(hi_path)
    if l_hi > l_lo:
        cross = (a_lo - a_hi) / (l_hi - l_lo)
        if lo <= cross <= hi:
            c_o = float(cross)
    return COBreakpoint(c_o, math.ceil(c_o), tol)


@dataclass(frozen=True)
class SweepPoint:
    c: float
    r1_bar: float
    rinf_bar: float
    changed: bool
    states: np.ndarray


def c_sweep(model: PmmModel, x: Sequence[int], cs: Sequence[float], b: float = 1.0,
            ctx: InferenceContext | None = None) -> list[SweepPoint]:
    """Hybrid paths along a grid of ``C``; ``changed`` marks a path different from the previous one."""
    ctx = _context(model, x, ctx)
    out, prev = [], None
    for c in cs:
        path = hybrid_decode(model, x, HybridConfig(float(c), b), ctx=ctx)
        changed = prev is not None and not np.array_equal(prev, path.states)
        out.append(SweepPoint(float(c), path.risks.r1_bar, path.risks.rinf_bar, changed, path.states))
        prev = path.states
    return out
