"""Exact posterior inference for a PMM given an observed X-sequence.

Given ``x^n`` the hidden process ``Y^n | x^n`` is an inhomogeneous first-order
Markov chain.  :class:`InferenceContext` computes the scaled forward/backward
quantities once and derives from them the pointwise marginals ``p_t(y|x^n)``
and the conditional transitions ``p(y_{t+1} | y_t, x^n)``; every risk and
decoder in the package is built on those two objects.

Arrays are indexed by the hidden symbol: given ``x_t`` the state ``z_t`` is
determined by ``y_t``, and symbols with ``(x_t, y) not in Z`` carry zero mass.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .core import PmmModel, classify_model
from .errors import DecoderRefusal, ValidationError, ZeroProbabilityError


def _log(a):
    with np.errstate(divide="ignore"):
        return np.log(a)


def as_observations(model: PmmModel, x: Sequence[int]) -> np.ndarray:
    x = np.asarray(x, dtype=np.intp)
    if x.ndim != 1 or x.size == 0:
        raise ValidationError("observation sequence must be a non-empty 1-d sequence")
    if x.min() < 0 or x.max() >= model.x_alphabet.size:
        raise ValidationError(f"observation index outside 0..{model.x_alphabet.size - 1}")
    return x


@dataclass(frozen=True)
class ForwardBackwardResult:
    """``log_alpha[t, y] = log p(x^t, y_t)``; ``log_beta[t, y] = log p(x_{t+1}^n | x_t, y_t)``.

    ``log_scales[t]`` is the log of the forward normalizer at step ``t``; their
    sum is ``log_likelihood``.
    """

    log_alpha: np.ndarray
    log_beta: np.ndarray
    log_likelihood: float
    log_scales: np.ndarray


@dataclass(frozen=True)
class PosteriorMarginals:
    probs: np.ndarray  # (n, |Y|), row t is p_t(. | x^n)


class InferenceContext:
    """Cached forward/backward pass for one observation sequence.

    Built once, immutable afterwards and safe to share between decoders.
    Raises :class:`ZeroProbabilityError` when ``p(x^n) = 0``.
    """

    def __init__(self, model: PmmModel, x: Sequence[int]):
        self.model = model
        self.x = as_observations(model, x)
        self.n = int(self.x.size)
        k = model.dense_kernel
        # emission-restricted transition blocks M_t[i, j] = p(x_{t+1}, j | x_t, i)
        self.blocks = k[self.x[:-1], :, self.x[1:], :]
        self.start = np.array(model.dense_initial[self.x[0]])
        self._run()

    def _run(self):
        n, ny = self.n, self.model.y_alphabet.size
        alpha = np.empty((n, ny))
        scale = np.empty(n)
        a = self.start
        for t in range(n):
            if t:
                a = alpha[t - 1] @ self.blocks[t - 1]
            c = a.sum()
            if not c > 0:
                raise ZeroProbabilityError(
                    f"observation sequence has probability zero (first impossible at t={t + 1})")
            scale[t] = c
            alpha[t] = a / c
        beta = np.empty((n, ny))
        beta[-1] = 1.0
        for t in range(n - 2, -1, -1):
            beta[t] = (self.blocks[t] @ beta[t + 1]) / scale[t + 1]
        self.alpha_hat = alpha
        self.beta_hat = beta
        self.scale = scale
        self.log_scales = np.log(scale)
        self.log_likelihood = float(self.log_scales.sum())

    def forward_backward(self) -> ForwardBackwardResult:
        cum = np.cumsum(self.log_scales)
        tail = self.log_likelihood - cum  # sum of log scales after t
        return ForwardBackwardResult(
            log_alpha=_log(self.alpha_hat) + cum[:, None],
            log_beta=_log(self.beta_hat) + tail[:, None],
            log_likelihood=self.log_likelihood,
            log_scales=self.log_scales.copy(),
        )

    @cached_property
    def marginals(self) -> np.ndarray:
        g = self.alpha_hat * self.beta_hat
        g /= g.sum(axis=1, keepdims=True)
        g.setflags(write=False)
        return g

    @cached_property
    def log_marginals(self) -> np.ndarray:
        lm = _log(self.marginals)
        lm.setflags(write=False)
        return lm

    @cached_property
    def transitions(self) -> np.ndarray:
        """``P[t, i, j] = p(y_{t+1} = j | y_t = i, x^n)``; rows of null states are zero."""
        num = self.blocks * self.beta_hat[1:, None, :]
        den = self.beta_hat[:-1, :, None] * self.scale[1:, None, None]
        out = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
        out.setflags(write=False)
        return out

    @cached_property
    def log_transitions(self) -> np.ndarray:
        lt = _log(self.transitions)
        lt.setflags(write=False)
        return lt

    @cached_property
    def log_blocks(self) -> np.ndarray:
        """Joint-form transition scores ``log p(x_{t+1}, j | x_t, i)``."""
        lb = _log(self.blocks)
        lb.setflags(write=False)
        return lb

    @cached_property
    def log_start(self) -> np.ndarray:
        return _log(self.start)

    # -- path functionals --------------------------------------------------

    def path_log_joint(self, y: Sequence[int]) -> float:
        """``log p(x^n, y^n)`` by kernel products."""
        y = np.asarray(y, dtype=np.intp)
        with np.errstate(divide="ignore"):
            lp = np.log(self.start[y[0]])
            if self.n > 1:
                lp = lp + np.log(self.blocks[np.arange(self.n - 1), y[:-1], y[1:]]).sum()
        return float(lp)

    def path_log_posterior(self, y: Sequence[int]) -> float:
        return self.path_log_joint(y) - self.log_likelihood

    def pointwise_log_scores(self, y: Sequence[int]) -> np.ndarray:
        y = np.asarray(y, dtype=np.intp)
        return self.log_marginals[np.arange(self.n), y]

    def chain_log_terms(self, y: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
        """``(log p_t(y_t|x^n), log p(y_{t+1}|y_t, x^n))`` along a path."""
        y = np.asarray(y, dtype=np.intp)
        lp = self.log_marginals[np.arange(self.n), y]
        lt = self.log_transitions[np.arange(self.n - 1), y[:-1], y[1:]]
        return lp, lt


def forward_backward(model: PmmModel, x: Sequence[int]) -> ForwardBackwardResult:
    return InferenceContext(model, x).forward_backward()


def posterior_marginals(model: PmmModel, x: Sequence[int], ctx: InferenceContext | None = None) -> PosteriorMarginals:
    ctx = ctx or InferenceContext(model, x)
    return PosteriorMarginals(np.array(ctx.marginals))


def forward_only_marginals(model: PmmModel, x: Sequence[int], tol: float = 1e-9) -> PosteriorMarginals:
    """Filter ``p(y_t | x^t)``, which equals ``p(y_t | x^n)`` for HMM-DN-by-X models.

    Refuses other models: for them the filter is not the smoothing marginal.
    """
    if not classify_model(model, tol).is_hmm_dn_by_x:
        raise DecoderRefusal("forward-only marginals need an HMM-DN-by-X model")
    x = as_observations(model, x)
    k = model.dense_kernel
    ny = model.y_alphabet.size
    out = np.empty((x.size, ny))
    a = np.array(model.dense_initial[x[0]])
    if not a.sum() > 0:
        raise ZeroProbabilityError("first observation has probability zero")
    out[0] = a / a.sum()
    for t in range(1, x.size):
        m = k[x[t - 1], :, x[t], :]  # p(x_t, y_t | x_{t-1}, y_{t-1})
        den = m.sum(axis=1, keepdims=True)  # p(x_t | x_{t-1}, y_{t-1})
        live = out[t - 1] > 0
        if np.any(den[live, 0] <= 0):
            raise ZeroProbabilityError(f"observation sequence has probability zero at t={t + 1}")
        cond = np.divide(m, den, out=np.zeros_like(m), where=den > 0)
        out[t] = out[t - 1] @ cond
    return PosteriorMarginals(out)


def path_log_posterior(model: PmmModel, x: Sequence[int], y: Sequence[int],
                       ctx: InferenceContext | None = None) -> float:
    """``log p(y^n | x^n)``; ``-inf`` for inadmissible paths."""
    ctx = ctx or InferenceContext(model, x)
    y = np.asarray(y, dtype=np.intp)
    if y.shape != (ctx.n,):
        raise ValidationError("hidden path and observations differ in length")
    return ctx.path_log_posterior(y)


# -- risks ------------------------------------------------------------------


@dataclass
class RiskReport:
    """Logarithmic risks of one path.  Infinite values mark zero-probability terms.

    The ``raw_*`` fields are the unnormalized sums (multiplied by ``-n``
    relative to the risks), convenient for exact score algebra.
    """

    n: int
    r1_bar: float
    rinf_bar: float
    rk_bar: dict[int, float] = field(default_factory=dict)
    hybrid: dict[tuple[float, float], float] = field(default_factory=dict)
    raw_log_posterior: float = 0.0
    raw_pointwise: float = 0.0

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "r1_bar": self.r1_bar,
            "rinf_bar": self.rinf_bar,
            "rk_bar": {str(k): v for k, v in self.rk_bar.items()},
            "hybrid": [{"C": c, "B": b, "value": v} for (c, b), v in self.hybrid.items()],
            "log_posterior": self.raw_log_posterior,
            "sum_log_marginals": self.raw_pointwise,
        }


def weighted(weight: float, value: float) -> float:
    """``weight * value`` with ``0 * inf = 0``."""
    return 0.0 if weight == 0 else weight * value


def block_log_posteriors(lp: np.ndarray, lt: np.ndarray, k: int) -> np.ndarray:
    """``log p(s_u^v | x^n)`` for the blocks of the k-block risk, in order
    ``t = 1-k, ..., n-1`` (block ``s_{max(t+1,1)}^{min(t+k,n)}``).

    Uses the chain factorization ``p(s_u) * prod p(s_{j+1} | s_j)``.
    """
    n = lp.size
    bad_lt = ~np.isfinite(lt)
    cs = np.concatenate([[0.0], np.cumsum(np.where(bad_lt, 0.0, lt))])
    cbad = np.concatenate([[0], np.cumsum(bad_lt)])
    t = np.arange(1 - k, n)
    u = np.maximum(t + 1, 1) - 1  # 0-based first index
    v = np.minimum(t + k, n) - 1  # 0-based last index
    out = lp[u] + (cs[v] - cs[u])
    out = np.where((cbad[v] - cbad[u]) > 0, -np.inf, out)
    return out


def risks(model: PmmModel, x: Sequence[int], y: Sequence[int], ks: Iterable[int] = (),
          cs: Iterable[tuple[float, float]] = (), ctx: InferenceContext | None = None) -> RiskReport:
    """R1, Rinf, the k-block risks for ``ks`` and hybrid risks ``B R1 + C Rinf`` for ``cs``."""
    ctx = ctx or InferenceContext(model, x)
    y = np.asarray(y, dtype=np.intp)
    if y.shape != (ctx.n,):
        raise ValidationError("hidden path and observations differ in length")
    n = ctx.n
    lp, lt = ctx.chain_log_terms(y)
    log_post = ctx.path_log_posterior(y)
    pointwise = float(lp.sum())
    report = RiskReport(n=n, r1_bar=-pointwise / n, rinf_bar=-log_post / n,
                        raw_log_posterior=log_post, raw_pointwise=pointwise)
    for k in ks:
        k = int(k)
        if not 1 <= k <= n:
            raise ValidationError(f"block length k={k} outside 1..{n}")
        report.rk_bar[k] = -float(block_log_posteriors(lp, lt, k).sum()) / n
    for c, b in cs:
        report.hybrid[(float(c), float(b))] = weighted(b, report.r1_bar) + weighted(c, report.rinf_bar)
    return report
