"""Exhaustive enumeration over all hidden paths ``Y^n``.

Independent of the forward/backward code: every quantity is obtained by
summing joint path probabilities computed straight from the kernel.  Only
usable for tiny instances; it is the reference the fast algorithms are
checked against.
"""

from __future__ import annotations

import itertools
from functools import cached_property
from typing import Sequence

import numpy as np

from .core import PmmModel
from .errors import BudgetExceeded, ZeroProbabilityError
from .inference import as_observations

MAX_PATHS = 10**7


class PathEnumeration:
    """All ``|Y|^n`` paths with their joint and posterior probabilities."""

    def __init__(self, model: PmmModel, x: Sequence[int], max_paths: int = MAX_PATHS):
        self.model = model
        self.x = as_observations(model, x)
        self.n = n = self.x.size
        ny = model.y_alphabet.size
        total = ny**n
        if total > max_paths:
            raise BudgetExceeded("enumerated paths", total, max_paths)
        self.paths = np.array(list(itertools.product(range(ny), repeat=n)), dtype=np.intp).reshape(total, n)
        k = model.dense_kernel
        joint = model.dense_initial[self.x[0], self.paths[:, 0]].astype(float)
        for t in range(n - 1):
            joint = joint * k[self.x[t], self.paths[:, t], self.x[t + 1], self.paths[:, t + 1]]
        self.likelihood = float(joint.sum())
        if not self.likelihood > 0:
            raise ZeroProbabilityError("observation sequence has probability zero")
        self.joint = joint
        self.posterior = joint / self.likelihood

    @cached_property
    def log_posterior(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.posterior)

    @cached_property
    def marginals(self) -> np.ndarray:
        ny = self.model.y_alphabet.size
        return np.stack([np.bincount(self.paths[:, t], weights=self.posterior, minlength=ny)
                         for t in range(self.n)])

    def block_posterior(self, u: int, v: int) -> np.ndarray:
        """``p(s_u^v | x^n)`` for every path (0-based inclusive bounds)."""
        ny = self.model.y_alphabet.size
        codes = np.zeros(len(self.paths), dtype=np.intp)
        for t in range(u, v + 1):
            codes = codes * ny + self.paths[:, t]
        table = np.bincount(codes, weights=self.posterior, minlength=ny ** (v - u + 1))
        return table[codes]

    def _log_block(self, u: int, v: int) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.block_posterior(u, v))

    # objectives (larger is better) evaluated on every path

    def sum_log_marginals(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            lm = np.log(self.marginals)
        return lm[np.arange(self.n), self.paths].sum(axis=1)

    def r1_bar(self) -> np.ndarray:
        return -self.sum_log_marginals() / self.n

    def rinf_bar(self) -> np.ndarray:
        return -self.log_posterior / self.n

    def rk_bar(self, k: int) -> np.ndarray:
        total = np.zeros(len(self.paths))
        for t in range(1 - k, self.n):
            u = max(t + 1, 1) - 1
            v = min(t + k, self.n) - 1
            total = total + self._log_block(u, v)
        return -total / self.n

    def hybrid_score(self, c: float, b: float) -> np.ndarray:
        out = np.zeros(len(self.paths))
        if c:
            out = out + c * self.log_posterior
        if b:
            out = out + b * self.sum_log_marginals()
        return out

    def rabiner_score(self, k: int) -> np.ndarray:
        return sum(self.block_posterior(t, t + k - 1) for t in range(self.n - k + 1))

    def objective(self, name: str, **params) -> np.ndarray:
        """Score to maximize for a named objective."""
        if name == "r1":
            return self.sum_log_marginals()
        if name == "rinf":
            return self.log_posterior
        if name == "hybrid":
            return self.hybrid_score(params.get("c", 1.0), params.get("b", 1.0))
        if name == "rabiner":
            return self.rabiner_score(int(params["k"]))
        if name == "rk":
            return -self.rk_bar(int(params["k"]))
        raise ValueError(f"unknown objective {name!r}")

    def best(self, scores: np.ndarray, tol: float = 1e-12) -> int:
        """Index of the lexicographically first path within ``tol`` of the maximum."""
        top = scores.max()
        if top == -np.inf:
            return 0
        return int(np.flatnonzero(scores >= top - tol * max(1.0, abs(top)))[0])
