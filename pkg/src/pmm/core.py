"""Pairwise Markov model representation and structural analysis.

A pairwise Markov model (PMM) is a homogeneous Markov chain ``Z = (X, Y)`` on a
state space ``Z`` that may be a strict subset of ``X x Y``.  ``X`` is the
observed coordinate, ``Y`` the hidden one.  The model stores the chain in
linear space over an explicit support; algorithms that need the product
structure use the dense ``(|X|, |Y|, |X|, |Y|)`` view instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .errors import BudgetExceeded, StationaryError, ValidationError

__all__ = [
    "Alphabet",
    "PmmModel",
    "Violation",
    "validate_model",
    "ensure_valid",
    "ModelClassification",
    "classify_model",
    "StationaryDistribution",
    "stationary_distribution",
    "reverse_chain",
    "MarginalDeviation",
    "check_marginal_markov",
]

ROW_SUM_TOL = 1e-12
DENSE_STATIONARY_LIMIT = 2000


@dataclass(frozen=True)
class Alphabet:
    """Ordered set of distinct symbol labels; index ``i`` names ``labels[i]``."""

    labels: tuple[str, ...]

    def __init__(self, labels: Sequence):
        labels = tuple(str(s) for s in labels)
        if not labels:
            raise ValidationError("alphabet must not be empty")
        if len(set(labels)) != len(labels):
            raise ValidationError(f"alphabet labels are not unique: {labels}")
        object.__setattr__(self, "labels", labels)

    @property
    def size(self) -> int:
        return len(self.labels)

    def __len__(self) -> int:
        return len(self.labels)

    def __iter__(self):
        return iter(self.labels)

    @cached_property
    def _lookup(self) -> dict[str, int]:
        return {s: i for i, s in enumerate(self.labels)}

    def index(self, label) -> int:
        try:
            return self._lookup[str(label)]
        except KeyError:
            raise ValidationError(f"unknown symbol {label!r}; alphabet is {list(self.labels)}") from None

    def encode(self, labels: Sequence) -> np.ndarray:
        return np.array([self.index(s) for s in labels], dtype=np.intp)

    def decode(self, indices: Sequence[int]) -> list[str]:
        return [self.labels[int(i)] for i in indices]


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PmmModel:
    """Homogeneous Markov chain on an explicit subset of ``X x Y``.

    Attributes
    ----------
    x_alphabet, y_alphabet : Alphabet
        Observed and hidden alphabets.
    support : tuple of (x_index, y_index)
        The state space, in kernel row order.
    initial : (S,) ndarray
        Initial distribution over the support.
    kernel : (S, S) ndarray
        ``kernel[i, j] = P(Z_{t+1} = support[j] | Z_t = support[i])``.

    Construction checks shapes and index ranges only; use
    :func:`validate_model` for the probabilistic invariants.
    """

    x_alphabet: Alphabet
    y_alphabet: Alphabet
    support: tuple[tuple[int, int], ...]
    initial: np.ndarray = field(repr=False)
    kernel: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not isinstance(self.x_alphabet, Alphabet):
            object.__setattr__(self, "x_alphabet", Alphabet(self.x_alphabet))
        if not isinstance(self.y_alphabet, Alphabet):
            object.__setattr__(self, "y_alphabet", Alphabet(self.y_alphabet))
        support = tuple((int(x), int(y)) for x, y in self.support)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "initial", _frozen(self.initial))
        object.__setattr__(self, "kernel", _frozen(self.kernel))
        s = len(support)
        if s == 0:
            raise ValidationError("support must not be empty")
        if len(set(support)) != s:
            raise ValidationError("support contains duplicate states")
        for x, y in support:
            if not (0 <= x < self.x_alphabet.size and 0 <= y < self.y_alphabet.size):
                raise ValidationError(f"support state {(x, y)} outside alphabets")
        if self.initial.shape != (s,):
            raise ValidationError(f"initial has shape {self.initial.shape}, expected ({s},)")
        if self.kernel.shape != (s, s):
            raise ValidationError(f"kernel has shape {self.kernel.shape}, expected ({s}, {s})")

    @classmethod
    def full(cls, x_labels, y_labels, initial, kernel) -> "PmmModel":
        """Model on the whole product, ordered X-major within Y blocks."""
        xa, ya = Alphabet(x_labels), Alphabet(y_labels)
        support = [(x, y) for y in range(ya.size) for x in range(xa.size)]
        return cls(xa, ya, support, initial, kernel)

    @property
    def n_states(self) -> int:
        return len(self.support)

    @cached_property
    def state_index(self) -> dict[tuple[int, int], int]:
        return {z: i for i, z in enumerate(self.support)}

    @cached_property
    def support_mask(self) -> np.ndarray:
        m = np.zeros((self.x_alphabet.size, self.y_alphabet.size), dtype=bool)
        for x, y in self.support:
            m[x, y] = True
        m.setflags(write=False)
        return m

    @cached_property
    def dense_kernel(self) -> np.ndarray:
        """``K[x, y, x2, y2] = p(x2, y2 | x, y)``, zero outside the support."""
        nx, ny = self.x_alphabet.size, self.y_alphabet.size
        k = np.zeros((nx, ny, nx, ny))
        xs = np.array([z[0] for z in self.support])
        ys = np.array([z[1] for z in self.support])
        k[xs[:, None], ys[:, None], xs[None, :], ys[None, :]] = self.kernel
        k.setflags(write=False)
        return k

    @cached_property
    def dense_initial(self) -> np.ndarray:
        p = np.zeros((self.x_alphabet.size, self.y_alphabet.size))
        for (x, y), v in zip(self.support, self.initial):
            p[x, y] = v
        p.setflags(write=False)
        return p

    @cached_property
    def log_kernel(self) -> np.ndarray:
        """Dense log-kernel; impossible transitions are ``-inf``."""
        with np.errstate(divide="ignore"):
            lk = np.log(self.dense_kernel)
        lk.setflags(write=False)
        return lk

    def with_initial(self, initial) -> "PmmModel":
        return PmmModel(self.x_alphabet, self.y_alphabet, self.support, initial, self.kernel)

    def state_label(self, i: int) -> str:
        x, y = self.support[i]
        return f"({self.x_alphabet.labels[x]},{self.y_alphabet.labels[y]})"


# -- validation ---------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    kind: str  # "row_sum" | "range" | "initial_sum" | "initial_range"
    location: tuple
    message: str


def validate_model(model: PmmModel, tol: float = ROW_SUM_TOL) -> list[Violation]:
    """Every row-sum, range and normalization violation; empty means valid."""
    out: list[Violation] = []
    k = model.kernel
    bad = np.argwhere((k < 0) | (k > 1 + tol) | ~np.isfinite(k))
    for i, j in bad:
        out.append(Violation("range", (int(i), int(j)),
                             f"kernel[{i}][{j}] = {k[i, j]!r} not in [0, 1]"))
    sums = k.sum(axis=1)
    for i in np.flatnonzero(np.abs(sums - 1.0) > tol):
        out.append(Violation("row_sum", (int(i),),
                             f"kernel row {i} {model.state_label(i)} sums to {sums[i]!r}"))
    p = model.initial
    for i in np.flatnonzero((p < 0) | (p > 1 + tol) | ~np.isfinite(p)):
        out.append(Violation("initial_range", (int(i),), f"initial[{i}] = {p[i]!r} not in [0, 1]"))
    if abs(p.sum() - 1.0) > tol:
        out.append(Violation("initial_sum", (), f"initial sums to {p.sum()!r}"))
    return out


def ensure_valid(model: PmmModel, tol: float = 1e-9) -> None:
    report = validate_model(model, tol)
    if report:
        head = "; ".join(v.message for v in report[:5])
        more = f" (+{len(report) - 5} more)" if len(report) > 5 else ""
        raise ValidationError(f"invalid model: {head}{more}")


# -- classification -----------------------------------------------------------


@dataclass(frozen=True)
class ModelClassification:
    is_hmm: bool
    is_markov_switching: bool
    is_hmm_dn: bool
    is_hmm_dn_by_x: bool
    tolerance: float


def _spread(values: np.ndarray, valid: np.ndarray, axis: int) -> float:
    """Max over the other axes of (max - min) along ``axis`` among valid entries."""
    hi = np.where(valid, values, -np.inf).max(axis=axis)
    lo = np.where(valid, values, np.inf).min(axis=axis)
    d = hi - lo
    d = d[np.isfinite(d)]
    return float(d.max()) if d.size else 0.0


def classify_model(model: PmmModel, tol: float = 1e-9) -> ModelClassification:
    """Place the model in the HMM / Markov-switching / HMM-DN hierarchy.

    Conditionals whose conditioning event has probability zero are skipped.
    """
    ensure_valid(model)
    k = model.dense_kernel
    mask = model.support_mask
    nx, ny = mask.shape

    # p(y2 | x, y): must not depend on x
    py = k.sum(axis=2)
    valid = np.broadcast_to(mask[:, :, None], py.shape)
    hmm_dn = _spread(py, valid, axis=0) <= tol

    # p(x2 | x, y): must not depend on y
    px = k.sum(axis=3)
    valid = np.broadcast_to(mask[:, :, None], px.shape)
    hmm_dn_x = _spread(px, valid, axis=1) <= tol

    # p(x2 | x, y, y2)
    den = py[:, :, None, :]
    pos = (den > 0) & mask[:, :, None, None]
    with np.errstate(invalid="ignore", divide="ignore"):
        cond = np.where(pos, k / np.where(den > 0, den, 1.0), 0.0)
    pos = np.broadcast_to(pos, cond.shape)
    switching = hmm_dn and _spread(cond, pos, axis=1) <= tol

    # additionally independent of x: flatten (x, y) into one axis
    flat = cond.reshape(nx * ny, nx, ny)
    fpos = pos.reshape(nx * ny, nx, ny)
    hmm = switching and _spread(flat, fpos, axis=0) <= tol
    return ModelClassification(bool(hmm), bool(switching), bool(hmm_dn), bool(hmm_dn_x), tol)


# -- stationary analysis ------------------------------------------------------


@dataclass(frozen=True)
class StationaryDistribution:
    probs: np.ndarray
    is_unique: bool


def _lazy_power(kernel, start: np.ndarray, tol=1e-14, max_iter=1_000_000) -> np.ndarray:
    # (I + T)/2 has the same fixed vectors and is aperiodic
    p = start.copy()
    for _ in range(max_iter):
        q = 0.5 * (p + kernel.T @ p)
        if np.abs(q - p).sum() < tol:
            return q / q.sum()
        p = q
    return p / p.sum()


def stationary_distribution(model: PmmModel, null_threshold: float = 1e-10) -> StationaryDistribution:
    """Left fixed vector of the kernel.

    ``is_unique`` is False when the eigenvalue-1 eigenspace has dimension
    above one, detected as more than one singular value of ``T' - I`` below
    ``null_threshold``.  In that case the returned vector is the stationary
    law reached from the model's initial distribution.
    """
    t = model.kernel
    s = t.shape[0]
    if s <= DENSE_STATIONARY_LIMIT:
        a = t.T - np.eye(s)
        sv = scipy.linalg.svdvals(a)
        null_dim = int(np.sum(sv < null_threshold))
        if null_dim > 1:
            return StationaryDistribution(_lazy_power(t, model.initial), False)
        m = np.vstack([a, np.ones((1, s))])
        rhs = np.zeros(s + 1)
        rhs[-1] = 1.0
        pi, *_ = np.linalg.lstsq(m, rhs, rcond=None)
    else:
        a = (scipy.sparse.csr_matrix(t).T - scipy.sparse.identity(s)).tolil()
        a[s - 1, :] = np.ones(s)
        rhs = np.zeros(s)
        rhs[-1] = 1.0
        try:
            lu = scipy.sparse.linalg.splu(a.tocsc())
            pi = lu.solve(rhs)
        except RuntimeError:  # exactly singular factor: several closed classes
            return StationaryDistribution(_lazy_power(scipy.sparse.csr_matrix(t), model.initial), False)
        if not np.all(np.isfinite(pi)) or np.abs(pi @ t - pi).max() > 1e-8:
            return StationaryDistribution(_lazy_power(scipy.sparse.csr_matrix(t), model.initial), False)
    pi = np.where(np.abs(pi) < 1e-15, 0.0, pi)
    pi = np.clip(pi, 0.0, None)
    pi = pi / pi.sum()
    return StationaryDistribution(pi, True)


def reverse_chain(model: PmmModel) -> PmmModel:
    """Time-reversed chain ``pR[i, j] = pi[j] T[j, i] / pi[i]`` started at ``pi``."""
    ensure_valid(model)
    st = stationary_distribution(model)
    if not st.is_unique:
        raise StationaryError("reverse_chain: stationary distribution is not unique")
    pi = st.probs
    zero = np.flatnonzero(pi <= 0)
    if zero.size:
        raise StationaryError(
            f"reverse_chain: stationary mass is zero at state {model.state_label(int(zero[0]))}")
    # ratio first so the diagonal is reproduced bit for bit
    ratio = pi[None, :] / pi[:, None]
    rev = ratio * model.kernel.T
    return PmmModel(model.x_alphabet, model.y_alphabet, model.support, pi, rev)


# -- marginal Markov property ---------------------------------------------------


@dataclass(frozen=True)
class MarginalDeviation:
    """Largest ``|p(v_{t+1} | v^t) - p(v_{t+1} | v_t)|`` over enumerated prefixes."""

    marginal: str
    horizon: int
    max_deviation: float
    prefixes: int


def _marginal_deviation(model, pi, coord: int, horizon: int, max_paths: int) -> MarginalDeviation:
    t = model.kernel
    labels = np.array([z[coord] for z in model.support])
    nv = (model.y_alphabet if coord == 1 else model.x_alphabet).size
    onehot = (labels[:, None] == np.arange(nv)[None, :]).astype(float)  # (S, V)

    # stationary one-step conditional p(v2 | v)
    flow = (pi[:, None] * t) @ onehot  # (S, V): P(Z_t = z, V_{t+1} = v2)
    joint = onehot.T @ flow  # (V, V)
    mass = joint.sum(axis=1)
    one_step = np.divide(joint, mass[:, None], out=np.zeros_like(joint), where=mass[:, None] > 0)

    # prefixes of length 1 with positive mass
    f = onehot.T * pi[None, :]  # (V, S)
    last = np.arange(nv)
    keep = f.sum(axis=1) > 0
    f, last = f[keep], last[keep]
    worst = 0.0
    count = 0
    for _ in range(1, horizon):
        count += f.shape[0]
        g = f @ t  # (P, S)
        nxt = g @ onehot  # (P, V): P(v^t, v_{t+1})
        cond = nxt / f.sum(axis=1, keepdims=True)
        dev = np.abs(cond - one_step[last])
        worst = max(worst, float(dev.max()))
        pidx, vidx = np.nonzero(nxt > 0)
        if pidx.size > max_paths:
            raise BudgetExceeded("check_marginal_markov prefixes", int(pidx.size), max_paths)
        f = g[pidx] * onehot.T[vidx]
        last = vidx
    name = "y" if coord == 1 else "x"
    return MarginalDeviation(name, horizon, worst, count)


def check_marginal_markov(model: PmmModel, horizon: int, marginals: Sequence[str] = ("y", "x"),
                          max_paths: int = 10**7) -> dict[str, MarginalDeviation]:
    """Test whether the marginal processes are Markov, by exact summation.

    The chain is started from its stationary distribution.  For every
    prefix ``v^t`` (t < horizon) of positive probability the conditional law
    of the next symbol is compared with the one-step law given ``v_t`` only.
    Refuses with :class:`BudgetExceeded` when a level holds more than
    ``max_paths`` prefixes; the search is never truncated silently.
    """
    if horizon < 3:
        raise ValueError("horizon must be at least 3")
    ensure_valid(model)
    pi = stationary_distribution(model).probs
    out = {}
    for name in marginals:
        coord = {"y": 1, "x": 0}[name]
        out[name] = _marginal_deviation(model, pi, coord, horizon, max_paths)
    return out
