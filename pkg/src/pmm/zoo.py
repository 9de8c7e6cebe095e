"""Constructors for the four PMM families and their closed-form facts.

State orderings are fixed so that model files are bit-reproducible:

* related chains: ``(1,a), (1,b), (2,a), (2,b)``;
* regime switching: one block per regime, X-major inside the block;
* semi-Markov: ``(a,1), (a,2), ..., (a,K_a)`` grouped by ``a``;
* semi-Markov regime: one block per ``(regime, counter)``, X-major inside.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .core import Alphabet, PmmModel, stationary_distribution
from .errors import ParameterError, StationaryError, ValidationError

STOCHASTIC_TOL = 1e-12
INTERVAL_SLACK = 1e-12


def _clean(a: np.ndarray) -> np.ndarray:
    # cancellation in expressions like p' - p*lambda leaves -1e-17 residues
    return np.where(np.abs(a) < 1e-15, 0.0, a)


def _check_stochastic(name: str, m: np.ndarray, tol: float = STOCHASTIC_TOL) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValidationError(f"{name} must be a square matrix, got shape {m.shape}")
    if np.any(m < 0) or np.any(m > 1):
        raise ValidationError(f"{name} has entries outside [0, 1]")
    bad = np.flatnonzero(np.abs(m.sum(axis=1) - 1.0) > tol)
    if bad.size:
        raise ValidationError(f"{name} row {int(bad[0])} sums to {m.sum(axis=1)[bad[0]]!r}")
    return m


def _initial_or_stationary(model: PmmModel, initial) -> PmmModel:
    if initial is not None:
        return model.with_initial(initial)
    st = stationary_distribution(model)
    return model.with_initial(st.probs) if st.is_unique else model


# -- related Markov chains ----------------------------------------------------


@dataclass(frozen=True)
class RelatedChainsParams:
    """Marginal chains ``P_X = [[p, 1-p], [q, 1-q]]``, ``P_Y = [[p', 1-p'], [q', 1-q']]``
    coupled through the dependence parameters ``lambda1, lambda2, mu1, mu2``.
    ``p_prime``/``q_prime`` default to ``p``/``q``."""

    p: float
    q: float
    lambda1: float
    lambda2: float
    mu1: float
    mu2: float
    p_prime: float | None = None
    q_prime: float | None = None

    def __post_init__(self):
        if self.p_prime is None:
            object.__setattr__(self, "p_prime", self.p)
        if self.q_prime is None:
            object.__setattr__(self, "q_prime", self.q)

    @property
    def same_marginals(self) -> bool:
        return self.p == self.p_prime and self.q == self.q_prime

    def intervals(self) -> dict[str, tuple[float, float]]:
        p, q, pp, qq = self.p, self.q, self.p_prime, self.q_prime
        return {
            "lambda1": (max((pp + p - 1) / p, 0.0), min(pp / p, 1.0)),
            "lambda2": (max((qq + p - 1) / p, 0.0), min(qq / p, 1.0)),
            "mu1": (max((pp + q - 1) / q, 0.0), min(pp / q, 1.0)),
            "mu2": (max((qq + q - 1) / q, 0.0), min(qq / q, 1.0)),
        }

    def validate(self) -> None:
        for name in ("p", "q"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ParameterError(name, v, (0.0, 1.0), f"{name}={v!r} must lie in (0, 1]")
        for name in ("p_prime", "q_prime"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ParameterError(name, v, (0.0, 1.0))
        for name, (lo, hi) in self.intervals().items():
            v = getattr(self, name)
            if not lo - INTERVAL_SLACK <= v <= hi + INTERVAL_SLACK:
                raise ParameterError(name, v, (lo, hi))


@dataclass(frozen=True)
class ThetaRhoParams:
    theta1: float
    theta2: float
    rho1: float
    rho2: float


def related_chains_kernel(params: RelatedChainsParams) -> np.ndarray:
    p, q, pp, qq = params.p, params.q, params.p_prime, params.q_prime
    l1, l2, m1, m2 = params.lambda1, params.lambda2, params.mu1, params.mu2
    k = np.array([
        [p * l1, p * (1 - l1), pp - p * l1, 1 + p * l1 - pp - p],
        [p * l2, p * (1 - l2), qq - p * l2, 1 + p * l2 - qq - p],
        [q * m1, q * (1 - m1), pp - q * m1, 1 + q * m1 - pp - q],
        [q * m2, q * (1 - m2), qq - q * m2, 1 + q * m2 - qq - q],
    ])
    return _clean(k)


RELATED_SUPPORT = ((0, 0), (0, 1), (1, 0), (1, 1))


def build_related_chains(params: RelatedChainsParams, initial=None) -> PmmModel:
    """Four-state PMM whose X and Y marginals are Markov with ``P_X`` and ``P_Y``.

    ``initial`` defaults to the stationary distribution when it is unique and
    to the uniform law otherwise.
    """
    params.validate()
    k = related_chains_kernel(params)
    model = PmmModel(Alphabet(["1", "2"]), Alphabet(["a", "b"]), RELATED_SUPPORT,
                     np.full(4, 0.25), k)
    return _initial_or_stationary(model, initial)


def to_theta_rho(params: RelatedChainsParams) -> ThetaRhoParams:
    """Re-express the last two kernel columns through ``theta_i`` and ``rho_i``.

    Row ``(1,y)`` moves to ``(2,a)`` with probability ``(1-p) theta``, row
    ``(2,y)`` with ``(1-q) rho``.
    """
    if not params.same_marginals:
        raise ValidationError("theta/rho parametrization requires p' = p and q' = q")
    p, q = params.p, params.q
    if p == 1 or q == 1:
        raise ZeroDivisionError("theta/rho parametrization undefined for p = 1 or q = 1")
    return ThetaRhoParams(
        theta1=p * (1 - params.lambda1) / (1 - p),
        theta2=(q - p * params.lambda2) / (1 - p),
        rho1=(p - q * params.mu1) / (1 - q),
        rho2=q * (1 - params.mu2) / (1 - q),
    )


def theta_rho_kernel(p: float, q: float, lambda1: float, lambda2: float, mu1: float, mu2: float,
                     tr: ThetaRhoParams) -> np.ndarray:
    """Kernel of the related-chains model written in the theta/rho block form."""
    return np.array([
        [p * lambda1, p * (1 - lambda1), (1 - p) * tr.theta1, (1 - p) * (1 - tr.theta1)],
        [p * lambda2, p * (1 - lambda2), (1 - p) * tr.theta2, (1 - p) * (1 - tr.theta2)],
        [q * mu1, q * (1 - mu1), (1 - q) * tr.rho1, (1 - q) * (1 - tr.rho1)],
        [q * mu2, q * (1 - mu2), (1 - q) * tr.rho2, (1 - q) * (1 - tr.rho2)],
    ])


def _require_same_marginals(params: RelatedChainsParams) -> None:
    if not params.same_marginals:
        raise ValidationError("closed-form stationary law and reversibility need P_X = P_Y")


def _is_degenerate(params: RelatedChainsParams) -> bool:
    return (math.isclose(params.p + params.q, 1.0, abs_tol=1e-12)
            and params.lambda1 == 1 and params.mu2 == 1
            and params.lambda2 == 0 and params.mu1 == 0)


def related_chains_c(params: RelatedChainsParams) -> float:
    """``c = pi(a | 1)`` of the stationary law (requires ``P_X = P_Y``)."""
    _require_same_marginals(params)
    if _is_degenerate(params):
        raise StationaryError("no unique stationary distribution")
    p, q = params.p, params.q
    l1, l2, m1, m2 = params.lambda1, params.lambda2, params.mu1, params.mu2
    num = p * (l2 - m2) + q * (m1 - m2) + m2
    den = q * (m1 - m2) + p * (l2 - l1) + 1
    return num / den


def related_chains_stationary(params: RelatedChainsParams) -> np.ndarray:
    """Closed-form stationary law over ``(1,a), (1,b), (2,a), (2,b)``."""
    c = related_chains_c(params)
    pi1 = params.q / (1 - params.p + params.q)
    return np.array([pi1 * c, pi1 * (1 - c), pi1 * (1 - c), 1 - pi1 * (2 - c)])


def reversibility_targets(params: RelatedChainsParams) -> tuple[float, float, float]:
    """``(c, c_Y, c_X)``: the chain is reversible iff ``c == c_Y == c_X``.

    ``c_Y`` makes the reversed chain HMM-DN, ``c_X`` makes it HMM-DN by X.
    """
    c = related_chains_c(params)
    p, q = params.p, params.q
    l1, l2, m1 = params.lambda1, params.lambda2, params.mu1
    c_y = q * m1 / (q * m1 + p * (1 - l1))
    c_x = l2 / (l2 - l1 + 1)
    return c, c_y, c_x


def check_reversibility(params: RelatedChainsParams, tol: float = 1e-9) -> bool:
    c, c_y, c_x = reversibility_targets(params)
    return abs(c - c_y) <= tol and abs(c - c_x) <= tol


# -- regime switching ---------------------------------------------------------


@dataclass
class RegimeSwitchingSpec:
    """Hidden regimes driving the transition matrix of the observed chain.

    ``inter_regime`` maps ``(a, b)`` to the X-matrix used on an ``a -> b``
    switch.  ``None`` selects the new-regime completion ``P_ab = P_b``, the
    only choice that yields a Markov-switching model.
    """

    regimes: Sequence[str]
    x_labels: Sequence[str]
    regime_kernel: np.ndarray
    in_regime: Mapping[str, np.ndarray]
    inter_regime: Mapping[tuple[str, str], np.ndarray] | None = None

    @property
    def uses_default_inter_regime(self) -> bool:
        return self.inter_regime is None


def _inter_regime_matrices(regimes, rates, in_regime, inter_regime, nx) -> dict:
    out = {}
    reachable = {(a, b) for i, a in enumerate(regimes) for j, b in enumerate(regimes)
                 if a != b and rates[i, j] > 0}
    if inter_regime is None:
        return {(a, b): in_regime[b] for a, b in reachable}
    given = {tuple(k): v for k, v in inter_regime.items()}
    for pair in sorted(reachable - set(given), key=lambda ab: (regimes.index(ab[0]), regimes.index(ab[1]))):
        raise ValidationError(f"missing inter-regime matrix for reachable pair {pair[0]}->{pair[1]}")
    for pair in given:
        if pair not in reachable:
            raise ValidationError(f"inter-regime matrix given for unreachable pair {pair[0]}->{pair[1]}")
    for pair, m in given.items():
        m = _check_stochastic(f"inter-regime matrix {pair[0]}->{pair[1]}", m)
        if m.shape != (nx, nx):
            raise ValidationError(f"inter-regime matrix {pair} has shape {m.shape}, expected ({nx}, {nx})")
        out[pair] = m
    return out


def _regime_parts(spec: RegimeSwitchingSpec):
    regimes = [str(r) for r in spec.regimes]
    nx = len(spec.x_labels)
    rates = np.asarray(spec.regime_kernel, dtype=float)
    if rates.shape != (len(regimes), len(regimes)):
        raise ValidationError(f"regime kernel has shape {rates.shape}, expected {len(regimes)}x{len(regimes)}")
    _check_stochastic("regime kernel", rates)
    in_regime = {}
    for r in regimes:
        if r not in spec.in_regime:
            raise ValidationError(f"missing in-regime matrix for regime {r}")
        m = _check_stochastic(f"in-regime matrix {r}", spec.in_regime[r])
        if m.shape != (nx, nx):
            raise ValidationError(f"in-regime matrix {r} has shape {m.shape}, expected ({nx}, {nx})")
        in_regime[r] = m
    inter = _inter_regime_matrices(regimes, rates, in_regime, spec.inter_regime, nx)
    return regimes, rates, in_regime, inter


def build_regime_switching(spec: RegimeSwitchingSpec, initial=None) -> PmmModel:
    """PMM over ``X x regimes`` with block kernel ``r_a P_a`` / ``r_ab P_ab``."""
    regimes, rates, in_regime, inter = _regime_parts(spec)
    nx, nr = len(spec.x_labels), len(regimes)
    q = np.zeros((nr * nx, nr * nx))
    for i, a in enumerate(regimes):
        for j, b in enumerate(regimes):
            if rates[i, j] == 0:
                continue
            block = in_regime[a] if a == b else inter[(a, b)]
            q[i * nx:(i + 1) * nx, j * nx:(j + 1) * nx] = rates[i, j] * block
    support = [(x, r) for r in range(nr) for x in range(nx)]
    model = PmmModel(Alphabet(spec.x_labels), Alphabet(regimes), support,
                     np.full(nr * nx, 1.0 / (nr * nx)), q)
    return _initial_or_stationary(model, initial)


def proportion_condition(eps1: float, eps2: float, delta1: float, delta2: float,
                         tol: float = 1e-12) -> bool:
    """True when the three-regime matrices share the stationary proportion of ones."""
    return abs((1 - delta2) / (2 - delta1 - delta2) - eps2 / (eps1 + eps2)) <= tol


def three_regime_spec(r_b: float, eps1: float = 0.2, eps2: float = 0.3, delta1: float = 0.4,
                      delta2: float = 0.1, inter_regime=None, c_to_b: float = 0.01) -> RegimeSwitchingSpec:
    """Regimes A (long blocks), B (independent draws), C (short blocks).

    A and C cannot reach each other directly; B leaves to either side with
    probability ``(1 - r_b) / 2``, A enters B with probability 0.05 and C
    with probability ``c_to_b``.
    """
    pa = np.array([[1 - eps1, eps1], [eps2, 1 - eps2]])
    b1 = eps2 / (eps1 + eps2)
    pb = np.array([[b1, 1 - b1], [b1, 1 - b1]])
    pc = np.array([[delta1, 1 - delta1], [1 - delta2, delta2]])
    py = np.array([[0.95, 0.05, 0.0], [(1 - r_b) / 2, r_b, (1 - r_b) / 2], [0.0, c_to_b, 1 - c_to_b]])
    return RegimeSwitchingSpec(["A", "B", "C"], ["1", "2"], py, {"A": pa, "B": pb, "C": pc}, inter_regime)


def _flip(v: float) -> np.ndarray:
    return np.array([[v, 1 - v], [1 - v, v]])


def symmetric_regime_spec(r: float, eps: float, p_ab: float, p_ba: float, p_bc: float,
                          p_cb: float) -> RegimeSwitchingSpec:
    """Three-regime model with symmetric matrices, used to show that X can be Markov."""
    py = np.array([[r, 1 - r, 0.0], [(1 - r) / 2, r, (1 - r) / 2], [0.0, 1 - r, r]])
    in_regime = {"A": _flip(1 - eps), "B": _flip(0.5), "C": _flip(eps)}
    inter = {("A", "B"): _flip(p_ab), ("B", "A"): _flip(p_ba),
             ("B", "C"): _flip(p_bc), ("C", "B"): _flip(p_cb)}
    return RegimeSwitchingSpec(["A", "B", "C"], ["1", "2"], py, in_regime, inter)


def check_regime_degenerate(r: float, eps: float, p_ab: float, p_ba: float, p_bc: float,
                            p_cb: float, tol: float = 1e-9) -> tuple[bool, float]:
    """Whether the symmetric three-regime model makes X a Markov chain.

    Returns ``(is_markov_x, alpha)`` where ``alpha`` is the stay probability of
    the resulting symmetric X-chain.
    """
    if r == 1:
        raise ValidationError("r = 1 leaves the regimes uncoupled")
    shift = r / (1 - r) * (0.5 - eps)
    left = shift + p_ab
    mid = (p_ba + p_bc) / 2
    right = p_cb - shift
    ok = abs(left - mid) <= tol and abs(mid - right) <= tol
    alpha = r * (1 - eps) + (1 - r) * p_ab
    return ok, alpha


# -- semi-Markov ----------------------------------------------------------------


@dataclass
class SemiMarkovSpec:
    """Jump chain plus finitely supported sojourn laws.

    ``sojourn[a][k-1] = q_a(k)`` for ``k = 1..k_max``.  A single-state spec
    must use the renewal jump matrix ``[[1.0]]``.
    """

    states: Sequence[str]
    jump: np.ndarray
    sojourn: Mapping[str, Sequence[float]]
    k_max: int


def geometric_sojourn(stay: float, k_max: int) -> np.ndarray:
    """``q(k) = (1 - stay) stay^(k-1)`` truncated at ``k_max`` and renormalized."""
    k = np.arange(1, k_max + 1)
    q = (1 - stay) * stay ** (k - 1)
    return q / q.sum()


def _semi_parts(spec: SemiMarkovSpec):
    states = [str(s) for s in spec.states]
    jump = _check_stochastic("jump matrix", spec.jump)
    if jump.shape != (len(states), len(states)):
        raise ValidationError(f"jump matrix has shape {jump.shape}, expected {len(states)}x{len(states)}")
    if len(states) > 1 and np.any(np.diag(jump) != 0):
        raise ValidationError("jump matrix must have a zero diagonal")
    k_max = int(spec.k_max)
    if k_max < 1:
        raise ValidationError("k_max must be positive")
    laws = {}
    for s in states:
        if s not in spec.sojourn:
            raise ValidationError(f"missing sojourn law for state {s}")
        q = np.asarray(spec.sojourn[s], dtype=float)
        if np.any(q < 0):
            raise ValidationError(f"sojourn law of {s} has negative mass")
        beyond = q[k_max:].sum() + max(0.0, 1.0 - q.sum())
        if beyond > 1e-12:
            raise ValidationError(
                f"sojourn law of {s} leaves mass {beyond:.3g} beyond k_max={k_max}; "
                "truncate and renormalize explicitly")
        q = q[:k_max]
        if abs(q.sum() - 1.0) > 1e-12:
            raise ValidationError(f"sojourn law of {s} sums to {q.sum()!r}")
        laws[s] = np.concatenate([q, np.zeros(k_max - q.size)])
    # survival q_a(>= k)
    surv = {s: np.cumsum(laws[s][::-1])[::-1] for s in states}
    lengths = {s: int(np.flatnonzero(surv[s] > 0).max()) + 1 for s in states}
    return states, jump, laws, surv, lengths, k_max


def build_semi_markov(spec: SemiMarkovSpec, initial=None) -> PmmModel:
    """PMM ``(state, remaining sojourn)``; Y counts down to 1 before a jump."""
    states, jump, laws, _, lengths, k_max = _semi_parts(spec)
    support = [(a, k - 1) for a, s in enumerate(states) for k in range(1, lengths[s] + 1)]
    index = {z: i for i, z in enumerate(support)}
    t = np.zeros((len(support), len(support)))
    for (a, kk), i in index.items():
        if kk > 0:
            t[i, index[(a, kk - 1)]] = 1.0
            continue
        for b, sb in enumerate(states):
            if jump[a, b] == 0:
                continue
            for ll in range(lengths[sb]):
                t[i, index[(b, ll)]] += jump[a, b] * laws[sb][ll]
    model = PmmModel(Alphabet(states), Alphabet([str(k) for k in range(1, k_max + 1)]), support,
                     np.full(len(support), 1.0 / len(support)), t)
    return _initial_or_stationary(model, initial)


def semi_markov_stationary(spec: SemiMarkovSpec) -> np.ndarray:
    """``pi(a, k) = pi_a q_a(>= k) / sum_b pi_b mu_b`` in builder support order."""
    states, jump, laws, surv, lengths, k_max = _semi_parts(spec)
    st = stationary_distribution(PmmModel(Alphabet(states), Alphabet(["*"]),
                                          [(a, 0) for a in range(len(states))],
                                          np.full(len(states), 1.0 / len(states)), jump))
    if not st.is_unique:
        raise StationaryError("jump matrix has no unique stationary distribution")
    pi = st.probs
    means = np.array([np.dot(np.arange(1, k_max + 1), laws[s]) for s in states])
    norm = float(pi @ means)
    return np.array([pi[a] * surv[s][k] / norm
                     for a, s in enumerate(states) for k in range(lengths[s])])


@dataclass
class SemiMarkovRegimeSpec:
    """Regime switching whose regime durations follow ``semi``'s sojourn laws."""

    semi: SemiMarkovSpec
    x_labels: Sequence[str]
    in_regime: Mapping[str, np.ndarray]
    inter_regime: Mapping[tuple[str, str], np.ndarray] | None = None

    @property
    def uses_default_inter_regime(self) -> bool:
        return self.inter_regime is None


def build_semi_markov_regime(spec: SemiMarkovRegimeSpec, initial=None) -> PmmModel:
    """PMM ``(X, (regime, counter))``; X moves with ``P_a`` inside a sojourn and
    with ``p_ab P_ab q_b(l)`` when the counter of regime ``a`` expires."""
    regimes, jump, laws, _, lengths, _ = _semi_parts(spec.semi)
    nx = len(spec.x_labels)
    in_regime = {}
    for r in regimes:
        if r not in spec.in_regime:
            raise ValidationError(f"missing in-regime matrix for regime {r}")
        m = _check_stochastic(f"in-regime matrix {r}", spec.in_regime[r])
        if m.shape != (nx, nx):
            raise ValidationError(f"in-regime matrix {r} has shape {m.shape}, expected ({nx}, {nx})")
        in_regime[r] = m
    inter = _inter_regime_matrices(regimes, jump, in_regime, spec.inter_regime, nx)
    if len(regimes) == 1:
        inter[(regimes[0], regimes[0])] = in_regime[regimes[0]]

    ystates = [(a, k) for a, s in enumerate(regimes) for k in range(lengths[s])]
    yindex = {v: i for i, v in enumerate(ystates)}
    ny = len(ystates)
    t = np.zeros((ny * nx, ny * nx))
    for (a, k), yi in yindex.items():
        rows = slice(yi * nx, (yi + 1) * nx)
        if k > 0:
            yj = yindex[(a, k - 1)]
            t[rows, yj * nx:(yj + 1) * nx] = in_regime[regimes[a]]
            continue
        for b, sb in enumerate(regimes):
            if jump[a, b] == 0:
                continue
            block = inter[(regimes[a], sb)]
            for ll in range(lengths[sb]):
                yj = yindex[(b, ll)]
                t[rows, yj * nx:(yj + 1) * nx] += jump[a, b] * laws[sb][ll] * block
    ylabels = [f"{regimes[a]}:{k + 1}" for a, k in ystates]
    support = [(x, yi) for yi in range(ny) for x in range(nx)]
    model = PmmModel(Alphabet(spec.x_labels), Alphabet(ylabels), support,
                     np.full(ny * nx, 1.0 / (ny * nx)), t)
    return _initial_or_stationary(model, initial)


def regime_of_label(label: str) -> str:
    """Regime part of a ``"regime:counter"`` hidden label."""
    return label.rsplit(":", 1)[0]
