import numpy as np
import pytest
from hypothesis import given, settings

from pmm.core import (
    Alphabet,
    PmmModel,
    check_marginal_markov,
    classify_model,
    reverse_chain,
    stationary_distribution,
    validate_model,
)
from pmm.errors import BudgetExceeded, StationaryError, ValidationError
from pmm.zoo import (
    RelatedChainsParams,
    SemiMarkovSpec,
    build_regime_switching,
    build_related_chains,
    build_semi_markov,
    related_chains_stationary,
    three_regime_spec,
)

from conftest import DISPLAY_PARAMS, REVERSIBLE_PARAMS, small_models

DISPLAY_KERNEL = np.array([
    [0.286, 0.264, 0.264, 0.186],
    [0.44, 0.11, 0.36, 0.09],
    [0.48, 0.32, 0.07, 0.13],
    [0.72, 0.08, 0.08, 0.12],
])
DISPLAY_REVERSED = np.array([
    [0.2860000, 0.2247273, 0.2451570, 0.2441157],
    [0.5168932, 0.1100000, 0.3200000, 0.0531068],
    [0.5168932, 0.3600000, 0.0700000, 0.0531068],
    [0.5485923, 0.1355759, 0.1958318, 0.1200000],
])


def test_alphabet_roundtrip():
    a = Alphabet(["u", "v", "w"])
    assert a.size == 3
    assert a.decode(a.encode(["w", "u"])) == ["w", "u"]
    with pytest.raises(ValidationError):
        Alphabet(["u", "u"])


def test_identity_kernel_is_valid():
    m = PmmModel.full(["0"], ["0", "1"], [1.0, 0.0], np.eye(2))
    assert validate_model(m) == []


def test_bad_row_reported_with_location():
    m = PmmModel.full(["0"], ["0", "1"], [1.0, 0.0], [[0.5, 0.6], [0.0, 1.0]])
    report = validate_model(m)
    assert [(v.kind, v.location) for v in report] == [("row_sum", (0,))]


def test_display_kernel_is_valid(display_model):
    assert validate_model(display_model) == []
    np.testing.assert_allclose(display_model.kernel, DISPLAY_KERNEL, atol=1e-12)


def test_related_chains_classification(display_model):
    cls = classify_model(display_model)
    assert cls.is_hmm_dn and cls.is_hmm_dn_by_x


def test_reversed_chain_leaves_both_classes(display_model):
    cls = classify_model(reverse_chain(display_model))
    assert not cls.is_hmm_dn and not cls.is_hmm_dn_by_x


def test_semi_markov_is_not_hmm_dn():
    spec = SemiMarkovSpec(["A", "B"], np.array([[0, 1.0], [1.0, 0]]),
                          {"A": [0.2, 0.5, 0.3], "B": [0.6, 0.4]}, k_max=3)
    assert not classify_model(build_semi_markov(spec)).is_hmm_dn


def test_class_chain_on_regime_model():
    cls = classify_model(build_regime_switching(three_regime_spec(0.2)))
    assert cls.is_markov_switching and cls.is_hmm_dn
    assert not cls.is_hmm


def test_hmm_is_detected():
    # emission depends on the new hidden state only
    a = np.array([[0.9, 0.1], [0.2, 0.8]])
    b = np.array([[0.7, 0.3], [0.4, 0.6]])
    k = np.einsum("yz,zx->yz x".replace(" ", ""), a, b)  # (y, y2, x2)
    kernel = np.zeros((4, 4))
    for x in range(2):
        for y in range(2):
            for x2 in range(2):
                for y2 in range(2):
                    kernel[y * 2 + x, y2 * 2 + x2] = k[y, y2, x2]
    m = PmmModel.full(["0", "1"], ["0", "1"], [0.25] * 4, kernel)
    cls = classify_model(m)
    assert cls.is_hmm and cls.is_markov_switching and cls.is_hmm_dn


@settings(max_examples=40, deadline=None)
@given(small_models())
def test_class_implications(model):
    cls = classify_model(model)
    assert not cls.is_hmm or cls.is_markov_switching
    assert not cls.is_markov_switching or cls.is_hmm_dn


def test_doubly_stochastic_is_uniform():
    m = PmmModel.full(["0"], ["0", "1"], [1.0, 0.0], [[0.3, 0.7], [0.7, 0.3]])
    st = stationary_distribution(m)
    assert st.is_unique
    np.testing.assert_allclose(st.probs, [0.5, 0.5], atol=1e-12)


def test_display_stationary_matches_closed_form(display_model):
    st = stationary_distribution(display_model)
    c = 0.605 / 0.914
    pi1 = 0.8 / 1.25
    oracle = np.array([pi1 * c, pi1 * (1 - c), pi1 * (1 - c), 1 - pi1 * (2 - c)])
    np.testing.assert_allclose(st.probs, oracle, atol=1e-12)
    np.testing.assert_allclose(st.probs, [0.4236324, 0.2163676, 0.2163676, 0.1436324], atol=1e-7)
    # independent direct solve of pi (T - I) = 0 with normalization
    t = display_model.kernel
    a = np.vstack([(t.T - np.eye(4))[:-1], np.ones(4)])
    direct = np.linalg.solve(a, [0, 0, 0, 1.0])
    np.testing.assert_allclose(st.probs, direct, atol=1e-12)
    np.testing.assert_allclose(st.probs, related_chains_stationary(DISPLAY_PARAMS), atol=1e-12)


def test_degenerate_stationary_not_unique():
    params = RelatedChainsParams(p=0.4, q=0.6, lambda1=1.0, lambda2=0.0, mu1=0.0, mu2=1.0)
    assert not stationary_distribution(build_related_chains(params)).is_unique


@settings(max_examples=40, deadline=None)
@given(small_models())
def test_stationary_is_fixed(model):
    st = stationary_distribution(model)
    assert abs(st.probs.sum() - 1) < 1e-12
    if st.is_unique:
        np.testing.assert_allclose(st.probs @ model.kernel, st.probs, atol=1e-10)


def test_large_sparse_support_uses_sparse_solver():
    # ring with a self loop, 2500 states: stationary law is uniform
    s = 2500
    k = np.zeros((s, s))
    k[np.arange(s), (np.arange(s) + 1) % s] = 0.5
    k[np.arange(s), np.arange(s)] = 0.5
    m = PmmModel(Alphabet(["0"]), Alphabet([str(i) for i in range(s)]), [(0, i) for i in range(s)],
                 np.full(s, 1.0 / s), k)
    st = stationary_distribution(m)
    assert st.is_unique
    np.testing.assert_allclose(st.probs, 1.0 / s, atol=1e-12)


def test_reversed_display_matrix(display_model):
    rev = reverse_chain(display_model)
    np.testing.assert_allclose(rev.kernel, DISPLAY_REVERSED, atol=1e-6)
    np.testing.assert_array_equal(np.diag(rev.kernel), np.diag(display_model.kernel))
    np.testing.assert_allclose(rev.initial, stationary_distribution(display_model).probs)


def test_symmetric_kernel_is_self_reverse():
    k = np.array([[0.2, 0.5, 0.3], [0.5, 0.1, 0.4], [0.3, 0.4, 0.3]])
    m = PmmModel.full(["0"], ["0", "1", "2"], [1 / 3] * 3, k)
    np.testing.assert_allclose(reverse_chain(m).kernel, k, atol=1e-12)


def test_reversible_parameters_give_same_chain():
    m = build_related_chains(REVERSIBLE_PARAMS)
    np.testing.assert_allclose(reverse_chain(m).kernel, m.kernel, atol=1e-9)


def test_rounded_reversible_parameters_nearly_reversible():
    params = RelatedChainsParams(0.55, 0.8, 0.3, 0.65, 0.446875, 0.8894737)
    m = build_related_chains(params)
    np.testing.assert_allclose(reverse_chain(m).kernel, m.kernel, atol=1e-8)


def test_reverse_refuses_zero_mass():
    # state 2 is transient
    k = np.array([[0.5, 0.5, 0.0], [0.5, 0.5, 0.0], [0.5, 0.0, 0.5]])
    m = PmmModel.full(["0"], ["a", "b", "c"], [1 / 3] * 3, k)
    with pytest.raises(StationaryError, match="c"):
        reverse_chain(m)


@settings(max_examples=30, deadline=None)
@given(small_models())
def test_double_reverse_is_identity(model):
    st = stationary_distribution(model)
    if not st.is_unique or st.probs.min() < 1e-6:
        return
    twice = reverse_chain(reverse_chain(model))
    np.testing.assert_allclose(twice.kernel, model.kernel, atol=1e-9)
    np.testing.assert_array_equal(np.diag(reverse_chain(model).kernel), np.diag(model.kernel))


def test_reversed_display_marginals_are_markov(display_model):
    dev = check_marginal_markov(reverse_chain(display_model), horizon=4)
    assert dev["y"].max_deviation < 1e-10
    assert dev["x"].max_deviation < 1e-10


def test_semi_markov_marginal_not_markov():
    spec = SemiMarkovSpec(["A", "B"], np.array([[0, 1.0], [1.0, 0]]),
                          {"A": [0.1, 0.1, 0.8], "B": [0.5, 0.5]}, k_max=3)
    dev = check_marginal_markov(build_semi_markov(spec), horizon=5, marginals=("x",))
    assert dev["x"].max_deviation > 1e-3


@settings(max_examples=25, deadline=None)
@given(small_models(max_states=6))
def test_hmm_dn_implies_markov_y(model):
    if classify_model(model).is_hmm_dn:
        assert check_marginal_markov(model, horizon=5, marginals=("y",))["y"].max_deviation < 1e-10


def test_random_hmm_dn_has_markov_y(rng):
    # build HMM-DN: p(y2|y) p(x2|x, y, y2)
    for _ in range(10):
        a = rng.dirichlet(np.ones(2), size=2)
        e = rng.dirichlet(np.ones(3), size=(3, 2, 2))
        kernel = np.zeros((6, 6))
        for x in range(3):
            for y in range(2):
                for x2 in range(3):
                    for y2 in range(2):
                        kernel[y * 3 + x, y2 * 3 + x2] = a[y, y2] * e[x, y, y2, x2]
        m = PmmModel.full(["0", "1", "2"], ["0", "1"], np.full(6, 1 / 6), kernel)
        assert classify_model(m).is_hmm_dn
        assert check_marginal_markov(m, horizon=5, marginals=("y",))["y"].max_deviation < 1e-10


def test_marginal_check_refuses_over_budget(display_model):
    with pytest.raises(BudgetExceeded):
        check_marginal_markov(display_model, horizon=12, max_paths=100)
    with pytest.raises(ValueError):
        check_marginal_markov(display_model, horizon=2)
