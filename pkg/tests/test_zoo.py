import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pmm.core import check_marginal_markov, classify_model, reverse_chain, stationary_distribution
from pmm.errors import ParameterError, ValidationError
from pmm.zoo import (
    RelatedChainsParams,
    RegimeSwitchingSpec,
    SemiMarkovRegimeSpec,
    SemiMarkovSpec,
    build_regime_switching,
    build_related_chains,
    build_semi_markov,
    build_semi_markov_regime,
    check_regime_degenerate,
    check_reversibility,
    geometric_sojourn,
    proportion_condition,
    regime_of_label,
    related_chains_c,
    related_chains_stationary,
    reversibility_targets,
    semi_markov_stationary,
    symmetric_regime_spec,
    theta_rho_kernel,
    three_regime_spec,
    to_theta_rho,
)

from conftest import DISPLAY_PARAMS, PATTERN_PARAMS, REVERSIBLE_PARAMS


@st.composite
def related_params(draw):
    """Random admissible parameters with P_X = P_Y."""
    p = draw(st.floats(0.05, 0.95))
    q = draw(st.floats(0.05, 0.95))
    probe = RelatedChainsParams(p, q, 0.5, 0.5, 0.5, 0.5)
    vals = {}
    for name, (lo, hi) in probe.intervals().items():
        vals[name] = lo + draw(st.floats(0.0, 1.0)) * (hi - lo)
    return RelatedChainsParams(p, q, **vals)


# -- related chains -------------------------------------------------------------------


@settings(max_examples=60, deadline=None)
@given(related_params())
def test_related_chains_marginals_are_markov(params):
    m = build_related_chains(params)
    k = m.dense_kernel  # (x, y, x', y')
    px = np.array([[params.p, 1 - params.p], [params.q, 1 - params.q]])
    # X-marginal rows do not depend on y, Y-marginal rows do not depend on x
    np.testing.assert_allclose(k.sum(axis=3), np.broadcast_to(px[:, None, :], (2, 2, 2)), atol=1e-12)
    np.testing.assert_allclose(k.sum(axis=2), np.broadcast_to(px[None, :, :], (2, 2, 2)), atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(related_params())
def test_closed_form_stationary(params):
    st_ = stationary_distribution(build_related_chains(params))
    if st_.is_unique:
        np.testing.assert_allclose(st_.probs, related_chains_stationary(params), atol=1e-10)


def test_out_of_interval_names_parameter_and_bounds():
    params = RelatedChainsParams(p=0.55, q=0.8, lambda1=0.52, lambda2=0.5, mu1=0.6, mu2=0.9)
    with pytest.raises(ParameterError) as info:
        build_related_chains(params)
    err = info.value
    assert err.name == "lambda2"
    lo, hi = err.interval
    assert lo == pytest.approx(0.35 / 0.55) and hi == pytest.approx(1.0)


def test_intervals_for_display_params():
    iv = DISPLAY_PARAMS.intervals()
    assert iv["lambda1"] == pytest.approx((0.1 / 0.55, 1.0))
    assert iv["mu1"] == pytest.approx((0.35 / 0.8, 0.55 / 0.8))


def test_theta_rho_pattern_values():
    tr = to_theta_rho(PATTERN_PARAMS)
    assert tr.theta1 == pytest.approx(0.6, abs=1e-12)
    assert tr.theta2 == pytest.approx(0.4, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(related_params())
def test_theta_rho_form_is_same_kernel(params):
    if params.p >= 1 or params.q >= 1:
        return
    tr = to_theta_rho(params)
    k = theta_rho_kernel(params.p, params.q, params.lambda1, params.lambda2, params.mu1, params.mu2, tr)
    np.testing.assert_allclose(k, build_related_chains(params).kernel, atol=1e-12)


def test_theta_rho_rejects_unequal_marginals():
    params = RelatedChainsParams(0.55, 0.8, 0.52, 0.8, 0.6, 0.9, p_prime=0.5, q_prime=0.8)
    with pytest.raises(ValidationError):
        to_theta_rho(params)


def test_reversibility_conditions():
    c, c_y, c_x = reversibility_targets(REVERSIBLE_PARAMS)
    assert c == pytest.approx(c_y, abs=1e-12) and c == pytest.approx(c_x, abs=1e-12)
    assert check_reversibility(REVERSIBLE_PARAMS)
    assert not check_reversibility(DISPLAY_PARAMS)


@settings(max_examples=40, deadline=None)
@given(related_params())
def test_reversibility_predicate_matches_matrix(params):
    try:
        c = related_chains_c(params)
    except Exception:
        return
    st_ = stationary_distribution(build_related_chains(params))
    if not st_.is_unique or st_.probs.min() < 1e-9 or not 0 < c < 1:
        return
    m = build_related_chains(params)
    same = np.allclose(reverse_chain(m).kernel, m.kernel, atol=1e-9)
    if check_reversibility(params, tol=1e-12):
        assert same


# -- regime switching -----------------------------------------------------------------


def test_three_regime_proportions():
    assert proportion_condition(0.2, 0.3, 0.4, 0.1)
    assert not proportion_condition(0.2, 0.3, 0.4, 0.2)


def test_three_regime_is_markov_switching():
    m = build_regime_switching(three_regime_spec(0.4, c_to_b=0.05))
    assert classify_model(m).is_markov_switching
    dev = check_marginal_markov(m, horizon=4, marginals=("y",))
    assert dev["y"].max_deviation < 1e-12


def test_three_regime_stationary_b_share():
    shares = []
    for r_b in (0.2, 0.4, 0.6, 0.8):
        m = build_regime_switching(three_regime_spec(r_b, c_to_b=0.05))
        probs = stationary_distribution(m).probs
        b = [i for i, (_, y) in enumerate(m.support) if m.y_alphabet.labels[y] == "B"]
        shares.append(probs[b].sum())
    # balance of A<->B and C<->B flows, both entry rates 0.05
    oracle = [0.1 / (0.1 + 2 * (1 - r)) for r in (0.2, 0.4, 0.6, 0.8)]
    np.testing.assert_allclose(shares, oracle, atol=1e-12)
    np.testing.assert_array_equal(np.round(100 * np.array(shares)), [6, 8, 11, 20])


def test_regime_x_proportion_is_shared():
    m = build_regime_switching(three_regime_spec(0.6, c_to_b=0.05))
    probs = stationary_distribution(m).probs
    ones = sum(p for p, (x, _) in zip(probs, m.support) if x == 0)
    assert ones == pytest.approx(0.6, abs=1e-12)


def test_default_inter_regime_is_new_regime():
    spec = three_regime_spec(0.2)
    assert spec.uses_default_inter_regime
    m = build_regime_switching(spec)
    k = m.dense_kernel
    a, b = 0, 1
    block = k[:, a, :, b] / k[:, a, :, b].sum(axis=1, keepdims=True)
    np.testing.assert_allclose(block, spec.in_regime["B"], atol=1e-12)


def test_old_regime_completion_is_not_markov_switching():
    spec = three_regime_spec(0.2)
    spec.inter_regime = {("A", "B"): spec.in_regime["A"], ("B", "A"): spec.in_regime["B"],
                         ("B", "C"): spec.in_regime["B"], ("C", "B"): spec.in_regime["C"]}
    cls = classify_model(build_regime_switching(spec))
    assert cls.is_hmm_dn and not cls.is_markov_switching


def test_missing_inter_regime_pair_is_rejected():
    spec = three_regime_spec(0.2)
    spec.inter_regime = {("A", "B"): spec.in_regime["A"]}
    with pytest.raises(ValidationError, match="B->A"):
        build_regime_switching(spec)


def test_bad_regime_matrix_is_rejected():
    spec = RegimeSwitchingSpec(["A"], ["1", "2"], np.array([[1.0]]),
                               {"A": np.array([[0.5, 0.6], [0.5, 0.5]])})
    with pytest.raises(ValidationError):
        build_regime_switching(spec)


def _x_transition(model):
    """Stationary one-step X transition matrix."""
    st_ = stationary_distribution(model).probs
    k = model.kernel
    nx = model.x_alphabet.size
    joint = np.zeros((nx, nx))
    for i, (x, _) in enumerate(model.support):
        for j, (x2, _) in enumerate(model.support):
            joint[x, x2] += st_[i] * k[i, j]
    return joint / joint.sum(axis=1, keepdims=True)


def test_symmetric_regime_condition_makes_x_markov():
    r, eps, p_ab = 0.4, 0.2, 0.3
    shift = r / (1 - r) * (0.5 - eps)
    mid = shift + p_ab
    p_ba, p_bc, p_cb = mid - 0.1, mid + 0.1, mid + shift
    ok, alpha = check_regime_degenerate(r, eps, p_ab, p_ba, p_bc, p_cb)
    assert ok
    m = build_regime_switching(symmetric_regime_spec(r, eps, p_ab, p_ba, p_bc, p_cb))
    assert classify_model(m).is_hmm_dn_by_x
    assert check_marginal_markov(m, horizon=5, marginals=("x",))["x"].max_deviation < 1e-10
    np.testing.assert_allclose(_x_transition(m), [[alpha, 1 - alpha], [1 - alpha, alpha]], atol=1e-12)


def test_symmetric_regime_off_condition_is_not_markov():
    ok, _ = check_regime_degenerate(0.8, 0.1, 0.3, 0.4, 0.4, 0.5)
    assert not ok
    m = build_regime_switching(symmetric_regime_spec(0.8, 0.1, 0.3, 0.4, 0.4, 0.5))
    assert check_marginal_markov(m, horizon=5, marginals=("x",))["x"].max_deviation > 1e-4


# -- semi-Markov ----------------------------------------------------------------------

SEMI = SemiMarkovSpec(["A", "B", "C"],
                      np.array([[0, 0.5, 0.5], [0.7, 0, 0.3], [1.0, 0, 0]]),
                      {"A": [0.2, 0.5, 0.3], "B": [1.0], "C": [0.1, 0.2, 0.3, 0.4]}, k_max=4)


def test_semi_markov_support_and_stationary():
    m = build_semi_markov(SEMI)
    assert len(m.support) == 3 + 1 + 4
    st_ = stationary_distribution(m)
    assert st_.is_unique
    np.testing.assert_allclose(st_.probs, semi_markov_stationary(SEMI), atol=1e-12)


def test_semi_markov_countdown():
    m = build_semi_markov(SEMI)
    idx = {z: i for i, z in enumerate(m.support)}
    # (C, 3) must move to (C, 2) with certainty
    row = m.kernel[idx[(2, 2)]]
    assert row[idx[(2, 1)]] == 1.0 and row.sum() == 1.0


def test_sample_realization_is_admissible():
    # (B,2),(B,1),(C,4),(C,3),(C,2),(C,1),(A,1),(B,4),(B,3),(B,2)
    spec = SemiMarkovSpec(["A", "B", "C"], np.array([[0, 0.5, 0.5], [0.5, 0, 0.5], [0.5, 0.5, 0]]),
                          {s: [0.25] * 4 for s in "ABC"}, k_max=4)
    m = build_semi_markov(spec)
    idx = {z: i for i, z in enumerate(m.support)}
    z = [(1, 1), (1, 0), (2, 3), (2, 2), (2, 1), (2, 0), (0, 0), (1, 3), (1, 2), (1, 1)]
    assert all(m.kernel[idx[a], idx[b]] > 0 for a, b in zip(z, z[1:]))


def test_geometric_sojourn_matches_markov_chain():
    # geometric sojourns make X itself Markov
    spec = SemiMarkovSpec(["A", "B"], np.array([[0, 1.0], [1.0, 0]]),
                          {"A": geometric_sojourn(0.6, 60), "B": geometric_sojourn(0.3, 60)}, k_max=60)
    m = build_semi_markov(spec)
    assert check_marginal_markov(m, horizon=4, marginals=("x",))["x"].max_deviation < 1e-9


def test_sojourn_mass_beyond_k_max_is_rejected():
    spec = SemiMarkovSpec(["A", "B"], np.array([[0, 1.0], [1.0, 0]]),
                          {"A": [0.5, 0.3, 0.2], "B": [1.0]}, k_max=2)
    with pytest.raises(ValidationError, match="beyond k_max"):
        build_semi_markov(spec)


def test_nonzero_jump_diagonal_is_rejected():
    spec = SemiMarkovSpec(["A", "B"], np.array([[0.5, 0.5], [1.0, 0]]), {"A": [1.0], "B": [1.0]}, k_max=1)
    with pytest.raises(ValidationError, match="diagonal"):
        build_semi_markov(spec)


def test_semi_markov_regime_is_hmm_dn():
    spec = SemiMarkovRegimeSpec(SEMI, ["1", "2"], {
        "A": np.array([[0.9, 0.1], [0.2, 0.8]]),
        "B": np.array([[0.5, 0.5], [0.5, 0.5]]),
        "C": np.array([[0.1, 0.9], [0.8, 0.2]]),
    })
    m = build_semi_markov_regime(spec)
    assert m.n_states == 2 * 8
    assert classify_model(m).is_hmm_dn
    assert stationary_distribution(m).is_unique
    assert regime_of_label(m.y_alphabet.labels[-1]) == "C"


def test_single_regime_semi_markov_regime():
    semi = SemiMarkovSpec(["A"], np.array([[1.0]]), {"A": [0.5, 0.5]}, k_max=2)
    pa = np.array([[0.7, 0.3], [0.4, 0.6]])
    m = build_semi_markov_regime(SemiMarkovRegimeSpec(semi, ["1", "2"], {"A": pa}))
    # X evolves with P_A throughout
    np.testing.assert_allclose(_x_transition(m), pa, atol=1e-12)


def test_independence_parameters_give_product_kernel():
    p, q = 0.55, 0.8
    m = build_related_chains(RelatedChainsParams(p, q, lambda1=p, lambda2=q, mu1=p, mu2=q))
    px = np.array([[p, 1 - p], [q, 1 - q]])
    np.testing.assert_allclose(m.dense_kernel, np.einsum("ac,bd->abcd", px, px), atol=1e-12)


def test_theta_special_values():
    p = 0.55
    tr = to_theta_rho(RelatedChainsParams(p, 0.8, lambda1=p, lambda2=0.8, mu1=0.6, mu2=0.9))
    assert tr.theta1 == pytest.approx(p, abs=1e-12)
    assert tr.theta2 == pytest.approx((0.8 - 0.44) / 0.45, abs=1e-12)
    # (1 - p) theta2 is the (1,b) -> (2,a) entry
    m = build_related_chains(DISPLAY_PARAMS)
    assert (1 - p) * to_theta_rho(DISPLAY_PARAMS).theta2 == pytest.approx(m.kernel[1, 2], abs=1e-12)


def test_theta_rho_undefined_at_p_one():
    with pytest.raises(ZeroDivisionError):
        to_theta_rho(RelatedChainsParams(1.0, 0.5, 1.0, 0.5, 1.0, 0.5))


def test_single_regime_kernel_is_in_regime_matrix():
    pa = np.array([[0.7, 0.3], [0.1, 0.9]])
    m = build_regime_switching(RegimeSwitchingSpec(["A"], ["1", "2"], np.array([[1.0]]), {"A": pa}))
    np.testing.assert_allclose(m.kernel, pa, atol=0)


def test_degenerate_example_half():
    ok, alpha = check_regime_degenerate(0.5, 0.3, 0.3, 0.4, 0.6, 0.7)
    assert ok and alpha == pytest.approx(0.5)
    m = build_regime_switching(symmetric_regime_spec(0.5, 0.3, 0.3, 0.4, 0.6, 0.7))
    assert check_marginal_markov(m, horizon=5, marginals=("x",))["x"].max_deviation < 1e-10


def test_degenerate_collapses_at_half_eps():
    ok, _ = check_regime_degenerate(0.7, 0.5, 0.4, 0.3, 0.5, 0.4)
    assert ok


def test_table_regime_model_has_non_markov_x():
    m = build_regime_switching(three_regime_spec(0.2))
    assert check_marginal_markov(m, horizon=5, marginals=("x",))["x"].max_deviation > 1e-6


def test_semi_markov_counter_is_not_markov():
    spec = SemiMarkovSpec(["A", "B"], np.array([[0, 1.0], [1.0, 0]]),
                          {"A": [0.1, 0.1, 0.8], "B": [0.5, 0.5]}, k_max=3)
    assert check_marginal_markov(build_semi_markov(spec), horizon=5, marginals=("y",))["y"].max_deviation > 0


def test_alternating_point_mass_chain():
    spec = SemiMarkovSpec(["A", "B"], np.array([[0, 1.0], [1.0, 0]]), {"A": [1.0], "B": [1.0]}, k_max=1)
    m = build_semi_markov(spec)
    np.testing.assert_array_equal(m.kernel, [[0, 1], [1, 0]])


def _path_probs(model, n, project):
    """Probability of every projected (x, y) path of length n."""
    out = {}
    k, init = model.kernel, model.initial
    s = len(model.support)
    probs = {(i,): init[i] for i in range(s) if init[i] > 0}
    for _ in range(n - 1):
        probs = {p + (j,): v * k[p[-1], j] for p, v in probs.items() for j in range(s) if k[p[-1], j] > 0}
    for p, v in probs.items():
        key = tuple(project(model.support[i]) for i in p)
        out[key] = out.get(key, 0.0) + v
    return out


def test_geometric_semi_regime_equals_plain_regime_switching():
    stay = {"A": 0.5, "B": 0.5}
    kmax = 60
    in_regime = {"A": np.array([[0.9, 0.1], [0.3, 0.7]]), "B": np.array([[0.2, 0.8], [0.6, 0.4]])}
    semi = SemiMarkovSpec(["A", "B"], np.array([[0, 1.0], [1.0, 0]]),
                          {r: geometric_sojourn(g, kmax) for r, g in stay.items()}, k_max=kmax)
    sm = build_semi_markov_regime(SemiMarkovRegimeSpec(semi, ["1", "2"], in_regime))
    plain = build_regime_switching(RegimeSwitchingSpec(["A", "B"], ["1", "2"],
                                                       np.array([[0.5, 0.5], [0.5, 0.5]]), in_regime))
    labels = sm.y_alphabet.labels
    a = _path_probs(sm, 4, lambda z: (z[0], regime_of_label(labels[z[1]])))
    b = _path_probs(plain, 4, lambda z: (z[0], plain.y_alphabet.labels[z[1]]))
    assert a.keys() == b.keys()
    # truncation at kmax perturbs probabilities by about 0.5**60
    assert max(abs(a[key] - b[key]) for key in a) < 1e-12
