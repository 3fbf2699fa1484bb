import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from neutral_supply.dcgrid import REFERENCE_SUPPLIES, dcgrid_systems
from neutral_supply.decompose import construct_pair, two_system_plant
from neutral_supply.errors import InvalidInput, Undecided
from neutral_supply.linalg import block_diag, is_neg_def, lambda_max
from neutral_supply.lmi import (
    FEASIBLE,
    INFEASIBLE,
    UNDECIDED,
    LmiProblem,
    dissipativity_lmi,
    dissipativity_residual,
    find_additive_lyapunov,
    find_multiplier,
    multiplier_condition,
    neutral_multiplier,
    robust_dissipativity_check,
    robust_stability_check,
)
from neutral_supply.model import (
    InterconnectionSet,
    LtiSystem,
    NetworkGraph,
    QuadraticSupply,
    scaling_matrix,
)
from neutral_supply.testing import default_rng, random_pair


def first_order():
    return np.array([[-1.0]]), np.array([[1.0]]), np.array([[1.0]]), np.array([[0.0]])


def swap_set(n_v1, n_v2):
    # v1 = w2 and v2 = w1 on the stacked two-system plant
    return InterconnectionSet((scaling_matrix(n_v1, n_v2, 1.0),))


def entrywise_lmi(A, B, C, D, s, P):
    # independent assembly: outer factors of the quadratic form
    n, m = B.shape
    p = C.shape[0]
    left = np.block([[np.eye(n), np.zeros((n, m))], [A, B]])
    right = np.block([[np.zeros((m, n)), np.eye(m)], [C, D]])
    mid1 = np.block([[np.zeros((n, n)), P], [P, np.zeros((n, n))]])
    mid2 = -s.matrix
    out = np.zeros((n + m, n + m))
    for a in range(n + m):
        for b in range(n + m):
            out[a, b] = left[:, a] @ mid1 @ left[:, b] + right[:, a] @ mid2 @ right[:, b]
    return out


def test_lmi_small_example():
    A, B, C, D = first_order()
    m = dissipativity_lmi(A, B, C, D, QuadraticSupply([[1.0]], [[1.0]], [[0.0]]), [[1.0]])
    assert np.allclose(m, [[-2.0, 0.0], [0.0, -1.0]])
    assert dissipativity_residual((A, B, C, D), QuadraticSupply([[1.0]], [[1.0]], [[0.0]]),
                                  [[1.0]]) == pytest.approx(-1.0)


def test_lmi_zero_supply():
    A, B, C, D = first_order()
    m = dissipativity_lmi(A, B, C, D, QuadraticSupply.zero(1, 1), [[1.0]])
    assert np.allclose(m, [[-2.0, 1.0], [1.0, 0.0]])
    assert lambda_max(m) == pytest.approx(-1.0 + np.sqrt(2.0))


def test_lmi_dimension_mismatch():
    A, B, C, D = first_order()
    with pytest.raises(InvalidInput):
        dissipativity_lmi(A, B, C, D, QuadraticSupply.zero(2, 1), [[1.0]])


@given(st.integers(1, 3), st.integers(1, 2), st.integers(1, 2), st.integers(0, 2**31))
def test_two_assembly_paths_agree(n, m, p, seed):
    r = np.random.default_rng(seed)
    A, B = r.standard_normal((n, n)), r.standard_normal((n, m))
    C, D = r.standard_normal((p, n)), r.standard_normal((p, m))
    k = r.standard_normal((m + p, m + p))
    s = QuadraticSupply.from_matrix(k + k.T, m)
    P = r.standard_normal((n, n))
    P = P + P.T
    fast = dissipativity_lmi(A, B, C, D, s, P)
    slow = entrywise_lmi(A, B, C, D, s, P)
    assert np.max(np.abs(fast - slow)) <= 1e-12 * (1 + np.abs(slow).max())


@pytest.mark.parametrize("eps", [1e-3, 1.0])
def test_residual_decreases_with_q(eps, rng):
    A = -np.eye(2) + 0.3 * rng.standard_normal((2, 2))
    B, C, D = rng.standard_normal((2, 1)), rng.standard_normal((1, 2)), np.zeros((1, 1))
    s = QuadraticSupply([[0.5]], [[0.1]], [[-1.0]])
    bigger = QuadraticSupply(s.Q + eps * np.eye(1), s.S, s.R)
    P = np.eye(2)
    assert dissipativity_residual((A, B, C, D), bigger, P) < \
        dissipativity_residual((A, B, C, D), s, P) or \
        dissipativity_residual((A, B, C, D), bigger, P) == \
        dissipativity_residual((A, B, C, D), s, P) < 0
    # the uu block itself strictly decreases
    assert lambda_max(dissipativity_lmi(A, B, C, D, bigger, P)[2:, 2:]) < \
        lambda_max(dissipativity_lmi(A, B, C, D, s, P)[2:, 2:])


def test_dcgrid_node_with_published_supply():
    g1 = dcgrid_systems()[1]
    s12 = QuadraticSupply.from_matrix(REFERENCE_SUPPLIES[(1, 2)], 1)
    assert dissipativity_residual(g1, s12, [[3.3282]]) < 0


# ---------------------------------------------------------------------------
# feasibility engine

def test_lmi_problem_scalar():
    prob = LmiProblem().add_block("x", 1)
    prob.add_constraint(lambda v: v["x"] + 1.0, name="below")
    prob.add_constraint(lambda v: -v["x"] - 3.0, strict=False, name="above")
    res = prob.solve()
    assert res.status == FEASIBLE
    assert -3.0 <= res.witness["x"][0, 0] < -1.0


def test_lmi_problem_rejects_nonlinear():
    prob = LmiProblem().add_block("x", 1)
    prob.add_constraint(lambda v: v["x"] @ v["x"], name="square")
    with pytest.raises(InvalidInput):
        prob.solve()


def test_additive_lyapunov_decoupled():
    g1, g2 = LtiSystem([[-1.0]]), LtiSystem([[-2.0]])
    res = find_additive_lyapunov(NetworkGraph({1: g1, 2: g2}))
    assert res.status == FEASIBLE
    assert res.certificate.positive_definite


def test_additive_lyapunov_oscillator():
    g1 = LtiSystem([[0.0]], {2: dict(B=[[1.0]], C=[[1.0]])})
    g2 = LtiSystem([[0.0]], {1: dict(B=[[-1.0]], C=[[1.0]])})
    net = NetworkGraph({1: g1, 2: g2}, [(1, 2, 1), (2, 1, 1)])
    res = find_additive_lyapunov(net)
    assert res.status in (INFEASIBLE, UNDECIDED)


def test_additive_lyapunov_dcgrid(dc_net, dc_cert):
    res = find_additive_lyapunov(dc_net)
    assert res.status == FEASIBLE
    ok, margin = res.certificate.is_lyapunov(dc_net)
    assert ok
    # the witness re-verifies at least as well as reported
    assert margin <= res.margin + 1e-9 * abs(res.margin)
    assert dc_cert.is_lyapunov(dc_net)[0]


# ---------------------------------------------------------------------------
# multipliers

def test_robust_stability_trivial_set():
    # with H = 0 the multiplier must penalise v (negative v-block) and leave w free
    A, B, C, D = first_order()
    hset = InterconnectionSet((np.zeros((1, 1)),))
    pi = block_diag(-np.eye(1), np.zeros((1, 1)))
    res = robust_stability_check((A, B, C, D), hset, [[1.0]], pi)
    assert res.ok
    # the negated w-block is rejected by the generator condition
    bad = block_diag(np.zeros((1, 1)), -np.eye(1))
    assert not robust_stability_check((A, B, C, D), hset, [[1.0]], bad).ok


@pytest.mark.parametrize("alpha", [0.0, 0.5, 1.0])
def test_lemma_shape_generator_margin(alpha, rng):
    # stored supply with R <= 0 and Q >= 0: multiplier blocks R_m = -R >= 0, Q_m = -Q <= 0
    Q = np.diag([2.0, 0.5])
    R = -np.diag([1.0, 3.0])
    S = rng.standard_normal((2, 2))
    sA = QuadraticSupply(Q, S, R)
    pi = neutral_multiplier(sA)
    H = scaling_matrix(2, 2, alpha)
    got = multiplier_condition(H, pi)
    core = block_diag(-R, Q)
    assert np.allclose(got, (1 - alpha**2) * core, atol=1e-12)
    margin = np.linalg.eigvalsh(got)[0]
    expected = (1 - alpha**2) * min(np.linalg.eigvalsh(-R)[0], np.linalg.eigvalsh(Q)[0])
    assert margin == pytest.approx(expected, abs=1e-12)


def test_robust_dissipativity_without_uncertainty_matches_plain():
    A, B, C, D = first_order()
    g = LtiSystem(A, None, E=B, F=C, L=D)
    hset = InterconnectionSet((np.zeros((0, 0)),))
    passivity = QuadraticSupply([[0.0]], [[1.0]], [[0.0]])
    res = robust_dissipativity_check(g, hset, [[1.0]], np.zeros((0, 0)), passivity)
    plain = dissipativity_residual((A, B, C, D), passivity, [[1.0]])
    assert res.ok == (plain < 0)
    assert res.lmi_margin == pytest.approx(plain)


def _pi_d_instance(seed, **kw):
    inst = random_pair(default_rng(seed), **kw)
    pair = construct_pair(inst.g1, inst.g2, inst.P1, inst.P2, inst.perf)
    plant = two_system_plant(inst.g1, inst.g2)
    n_v1 = inst.g1.single_port()[1].n_v
    n_v2 = inst.g2.single_port()[1].n_v
    return inst, pair, plant, swap_set(n_v1, n_v2), (n_v1, n_v2)


@pytest.mark.parametrize("seed", range(5))
def test_constructed_multiplier_is_witness(seed):
    inst, pair, plant, hset, _ = _pi_d_instance(seed)
    P = block_diag(inst.P1, inst.P2)
    perf = QuadraticSupply.direct_sum(*inst.perf)
    res = robust_dissipativity_check(plant, hset, P, neutral_multiplier(pair.s_fwd), perf)
    assert res.ok
    # equality at the interconnection itself
    assert max(abs(m) for m in res.generator_margins) < 1e-8


def test_find_multiplier_decoupled():
    A = np.diag([-1.0, -2.0])
    plant = (A, np.zeros((2, 2)), np.eye(2), np.zeros((2, 2)))
    res = find_multiplier(plant, swap_set(1, 1), P=np.eye(2))
    assert res.status == FEASIBLE


@pytest.mark.parametrize("seed", range(3))
def test_find_multiplier_structured(seed):
    inst, pair, plant, hset, split = _pi_d_instance(seed)
    P = block_diag(inst.P1, inst.P2)
    perf = QuadraticSupply.direct_sum(*inst.perf)
    res = find_multiplier(plant, hset, P, perf, structured=split)
    assert res.status == FEASIBLE
    check = robust_dissipativity_check(plant, hset, P, res.witness["Pi"], perf)
    assert check.ok


def test_find_multiplier_undecided_raises():
    # unstable plant without coupling: no multiplier can help
    plant = (np.eye(1), np.zeros((1, 1)), np.zeros((1, 1)), np.zeros((1, 1)))
    hset = InterconnectionSet((np.zeros((1, 1)),))
    with pytest.raises(Undecided):
        find_multiplier(plant, hset, P=np.eye(1))
    res = find_multiplier(plant, hset, P=np.eye(1), raise_undecided=False)
    assert res.status != FEASIBLE
