import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from neutral_supply.dcgrid import DEFAULT_PARAMS, REFERENCE_SUPPLIES
from neutral_supply.errors import IllPosed, InvalidInput, InvalidMatrix
from neutral_supply.model import (
    InterconnectionSet,
    LtiSystem,
    NetworkGraph,
    QuadraticSupply,
    StorageCertificate,
    closed_loop,
    closed_loop_matrix,
    evaluate_supply,
    mirror,
    scaling_matrix,
    well_posedness,
)
from neutral_supply.testing import default_rng, random_chain

finite = st.floats(-5, 5, allow_nan=False, allow_infinity=False)


def scalar_pair(d1=0.0, d2=0.0):
    g1 = LtiSystem([[-1.0]], {2: dict(B=[[1.0]], C=[[1.0]], D=[[d1]])})
    g2 = LtiSystem([[-2.0]], {1: dict(B=[[1.0]], C=[[1.0]], D=[[d2]])})
    return NetworkGraph({1: g1, 2: g2}, [(1, 2, 1), (2, 1, 1)])


def supply(m, k=1):
    return QuadraticSupply.from_matrix(np.asarray(m, dtype=float), k)


# ---------------------------------------------------------------------------
# supplies

def test_mirror_reproduces_published_pairs():
    s12 = supply(REFERENCE_SUPPLIES[(1, 2)])
    assert np.allclose(mirror(s12).matrix, REFERENCE_SUPPLIES[(2, 1)])
    s23 = supply(REFERENCE_SUPPLIES[(2, 3)])
    assert np.allclose(mirror(s23).matrix, REFERENCE_SUPPLIES[(3, 2)])


def test_mirror_of_zero():
    z = QuadraticSupply.zero(2, 3)
    m = mirror(z)
    assert (m.n_first, m.n_second) == (3, 2)
    assert not np.any(m.matrix)


def test_evaluate_examples():
    s = QuadraticSupply([[1.0]], [[0.0]], [[0.0]])
    assert evaluate_supply(s, [2.0], [7.0]) == pytest.approx(4.0)
    assert evaluate_supply(s, [0.0], [0.0]) == 0.0
    s12 = supply(REFERENCE_SUPPLIES[(1, 2)])
    # hand arithmetic: 4754.6 + 2 * 1543.5 - 1637.6
    assert evaluate_supply(s12, [1.0], [1.0]) == pytest.approx(6204.0)
    with pytest.raises(InvalidInput):
        evaluate_supply(s12, [1.0, 2.0], [1.0])


def test_supply_rejects_bad_data():
    with pytest.raises(InvalidMatrix):
        QuadraticSupply([[1.0, 2.0], [0.0, 1.0]], np.zeros((2, 1)), [[0.0]])
    with pytest.raises(InvalidMatrix):
        QuadraticSupply([[np.inf]], [[0.0]], [[0.0]])


def test_multiplier_sign_convention(rng):
    s = supply(np.diag([1.0, -2.0]))
    a, b = rng.standard_normal(1), rng.standard_normal(1)
    pi = s.multiplier()
    ab = np.concatenate([a, b])
    assert s.evaluate(a, b) == pytest.approx(-ab @ pi @ ab)
    assert QuadraticSupply.from_multiplier(pi, 1).allclose(s)


@given(st.integers(1, 3), st.integers(1, 3), st.integers(0, 2**31))
def test_neutrality_identity(p, q, seed):
    r = np.random.default_rng(seed)
    m = r.standard_normal((p + q, p + q))
    s = QuadraticSupply.from_matrix(m + m.T, p)
    t = mirror(s)
    assert mirror(t).allclose(s)
    for _ in range(40):
        a, b = r.standard_normal(p), r.standard_normal(q)
        lhs = evaluate_supply(s, a, b) + evaluate_supply(t, b, a)
        assert abs(lhs) <= 1e-10 * (1 + np.abs(s.matrix).max() * (a @ a + b @ b))


def test_neutrality_identity_bulk(rng):
    m = rng.standard_normal((3, 3))
    s = QuadraticSupply.from_matrix(m + m.T, 2)
    vals = [s.evaluate(a := rng.standard_normal(2), b := rng.standard_normal(1))
            + mirror(s).evaluate(b, a) for _ in range(1000)]
    assert np.max(np.abs(vals)) < 1e-10


# ---------------------------------------------------------------------------
# systems and networks

def test_system_validation():
    with pytest.raises(InvalidMatrix):
        LtiSystem([[1.0, 2.0]])
    with pytest.raises(InvalidMatrix):
        LtiSystem([[1.0]], {2: dict(B=[[1.0, 2.0]], C=[[1.0, 1.0]])})
    with pytest.raises(InvalidInput):
        LtiSystem([[1.0]], {2: dict(B=[[1.0]])}, K={3: [[1.0]]})


def test_network_validation():
    g = LtiSystem([[-1.0]], {2: dict(B=[[1.0]], C=[[1.0]])})
    h = LtiSystem([[-1.0]], {1: dict(B=[[1.0]], C=[[1.0]])})
    with pytest.raises(InvalidInput):
        NetworkGraph({1: g, 2: h}, [(1, 2, 1)])
    with pytest.raises(InvalidInput):
        NetworkGraph({1: g, 2: h}, [(1, 2, 2), (2, 1, 1)])
    with pytest.raises(InvalidInput):
        NetworkGraph({1: g, 2: h}, [(1, 3, 1)])


def test_closed_loop_two_scalars():
    assert np.allclose(closed_loop_matrix(scalar_pair()), [[-1.0, 1.0], [1.0, -2.0]])


def test_closed_loop_single_system():
    g = LtiSystem([[-3.0, 1.0], [0.0, -1.0]])
    net = NetworkGraph({7: g})
    assert np.allclose(closed_loop_matrix(net), g.A)


def test_closed_loop_dcgrid_entry(dc_net):
    p = DEFAULT_PARAMS
    expected = -(p["R"] + p["RL1"] / p["d"][0] ** 2) / p["L"]
    assert closed_loop_matrix(dc_net)[0, 0] == pytest.approx(expected)
    assert expected == pytest.approx(-1.2899e5, rel=1e-4)


def test_closed_loop_with_feedthrough():
    # loop: v1 = w2 = x2 + 0.5 v2, v2 = w1 = x1 + 0.5 v1
    net = scalar_pair(0.5, 0.5)
    A = closed_loop_matrix(net)
    # v = (I - 0.25)^{-1} [[0.5, 1], [1, 0.5]] x
    v = np.linalg.solve(np.array([[1.0, -0.5], [-0.5, 1.0]]), np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert np.allclose(A, np.diag([-1.0, -2.0]) + v)


def test_well_posedness():
    ok, cond = well_posedness(scalar_pair())
    assert ok and cond == pytest.approx(1.0)
    assert not well_posedness(scalar_pair(1.0, 1.0))[0]
    ok, _ = well_posedness(scalar_pair(0.5, 0.5))
    assert ok
    # hand value: det(I - D_loop) = 1 - 0.25
    assert np.linalg.det(np.eye(2) - np.array([[0.0, 0.5], [0.5, 0.0]])) == pytest.approx(0.75)
    with pytest.raises(IllPosed):
        closed_loop_matrix(scalar_pair(1.0, 1.0))


def test_zero_feedthrough_always_well_posed():
    net, _ = random_chain(default_rng(5), n_sys=5)
    assert well_posedness(net)[0]


def test_closed_loop_permutation_equivariant(rng):
    net, _ = random_chain(default_rng(2), n_sys=4)
    mapping = {1: 3, 2: 1, 3: 4, 4: 2}
    other = net.relabel(mapping)
    A = closed_loop_matrix(net)
    B = closed_loop_matrix(other)
    old = net.state_offsets()
    new = other.state_offsets()
    for i in net.ids:
        for j in net.ids:
            assert np.allclose(A[old[i], old[j]], B[new[mapping[i]], new[mapping[j]]])


def test_edge_scale_zero_decouples(dc_net):
    A = closed_loop(dc_net, edge_scale={(1, 2): 0.0}).A
    assert A[0, 1:].tolist() == [0.0, 0.0, 0.0]
    assert A[1:, 0].tolist() == [0.0, 0.0, 0.0]


def test_expose_moves_port_to_exogenous():
    g = LtiSystem([[-1.0]], {2: dict(B=[[2.0]], C=[[3.0]], D=[[0.5]]),
                             3: dict(B=[[1.0]], C=[[1.0]])})
    h = g.expose([2])
    assert h.port_keys == (3,)
    assert np.allclose(h.E, [[2.0]]) and np.allclose(h.F, [[3.0]]) and np.allclose(h.L, [[0.5]])


def test_storage_certificate(dc_net, dc_cert):
    assert dc_cert.positive_definite
    assert dc_cert.margin < 0
    ok, margin = dc_cert.is_lyapunov(dc_net)
    assert ok and margin == pytest.approx(dc_cert.margin)
    bad = StorageCertificate.from_blocks({1: [[1.0]], 2: -np.eye(2), 3: [[1.0]]})
    assert not bad.positive_definite
    assert not bad.is_lyapunov(dc_net)[0]


def test_interconnection_set():
    H = scaling_matrix(1, 2, 0.5)
    assert H.shape == (3, 3)
    assert np.allclose(H, [[0, 0, 0.5], [0.5, 0, 0], [0, 0.5, 0]])
    fam = InterconnectionSet.scaling_family(1, 2)
    assert fam.is_scaling_family and len(fam.generators) == 11
    with pytest.raises(InvalidInput):
        InterconnectionSet((np.zeros((2, 2)), np.zeros((3, 3))))


@given(arrays(float, (2, 2), elements=finite), st.floats(0, 1))
def test_scaling_matrix_is_link_swap(w, alpha):
    # v_A = alpha w_B and v_B = alpha w_A
    H = scaling_matrix(2, 2, alpha)
    wa, wb = w[0], w[1]
    v = H @ np.concatenate([wa, wb])
    assert np.allclose(v[:2], alpha * wb) and np.allclose(v[2:], alpha * wa)
