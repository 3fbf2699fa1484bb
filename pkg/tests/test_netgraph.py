import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neutral_supply.dcgrid import REFERENCE_SUPPLIES
from neutral_supply.decompose import construct_pair
from neutral_supply.errors import (
    CycleDetected,
    HypothesisViolated,
    InvalidInput,
    NotAcyclic,
    UnknownSystem,
)
from neutral_supply.linalg import block_diag
from neutral_supply.model import (
    LtiSystem,
    NetworkGraph,
    StorageCertificate,
    closed_loop_matrix,
)
from neutral_supply.netgraph import (
    Grouping,
    condense,
    condense_certificate,
    decompose_acyclic,
    is_acyclic,
    isolate_system,
    lump,
    port_supplies,
    split_at_edge,
    verify_network_supplies,
)
from neutral_supply.testing import default_rng, random_chain, random_ring


def scalar_net(n, links, b=0.2):
    """Scalar systems ``x' = -x + b * (sum of neighbour states)``; P = I certifies it."""
    nbrs = {i: set() for i in range(1, n + 1)}
    for a, c in links:
        nbrs[a].add(c)
        nbrs[c].add(a)
    systems = {i: LtiSystem([[-1.0]], {j: dict(B=[[b]], C=[[1.0]]) for j in sorted(nb)})
               for i, nb in nbrs.items()}
    edges = [(a, c, 1) for a, c in links] + [(c, a, 1) for a, c in links]
    return NetworkGraph(systems, edges)


def unit_cert(net):
    return StorageCertificate.certify(net, {i: np.eye(g.n) for i, g in net.systems.items()})


def rel_close(a, b, rtol):
    a, b = np.asarray(a), np.asarray(b)
    return np.all(np.abs(a - b) <= rtol * np.abs(b))


# acyclicity and splits

def test_is_acyclic_examples(dc_net):
    assert is_acyclic(dc_net)
    assert not is_acyclic(scalar_net(3, [(1, 2), (2, 3), (1, 3)]))
    assert is_acyclic(scalar_net(2, [(1, 2)]))
    one_way = NetworkGraph({1: LtiSystem([[-1.0]], {2: dict(B=np.zeros((1, 0)), C=[[1.0]])}),
                            2: LtiSystem([[-1.0]], {1: dict(B=[[1.0]], C=np.zeros((0, 1)))})},
                           [(1, 2, 1)])
    assert is_acyclic(one_way)


def test_split_examples(dc_net):
    s = split_at_edge(dc_net, (1, 2))
    assert s.plus_side == {1} and s.minus_side == {2, 3}
    star = scalar_net(4, [(1, 2), (2, 3), (2, 4)])
    s = split_at_edge(star, (2, 4))
    assert s.plus_side == {1, 2, 3} and s.minus_side == {4}
    s = split_at_edge(scalar_net(2, [(1, 2)]), (2, 1))
    assert s.plus_side == {2} and s.minus_side == {1}


def test_split_errors():
    tri = scalar_net(3, [(1, 2), (2, 3), (1, 3)])
    with pytest.raises(CycleDetected):
        split_at_edge(tri, (1, 2))
    with pytest.raises(InvalidInput):
        split_at_edge(scalar_net(3, [(1, 2)]), (1, 3))


def test_split_within_restricts(dc_net):
    s = split_at_edge(dc_net, (2, 3), within={2, 3})
    assert s.plus_side == {2} and s.minus_side == {3}


@given(st.integers(2, 9), st.integers(0, 10_000))
def test_split_partitions_tree(n, seed):
    rng = np.random.default_rng(seed)
    links = [(int(rng.integers(1, i)), i) for i in range(2, n + 1)]
    net = scalar_net(n, links)
    for a, c in links:
        s = split_at_edge(net, (a, c))
        assert s.plus_side | s.minus_side == set(net.ids)
        assert not s.plus_side & s.minus_side
        crossing = [e for e in links if (e[0] in s.plus_side) != (e[1] in s.plus_side)]
        assert crossing == [(a, c)]


# lumping

def test_lump_single_vertex(dc_net):
    g = lump(dc_net, [2])
    assert np.array_equal(g.A, dc_net.systems[2].A)
    assert g.port_keys == ((2, 1), (2, 3))


def test_lump_dcgrid_pair(dc_net):
    g = lump(dc_net, [2, 3])
    assert g.n == 3
    assert g.port_keys == ((2, 1),)
    port = g.ports[(2, 1)]
    assert port.n_v == 1 and port.n_w == 1
    idx = np.r_[dc_net.state_offsets()[2], dc_net.state_offsets()[3]]
    sub = closed_loop_matrix(dc_net)[np.ix_(idx, idx)]
    assert np.allclose(g.A, sub)
    assert np.allclose(np.sort_complex(np.linalg.eigvals(g.A)),
                       np.sort_complex(np.linalg.eigvals(sub)))


def test_lump_decoupled_vertices():
    net = scalar_net(3, [(1, 2)])
    g = lump(net, [1, 3])
    assert np.allclose(g.A, -np.eye(2))
    assert g.port_keys == ((1, 2),)


def test_lump_unknown_system(dc_net):
    with pytest.raises(UnknownSystem):
        lump(dc_net, [1, 7])


@pytest.mark.parametrize("seed", range(4))
def test_lump_whole_network_preserves_closed_loop(seed):
    net, _ = random_ring(default_rng(seed), n_sys=5)
    assert np.allclose(lump(net, net.ids).A, closed_loop_matrix(net))


# decomposition

def test_decompose_dcgrid(dc_net, dc_cert):
    dec = decompose_acyclic(dc_net, dc_cert)
    assert list(dec) == [(1, 2), (2, 3)]
    for (i, j), pair in dec.items():
        assert pair.verification.neutrality == 0.0
        assert rel_close(pair.s_fwd.matrix, REFERENCE_SUPPLIES[(i, j)], 0.02)
        assert rel_close(pair.s_bwd.matrix, REFERENCE_SUPPLIES[(j, i)], 0.02)
    assert all(r < 0 for r in dec.system_residuals.values())
    assert dec.supply(2, 1) is dec[(1, 2)].s_bwd


def test_decompose_edgeless():
    net = NetworkGraph({1: LtiSystem([[-1.0]], {})})
    dec = decompose_acyclic(net, unit_cert(net))
    assert dict(dec) == {}
    assert dec.system_residuals[1] < 0


def test_decompose_star():
    net = scalar_net(4, [(1, 2), (2, 3), (2, 4)])
    cert = unit_cert(net)
    dec = decompose_acyclic(net, cert)
    assert set(dec) == {(1, 2), (2, 3), (2, 4)}
    checks = verify_network_supplies(net, port_supplies(dec), cert)
    assert all(ok and lam < 0 for ok, lam in checks.values())


def test_decompose_rejects_cycle():
    net = scalar_net(3, [(1, 2), (2, 3), (1, 3)])
    with pytest.raises(NotAcyclic):
        decompose_acyclic(net, unit_cert(net))


def test_decompose_rejects_bad_certificate(dc_net):
    bad = StorageCertificate.from_blocks({1: [[1.0]], 2: np.eye(2), 3: [[1.0]]})
    with pytest.raises(HypothesisViolated):
        decompose_acyclic(dc_net, bad)
    wrong = StorageCertificate.from_blocks({1: [[1.0]], 2: np.eye(2), 3: np.eye(2)})
    with pytest.raises(InvalidInput):
        decompose_acyclic(dc_net, wrong)


def test_decompose_components_independent():
    net = scalar_net(4, [(1, 2), (3, 4)])
    dec = decompose_acyclic(net, unit_cert(net))
    a, b = dec[(1, 2)], dec[(3, 4)]
    assert np.allclose(a.s_fwd.matrix, b.s_fwd.matrix)


@pytest.mark.parametrize("seed", range(5))
def test_random_chain_decomposition(seed):
    net, Ps = random_chain(default_rng(seed), n_sys=4)
    cert = StorageCertificate.certify(net, Ps)
    dec = decompose_acyclic(net, cert)
    assert len(dec) == 3
    for pair in dec.values():
        assert np.array_equal(pair.s_bwd.matrix, pair.s_fwd.mirror().matrix)
    assert all(r < 0 for r in dec.system_residuals.values())


def direct_pair(net, cert, edge):
    s = split_at_edge(net, edge)
    plus, minus = lump(net, s.plus_side), lump(net, s.minus_side)
    return construct_pair(plus, minus, cert.matrix(sorted(s.plus_side)),
                          cert.matrix(sorted(s.minus_side)))


def test_direct_split_matches_first_edge(dc_net, dc_cert):
    dec = decompose_acyclic(dc_net, dc_cert)
    d = direct_pair(dc_net, dc_cert, (1, 2))
    assert np.allclose(d.s_fwd.matrix, dec[(1, 2)].s_fwd.matrix, rtol=0.0, atol=1e-8)


@pytest.mark.parametrize("seed", range(4))
def test_direct_split_is_valid_on_every_edge(seed):
    net, Ps = random_chain(default_rng(50 + seed), n_sys=4)
    cert = StorageCertificate.certify(net, Ps)
    dec = decompose_acyclic(net, cert)
    first = direct_pair(net, cert, (1, 2))
    scale = 1.0 + np.max(np.abs(first.s_fwd.matrix))
    assert np.allclose(first.s_fwd.matrix, dec[(1, 2)].s_fwd.matrix, atol=1e-8 * scale)
    for edge in net.undirected_edges:
        assert direct_pair(net, cert, edge).verification.ok


# grouping

def test_condense_identity(dc_net):
    grouping = Grouping({i: i for i in dc_net.ids})
    c = condense(dc_net, grouping)
    assert c.edges == dc_net.edges
    assert np.allclose(closed_loop_matrix(c), closed_loop_matrix(dc_net))


def test_condense_ring_into_two_arcs():
    net, Ps = random_ring(default_rng(7), n_sys=6)
    assert not is_acyclic(net)
    grouping = Grouping({1: "a", 2: "a", 3: "a", 4: "b", 5: "b", 6: "b"})
    c = condense(net, grouping)
    assert is_acyclic(c)
    assert c.ids == ("a", "b")
    assert c.edges == (("a", "b", 2), ("b", "a", 2))
    ev = lambda A: np.sort_complex(np.linalg.eigvals(A))
    assert np.allclose(ev(closed_loop_matrix(c)), ev(closed_loop_matrix(net)))
    cert = condense_certificate(StorageCertificate.certify(net, Ps), grouping, c)
    dec = decompose_acyclic(c, cert)
    assert all(r < 0 for r in dec.system_residuals.values())


def test_grouping_validation(dc_net):
    with pytest.raises(InvalidInput):
        condense(dc_net, Grouping({1: 0, 2: 1}))
    with pytest.raises(InvalidInput):
        condense(dc_net, Grouping({1: 0, 2: 1, 3: 0}))


@settings(max_examples=12)
@given(st.integers(0, 10_000), st.integers(3, 6))
def test_tree_quotient_never_cyclic(seed, n):
    rng = default_rng(seed)
    net, Ps = random_chain(rng, n_sys=n, n_max=2)
    cuts = sorted(set(rng.integers(1, n, size=2).tolist()))
    assignment, gid = {}, 0
    for i in net.ids:
        assignment[i] = gid
        if i in cuts:
            gid += 1
    grouping = Grouping(assignment)
    c = condense(net, grouping)
    cert = condense_certificate(StorageCertificate.certify(net, Ps), grouping, c)
    dec = decompose_acyclic(c, cert)
    assert len(dec) == len(c.undirected_edges)


# two-system views

def test_isolate_dcgrid_middle(dc_net):
    view = isolate_system(dc_net, 2)
    assert view.rest_ids == (1, 3)
    assert view.system.port_keys == ("rest",)
    assert view.rest.port_keys == ("system",)
    n1, n3 = dc_net.systems[1].n, dc_net.systems[3].n
    assert view.rest.n == n1 + n3
    assert np.allclose(view.rest.A, block_diag(dc_net.systems[1].A, dc_net.systems[3].A))
    rp, sp = view.rest.ports["system"], view.system.ports["rest"]
    assert rp.n_w == sp.n_v and rp.n_v == sp.n_w == 2


def test_isolate_ring_member():
    net, _ = random_ring(default_rng(2), n_sys=6)
    view = isolate_system(net, 1)
    assert view.rest_ids == (2, 3, 4, 5, 6)
    assert view.system.ports["rest"].n_v == 2
    assert view.rest.ports["system"].n_w == 2
    assert view.rest.n == sum(net.systems[i].n for i in view.rest_ids)


def test_isolate_two_systems():
    net = scalar_net(2, [(1, 2)])
    view = isolate_system(net, 1)
    assert np.allclose(view.system.A, net.systems[1].A)
    assert np.allclose(view.rest.A, net.systems[2].A)
    assert np.allclose(view.system.ports["rest"].B, net.systems[1].ports[2].B)


def test_isolate_unknown(dc_net):
    with pytest.raises(UnknownSystem):
        isolate_system(dc_net, 9)


def test_isolated_pair_is_certified():
    net, Ps = random_ring(default_rng(4), n_sys=5)
    view = isolate_system(net, 3)
    P2 = block_diag(*[Ps[i] for i in view.rest_ids])
    pair = construct_pair(view.system, view.rest, Ps[3], P2)
    assert pair.verification.ok
