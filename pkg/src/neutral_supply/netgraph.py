"""Graph operations and the edge-by-edge decomposition of acyclic networks.

A network is processed one connected component at a time.  Starting from
the lowest system id, the component is cut at one link of the current
anchor, both sides are lumped into single systems, a neutral pair is built
for that link, and the side not containing the anchor is queued with the
other end of the link as its new anchor.  Links cut earlier stay attached to
their side as exogenous channels carrying the supply already assigned to
them.
"""

from dataclasses import dataclass

import networkx as nx
import numpy as np

from .decompose import (
    DEFAULT_CONFIG,
    construct_pair,
    construct_sign_structured,
)
from .errors import (
    CycleDetected,
    HypothesisViolated,
    InvalidInput,
    NotAcyclic,
    NotALyapunovFunction,
    RankAssumption,
    UnknownSystem,
)
from .lmi import dissipativity_lmi
from .linalg import block_diag, is_neg_def, numeric_rank
from .model import LtiSystem, NetworkGraph, Port, QuadraticSupply, StorageCertificate, closed_loop

__all__ = [
    "SplitResult",
    "Grouping",
    "NetworkDecomposition",
    "is_acyclic",
    "split_at_edge",
    "lump",
    "decompose_acyclic",
    "condense",
    "condense_certificate",
    "isolate_system",
    "TwoSystemView",
    "port_supplies",
    "verify_network_supplies",
]


def _undirected(e):
    a, b = e[0], e[1]
    return (a, b) if a <= b else (b, a)


def is_acyclic(net):
    """Whether the undirected shadow of the interconnection graph is a forest.

    Links in both directions between two systems count as one edge.
    """
    return nx.is_forest(net.undirected_graph())


@dataclass(frozen=True)
class SplitResult:
    plus_side: frozenset
    minus_side: frozenset
    edge: tuple


def split_at_edge(net, e, within=None):
    """Remove the link `e` and return the two resulting sides.

    Parameters
    ----------
    e : tuple
        ``(a, b)``; the plus side is the one containing ``a``.
    within : iterable, optional
        Restrict the split to this vertex set (default: the component of ``a``).

    Raises
    ------
    InvalidInput
        If `e` is not a link of `net`.
    CycleDetected
        If `e` lies on a cycle, so removing it does not disconnect.
    """
    a, b = e[0], e[1]
    if _undirected((a, b)) not in net.undirected_edges:
        raise InvalidInput(f"{(a, b)} is not an edge of the network")
    g = net.undirected_graph()
    if within is not None:
        g = g.subgraph(set(within)).copy()
    g.remove_edge(a, b)
    plus = nx.node_connected_component(g, a)
    if b in plus:
        raise CycleDetected(f"edge {(a, b)} lies on a cycle")
    minus = nx.node_connected_component(g, b)
    return SplitResult(frozenset(plus), frozenset(minus), (a, b))


def lump(net, vertices):
    """Single system formed by `vertices` with their internal links closed.

    The state stacks the members' states in ascending id order.  Each link
    to a system outside `vertices` becomes a port keyed ``(member, outside)``;
    ports appear in ascending key order.  Members' exogenous channels are
    stacked in the same member order.

    Raises
    ------
    IllPosed
        If the internal loop equations are ill-posed.
    UnknownSystem
    """
    members = tuple(sorted(vertices))
    for m in members:
        if m not in net.systems:
            raise UnknownSystem(m)
    if len(members) == 1 and not any(
            j in members for j in net.systems[members[0]].port_keys):
        g = net.systems[members[0]]
        ports = {(members[0], j): p for j, p in g.ports.items()}
        K = {(members[0], j): k for j, k in g.K.items()}
        return g.replace(ports=ports, K=K)
    cl = closed_loop(net, members)
    off = net.state_offsets(members)
    n = cl.A.shape[0]
    z_off, k = {}, 0
    for m in members:
        z_off[m] = slice(k, k + net.systems[m].n_z)
        k += net.systems[m].n_z
    inside = set(members)
    ports, Ks = {}, {}
    for m in members:
        g = net.systems[m]
        for j in g.port_keys:
            if j in inside:
                continue
            p = g.ports[j]
            B = np.zeros((n, p.n_v))
            C = np.zeros((p.n_w, n))
            B[off[m]] = p.B
            C[:, off[m]] = p.C
            ports[(m, j)] = Port(B, C, p.D)
            Kz = np.zeros((cl.F.shape[0], p.n_v))
            Kz[z_off[m]] = g.K[j]
            Ks[(m, j)] = Kz
    ports = dict(sorted(ports.items()))
    return LtiSystem(cl.A, ports, E=cl.E, F=cl.F, K=Ks, L=cl.L)


# ---------------------------------------------------------------------------
# decomposition

class NetworkDecomposition(dict):
    """Map from undirected edge ``(i, j)``, ``i < j``, to its :class:`EdgeSupplyPair`.

    The pair's ``s_fwd`` belongs to system ``i`` (on ``(v_ij, w_ij)``) and
    ``s_bwd`` to system ``j``.  ``system_residuals`` holds, per system, the
    ``lambda_max`` of its local inequality with the sum of its link supplies.
    """

    system_residuals: dict

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.system_residuals = {}

    def supply(self, i, j):
        """Supply ``s_ij`` of system `i` on its link to `j`."""
        a, b = _undirected((i, j))
        pair = self[(a, b)]
        return pair.s_fwd if i == a else pair.s_bwd


def port_supplies(decomposition):
    """``{(i, j): s_ij}`` for every directed port."""
    out = {}
    for (a, b), pair in decomposition.items():
        out[(a, b)] = pair.s_fwd
        out[(b, a)] = pair.s_bwd
    return out


def _network_case(net, tol):
    """1 when some feed-through is nonzero (full row rank then required), else 2."""
    if not net.has_feedthrough():
        return 2
    for i, g in net.systems.items():
        for j, p in g.ports.items():
            if numeric_rank(p.C, tol) < p.n_w:
                raise RankAssumption(
                    f"C of system {i} towards {j} is not full row rank while the network "
                    "has feed-through")
    return 1


def _side(net, members, link, cuts):
    """Lumped side with `link` as its port and the `cuts` ports exposed.

    Returns the system and the stacked external supply of the cut links.
    """
    g = lump(net, members)
    cut_keys = [k for k in g.port_keys if k != link]
    missing = [k for k in cut_keys if k not in cuts]
    if missing:
        raise CycleDetected(f"side has links {missing} that were never cut")
    g = g.expose(cut_keys)
    perf = QuadraticSupply.direct_sum(*[cuts[k] for k in cut_keys]) if cut_keys else \
        QuadraticSupply.zero(0, 0)
    return g, perf


def verify_network_supplies(net, supplies, cert, tol=None):
    """``lambda_max`` of each system's local inequality with ``sum_j s_ij``.

    Parameters
    ----------
    supplies : dict
        ``{(i, j): s_ij}`` for every port.
    """
    tol = tol or DEFAULT_CONFIG.tol
    out = {}
    for i, g in net.systems.items():
        keys = g.port_keys
        s = QuadraticSupply.direct_sum(*[supplies[(i, j)] for j in keys]) if keys else \
            QuadraticSupply.zero(0, 0)
        m = dissipativity_lmi(*g.io_matrices(), s, cert.blocks[i])
        out[i] = is_neg_def(m, tol)
    return out


def decompose_acyclic(net, cert, cfg=DEFAULT_CONFIG, *, sign_structured=False):
    """Neutral supplies on every link of an acyclic network.

    Parameters
    ----------
    net : NetworkGraph
        Without exogenous channels.
    cert : StorageCertificate
        Additive Lyapunov certificate of `net` (checked).
    sign_structured : bool
        Build every pair with :func:`construct_sign_structured` (requires
        zero feed-through).

    Returns
    -------
    NetworkDecomposition

    Raises
    ------
    NotAcyclic
    NotALyapunovFunction
    RankAssumption
        Nonzero feed-through somewhere and a rank-deficient ``C``.
    HypothesisViolated
        With the offending edge or system in the message.
    """
    tol = cfg.tol
    if not is_acyclic(net):
        raise NotAcyclic("the undirected interconnection graph has a cycle; group systems first")
    if any(g.has_exogenous for g in net.systems.values()):
        raise InvalidInput("network systems must not carry exogenous channels")
    missing = set(net.ids) - set(cert.blocks)
    if missing:
        raise InvalidInput(f"certificate lacks blocks for systems {sorted(missing)}")
    ok, margin = cert.is_lyapunov(net, tol)
    if not ok:
        raise NotALyapunovFunction("certificate does not prove stability of the network",
                                   margin=margin)
    _network_case(net, tol)
    build = construct_sign_structured if sign_structured else construct_pair

    result = NetworkDecomposition()
    g = net.undirected_graph()
    for comp in sorted(nx.connected_components(g), key=min):
        queue = [(min(comp), frozenset(comp), {})]
        while queue:
            anchor, members, cuts = queue.pop(0)
            for j in sorted(net.neighbors(anchor)):
                if j not in members:
                    continue
                split = split_at_edge(net, (anchor, j), within=members)
                plus_cuts = {k: s for k, s in cuts.items() if k[0] in split.plus_side}
                minus_cuts = {k: s for k, s in cuts.items() if k[0] in split.minus_side}
                g_plus, perf_plus = _side(net, split.plus_side, (anchor, j), plus_cuts)
                g_minus, perf_minus = _side(net, split.minus_side, (j, anchor), minus_cuts)
                P_plus = cert.matrix(sorted(split.plus_side))
                P_minus = cert.matrix(sorted(split.minus_side))
                try:
                    pair = build(g_plus, g_minus, P_plus, P_minus, (perf_plus, perf_minus), cfg)
                except HypothesisViolated as exc:
                    exc.edge = (anchor, j)
                    exc.args = (f"edge {(anchor, j)}: {exc}",)
                    raise
                result[_undirected((anchor, j))] = pair if anchor < j else pair.flipped()
                queue.append((j, split.minus_side, {**minus_cuts, (j, anchor): pair.s_bwd}))
                members = split.plus_side
                cuts = {**plus_cuts, (anchor, j): pair.s_fwd}

    checks = verify_network_supplies(net, port_supplies(result), cert, tol)
    for i, (ok, lam) in checks.items():
        result.system_residuals[i] = lam
        if not ok:
            raise HypothesisViolated("local", f"system {i} is not dissipative with its supplies",
                                     margin=lam)
    return _sorted(result)


def _sorted(result):
    out = NetworkDecomposition(sorted(result.items()))
    out.system_residuals = dict(sorted(result.system_residuals.items()))
    return out


# ---------------------------------------------------------------------------
# grouping

@dataclass(frozen=True)
class Grouping:
    """Assignment of every system to exactly one group."""

    assignment: dict

    def groups(self):
        out = {}
        for i, gid in sorted(self.assignment.items()):
            out.setdefault(gid, []).append(i)
        return dict(sorted(out.items()))

    def validate(self, net):
        if set(self.assignment) != set(net.ids):
            raise InvalidInput("grouping must assign every system exactly once")
        g = net.undirected_graph()
        for gid, members in self.groups().items():
            if not nx.is_connected(g.subgraph(members)):
                raise InvalidInput(f"group {gid} is not connected")


def _merged_port_order(net, members, outside):
    # canonical undirected pair order, so both ends of a merged link agree
    pairs = [(m, b) for m in members for b in net.systems[m].port_keys if b in outside]
    return sorted(pairs, key=lambda mb: (_undirected(mb), mb))


def condense(net, grouping):
    """Network whose systems are the lumped groups.

    The merged port between two groups concatenates their links in the
    order of the undirected pair ``(min, max)`` of the linked systems,
    so that the output order at one end matches the input order at the other.

    Raises
    ------
    IllPosed
    InvalidInput
    """
    grouping.validate(net)
    groups = grouping.groups()
    systems, edges = {}, []
    for gid, members in groups.items():
        lumped = lump(net, members)
        ports, Ks = {}, {}
        for other, others in groups.items():
            if other == gid:
                continue
            keys = _merged_port_order(net, members, set(others))
            if not keys:
                continue
            B, C, D, K = lumped.interconnection(keys)
            ports[other] = Port(B, C, D)
            Ks[other] = K
            dim = C.shape[0]
            if dim:
                edges.append((gid, other, dim))
        systems[gid] = LtiSystem(lumped.A, ports, E=lumped.E, F=lumped.F, K=Ks, L=lumped.L)
    return NetworkGraph(systems, edges)


def condense_certificate(cert, grouping, net=None, tol=None):
    """Additive certificate of the condensed network (blocks concatenated per group)."""
    blocks = {gid: block_diag(*[cert.blocks[i] for i in members])
              for gid, members in grouping.groups().items()}
    if net is not None:
        return StorageCertificate.certify(net, blocks, tol or DEFAULT_CONFIG.tol)
    return StorageCertificate.from_blocks(blocks, cert.margin)


@dataclass(frozen=True, eq=False)
class TwoSystemView:
    """System `i` against the rest of the network.

    ``system`` has one port ``"rest"`` concatenating its links in ascending
    neighbour order; ``rest`` has one port ``"system"`` with the matching
    order.  ``rest_ids`` lists the members of the rest in state order.
    """

    system: LtiSystem
    rest: LtiSystem
    system_id: object
    rest_ids: tuple


def isolate_system(net, i):
    """Two-system view ``(G_i, lump of all other systems)``.

    Raises
    ------
    UnknownSystem
    IllPosed
    """
    if i not in net.systems:
        raise UnknownSystem(i)
    rest_ids = tuple(j for j in net.ids if j != i)
    gi = net.systems[i]
    nbrs = sorted(gi.port_keys)
    own = gi.merge_ports(nbrs, "rest") if nbrs else gi.replace(
        ports={"rest": Port(np.zeros((gi.n, 0)), np.zeros((0, gi.n)), np.zeros((0, 0)))},
        K={"rest": np.zeros((gi.n_z, 0))})
    if not rest_ids:
        raise InvalidInput("the network has a single system")
    rest = lump(net, rest_ids)
    keys = sorted(k for k in rest.port_keys if k[1] == i)
    if len(keys) != len(rest.port_keys):
        raise InvalidInput("unexpected boundary ports")
    if keys:
        rest = rest.merge_ports(keys, "system")
    else:
        rest = rest.replace(
            ports={"system": Port(np.zeros((rest.n, 0)), np.zeros((0, rest.n)),
                                  np.zeros((0, 0)))},
            K={"system": np.zeros((rest.n_z, 0))})
    return TwoSystemView(own, rest, i, rest_ids)
