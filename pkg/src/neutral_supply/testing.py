"""Random instances that satisfy the construction's hypotheses by design.

Every generator picks the storage blocks first, builds each system around
them, then shrinks the coupling until the interconnection is certified with
that storage.  The seed defaults to the ``NEUTRAL_SUPPLY_SEED`` environment
variable (0 when unset).
"""

import os
from dataclasses import dataclass

import numpy as np

from .lmi import dissipativity_lmi
from .linalg import DEFAULT_TOL, Tolerance, block_diag, is_neg_def
from .model import LtiSystem, NetworkGraph, QuadraticSupply, closed_loop, lyapunov_matrix

__all__ = ["default_rng", "random_spd", "random_storage_system", "TwoSystemInstance",
           "random_pair", "random_chain", "random_ring", "padded_pair"]


MIN_OUTPUT_SV = 0.25
MIN_REL_MARGIN = 1e-3


def default_rng(seed=None):
    if seed is None:
        seed = int(os.environ.get("NEUTRAL_SUPPLY_SEED", "0"))
    return np.random.default_rng(seed)


def random_spd(rng, n, spread=3.0):
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return q @ np.diag(np.exp(rng.uniform(-1, 1, n) * np.log(spread))) @ q.T


def random_storage_system(rng, P):
    """``A`` with ``A^T P + P A = -(I + G G^T)``."""
    n = P.shape[0]
    k = rng.standard_normal((n, n))
    g = 0.5 * rng.standard_normal((n, n))
    return np.linalg.solve(P, (k - k.T) - 0.5 * (np.eye(n) + g @ g.T))


def _sv_min(C, rank=None):
    sv = np.linalg.svd(C, compute_uv=False)
    return sv[-1] if rank is None else sv[rank - 1]


def _rank_deficient(rng, rows, cols, deficit):
    r = max(rows - deficit, 0)
    if r == 0:
        return np.zeros((rows, cols))
    return rng.standard_normal((rows, r)) @ rng.standard_normal((r, cols))


@dataclass
class TwoSystemInstance:
    g1: LtiSystem
    g2: LtiSystem
    P1: np.ndarray
    P2: np.ndarray
    perf: tuple
    scale: float

    @property
    def network(self):
        return NetworkGraph({1: self.g1, 2: self.g2}, _edges(self.g1, self.g2))


def _edges(g1, g2):
    p1, p2 = g1.ports[2], g2.ports[1]
    edges = []
    if p1.n_w:
        edges.append((1, 2, p1.n_w))
    if p2.n_w:
        edges.append((2, 1, p2.n_w))
    return edges


def certify_pair(g1, g2, P1, P2, perf, tol=DEFAULT_TOL, rel_margin=MIN_REL_MARGIN):
    """True when ``diag(P1, P2)`` certifies the interconnection for the external supply.

    The inequality must hold with ``lambda_max < -rel_margin * (1 + ||M||)``,
    so that accepted instances are not numerically lossless.
    """
    net = NetworkGraph({1: g1, 2: g2}, _edges(g1, g2))
    try:
        cl = closed_loop(net, tol=tol)
    except Exception:
        return False
    P = block_diag(P1, P2)
    s = QuadraticSupply.direct_sum(*perf)
    if cl.E.shape[1] == 0 and cl.F.shape[0] == 0:
        M = lyapunov_matrix(cl.A, P)
    else:
        M = dissipativity_lmi(cl.A, cl.E, cl.F, cl.L, s, P)
    strict = Tolerance(definiteness_eps=max(rel_margin, tol.definiteness_eps),
                       rank_eps=tol.rank_eps)
    return is_neg_def(M, strict)[0]


def random_pair(rng=None, *, n_max=4, port_max=2, feedthrough=True, exogenous=True,
                rank_deficit=0, square_output=False, tol=DEFAULT_TOL, max_tries=60):
    """Two-system instance certified with a block-diagonal storage.

    Parameters
    ----------
    feedthrough : bool
        Draw nonzero link feed-through ``D``.
    exogenous : bool
        Give each system an exogenous channel with an L2-gain supply
        ``gamma^2 |d|^2 - |z|^2``; feed-through into ``z`` is drawn only
        when `feedthrough` is true.
    rank_deficit : int
        Rows of each ``C`` beyond its rank (requires ``feedthrough=False``).
    square_output : bool
        Make ``C1`` square and invertible (trivial kernel).

    Output matrices whose smallest nonzero singular value is below
    ``MIN_OUTPUT_SV`` are redrawn.
    """
    rng = default_rng() if rng is None else rng
    for _ in range(max_tries):
        n1, n2 = rng.integers(1, n_max + 1, size=2)
        nw1 = rng.integers(1, min(port_max, n1) + 1) if not square_output else n1
        nw2 = rng.integers(1, min(port_max, n2) + 1)
        if rank_deficit:
            nw1 = min(port_max + rank_deficit, n1 + rank_deficit)
            nw2 = min(port_max + rank_deficit, n2 + rank_deficit)
            nw1 = max(nw1, rank_deficit + 1)
            nw2 = max(nw2, rank_deficit + 1)
        if square_output and nw1 > port_max + 2:
            continue
        P1, P2 = random_spd(rng, n1), random_spd(rng, n2)
        A1, A2 = random_storage_system(rng, P1), random_storage_system(rng, P2)
        B1 = rng.standard_normal((n1, nw2))
        B2 = rng.standard_normal((n2, nw1))
        if rank_deficit:
            C1 = _rank_deficient(rng, nw1, n1, rank_deficit)
            C2 = _rank_deficient(rng, nw2, n2, rank_deficit)
            r1, r2 = min(nw1 - rank_deficit, n1), min(nw2 - rank_deficit, n2)
        else:
            C1 = rng.standard_normal((nw1, n1))
            C2 = rng.standard_normal((nw2, n2))
            r1, r2 = min(C1.shape), min(C2.shape)
        # a nearly vanishing link output forces supplies spanning many orders
        # of magnitude, where norm-relative strictness gates cannot decide
        if min(_sv_min(C1, r1), _sv_min(C2, r2)) < MIN_OUTPUT_SV:
            continue
        D1 = rng.standard_normal((nw1, nw2)) if feedthrough else np.zeros((nw1, nw2))
        D2 = rng.standard_normal((nw2, nw1)) if feedthrough else np.zeros((nw2, nw1))
        ext = []
        for n, nv in ((n1, nw2), (n2, nw1)):
            if exogenous:
                nd, nz = rng.integers(1, 3, size=2)
                ext.append(dict(E=rng.standard_normal((n, nd)), F=rng.standard_normal((nz, n)),
                                K=rng.standard_normal((nz, nv)) if feedthrough else np.zeros((nz, nv)),
                                L=rng.standard_normal((nz, nd)) if feedthrough else np.zeros((nz, nd))))
            else:
                ext.append({})
        eps = rng.uniform(0.3, 1.0)
        for _ in range(30):
            g1 = LtiSystem(A1, {2: dict(B=eps * B1, C=C1, D=eps * D1)},
                           E=ext[0].get("E"), F=_s(ext[0].get("F"), eps),
                           K={2: _s(ext[0].get("K"), eps)} if exogenous else None,
                           L=_s(ext[0].get("L"), eps))
            g2 = LtiSystem(A2, {1: dict(B=eps * B2, C=C2, D=eps * D2)},
                           E=ext[1].get("E"), F=_s(ext[1].get("F"), eps),
                           K={1: _s(ext[1].get("K"), eps)} if exogenous else None,
                           L=_s(ext[1].get("L"), eps))
            perf = []
            for g in (g1, g2):
                gam = 10.0
                perf.append(QuadraticSupply(gam**2 * np.eye(g.n_d), np.zeros((g.n_d, g.n_z)),
                                            -np.eye(g.n_z)))
            if certify_pair(g1, g2, P1, P2, perf, tol):
                return TwoSystemInstance(g1, g2, P1, P2, tuple(perf), eps)
            eps *= 0.5
    raise RuntimeError("could not generate a certified instance")


def _s(m, eps):
    return None if m is None else eps * m


def padded_pair(inst):
    """Same instance with an extra decoupled stable state appended to system 1."""
    g1 = inst.g1
    n = g1.n
    key, port = g1.single_port()
    A = block_diag(g1.A, [[-1.0]])
    B = np.vstack([port.B, np.zeros((1, port.n_v))])
    C = np.hstack([port.C, np.zeros((port.n_w, 1))])
    E = np.vstack([g1.E, np.zeros((1, g1.n_d))])
    F = np.hstack([g1.F, np.zeros((g1.n_z, 1))])
    g1p = LtiSystem(A, {key: dict(B=B, C=C, D=port.D)}, E=E, F=F, K=g1.K, L=g1.L)
    P1 = block_diag(inst.P1, [[1.0]])
    assert n + 1 == g1p.n
    return TwoSystemInstance(g1p, inst.g2, P1, inst.P2, inst.perf, inst.scale)


def _chain_like(rng, n_sys, ring, n_max, eps0, tol):
    Ps = {i: random_spd(rng, int(rng.integers(1, n_max + 1))) for i in range(1, n_sys + 1)}
    As = {i: random_storage_system(rng, P) for i, P in Ps.items()}
    links = [(i, i + 1) for i in range(1, n_sys)]
    if ring:
        links.append((1, n_sys))
    raw = {}
    for a, b in links:
        raw[(a, b)] = (rng.standard_normal((Ps[a].shape[0], 1)),
                       rng.standard_normal((1, Ps[b].shape[0])))
        raw[(b, a)] = (rng.standard_normal((Ps[b].shape[0], 1)),
                       rng.standard_normal((1, Ps[a].shape[0])))
    eps = eps0
    for _ in range(40):
        systems = {}
        for i in Ps:
            ports = {}
            for (a, b), (B, _) in raw.items():
                if a == i:
                    # B of the input from b; C of the output towards b
                    ports[b] = dict(B=eps * B, C=raw[(b, a)][1])
            systems[i] = LtiSystem(As[i], ports)
        edges = [(a, b, 1) for a, b in links] + [(b, a, 1) for a, b in links]
        net = NetworkGraph(systems, edges)
        P = block_diag(*[Ps[i] for i in net.ids])
        if is_neg_def(lyapunov_matrix(closed_loop(net, tol=tol).A, P), tol)[0]:
            return net, Ps
        eps *= 0.5
    raise RuntimeError("could not generate a certified network")


def random_chain(rng=None, n_sys=4, n_max=3, eps0=1.0, tol=DEFAULT_TOL):
    """Line network ``1 - 2 - ... - n`` with zero feed-through and its storage blocks."""
    rng = default_rng() if rng is None else rng
    return _chain_like(rng, n_sys, False, n_max, eps0, tol)


def random_ring(rng=None, n_sys=6, n_max=2, eps0=1.0, tol=DEFAULT_TOL):
    """Ring network with zero feed-through and its storage blocks."""
    rng = default_rng() if rng is None else rng
    return _chain_like(rng, n_sys, True, n_max, eps0, tol)
