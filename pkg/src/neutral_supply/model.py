"""LTI systems with named interconnection ports, quadratic supplies and networks.

Conventions
-----------
A :class:`QuadraticSupply` ``(Q, S, R)`` always denotes

    s(a, b) = [a; b]^T [[Q, S], [S^T, R]] [a; b]

with ``a`` the first argument (an input) and ``b`` the second (an output).
Multipliers ``Pi`` that act as ``s = -[v; w]^T Pi [v; w]`` are converted with
:meth:`QuadraticSupply.from_multiplier` / :meth:`QuadraticSupply.multiplier`
so that only one sign convention is ever stored.

A system's port is keyed by the neighbour it talks to.  Port ``j`` of system
``i`` carries the input ``v_ij`` (driven by ``j``) and the output ``w_ij``
(read by ``j``); feed-through only exists from ``v_ij`` to ``w_ij``.
"""

from collections import namedtuple
from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from .errors import IllPosed, InvalidInput, InvalidMatrix
from .linalg import (
    DEFAULT_TOL,
    as_matrix,
    as_symmetric,
    block_diag,
    is_neg_def,
    is_pos_def,
    lambda_max,
    lambda_min,
    sym,
)

__all__ = [
    "QuadraticSupply",
    "Port",
    "LtiSystem",
    "NetworkGraph",
    "StorageCertificate",
    "InterconnectionSet",
    "ClosedLoop",
    "mirror",
    "evaluate_supply",
    "closed_loop",
    "closed_loop_matrix",
    "well_posedness",
    "lyapunov_matrix",
    "scaling_matrix",
]


@dataclass(frozen=True, eq=False)
class QuadraticSupply:
    """Quadratic supply ``s(a, b)`` stored as symmetric ``Q``, ``R`` and full ``S``."""

    Q: np.ndarray
    S: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        Q = as_symmetric(self.Q, name="Q")
        R = as_symmetric(self.R, name="R")
        S = as_matrix(self.S, Q.shape[0], R.shape[0], name="S")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "R", R)

    @classmethod
    def zero(cls, n_first, n_second):
        return cls(np.zeros((n_first, n_first)), np.zeros((n_first, n_second)),
                   np.zeros((n_second, n_second)))

    @classmethod
    def from_matrix(cls, m, n_first):
        """Split a full ``(n_a + n_b)`` square matrix into ``(Q, S, R)``."""
        m = sym(as_matrix(m))
        k = n_first
        return cls(m[:k, :k], m[:k, k:], m[k:, k:])

    @classmethod
    def from_multiplier(cls, pi, n_first):
        """Supply ``-[a; b]^T pi [a; b]`` induced by the multiplier `pi`."""
        return cls.from_matrix(-np.asarray(pi, dtype=float), n_first)

    @property
    def n_first(self):
        return self.Q.shape[0]

    @property
    def n_second(self):
        return self.R.shape[0]

    @property
    def matrix(self):
        return np.block([[self.Q, self.S], [self.S.T, self.R]])

    def multiplier(self):
        """The multiplier ``Pi`` with ``s = -[a; b]^T Pi [a; b]``."""
        return -self.matrix

    def mirror(self):
        return mirror(self)

    def evaluate(self, a, b):
        return evaluate_supply(self, a, b)

    def scaled(self, c):
        return QuadraticSupply(c * self.Q, c * self.S, c * self.R)

    @staticmethod
    def direct_sum(*supplies):
        """Additive supply ``sum_k s_k(a_k, b_k)`` on stacked arguments."""
        return QuadraticSupply(block_diag(*[s.Q for s in supplies]),
                               block_diag(*[s.S for s in supplies]),
                               block_diag(*[s.R for s in supplies]))

    def allclose(self, other, rtol=1e-9, atol=1e-12):
        return (self.Q.shape == other.Q.shape and self.R.shape == other.R.shape
                and np.allclose(self.matrix, other.matrix, rtol=rtol, atol=atol))

    def __repr__(self):
        return f"QuadraticSupply(n_first={self.n_first}, n_second={self.n_second})"


def mirror(s):
    """The supply that makes ``s`` interconnection neutral: ``(-R, -S^T, -Q)``.

    For every ``a``, ``b``: ``s(a, b) + mirror(s)(b, a) == 0``.
    """
    return QuadraticSupply(-s.R, -s.S.T, -s.Q)


def evaluate_supply(s, a, b):
    """Value of ``s`` at first argument `a` and second argument `b`."""
    a = np.atleast_1d(np.asarray(a, dtype=float)).ravel()
    b = np.atleast_1d(np.asarray(b, dtype=float)).ravel()
    if a.size != s.n_first or b.size != s.n_second:
        raise InvalidInput(
            f"supply expects arguments of size ({s.n_first}, {s.n_second}), "
            f"got ({a.size}, {b.size})")
    return float(a @ s.Q @ a + 2.0 * a @ s.S @ b + b @ s.R @ b)


@dataclass(frozen=True, eq=False)
class Port:
    """Interconnection port: ``dx += B v``, ``w = C x + D v``."""

    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    @property
    def n_v(self):
        return self.B.shape[1]

    @property
    def n_w(self):
        return self.C.shape[0]


def _make_port(n, spec, key):
    if isinstance(spec, Port):
        B, C, D = spec.B, spec.C, spec.D
    else:
        B, C, D = spec.get("B"), spec.get("C"), spec.get("D")
    if B is None:
        B = np.zeros((n, 0))
    if C is None:
        C = np.zeros((0, n))
    B = as_matrix(B, rows=n, name=f"B[{key}]") if np.size(B) else np.zeros((n, 0))
    C = as_matrix(C, cols=n, name=f"C[{key}]") if np.size(C) else np.zeros((0, n))
    if D is None or np.size(D) == 0:
        D = np.zeros((C.shape[0], B.shape[1]))
    D = as_matrix(D, C.shape[0], B.shape[1], name=f"D[{key}]")
    return Port(B, C, D)


class LtiSystem:
    """State-space block with per-neighbour ports and optional exogenous channel.

    Dynamics::

        dx/dt = A x + sum_p B_p v_p + E d
        w_p   = C_p x + D_p v_p
        z     = F x + sum_p K_p v_p + L d

    Parameters
    ----------
    A : array_like, shape (n, n)
    ports : mapping, optional
        Port key to :class:`Port` or to a dict with entries ``B``, ``C``,
        ``D``; any of them may be omitted when the corresponding signal
        is absent.
    E, F, L : array_like, optional
        Exogenous input/output matrices.
    K : mapping, optional
        Port key to the ``n_z x n_v`` feed-through into ``z``.
    """

    def __init__(self, A, ports=None, E=None, F=None, K=None, L=None):
        A = as_matrix(A, name="A")
        n = A.shape[0]
        if n < 1 or A.shape[1] != n:
            raise InvalidMatrix(f"A must be square with n >= 1, got {A.shape}")
        self.A = A
        self.ports = {key: _make_port(n, spec, key) for key, spec in (ports or {}).items()}
        n_d = 0 if E is None else np.shape(np.atleast_2d(E))[1] if np.size(E) else 0
        if L is not None and np.size(L):
            n_d = max(n_d, np.atleast_2d(L).shape[1])
        n_z = 0 if F is None or np.size(F) == 0 else np.atleast_2d(F).shape[0]
        if L is not None and np.size(L):
            n_z = max(n_z, np.atleast_2d(L).shape[0])
        self.E = as_matrix(E, n, n_d, name="E") if E is not None and np.size(E) else np.zeros((n, n_d))
        self.F = as_matrix(F, n_z, n, name="F") if F is not None and np.size(F) else np.zeros((n_z, n))
        self.L = as_matrix(L, n_z, n_d, name="L") if L is not None and np.size(L) else np.zeros((n_z, n_d))
        K = K or {}
        unknown = set(K) - set(self.ports)
        if unknown:
            raise InvalidInput(f"K given for unknown ports {sorted(unknown, key=repr)}")
        self.K = {}
        for key, port in self.ports.items():
            k = K.get(key)
            if k is None or np.size(k) == 0:
                self.K[key] = np.zeros((n_z, port.n_v))
            else:
                self.K[key] = as_matrix(k, n_z, port.n_v, name=f"K[{key}]")

    # sizes
    @property
    def n(self):
        return self.A.shape[0]

    @property
    def n_d(self):
        return self.E.shape[1]

    @property
    def n_z(self):
        return self.F.shape[0]

    @property
    def port_keys(self):
        return tuple(self.ports)

    @property
    def has_exogenous(self):
        return self.n_d > 0 or self.n_z > 0

    def interconnection(self, keys=None):
        """Stacked ``(B, C, D)`` over the given ports (default: all, in order)."""
        keys = self.port_keys if keys is None else tuple(keys)
        ps = [self.ports[k] for k in keys]
        B = np.hstack([p.B for p in ps]) if ps else np.zeros((self.n, 0))
        C = np.vstack([p.C for p in ps]) if ps else np.zeros((0, self.n))
        D = block_diag(*[p.D for p in ps]) if ps else np.zeros((0, 0))
        K = np.hstack([self.K[k] for k in keys]) if ps else np.zeros((self.n_z, 0))
        return B, C, D, K

    def io_matrices(self):
        """``(A, B, C, D)`` with inputs ``[v_ports; d]`` and outputs ``[w_ports; z]``."""
        B, C, D, K = self.interconnection()
        Bt = np.hstack([B, self.E])
        Ct = np.vstack([C, self.F])
        Dt = np.block([[D, np.zeros((D.shape[0], self.n_d))], [K, self.L]])
        return self.A, Bt, Ct, Dt

    def single_port(self):
        """The only port of a two-system participant, as ``(key, Port)``."""
        if len(self.ports) != 1:
            raise InvalidInput(f"expected exactly one port, got {len(self.ports)}")
        return next(iter(self.ports.items()))

    def replace(self, **changes):
        kw = dict(A=self.A, ports=self.ports, E=self.E, F=self.F, K=self.K, L=self.L)
        kw.update(changes)
        return LtiSystem(**kw)

    def merge_ports(self, keys, new_key):
        """Concatenate several ports into one (block-diagonal feed-through)."""
        keys = tuple(keys)
        B, C, D, K = self.interconnection(keys)
        ports = {k: p for k, p in self.ports.items() if k not in keys}
        ports[new_key] = Port(B, C, D)
        Ks = {k: v for k, v in self.K.items() if k not in keys}
        Ks[new_key] = K
        return self.replace(ports=ports, K=Ks)

    def expose(self, keys):
        """Turn ports into exogenous channels appended after the existing ones.

        The port input joins ``d`` and its output joins ``z``; the port's
        ``D`` becomes part of ``L`` and its ``C`` part of ``F``.
        """
        keys = tuple(keys)
        if not keys:
            return self
        B, C, D, Kp = self.interconnection(keys)
        rest = [k for k in self.port_keys if k not in keys]
        n_new_z = C.shape[0]
        E = np.hstack([self.E, B])
        F = np.vstack([self.F, C])
        L = block_diag(self.L, D)
        # the exposed ports' own K-rows: no cross feed-through into the new outputs
        L[:self.n_z, self.n_d:] = Kp
        K = {k: np.vstack([self.K[k], np.zeros((n_new_z, self.ports[k].n_v))]) for k in rest}
        return LtiSystem(self.A, {k: self.ports[k] for k in rest}, E=E, F=F, K=K, L=L)

    def same_as(self, other, atol=1e-12):
        if self.port_keys != other.port_keys:
            return False
        pairs = [(self.A, other.A), (self.E, other.E), (self.F, other.F), (self.L, other.L)]
        for k in self.port_keys:
            a, b = self.ports[k], other.ports[k]
            pairs += [(a.B, b.B), (a.C, b.C), (a.D, b.D), (self.K[k], other.K[k])]
        return all(x.shape == y.shape and np.allclose(x, y, atol=atol, rtol=0) for x, y in pairs)

    def __repr__(self):
        dims = ", ".join(f"{k!r}: v{p.n_v}/w{p.n_w}" for k, p in self.ports.items())
        return f"LtiSystem(n={self.n}, ports={{{dims}}}, n_d={self.n_d}, n_z={self.n_z})"


class NetworkGraph:
    """Systems interconnected over a directed graph.

    Parameters
    ----------
    systems : mapping
        System id (int) to :class:`LtiSystem`; the port keys of system
        ``i`` are the ids of its neighbours.
    edges : iterable of (src, dst, dim)
        Directed edge: ``dim`` outputs of ``src`` feed ``dst``
        (``v_dst,src = w_src,dst``).
    """

    def __init__(self, systems, edges=()):
        self.systems = dict(sorted(systems.items()))
        dims = {}
        for e in edges:
            src, dst, dim = e
            if src not in self.systems or dst not in self.systems:
                raise InvalidInput(f"edge {(src, dst)} refers to an unknown system")
            if src == dst:
                raise InvalidInput("self loops are not allowed")
            if (src, dst) in dims:
                raise InvalidInput(f"duplicate edge {(src, dst)}")
            dims[(src, dst)] = int(dim)
        self.edges = tuple(sorted((s, d, k) for (s, d), k in dims.items()))
        self._dims = dims
        und = sorted({(min(s, d), max(s, d)) for s, d in dims})
        self.undirected_edges = tuple(und)
        self._neighbors = {i: set() for i in self.systems}
        for a, b in und:
            self._neighbors[a].add(b)
            self._neighbors[b].add(a)
        for i, sys in self.systems.items():
            keys = set(sys.ports)
            if keys != self._neighbors[i]:
                raise InvalidInput(
                    f"system {i}: ports {sorted(keys)} do not match neighbours "
                    f"{sorted(self._neighbors[i])}")
            for j in keys:
                port = sys.ports[j]
                if port.n_w != dims.get((i, j), 0):
                    raise InvalidInput(f"system {i}, port {j}: output dim {port.n_w} "
                                       f"!= edge dim {dims.get((i, j), 0)}")
                if port.n_v != dims.get((j, i), 0):
                    raise InvalidInput(f"system {i}, port {j}: input dim {port.n_v} "
                                       f"!= edge dim {dims.get((j, i), 0)}")

    @property
    def ids(self):
        return tuple(self.systems)

    def neighbors(self, i):
        return sorted(self._neighbors[i])

    def edge_dim(self, src, dst):
        return self._dims.get((src, dst), 0)

    def state_offsets(self, ids=None):
        ids = self.ids if ids is None else ids
        out, k = {}, 0
        for i in ids:
            out[i] = slice(k, k + self.systems[i].n)
            k += self.systems[i].n
        return out

    @property
    def n(self):
        return sum(s.n for s in self.systems.values())

    def undirected_graph(self):
        g = nx.Graph()
        g.add_nodes_from(self.ids)
        g.add_edges_from(self.undirected_edges)
        return g

    def has_feedthrough(self):
        return any(np.any(p.D) for s in self.systems.values() for p in s.ports.values())

    def relabel(self, mapping):
        """Network with system ids renamed through `mapping`."""
        systems = {}
        for i, s in self.systems.items():
            ports = {mapping[j]: p for j, p in s.ports.items()}
            K = {mapping[j]: k for j, k in s.K.items()}
            systems[mapping[i]] = s.replace(ports=ports, K=K)
        edges = [(mapping[a], mapping[b], d) for a, b, d in self.edges]
        return NetworkGraph(systems, edges)

    def __repr__(self):
        return f"NetworkGraph(systems={list(self.systems)}, edges={list(self.edges)})"


ClosedLoop = namedtuple("ClosedLoop", "A E F L condition")


def _loop_data(net, ids, edge_scale):
    """Stacked port data of the internal edges among `ids`."""
    inside = set(ids)
    off = net.state_offsets(ids)
    n = sum(net.systems[i].n for i in ids)
    slots = []  # (system, neighbour)
    for i in ids:
        for j in net.systems[i].port_keys:
            if j in inside:
                slots.append((i, j))
    v_off, w_off, kv, kw = {}, {}, 0, 0
    for i, j in slots:
        p = net.systems[i].ports[j]
        v_off[(i, j)] = slice(kv, kv + p.n_v)
        w_off[(i, j)] = slice(kw, kw + p.n_w)
        kv += p.n_v
        kw += p.n_w
    B = np.zeros((n, kv))
    C = np.zeros((kw, n))
    D = np.zeros((kw, kv))
    H = np.zeros((kv, kw))
    for i, j in slots:
        p = net.systems[i].ports[j]
        B[off[i], v_off[(i, j)]] = p.B
        C[w_off[(i, j)], off[i]] = p.C
        D[w_off[(i, j)], v_off[(i, j)]] = p.D
        scale = edge_scale.get((min(i, j), max(i, j)), 1.0)
        if p.n_v:
            H[v_off[(i, j)], w_off[(j, i)]] = scale * np.eye(p.n_v)
    return slots, v_off, B, C, D, H


def _solve_loop(net, ids, edge_scale, tol):
    slots, v_off, B, C, D, H = _loop_data(net, ids, edge_scale)
    M = np.eye(H.shape[0]) - H @ D
    cond = float(np.linalg.cond(M)) if M.size else 1.0
    if not np.isfinite(cond) or cond >= 1.0 / tol.rank_eps:
        raise IllPosed(f"interconnection is ill-posed (condition number {cond:.3g})")
    G = np.linalg.solve(M, H @ C) if M.size else np.zeros((0, C.shape[1]))
    return slots, v_off, B, G, cond


def closed_loop(net, ids=None, *, edge_scale=None, tol=DEFAULT_TOL):
    """Close every edge among `ids` (default: all systems).

    Returns
    -------
    ClosedLoop
        ``A`` is the closed-loop state matrix; ``E``, ``F``, ``L`` the
        stacked exogenous matrices of the members; ``condition`` the
        condition number of the loop equations.
    """
    ids = net.ids if ids is None else tuple(ids)
    edge_scale = {(min(a, b), max(a, b)): s for (a, b), s in (edge_scale or {}).items()}
    slots, v_off, B, G, cond = _solve_loop(net, ids, edge_scale, tol)
    members = [net.systems[i] for i in ids]
    A = block_diag(*[s.A for s in members]) + B @ G
    E = block_diag(*[s.E for s in members])
    F = block_diag(*[s.F for s in members])
    L = block_diag(*[s.L for s in members])
    # z picks up the loop solution through each member's K
    Kz = np.zeros((F.shape[0], G.shape[0]))
    z_off, kz = {}, 0
    for i in ids:
        z_off[i] = slice(kz, kz + net.systems[i].n_z)
        kz += net.systems[i].n_z
    for i, j in slots:
        Kz[z_off[i], v_off[(i, j)]] = net.systems[i].K[j]
    F = F + Kz @ G
    return ClosedLoop(A, E, F, L, cond)


def closed_loop_matrix(net, tol=DEFAULT_TOL):
    """State matrix of the network with all edges closed."""
    return closed_loop(net, tol=tol).A


def well_posedness(net, tol=DEFAULT_TOL):
    """``(ok, condition)`` for the static loop equations ``(I - H D) v = H C x``."""
    *_, D, H = _loop_data(net, net.ids, {})
    M = np.eye(H.shape[0]) - H @ D
    cond = float(np.linalg.cond(M)) if M.size else 1.0
    ok = bool(np.isfinite(cond) and cond < 1.0 / tol.rank_eps)
    return ok, cond


def lyapunov_matrix(A, P):
    """``A^T P + P A`` (symmetrized)."""
    return sym(A.T @ P + P @ A)


@dataclass(frozen=True, eq=False)
class StorageCertificate:
    """Additive quadratic storage ``V(x) = sum_i x_i^T P_i x_i``.

    Attributes
    ----------
    blocks : dict
        System id to symmetric ``P_i``.
    margin : float
        ``lambda_max`` of the certified inequality (``A^T P + P A`` for a
        Lyapunov certificate); ``nan`` when not evaluated.
    min_eig : float
        Smallest eigenvalue over all blocks.
    positive_definite : bool
    """

    blocks: dict
    margin: float = float("nan")
    min_eig: float = field(default=float("nan"))
    positive_definite: bool = False

    @classmethod
    def from_blocks(cls, blocks, margin=float("nan"), tol=DEFAULT_TOL):
        blocks = {i: as_symmetric(P, tol, name=f"P[{i}]") for i, P in sorted(blocks.items())}
        mins = [lambda_min(P) for P in blocks.values()]
        pd = all(is_pos_def(P, tol)[0] for P in blocks.values())
        return cls(blocks, float(margin), float(min(mins)) if mins else float("inf"), pd)

    @classmethod
    def certify(cls, net, blocks, tol=DEFAULT_TOL):
        """Evaluate ``A^T P + P A`` of the closed network for the given blocks."""
        cert = cls.from_blocks(blocks, tol=tol)
        cert.check_sizes(net)
        A = closed_loop_matrix(net, tol)
        margin = lambda_max(lyapunov_matrix(A, cert.matrix(net.ids)))
        return cls(cert.blocks, margin, cert.min_eig, cert.positive_definite)

    def matrix(self, ids=None):
        ids = list(self.blocks) if ids is None else ids
        return block_diag(*[self.blocks[i] for i in ids])

    def check_sizes(self, net):
        """Raise :class:`InvalidInput` unless every block matches its system's state."""
        for i, g in net.systems.items():
            if i not in self.blocks:
                raise InvalidInput(f"certificate lacks a block for system {i!r}")
            if self.blocks[i].shape[0] != g.n:
                raise InvalidInput(
                    f"block of system {i!r} is {self.blocks[i].shape[0]}x"
                    f"{self.blocks[i].shape[0]}, the system has {g.n} states")

    def is_lyapunov(self, net, tol=DEFAULT_TOL):
        """Strict check of ``P > 0`` and ``A^T P + P A < 0`` on `net`."""
        self.check_sizes(net)
        A = closed_loop_matrix(net, tol)
        ok, margin = is_neg_def(lyapunov_matrix(A, self.matrix(net.ids)), tol)
        return ok and self.positive_definite, margin


@dataclass(frozen=True, eq=False)
class InterconnectionSet:
    """Finite set of interconnection matrices ``H`` (``v = H w``).

    For the link-scaling family ``{[[0, a I_p], [a I_q, 0]] : a in [0, 1]}``
    the generators are the samples at `alphas`, and ``p``, ``q`` are kept so
    callers can recognise the family.
    """

    generators: tuple
    alphas: tuple = ()
    p: int = 0
    q: int = 0

    def __post_init__(self):
        gens = tuple(as_matrix(h, name="H") for h in self.generators)
        if not gens:
            raise InvalidInput("an interconnection set needs at least one generator")
        if len({g.shape for g in gens}) != 1:
            raise InvalidInput("all generators must share one shape")
        object.__setattr__(self, "generators", gens)

    @classmethod
    def scaling_family(cls, p, q, alphas=None):
        """Samples of ``H(a)`` mapping ``w = (w_A, w_B)`` to ``v = (a w_B, a w_A)``.

        ``v_A`` and ``w_B`` have size `p`; ``v_B`` and ``w_A`` have size `q`.
        The default grid is ``0, 0.1, ..., 1``.
        """
        if alphas is None:
            alphas = np.round(np.linspace(0.0, 1.0, 11), 12)
        alphas = tuple(float(a) for a in alphas)
        return cls(tuple(scaling_matrix(p, q, a) for a in alphas), alphas, p, q)

    @property
    def shape(self):
        return self.generators[0].shape

    @property
    def is_scaling_family(self):
        return bool(self.alphas)


def scaling_matrix(p, q, alpha):
    """``[[0, alpha I_p], [alpha I_q, 0]]`` of shape ``(p + q, q + p)``."""
    H = np.zeros((p + q, q + p))
    H[:p, q:] = alpha * np.eye(p)
    H[p:, :q] = alpha * np.eye(q)
    return H

