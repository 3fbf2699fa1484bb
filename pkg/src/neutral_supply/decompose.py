"""Interconnection-neutral supply pairs for two interconnected systems.

Given two systems ``G1``, ``G2`` joined by ``v1 = w2``, ``v2 = w1`` and a
block-diagonal storage ``diag(P1, P2)`` certifying dissipativity of the
interconnection with respect to an additive external supply, the functions
here build a pair ``(s_fwd, s_bwd = mirror(s_fwd))`` on the link such that
each system is strictly dissipative on its own with respect to its link
supply plus its external supply.

The construction follows a closed form: eliminate the unobservable-from-link
directions (kernel of ``C``) and the exogenous channel by Schur complements,
map the remaining quadratic form back onto the link signals, then average the
two one-sided candidates with weight ``alpha``.
"""

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .errors import (
    GammaSearchExhausted,
    HypothesisViolated,
    IllPosed,
    InvalidInput,
    NotALyapunovFunction,
    RankAssumption,
)
from .linalg import (
    DEFAULT_TOL,
    Tolerance,
    as_symmetric,
    block_diag,
    is_neg_def,
    is_neg_semidef,
    is_pos_def,
    kernel_basis,
    lambda_max,
    numeric_rank,
    orth_complement,
    sym,
)
from .lmi import Plant, dissipativity_lmi, dissipativity_residual
from .model import LtiSystem, Port, QuadraticSupply, lyapunov_matrix

__all__ = [
    "DecompositionConfig",
    "DEFAULT_CONFIG",
    "TwoSystemWorkspace",
    "EdgeVerification",
    "EdgeSupplyPair",
    "RankFactorization",
    "two_system_plant",
    "build_workspace",
    "construct_neutral_pair",
    "construct_autonomous",
    "extend_rank_deficient",
    "construct_sign_structured",
    "construct_pair",
    "rank_factorization",
    "verify_pair",
    "strip_exogenous",
]


@dataclass(frozen=True)
class DecompositionConfig:
    """Parameters of the construction.

    Parameters
    ----------
    alpha : float
        Weight in ``(0, 1)`` between the two one-sided candidates.
    gamma_growth : float
        Growth factor (> 1) of the search for the completion weights used
        with rank-deficient output matrices.
    max_gamma_steps : int
        Cap on that search.
    tol : Tolerance
    """

    alpha: float = 0.5
    gamma_growth: float = 2.0
    max_gamma_steps: int = 60
    tol: Tolerance = DEFAULT_TOL

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise InvalidInput(f"alpha must lie in (0, 1), got {self.alpha!r}")
        if not self.gamma_growth > 1.0:
            raise InvalidInput(f"gamma_growth must exceed 1, got {self.gamma_growth!r}")
        if self.max_gamma_steps < 1:
            raise InvalidInput("max_gamma_steps must be positive")


DEFAULT_CONFIG = DecompositionConfig()


# ---------------------------------------------------------------------------
# two-system data

def _port(g):
    if not isinstance(g, LtiSystem):
        raise InvalidInput("expected an LtiSystem")
    return g.single_port()[1]


def two_system_plant(g1, g2):
    """Block-diagonal plant of the pair with link ``v = (v1, v2)``, ``w = (w1, w2)``."""
    p1, p2 = _port(g1), _port(g2)
    if p1.n_v != p2.n_w or p2.n_v != p1.n_w:
        raise InvalidInput(
            f"link dimensions do not match: v1={p1.n_v}, w2={p2.n_w}, v2={p2.n_v}, w1={p1.n_w}")
    k1, k2 = g1.K[g1.port_keys[0]], g2.K[g2.port_keys[0]]
    return Plant(block_diag(g1.A, g2.A), block_diag(p1.B, p2.B), block_diag(p1.C, p2.C),
                 block_diag(p1.D, p2.D), block_diag(g1.E, g2.E), block_diag(g1.F, g2.F),
                 block_diag(k1, k2), block_diag(g1.L, g2.L))


def strip_exogenous(g):
    """Copy of `g` without its exogenous channel."""
    return LtiSystem(g.A, g.ports)


def _split_perf(perf, g1, g2, tol):
    """External supplies ``(s1_ext, s2_ext)`` from a pair or a block-diagonal supply."""
    shapes = ((g1.n_d, g1.n_z), (g2.n_d, g2.n_z))
    if perf is None:
        return tuple(QuadraticSupply.zero(*s) for s in shapes)
    if isinstance(perf, QuadraticSupply):
        d1, z1 = shapes[0]
        if (perf.n_first, perf.n_second) != (d1 + shapes[1][0], z1 + shapes[1][1]):
            raise InvalidInput("external supply does not match the exogenous channels")
        off = [perf.Q[:d1, d1:], perf.S[:d1, z1:], perf.S[d1:, :z1], perf.R[:z1, z1:]]
        scale = 1.0 + np.max(np.abs(perf.matrix), initial=0.0)
        if any(np.max(np.abs(b), initial=0.0) > tol.rank_eps * scale for b in off):
            raise InvalidInput("external supply must be block diagonal across the two systems")
        s1 = QuadraticSupply(perf.Q[:d1, :d1], perf.S[:d1, :z1], perf.R[:z1, :z1])
        s2 = QuadraticSupply(perf.Q[d1:, d1:], perf.S[d1:, z1:], perf.R[z1:, z1:])
        return s1, s2
    s1, s2 = perf
    for s, (nd, nz) in zip((s1, s2), shapes):
        if (s.n_first, s.n_second) != (nd, nz):
            raise InvalidInput("external supply does not match the exogenous channel")
    return s1, s2


@dataclass(frozen=True, eq=False)
class TwoSystemWorkspace:
    """Intermediate quantities of the closed-form construction.

    The multiplier-sign external blocks are ``(Qp, Sp, Rp) = -(s_ext)``.
    ``kernel`` spans ``Ker diag(C1, C2)`` and ``complement`` its orthogonal
    complement.  ``R_link``, ``S_link``, ``Q_link`` are the reduced
    quadratic form expressed on ``w`` (R), ``(v, w)`` (S) and ``v`` (Q);
    ``coupling`` is the matrix whose negativity makes the averaging work.
    """

    g1: LtiSystem
    g2: LtiSystem
    plant: Plant
    P1: np.ndarray
    P2: np.ndarray
    ext: tuple
    dims: dict
    Qp: np.ndarray
    Sp: np.ndarray
    Rp: np.ndarray
    kernel: np.ndarray
    complement: np.ndarray
    M: np.ndarray
    N_A: np.ndarray
    N_B: np.ndarray
    N_C: np.ndarray
    N_D: np.ndarray
    kernel_block: np.ndarray
    Z: np.ndarray
    Z_cross: np.ndarray
    Z_state: np.ndarray
    R_I: np.ndarray
    S_I: np.ndarray
    Q_I: np.ndarray
    R_II: np.ndarray
    S_II: np.ndarray
    Q_II: np.ndarray
    R_hat: np.ndarray
    S_hat: np.ndarray
    Q_hat: np.ndarray
    R_link: np.ndarray
    S_link: np.ndarray
    Q_link: np.ndarray
    coupling: np.ndarray
    margins: dict = field(default_factory=dict)

    def blocks(self):
        """Per-system pieces ``(R1, R2, S1, S2, Q1, Q2, D1, D2)`` of the link form."""
        d = self.dims
        w1, w2 = slice(0, d["nw1"]), slice(d["nw1"], d["nw1"] + d["nw2"])
        v1, v2 = slice(0, d["nv1"]), slice(d["nv1"], d["nv1"] + d["nv2"])
        R, S, Q = self.R_link, self.S_link, self.Q_link
        D = self.plant.D
        return (R[w1, w1], R[w2, w2], S[v1, w1], S[v2, w2], Q[v1, v1], Q[v2, v2],
                D[w1, v1], D[w2, v2])


def _coupling_matrix(R1, R2, S1, S2, Q1, Q2, D1, D2):
    m1 = R1 + Q2 - S2 @ D2 - D2.T @ S2.T + D2.T @ R2 @ D2
    m2 = S1.T + S2 - R1 @ D1 - D2.T @ R2
    m3 = Q1 + R2 - S1 @ D1 - D1.T @ S1.T + D1.T @ R1 @ D1
    return sym(np.block([[m1, m2], [m2.T, m3]]))


def build_workspace(g1, g2, P1, P2, perf=None, cfg=DEFAULT_CONFIG):
    """Compute every intermediate of the closed-form construction.

    Parameters
    ----------
    g1, g2 : LtiSystem
        Each with exactly one port (the link) and optional exogenous channel.
    P1, P2 : array_like
        Storage blocks.
    perf : pair of QuadraticSupply or QuadraticSupply, optional
        External supplies ``(s1_ext, s2_ext)`` on ``(d_i, z_i)``; a single
        supply on ``(d, z)`` must be block diagonal.

    Raises
    ------
    RankAssumption
        If ``C1`` or ``C2`` is not full row rank.
    HypothesisViolated
        ``which`` is ``"kernel"``, ``"exogenous"`` or ``"coupling"`` for the
        three sign conditions implied by dissipativity of the interconnection.
    """
    tol = cfg.tol
    plant = two_system_plant(g1, g2)
    P1 = as_symmetric(P1, tol, "P1")
    P2 = as_symmetric(P2, tol, "P2")
    if P1.shape[0] != g1.n or P2.shape[0] != g2.n:
        raise InvalidInput("storage blocks do not match the state dimensions")
    s1e, s2e = _split_perf(perf, g1, g2, tol)
    p1, p2 = _port(g1), _port(g2)
    for name, port in (("C1", p1), ("C2", p2)):
        if numeric_rank(port.C, tol) < port.n_w:
            raise RankAssumption(f"{name} is not full row rank")
    dims = dict(n1=g1.n, n2=g2.n, nv1=p1.n_v, nw1=p1.n_w, nv2=p2.n_v, nw2=p2.n_w)
    A, B, C, D, E, F, K, L = plant
    P = block_diag(P1, P2)
    Qp = -block_diag(s1e.Q, s2e.Q)
    Sp = -block_diag(s1e.S, s2e.S)
    Rp = -block_diag(s1e.R, s2e.R)

    M = sym(A.T @ P + P @ A + F.T @ Rp @ F)
    N_A = P @ B + F.T @ Rp @ K
    N_B = P @ E + F.T @ Sp.T + F.T @ Rp @ L
    N_C = K.T @ Sp.T + K.T @ Rp @ L
    N_D = sym(Qp + Sp @ L + L.T @ Sp.T + L.T @ Rp @ L)

    V = block_diag(kernel_basis(p1.C, tol), kernel_basis(p2.C, tol))
    W = orth_complement(V)
    margins = {}
    kb = sym(V.T @ M @ V)
    ok, margins["kernel"] = is_neg_def(kb, tol)
    if not ok:
        raise HypothesisViolated("kernel", margin=margins["kernel"])
    # projector V (V^T M V)^{-1} V^T; zero when the kernel is trivial
    proj = V @ np.linalg.solve(kb, V.T) if V.shape[1] else np.zeros_like(M)

    R_I = sym(M - M @ proj @ M)
    S_I = N_A.T - N_A.T @ proj @ M
    Q_I = sym(K.T @ Rp @ K - N_A.T @ proj @ N_A)

    nd = E.shape[1]
    Z = sym(N_D - N_B.T @ proj @ N_B)
    Z_cross = N_C - N_A.T @ proj @ N_B
    Z_state = N_B.T - N_B.T @ proj @ M
    if nd:
        ok, margins["exogenous"] = is_neg_def(Z, tol)
        if not ok:
            raise HypothesisViolated("exogenous", margin=margins["exogenous"])
        R_II = -sym(Z_state.T @ np.linalg.solve(Z, Z_state))
        S_II = -Z_cross @ np.linalg.solve(Z, Z_state)
        Q_II = -sym(Z_cross @ np.linalg.solve(Z, Z_cross.T))
    else:
        margins["exogenous"] = -np.inf
        R_II, S_II, Q_II = np.zeros_like(R_I), np.zeros_like(S_I), np.zeros_like(Q_I)
    R_hat, S_hat, Q_hat = R_I + R_II, S_I + S_II, Q_I + Q_II

    # w = C x identifies the link outputs with Im C^T; C^+ maps back
    Cp = np.linalg.pinv(C)
    R_link = sym(Cp.T @ R_hat @ Cp)
    S_link = S_hat @ Cp
    Q_link = Q_hat

    partial = dict(R_link=R_link, S_link=S_link, Q_link=Q_link)
    ws = TwoSystemWorkspace(
        g1, g2, plant, P1, P2, (s1e, s2e), dims, Qp, Sp, Rp, V, W, M, N_A, N_B, N_C, N_D,
        kb, Z, Z_cross, Z_state, R_I, S_I, Q_I, R_II, S_II, Q_II, R_hat, S_hat, Q_hat,
        coupling=np.zeros((0, 0)), margins=margins, **partial)
    coupling = _coupling_matrix(*ws.blocks())
    ok, margins["coupling"] = is_neg_def(coupling, tol)
    if not ok:
        raise HypothesisViolated("coupling", margin=margins["coupling"])
    return replace(ws, coupling=coupling)


# ---------------------------------------------------------------------------
# pairs

@dataclass(frozen=True)
class EdgeVerification:
    """A-posteriori checks of a constructed pair.

    ``residual_fwd`` / ``residual_bwd`` are ``lambda_max`` of the local
    dissipativity inequalities (link supply plus external supply);
    ``neutrality`` is the largest entry of ``s_bwd - mirror(s_fwd)``.
    """

    residual_fwd: float
    residual_bwd: float
    neutrality: float
    ok: bool


@dataclass(frozen=True, eq=False)
class EdgeSupplyPair:
    """Neutral pair on a link: ``s_fwd`` on ``(v1, w1)``, ``s_bwd`` on ``(v2, w2)``.

    ``s_bwd`` is always ``mirror(s_fwd)``.  ``gamma`` records the completion
    weights ``(gamma_Q, gamma_R)`` when the rank-deficient extension was used.
    ``sign_margins`` holds ``lambda_max`` of both second-argument blocks when a
    sign certificate was requested.
    """

    s_fwd: QuadraticSupply
    s_bwd: QuadraticSupply
    verification: EdgeVerification
    alpha: float
    method: str = "full-rank"
    gamma: tuple = ()
    sign_margins: tuple = ()
    workspace: object = None

    def flipped(self):
        v = self.verification
        ver = EdgeVerification(v.residual_bwd, v.residual_fwd, v.neutrality, v.ok)
        sm = tuple(reversed(self.sign_margins))
        return EdgeSupplyPair(self.s_bwd, self.s_fwd, ver, self.alpha, self.method,
                              self.gamma, sm, self.workspace)

    @property
    def sign_certified(self):
        return bool(self.sign_margins) and all(np.isfinite(self.sign_margins))


def verify_pair(g1, g2, P1, P2, s_fwd, s_bwd, ext=None, tol=DEFAULT_TOL):
    """Evaluate both local dissipativity inequalities and the neutrality identity."""
    s1e, s2e = ext if ext is not None else _split_perf(None, g1, g2, tol)
    r1 = dissipativity_residual(g1, QuadraticSupply.direct_sum(s_fwd, s1e), P1)
    r2 = dissipativity_residual(g2, QuadraticSupply.direct_sum(s_bwd, s2e), P2)
    m = s_fwd.mirror()
    if m.matrix.shape == s_bwd.matrix.shape:
        neutral = float(np.max(np.abs(m.matrix - s_bwd.matrix), initial=0.0))
    else:
        neutral = np.inf
    ok1 = is_neg_def(dissipativity_lmi(*_io_of(g1), QuadraticSupply.direct_sum(s_fwd, s1e), P1),
                     tol)[0]
    ok2 = is_neg_def(dissipativity_lmi(*_io_of(g2), QuadraticSupply.direct_sum(s_bwd, s2e), P2),
                     tol)[0]
    return EdgeVerification(r1, r2, neutral, bool(ok1 and ok2 and neutral == 0.0))


def _io_of(g):
    return g.io_matrices()


def construct_neutral_pair(ws, cfg=DEFAULT_CONFIG, *, alpha=None, check=True):
    """Average the two one-sided candidates into a neutral pair.

    Parameters
    ----------
    ws : TwoSystemWorkspace
    alpha : float, optional
        Overrides ``cfg.alpha``; any real value is accepted here so that
        boundary values can be probed, but only ``(0, 1)`` is guaranteed.
    check : bool
        Raise :class:`HypothesisViolated` (``which="local"``) when a local
        inequality fails.

    Returns
    -------
    EdgeSupplyPair
    """
    a = cfg.alpha if alpha is None else float(alpha)
    R1, R2, S1, S2, Q1, Q2, D1, D2 = ws.blocks()
    # multiplier blocks of the first system
    Qm = a * (-Q1 + D1.T @ S1.T + S1 @ D1 - D1.T @ R1 @ D1) + (1 - a) * R2
    Sm = a * (-S1 + D1.T @ R1) + (1 - a) * (S2.T - R2 @ D2)
    Rm = a * (-R1) + (1 - a) * (Q2 - S2 @ D2 - D2.T @ S2.T + D2.T @ R2 @ D2)
    s_fwd = QuadraticSupply(-sym(Qm), -Sm, -sym(Rm))
    s_bwd = s_fwd.mirror()
    ver = verify_pair(ws.g1, ws.g2, ws.P1, ws.P2, s_fwd, s_bwd, ws.ext, cfg.tol)
    if check and not ver.ok:
        raise HypothesisViolated(
            "local", f"local dissipativity fails (residuals {ver.residual_fwd:.3g}, "
                     f"{ver.residual_bwd:.3g})", margin=max(ver.residual_fwd, ver.residual_bwd))
    return EdgeSupplyPair(s_fwd, s_bwd, ver, a, "full-rank", workspace=ws)


def _loop_matrix(g1, g2, tol):
    plant = two_system_plant(g1, g2)
    nv1 = _port(g1).n_v
    nw1 = _port(g1).n_w
    nv2 = _port(g2).n_v
    nw2 = _port(g2).n_w
    H = np.zeros((nv1 + nv2, nw1 + nw2))
    H[:nv1, nw1:] = np.eye(nv1)
    H[nv1:, :nw1] = np.eye(nv2)
    Mloop = np.eye(nv1 + nv2) - H @ plant.D
    if Mloop.size and np.linalg.cond(Mloop) >= 1.0 / tol.rank_eps:
        raise IllPosed("the two-system interconnection is ill-posed")
    G = np.linalg.solve(Mloop, H @ plant.C) if Mloop.size else np.zeros((0, plant.A.shape[0]))
    return plant.A + plant.B @ G


def _check_lyapunov(g1, g2, P1, P2, tol):
    for name, P in (("P1", P1), ("P2", P2)):
        ok, lam = is_pos_def(P, tol)
        if not ok:
            raise NotALyapunovFunction(f"{name} is not positive definite", margin=lam)
    A = _loop_matrix(g1, g2, tol)
    ok, lam = is_neg_def(lyapunov_matrix(A, block_diag(P1, P2)), tol)
    if not ok:
        raise NotALyapunovFunction("A^T P + P A is not negative definite", margin=lam)
    return lam


def construct_autonomous(g1, g2, P1, P2, cfg=DEFAULT_CONFIG):
    """Neutral pair for two systems without exogenous channels.

    Checks that ``diag(P1, P2)`` is a Lyapunov function of the closed loop.
    Rank-deficient output matrices are handled through
    :func:`extend_rank_deficient` when the feed-through is zero.

    Raises
    ------
    NotALyapunovFunction
    """
    g1, g2 = strip_exogenous(g1), strip_exogenous(g2)
    P1 = as_symmetric(P1, cfg.tol, "P1")
    P2 = as_symmetric(P2, cfg.tol, "P2")
    _check_lyapunov(g1, g2, P1, P2, cfg.tol)
    return construct_pair(g1, g2, P1, P2, None, cfg)


def construct_pair(g1, g2, P1, P2, perf=None, cfg=DEFAULT_CONFIG):
    """Dispatch to the full-rank construction or the rank-deficient extension."""
    full = all(numeric_rank(_port(g).C, cfg.tol) == _port(g).n_w for g in (g1, g2))
    if full:
        return construct_neutral_pair(build_workspace(g1, g2, P1, P2, perf, cfg), cfg)
    if np.any(_port(g1).D) or np.any(_port(g2).D):
        raise RankAssumption("output matrices are rank deficient and the link has feed-through")
    return extend_rank_deficient(g1, g2, P1, P2, perf, cfg)


# ---------------------------------------------------------------------------
# rank-deficient output matrices

@dataclass(frozen=True, eq=False)
class RankFactorization:
    """``C[perm] == [J; I] @ C_tilde`` with ``C_tilde`` of full row rank.

    ``perm`` lists the rows of ``C``: dependent rows first, then the
    independent ones (both in ascending order).
    """

    J: np.ndarray
    C_tilde: np.ndarray
    perm: np.ndarray

    @property
    def stacked(self):
        """``[J; I]``."""
        return np.vstack([self.J, np.eye(self.C_tilde.shape[0])])

    @property
    def normal(self):
        """``[I; -J^T]``, spanning ``Ker [J; I]^T``."""
        k = self.J.shape[0]
        return np.vstack([np.eye(k), -self.J.T])

    @property
    def permutation_matrix(self):
        return np.eye(len(self.perm))[self.perm]

    def reconstruct(self):
        out = np.empty((len(self.perm), self.C_tilde.shape[1]))
        out[self.perm] = self.stacked @ self.C_tilde
        return out


def rank_factorization(C, tol=DEFAULT_TOL):
    """Split the rows of `C` into an independent set and combinations of it."""
    C = np.asarray(C, dtype=float)
    m = C.shape[0]
    r = numeric_rank(C, tol)
    if m == 0 or r == 0:
        idx = np.array([], dtype=int)
    else:
        _, _, piv = scipy.linalg.qr(C.T, pivoting=True, mode="economic")
        idx = np.sort(piv[:r])
    dep = np.array([i for i in range(m) if i not in set(idx.tolist())], dtype=int)
    C_tilde = C[idx]
    if dep.size and idx.size:
        J = C[dep] @ np.linalg.pinv(C_tilde)
    else:
        J = np.zeros((dep.size, idx.size))
    perm = np.r_[dep, idx].astype(int)
    fac = RankFactorization(J, C_tilde, perm)
    err = np.max(np.abs(fac.reconstruct() - C), initial=0.0)
    if err > 1e3 * tol.rank_eps * max(np.linalg.norm(C), 1.0):
        raise RankAssumption(f"row factorization is inaccurate ({err:.3g})")
    return fac


def _gamma_start(L, Wt, Wn):
    """``1 + ||Z12||^2 / |lambda_max(Z11)|`` for the split ``[Wt Wn]^T L [Wt Wn]``."""
    z11 = sym(Wt.T @ L @ Wt)
    z12 = Wt.T @ L @ Wn
    lam = lambda_max(z11)
    if not lam < 0:
        return None
    return 1.0 + np.linalg.norm(z12, 2) ** 2 / abs(lam) if z12.size else 1.0


def extend_rank_deficient(g1, g2, P1, P2, perf=None, cfg=DEFAULT_CONFIG):
    """Neutral pair when ``C1`` or ``C2`` lacks full row rank (zero feed-through).

    The link is reduced to the independent output rows, the full-rank
    construction is applied to the reduced pair, and the result is extended
    back.  The extension is unique up to two weights ``gamma_Q``,
    ``gamma_R`` on the directions the reduced supply does not see; these
    start at a Schur-complement bound and grow by ``cfg.gamma_growth`` until
    both local inequalities hold.  The cross block ``S`` is the least-norm
    solution of its defining linear equation.

    Raises
    ------
    InvalidInput
        If a feed-through block is nonzero.
    GammaSearchExhausted
        If the local inequalities still fail after ``cfg.max_gamma_steps``.
    """
    tol = cfg.tol
    p1, p2 = _port(g1), _port(g2)
    if np.any(p1.D) or np.any(p2.D):
        raise InvalidInput("the rank-deficient extension requires zero feed-through")
    P1 = as_symmetric(P1, tol, "P1")
    P2 = as_symmetric(P2, tol, "P2")
    s1e, s2e = _split_perf(perf, g1, g2, tol)
    f1, f2 = rank_factorization(p1.C, tol), rank_factorization(p2.C, tol)
    k1, k2 = g1.port_keys[0], g2.port_keys[0]
    K1, K2 = g1.K[k1], g2.K[k2]
    # v1 = w2 is permuted like w2, v2 like w1
    B1p, K1p = p1.B[:, f2.perm], K1[:, f2.perm]
    B2p, K2p = p2.B[:, f1.perm], K2[:, f1.perm]
    red1 = g1.replace(ports={k1: Port(B1p @ f2.stacked, f1.C_tilde,
                                      np.zeros((f1.C_tilde.shape[0], f2.C_tilde.shape[0])))},
                      K={k1: K1p @ f2.stacked})
    red2 = g2.replace(ports={k2: Port(B2p @ f1.stacked, f2.C_tilde,
                                      np.zeros((f2.C_tilde.shape[0], f1.C_tilde.shape[0])))},
                      K={k2: K2p @ f1.stacked})
    ws = build_workspace(red1, red2, P1, P2, (s1e, s2e), cfg)
    reduced = construct_neutral_pair(ws, cfg)
    Qt, St, Rt = reduced.s_fwd.Q, reduced.s_fwd.S, reduced.s_fwd.R

    T2 = np.hstack([f2.stacked, f2.normal])
    T1 = np.hstack([f1.stacked, f1.normal])
    T2i, T1i = np.linalg.inv(T2), np.linalg.inv(T1)
    N2, N1 = f2.normal, f1.normal
    # stored-sign external blocks of the exposed channels
    corr_q = N2.T @ K1p.T @ s1e.R @ K1p @ N2
    corr_r = N1.T @ K2p.T @ s2e.R @ K2p @ N1
    S_p = np.linalg.pinv(np.hstack([f2.J.T, np.eye(f2.C_tilde.shape[0])])) @ St \
        @ np.linalg.pinv(f1.stacked)

    def q_of(gq):
        core = block_diag(Qt, gq * np.eye(N2.shape[1]) - corr_q)
        return sym(T2i.T @ core @ T2i)

    def r_of(gr):
        core = block_diag(Rt, -gr * np.eye(N1.shape[1]) + corr_r)
        return sym(T1i.T @ core @ T1i)

    Pi2, Pi1 = f2.permutation_matrix, f1.permutation_matrix

    def supply(gq, gr):
        return QuadraticSupply(Pi2.T @ q_of(gq) @ Pi2, Pi2.T @ S_p @ Pi1,
                               Pi1.T @ r_of(gr) @ Pi1)

    def lmi1(gq):
        s = supply(gq, 0.0)
        return dissipativity_lmi(*g1.io_matrices(), QuadraticSupply.direct_sum(s, s1e), P1)

    def lmi2(gr):
        s = supply(0.0, gr).mirror()
        return dissipativity_lmi(*g2.io_matrices(), QuadraticSupply.direct_sum(s, s2e), P2)

    n_d1, n_d2 = g1.n_d, g2.n_d

    def directions(n, Pi, stacked, normal, n_d):
        # [x; v; d] coordinates: reduced directions and the complementary ones
        Wt = block_diag(np.eye(n), Pi.T @ stacked, np.eye(n_d))
        Wn = np.vstack([np.zeros((n, normal.shape[1])), Pi.T @ normal,
                        np.zeros((n_d, normal.shape[1]))])
        return Wt, Wn

    gammas = []
    for lmi, n, Pi, fac, nd in ((lmi1, g1.n, Pi2, f2, n_d1), (lmi2, g2.n, Pi1, f1, n_d2)):
        if fac.J.shape[0] == 0:
            gammas.append(0.0)
            continue
        Wt, Wn = directions(n, Pi, fac.stacked, fac.normal, nd)
        g = _gamma_start(lmi(0.0), Wt, Wn)
        if g is None:
            raise HypothesisViolated("local", "reduced local inequality fails")
        for _ in range(cfg.max_gamma_steps + 1):
            if is_neg_def(lmi(g), tol)[0]:
                break
            g *= cfg.gamma_growth
        else:
            raise GammaSearchExhausted(f"no completion weight found up to {g:.3g}")
        gammas.append(g)

    s_fwd = supply(*gammas)
    s_bwd = s_fwd.mirror()
    ver = verify_pair(g1, g2, P1, P2, s_fwd, s_bwd, (s1e, s2e), tol)
    if not ver.ok:
        raise HypothesisViolated("local", margin=max(ver.residual_fwd, ver.residual_bwd))
    return EdgeSupplyPair(s_fwd, s_bwd, ver, cfg.alpha, "rank-extended", tuple(gammas),
                          workspace=ws)


# ---------------------------------------------------------------------------
# sign-structured pairs

def construct_sign_structured(g1, g2, P1, P2, perf=None, cfg=DEFAULT_CONFIG):
    """Neutral pair whose supplies are nonpositive for zero link input.

    Applies to links without feed-through where either both systems have
    ``K = L = 0`` (external supplies allowed) or no exogenous channel at all
    with ``P > 0``.  The second-argument block of each stored supply is then
    negative semidefinite, which is verified and recorded in
    ``sign_margins``.

    Raises
    ------
    InvalidInput
        If the structural restrictions do not hold.
    HypothesisViolated
        ``which="sign"`` if the reduced form lacks the sign pattern the
        construction relies on, or a constructed block fails the check.
    """
    tol = cfg.tol
    for g in (g1, g2):
        key, port = g.single_port()
        if np.any(port.D):
            raise InvalidInput("sign-structured pairs require zero feed-through")
        if np.any(g.K[key]) or np.any(g.L):
            raise InvalidInput("sign-structured pairs require K = 0 and L = 0")
    if not (g1.has_exogenous or g2.has_exogenous):
        _check_lyapunov(g1, g2, as_symmetric(P1, tol, "P1"), as_symmetric(P2, tol, "P2"), tol)
    pair = construct_pair(g1, g2, P1, P2, perf, cfg)
    ws = pair.workspace
    R_link, Q_link = ws.R_link, ws.Q_link
    ok_r, lam_r = is_neg_semidef(R_link, tol)
    ok_q, lam_q = is_neg_semidef(-Q_link, tol)
    if not (ok_r and ok_q):
        raise HypothesisViolated("sign", "reduced link form lacks the sign pattern",
                                 margin=max(lam_r, lam_q))
    ok1, m1 = is_neg_semidef(pair.s_fwd.R, tol)
    ok2, m2 = is_neg_semidef(pair.s_bwd.R, tol)
    if not (ok1 and ok2):
        raise HypothesisViolated("sign", "constructed supply is positive for zero input",
                                 margin=max(m1, m2))
    return replace(pair, sign_margins=(m1, m2))
