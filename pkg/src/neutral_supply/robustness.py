"""Certificates that stability survives scaling a link down to removal.

A link with ports ``(v_A, w_A)`` and ``(v_B, w_B)`` is scaled as
``v_A = alpha w_B``, ``v_B = alpha w_A``; ``alpha = 0`` disconnects it.  If
the system is strictly dissipative with respect to a neutral pair whose
supplies are nonpositive for zero input, with positive definite storage,
stability holds on the whole interval.  Every certificate also checks the
closed-loop eigenvalues on a grid as an independent cross-check.
"""

from dataclasses import dataclass, field

import numpy as np

from .decompose import (
    DEFAULT_CONFIG,
    construct_sign_structured,
    two_system_plant,
)
from .errors import InvalidInput, PreconditionFailed, UnknownSystem
from .lmi import as_plant, dissipativity_lmi, robust_stability_check, neutral_multiplier
from .linalg import DEFAULT_TOL, block_diag, is_neg_def, is_neg_semidef, is_pos_def
from .model import InterconnectionSet, QuadraticSupply, scaling_matrix
from .netgraph import decompose_acyclic, isolate_system, is_acyclic, lump, split_at_edge

__all__ = [
    "DEFAULT_GRID",
    "RobustnessCertificate",
    "ConditionCheck",
    "link_scaling_certificate",
    "scaled_closed_loop",
    "edge_removal_survey",
    "system_removal_certificate",
    "AlphaSweep",
    "alpha_sweep_dissipativity",
    "edge_alpha_sweep",
]

DEFAULT_GRID = tuple(np.round(np.linspace(0.0, 1.0, 11), 12))


@dataclass(frozen=True)
class ConditionCheck:
    ok: bool
    margin: float


@dataclass(frozen=True)
class RobustnessCertificate:
    """Outcome of a link-scaling test.

    Attributes
    ----------
    subject : object
        Edge ``(i, j)`` or system id.
    conditions : dict
        ``"dissipativity"``, ``"neutrality"``, ``"sign"`` and ``"positive"``
        as :class:`ConditionCheck`; margins are ``lambda_max`` of the
        residual, the largest mirror mismatch, the largest eigenvalue of the
        second-argument blocks and ``lambda_min(P)``.
    conclusion : bool
        Stable for every ``alpha`` in ``[0, 1]``.
    alphas : tuple
        Grid of the eigenvalue cross-check.
    spectral_abscissa : tuple
        Largest real part of the closed-loop eigenvalues per grid point.
    hurwitz : bool
        All grid points stable.
    diagnostic : str
        Non-empty when the certificate and the eigenvalue grid disagree.
    """

    subject: object
    conditions: dict
    conclusion: bool
    alphas: tuple
    spectral_abscissa: tuple
    hurwitz: bool
    multiplier_check: object = None
    diagnostic: str = ""
    pair: object = field(default=None, compare=False)


def scaled_closed_loop(plant, p, q, alpha, tol=DEFAULT_TOL):
    """State matrix with ``v = H(alpha) w`` on a plant with link ``(v_A, v_B, w_A, w_B)``."""
    H = scaling_matrix(p, q, alpha)
    M = np.eye(p + q) - H @ plant.D
    if M.size and np.linalg.cond(M) >= 1.0 / tol.rank_eps:
        raise PreconditionFailed("well-posedness", f"ill-posed at alpha={alpha}")
    G = np.linalg.solve(M, H @ plant.C) if M.size else np.zeros((0, plant.A.shape[0]))
    return plant.A + plant.B @ G


def link_scaling_certificate(g, sA, sB, P, alphas=DEFAULT_GRID, tol=DEFAULT_TOL, subject=None):
    """Check the conditions guaranteeing stability under link scaling.

    Parameters
    ----------
    g : LtiSystem, Plant or tuple
        Inputs ordered ``(v_A, v_B)`` and outputs ``(w_A, w_B)``; an
        :class:`LtiSystem` must have its two link ports in that order.
    sA, sB : QuadraticSupply
        Supplies on ``(v_A, w_A)`` and ``(v_B, w_B)``.
    P : array_like
        Storage matrix.

    Raises
    ------
    PreconditionFailed
        ``item="dims"`` on inconsistent sizes, ``item="dissipativity"`` when
        ``g`` is not strictly dissipative for ``sA + sB`` with storage ``P``.
    """
    plant = as_plant(g)
    P = np.asarray(P, dtype=float)
    p, q = sA.n_first, sA.n_second
    if plant.B.shape[1] != p + sB.n_first or plant.C.shape[0] != q + sB.n_second:
        raise PreconditionFailed("dims", "supplies do not match the link channels")
    if sB.n_first != q or sB.n_second != p:
        raise PreconditionFailed("dims", "the two ends of the link have incompatible sizes")
    total = QuadraticSupply(block_diag(sA.Q, sB.Q), block_diag(sA.S, sB.S),
                            block_diag(sA.R, sB.R))
    lmi = dissipativity_lmi(plant.A, plant.B, plant.C, plant.D, total, P)
    ok_d, m_d = is_neg_def(lmi, tol)
    if not ok_d:
        raise PreconditionFailed("dissipativity",
                                 f"not strictly dissipative (lambda_max {m_d:.3g})")
    mirror = sA.mirror().matrix
    mismatch = float(np.max(np.abs(mirror - sB.matrix), initial=0.0))
    scale = 1.0 + np.max(np.abs(mirror), initial=0.0)
    ok_a = mismatch <= tol.rank_eps * scale
    ok_b1, m_b1 = is_neg_semidef(sA.R, tol)
    ok_b2, m_b2 = is_neg_semidef(sB.R, tol)
    ok_c, m_c = is_pos_def(P, tol)
    conditions = {
        "dissipativity": ConditionCheck(ok_d, m_d),
        "neutrality": ConditionCheck(bool(ok_a), mismatch),
        "sign": ConditionCheck(ok_b1 and ok_b2, max(m_b1, m_b2)),
        "positive": ConditionCheck(ok_c, m_c),
    }
    conclusion = all(c.ok for c in conditions.values())

    mult = None
    if ok_a:
        hset = InterconnectionSet.scaling_family(p, q, alphas)
        mult = robust_stability_check(plant, hset, P, neutral_multiplier(sA), tol)

    alphas = tuple(float(a) for a in alphas)
    absc = []
    for a in alphas:
        A = scaled_closed_loop(plant, p, q, a, tol)
        absc.append(float(np.max(np.linalg.eigvals(A).real)))
    hurwitz = all(x < 0 for x in absc)
    diagnostic = ""
    if conclusion and not hurwitz:
        diagnostic = "certificate holds but a grid point is unstable"
    elif conclusion and mult is not None and not mult.ok:
        diagnostic = "certificate holds but the multiplier test fails"
    return RobustnessCertificate(subject, conditions, conclusion, alphas, tuple(absc),
                                 hurwitz, mult, diagnostic)


def _require_no_feedthrough(net):
    if net.has_feedthrough():
        raise InvalidInput("link removal certificates require zero feed-through on every link")


def edge_removal_survey(net, cert, cfg=DEFAULT_CONFIG, alphas=DEFAULT_GRID):
    """Certificate for scaling each link of an acyclic network independently.

    Returns
    -------
    dict
        Undirected edge to :class:`RobustnessCertificate`.
    """
    _require_no_feedthrough(net)
    if not net.undirected_edges:
        return {}
    dec = decompose_acyclic(net, cert, cfg, sign_structured=True)
    out = {}
    for (i, j), pair in dec.items():
        split = split_at_edge(net, (i, j))
        plus = lump(net, split.plus_side)
        minus = lump(net, split.minus_side)
        g1 = plus.replace(ports={(i, j): plus.ports[(i, j)]}, K={(i, j): plus.K[(i, j)]})
        g2 = minus.replace(ports={(j, i): minus.ports[(j, i)]}, K={(j, i): minus.K[(j, i)]})
        plant = two_system_plant(g1, g2)
        P = block_diag(cert.matrix(sorted(split.plus_side)), cert.matrix(sorted(split.minus_side)))
        c = link_scaling_certificate(plant, pair.s_fwd, pair.s_bwd, P, alphas, cfg.tol, (i, j))
        out[(i, j)] = _with_pair(c, pair)
    return out


def _with_pair(c, pair):
    return RobustnessCertificate(c.subject, c.conditions, c.conclusion, c.alphas,
                                 c.spectral_abscissa, c.hurwitz, c.multiplier_check,
                                 c.diagnostic, pair)


def system_removal_certificate(net, cert, i, cfg=DEFAULT_CONFIG, alphas=DEFAULT_GRID):
    """Certificate for disconnecting system `i` (all its links at once).

    Cycles are allowed: the rest of the network is lumped into one system.

    Raises
    ------
    UnknownSystem
    InvalidInput
        When some link has feed-through.
    """
    if i not in net.systems:
        raise UnknownSystem(i)
    _require_no_feedthrough(net)
    view = isolate_system(net, i)
    P1 = cert.blocks[i]
    P2 = cert.matrix(list(view.rest_ids))
    pair = construct_sign_structured(view.system, view.rest, P1, P2, None, cfg)
    plant = two_system_plant(view.system, view.rest)
    P = block_diag(P1, P2)
    c = link_scaling_certificate(plant, pair.s_fwd, pair.s_bwd, P, alphas, cfg.tol, i)
    return _with_pair(c, pair)


# ---------------------------------------------------------------------------
# coupling sweep

@dataclass(frozen=True)
class AlphaSweep:
    """``lambda_max`` of the dissipativity inequality of ``A(alpha)`` per sample.

    ``out_of_range`` lists samples outside ``[0, 1]`` (computed anyway).
    """

    alphas: tuple
    residuals: tuple
    out_of_range: tuple

    @property
    def all_negative(self):
        return all(r < 0 for r in self.residuals)


def alpha_sweep_dissipativity(g1, g2, P1, P2, perf=None, alphas=DEFAULT_GRID,
                              tol=DEFAULT_TOL):
    """Dissipativity residual with the coupling blocks scaled by ``alpha``.

    Both systems must have zero ``D``, ``K`` and ``L``; the supply is the
    additive external one and the storage ``diag(P1, P2)``.
    """
    plant = two_system_plant(g1, g2)
    if np.any(plant.D) or np.any(plant.K) or np.any(plant.L):
        raise InvalidInput("the sweep requires D = K = L = 0")
    p1, p2 = g1.single_port()[1], g2.single_port()[1]
    A1, A2 = g1.A, g2.A
    top = p1.B @ p2.C
    bottom = p2.B @ p1.C
    if perf is None:
        s = QuadraticSupply.zero(plant.E.shape[1], plant.F.shape[0])
    elif isinstance(perf, QuadraticSupply):
        s = perf
    else:
        s = QuadraticSupply.direct_sum(*perf)
    P = block_diag(P1, P2)
    res, bad = [], []
    for a in alphas:
        a = float(a)
        if not 0.0 <= a <= 1.0:
            bad.append(a)
        A = np.block([[A1, a * top], [a * bottom, A2]])
        lmi = dissipativity_lmi(A, plant.E, plant.F, np.zeros((plant.F.shape[0], plant.E.shape[1])),
                                s, P)
        res.append(float(np.linalg.eigvalsh(lmi)[-1]))
    return AlphaSweep(tuple(float(a) for a in alphas), tuple(res), tuple(bad))


def edge_alpha_sweep(net, cert, edge, alphas=DEFAULT_GRID, tol=DEFAULT_TOL):
    """:func:`alpha_sweep_dissipativity` on the two sides of an acyclic network's edge."""
    if not is_acyclic(net):
        raise InvalidInput("edge sweeps need an acyclic network")
    i, j = edge
    split = split_at_edge(net, (i, j))
    plus, minus = lump(net, split.plus_side), lump(net, split.minus_side)
    g1 = plus.replace(ports={(i, j): plus.ports[(i, j)]}, K={(i, j): plus.K[(i, j)]})
    g2 = minus.replace(ports={(j, i): minus.ports[(j, i)]}, K={(j, i): minus.K[(j, i)]})
    return alpha_sweep_dissipativity(g1, g2, cert.matrix(sorted(split.plus_side)),
                                     cert.matrix(sorted(split.minus_side)), None, alphas, tol)
