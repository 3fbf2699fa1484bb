"""Dissipativity LMIs and a small dense semidefinite feasibility engine.

The engine turns a list of affine matrix-valued constraints into the
margin-maximisation problem

    minimize t  subject to  F_j(x) / sigma_j <= t I   (strict constraints)
                            G_k(x)           <= 0     (non-strict constraints)

and hands it to ``cvxopt.solvers.sdp``.  A returned point is only reported
feasible after the unscaled constraints pass the eigenvalue gates of
:mod:`neutral_supply.linalg`.
"""

from collections import namedtuple
from dataclasses import dataclass, field

import cvxopt
import cvxopt.solvers
import numpy as np

from .errors import InvalidInput, Undecided
from .linalg import (
    DEFAULT_TOL,
    as_matrix,
    block_diag,
    is_neg_def,
    is_neg_semidef,
    is_pos_def,
    lambda_max,
    lambda_min,
    sym,
)
from .model import (
    LtiSystem,
    QuadraticSupply,
    StorageCertificate,
    closed_loop_matrix,
    lyapunov_matrix,
)

__all__ = [
    "FEASIBLE",
    "INFEASIBLE",
    "UNDECIDED",
    "DecisionBlock",
    "LmiProblem",
    "FeasibilityResult",
    "Plant",
    "as_plant",
    "dissipativity_lmi",
    "dissipativity_residual",
    "find_additive_lyapunov",
    "multiplier_condition",
    "robust_stability_check",
    "robust_dissipativity_check",
    "RobustCheck",
    "find_multiplier",
    "neutral_multiplier",
    "neutral_multiplier_affine",
    "KAPPA",
]

FEASIBLE = "feasible"
INFEASIBLE = "infeasible"
UNDECIDED = "undecided"

# normalisation bound for homogeneous searches: I <= P <= KAPPA * I
KAPPA = 1e6


@dataclass(frozen=True)
class DecisionBlock:
    name: str
    rows: int
    cols: int
    symmetric: bool

    @property
    def size(self):
        if self.symmetric:
            return self.rows * (self.rows + 1) // 2
        return self.rows * self.cols


@dataclass
class FeasibilityResult:
    """Outcome of a feasibility search.

    Attributes
    ----------
    status : str
        ``"feasible"``, ``"infeasible"`` or ``"undecided"``.
    witness : dict
        Decision block name to value (empty when no point was returned).
    margin : float
        Largest ``lambda_max`` over the strict constraints at the witness.
    margins : dict
        Constraint name to ``lambda_max`` at the witness.
    objective : float
        Optimal scaled margin ``t`` reported by the solver.
    """

    status: str
    witness: dict = field(default_factory=dict)
    margin: float = float("nan")
    margins: dict = field(default_factory=dict)
    objective: float = float("nan")
    message: str = ""
    certificate: object = None

    @property
    def feasible(self):
        return self.status == FEASIBLE


class LmiProblem:
    """Affine matrix inequalities in a few named decision blocks.

    Constraints are callables mapping ``{name: value}`` to a symmetric
    matrix ``F(x)``; strict ones ask for ``F(x) < 0`` and non-strict ones
    for ``F(x) <= 0``.
    """

    def __init__(self):
        self.blocks = []
        self.constraints = []

    def add_block(self, name, rows, cols=None, symmetric=None):
        cols = rows if cols is None else cols
        if symmetric is None:
            symmetric = rows == cols
        if symmetric and rows != cols:
            raise InvalidInput("a symmetric block must be square")
        if any(b.name == name for b in self.blocks):
            raise InvalidInput(f"duplicate block {name!r}")
        self.blocks.append(DecisionBlock(name, int(rows), int(cols), bool(symmetric)))
        return self

    def add_constraint(self, fn, strict=True, name=None):
        name = name or f"c{len(self.constraints)}"
        self.constraints.append((name, fn, bool(strict)))
        return self

    @property
    def n_vars(self):
        return sum(b.size for b in self.blocks)

    def unpack(self, x):
        """Decision vector to ``{name: matrix}``."""
        x = np.asarray(x, dtype=float)
        out, k = {}, 0
        for b in self.blocks:
            if b.symmetric:
                m = np.zeros((b.rows, b.rows))
                iu = np.triu_indices(b.rows)
                m[iu] = x[k:k + b.size]
                m = m + np.triu(m, 1).T
            else:
                m = x[k:k + b.size].reshape(b.rows, b.cols)
            out[b.name] = m
            k += b.size
        return out

    def _affine(self, fn):
        n = self.n_vars
        f0 = sym(as_matrix(fn(self.unpack(np.zeros(n)))))
        coeffs = []
        for k in range(n):
            e = np.zeros(n)
            e[k] = 1.0
            coeffs.append(sym(as_matrix(fn(self.unpack(e)))) - f0)
        # spot-check affinity at a pseudo-random point
        x = np.cos(np.arange(1, n + 1) * 1.7)
        direct = sym(as_matrix(fn(self.unpack(x))))
        rebuilt = f0 + sum(xk * fk for xk, fk in zip(x, coeffs))
        scale = 1.0 + np.max(np.abs(direct), initial=0.0)
        if np.max(np.abs(direct - rebuilt), initial=0.0) > 1e-8 * scale:
            raise InvalidInput("constraint is not affine in the decision variables")
        return f0, coeffs

    def evaluate(self, values):
        return {name: sym(as_matrix(fn(values))) for name, fn, _ in self.constraints}

    def check(self, values, tol=DEFAULT_TOL):
        """Gate every constraint at `values`; returns ``(ok, worst, margins)``."""
        ok, worst, margins = True, -np.inf, {}
        for name, fn, strict in self.constraints:
            m = sym(as_matrix(fn(values)))
            passed, lam = (is_neg_def if strict else is_neg_semidef)(m, tol)
            margins[name] = lam
            ok = ok and passed
            if strict:
                worst = max(worst, lam)
        return ok, worst, margins

    def solve(self, tol=DEFAULT_TOL, max_iter=500, certify_infeasible=False):
        """Maximise the worst strict-constraint margin.

        Parameters
        ----------
        certify_infeasible : bool
            Allow an ``"infeasible"`` verdict when the solver converges to a
            positive optimal margin.  Only sound when the constraint set is
            invariant under the normalisation the caller imposed.
        """
        n = self.n_vars
        Gs, hs = [], []
        for name, fn, strict in self.constraints:
            f0, coeffs = self._affine(fn)
            m = f0.shape[0]
            if m == 0:
                continue
            sigma = max((np.linalg.norm(c) for c in coeffs), default=0.0)
            if sigma == 0.0:
                sigma = max(np.linalg.norm(f0), 1.0)
            cols = [c.ravel(order="F") / sigma for c in coeffs]
            cols.append(-np.eye(m).ravel(order="F") if strict else np.zeros(m * m))
            Gs.append(cvxopt.matrix(np.column_stack(cols)))
            hs.append(cvxopt.matrix(-f0 / sigma))
        if not Gs:
            values = self.unpack(np.zeros(n))
            ok, worst, margins = self.check(values, tol)
            return FeasibilityResult(FEASIBLE if ok else INFEASIBLE, values, worst, margins,
                                     message="constant constraints")
        c = cvxopt.matrix(np.r_[np.zeros(n), 1.0])
        Gl = cvxopt.matrix(np.r_[np.zeros(n), -1.0].reshape(1, -1))
        hl = cvxopt.matrix([1.0])
        # the witness is re-verified below, so a loose retry costs no soundness
        sol, failure = None, ""
        for abstol, reltol, feastol in ((1e-8, 1e-7, 1e-8), (1e-7, 1e-6, 1e-7), (1e-6, 1e-5, 1e-6)):
            opts = {"show_progress": False, "maxiters": int(max_iter),
                    "abstol": abstol, "reltol": reltol, "feastol": feastol}
            try:
                sol = cvxopt.solvers.sdp(c, Gl, hl, Gs, hs, options=opts)
            except (ValueError, ArithmeticError) as exc:
                sol, failure = None, f"solver failure: {exc}"
                continue
            if sol["status"] == "optimal":
                break
        if sol is None:
            return FeasibilityResult(UNDECIDED, message=failure)
        if sol["x"] is None:
            return FeasibilityResult(UNDECIDED, message=f"solver status {sol['status']}")
        x = np.array(sol["x"]).ravel()
        values = self.unpack(x[:n])
        t = float(x[n])
        ok, worst, margins = self.check(values, tol)
        if ok:
            status = FEASIBLE
        elif certify_infeasible and sol["status"] == "optimal" and t > 1e-6:
            status = INFEASIBLE
        else:
            status = UNDECIDED
        return FeasibilityResult(status, values, worst, margins, t,
                                 message=f"solver status {sol['status']}")


# ---------------------------------------------------------------------------
# LMI assembly

Plant = namedtuple("Plant", "A B C D E F K L")
Plant.__doc__ = """Uncertainty channel ``(v, w)`` plus exogenous channel ``(d, z)``::

    dx = A x + B v + E d,   w = C x + D v,   z = F x + K v + L d
"""


def as_plant(g):
    """Normalise an :class:`LtiSystem`, a `Plant` or an ``(A, B, C, D)`` tuple."""
    if isinstance(g, Plant):
        return g
    if isinstance(g, LtiSystem):
        B, C, D, K = g.interconnection()
        return Plant(g.A, B, C, D, g.E, g.F, K, g.L)
    A, B, C, D = (as_matrix(m) for m in g)
    n = A.shape[0]
    B = B.reshape(n, -1) if B.size == 0 else B
    C = C.reshape(-1, n) if C.size == 0 else C
    D = D.reshape(C.shape[0], B.shape[1]) if D.size == 0 else D
    return Plant(A, B, C, D, np.zeros((n, 0)), np.zeros((0, n)),
                 np.zeros((0, B.shape[1])), np.zeros((0, 0)))


def _io(sys):
    if isinstance(sys, LtiSystem):
        return sys.io_matrices()
    if isinstance(sys, Plant):
        p = sys
        B = np.hstack([p.B, p.E])
        C = np.vstack([p.C, p.F])
        D = np.block([[p.D, np.zeros((p.D.shape[0], p.E.shape[1]))], [p.K, p.L]])
        return p.A, B, C, D
    return tuple(as_matrix(m) for m in sys)


def dissipativity_lmi(A, B, C, D, supply, P):
    """Left-hand side of the quadratic dissipativity inequality.

    Returns the symmetric matrix ``[[A^T P + P A - C^T R C, P B - C^T S^T - C^T R D],
    [*, -Q - S D - D^T S^T - D^T R D]]``; strict dissipativity of ``(A, B, C, D)``
    with storage ``x^T P x`` and `supply` holds iff it is negative definite.
    """
    A, B, C, D = (np.asarray(m, dtype=float) for m in (A, B, C, D))
    P = np.asarray(P, dtype=float)
    Q, S, R = supply.Q, supply.S, supply.R
    n, m, p = A.shape[0], B.shape[1], C.shape[0]
    if Q.shape != (m, m) or R.shape != (p, p) or P.shape != (n, n):
        raise InvalidInput(
            f"dimension mismatch: system has {m} inputs, {p} outputs, {n} states; "
            f"supply is {supply.n_first}x{supply.n_second}, P is {P.shape}")
    xx = A.T @ P + P @ A - C.T @ R @ C
    xu = P @ B - C.T @ S.T - C.T @ R @ D
    uu = -Q - S @ D - D.T @ S.T - D.T @ R @ D
    return sym(np.block([[xx, xu], [xu.T, uu]]))


def dissipativity_residual(sys, supply, P):
    """``lambda_max`` of :func:`dissipativity_lmi` for `sys`.

    `sys` is an :class:`LtiSystem` (inputs: ports then ``d``; outputs:
    ports then ``z``), a :class:`Plant`, or an ``(A, B, C, D)`` tuple.
    """
    return lambda_max(dissipativity_lmi(*_io(sys), supply, P))


# ---------------------------------------------------------------------------
# additive Lyapunov search

def find_additive_lyapunov(net, tol=DEFAULT_TOL, max_iter=500):
    """Search ``P = diag(P_i)`` with ``P_i > 0`` and ``A^T P + P A < 0``.

    The search normalises ``I <= P_i <= KAPPA I``.  ``"infeasible"`` is only
    reported when the solver's optimal margin is positive and the upper
    bound is inactive, so the verdict cannot be an artefact of the box.
    """
    A = closed_loop_matrix(net, tol)
    ids = net.ids
    prob = LmiProblem()
    for i in ids:
        prob.add_block(f"P{i}", net.systems[i].n)

    def full(vals):
        return block_diag(*[vals[f"P{i}"] for i in ids])

    prob.add_constraint(lambda v: lyapunov_matrix(A, full(v)), strict=True, name="lyapunov")
    for i in ids:
        n = net.systems[i].n
        prob.add_constraint(lambda v, i=i, n=n: np.eye(n) - v[f"P{i}"], strict=False,
                            name=f"lower{i}")
        prob.add_constraint(lambda v, i=i, n=n: v[f"P{i}"] - KAPPA * np.eye(n), strict=False,
                            name=f"upper{i}")
    res = prob.solve(tol, max_iter, certify_infeasible=True)
    if res.witness:
        blocks = {i: res.witness[f"P{i}"] for i in ids}
        if res.status == INFEASIBLE and max(lambda_max(b) for b in blocks.values()) > 0.5 * KAPPA:
            res.status = UNDECIDED
            res.message += "; normalisation bound active"
        cert = StorageCertificate.from_blocks(blocks, res.margins.get("lyapunov", np.nan), tol)
        res.certificate = cert
        res.margin = res.margins.get("lyapunov", np.nan)
    return res


# ---------------------------------------------------------------------------
# multiplier conditions

@dataclass(frozen=True)
class RobustCheck:
    """Result of a robust stability / dissipativity test.

    Attributes
    ----------
    ok : bool
    generator_margins : tuple
        ``lambda_min`` of ``(H; I)^T Pi (H; I)`` per generator.
    lmi_margin : float
        ``lambda_max`` of the main inequality.
    p_margin : float
        ``lambda_min(P)`` (only gated for robust stability).
    method : str
        ``"grid"`` or ``"closed-form"`` for the scaling family.
    """

    ok: bool
    generator_margins: tuple
    lmi_margin: float
    p_margin: float
    method: str


def _pi_matrix(multiplier):
    if isinstance(multiplier, QuadraticSupply):
        return multiplier.matrix
    return sym(as_matrix(multiplier, name="multiplier"))


def multiplier_condition(H, pi):
    """``(H; I)^T Pi (H; I)`` for ``v = H w``."""
    H = np.asarray(H, dtype=float)
    T = np.vstack([H, np.eye(H.shape[1])])
    return sym(T.T @ pi @ T)


def neutral_multiplier(sA):
    """Multiplier of ``sA (+) mirror(sA)`` in ``(v_A, v_B, w_A, w_B)`` order."""
    sB = sA.mirror()
    return QuadraticSupply.direct_sum(sA, sB).multiplier()


def _lemma_shape(pi, p, q, tol):
    # Pi = -(sA (+) mirror(sA)) for sA of size (p, q)?
    sA = QuadraticSupply.from_multiplier(pi[np.ix_(_idx_a(p, q), _idx_a(p, q))], p)
    ref = neutral_multiplier(sA)
    scale = 1.0 + np.max(np.abs(pi))
    if np.max(np.abs(ref - pi)) <= tol.rank_eps * scale:
        return sA
    return None


def _idx_a(p, q):
    # positions of (v_A, w_A) in (v_A, v_B, w_A, w_B)
    return np.r_[np.arange(p), p + q + np.arange(q)]


def _generator_check(hset, pi, tol):
    margins, ok, method = [], True, "grid"
    for H in hset.generators:
        m = multiplier_condition(H, pi)
        passed, lam = is_neg_semidef(-m, tol)
        margins.append(-lam)
        ok = ok and passed
    if hset.is_scaling_family:
        sA = _lemma_shape(pi, hset.p, hset.q, tol)
        if sA is not None:
            # (H(a); I)^T Pi (H(a); I) = (1 - a^2) diag(R_A, -Q_A) in multiplier terms
            method = "closed-form"
            core = block_diag(-sA.R, sA.Q)
            passed, lam = is_neg_semidef(-core, tol)
            ok = passed
            margins = [(1.0 - a * a) * (-lam) for a in hset.alphas]
    return ok, tuple(margins), method


def _main_lmi(plant, pi, P, perf):
    n_v, n_w = plant.B.shape[1], plant.C.shape[0]
    s_unc = QuadraticSupply.from_multiplier(pi, n_v)
    if perf is None:
        p = plant
        return dissipativity_lmi(p.A, p.B, p.C, p.D, s_unc, P)
    total = QuadraticSupply(block_diag(s_unc.Q, perf.Q), block_diag(s_unc.S, perf.S),
                            block_diag(s_unc.R, perf.R))
    return dissipativity_lmi(*_io(plant), total, P)


def _resolve_p(P):
    if isinstance(P, StorageCertificate):
        return P.matrix()
    return sym(as_matrix(P, name="P"))


def _check_dims(plant, pi, hset):
    n_v, n_w = plant.B.shape[1], plant.C.shape[0]
    if pi.shape != (n_v + n_w, n_v + n_w):
        raise InvalidInput(f"multiplier must be {(n_v + n_w,) * 2}, got {pi.shape}")
    if hset.shape != (n_v, n_w):
        raise InvalidInput(f"generators must be {(n_v, n_w)}, got {hset.shape}")


def robust_stability_check(g0, hset, P, multiplier, tol=DEFAULT_TOL):
    """Full-block S-procedure test for robust stability of ``v = H w``, ``H`` in `hset`.

    Checks ``(H; I)^T Pi (H; I) >= 0`` at every generator (non-strict gate),
    ``P > 0``, and the strict dissipativity LMI of ``(A, B, C, D)`` for the
    supply ``-[v; w]^T Pi [v; w]``.  For the scaling family, a multiplier of
    the neutral-pair shape is checked on the whole interval in closed form.
    """
    plant = as_plant(g0)
    pi = _pi_matrix(multiplier)
    _check_dims(plant, pi, hset)
    P = _resolve_p(P)
    gen_ok, gens, method = _generator_check(hset, pi, tol)
    p_ok, p_margin = is_pos_def(P, tol)
    lmi_ok, lmi_margin = is_neg_def(_main_lmi(plant, pi, P, None), tol)
    return RobustCheck(gen_ok and p_ok and lmi_ok, gens, lmi_margin, p_margin, method)


def robust_dissipativity_check(g0, hset, P, multiplier, perf, tol=DEFAULT_TOL):
    """As :func:`robust_stability_check`, with the performance supply `perf` on ``(d, z)``.

    ``P`` is not required to be positive definite here.
    """
    plant = as_plant(g0)
    pi = _pi_matrix(multiplier)
    _check_dims(plant, pi, hset)
    P = _resolve_p(P)
    gen_ok, gens, method = _generator_check(hset, pi, tol)
    lmi_ok, lmi_margin = is_neg_def(_main_lmi(plant, pi, P, perf), tol)
    return RobustCheck(gen_ok and lmi_ok, gens, lmi_margin, lambda_min(P), method)


def find_multiplier(g0, hset, P=None, perf=None, *, p_blocks=None, structured=None,
                    tol=DEFAULT_TOL, max_iter=500, box=1e6, raise_undecided=True):
    """Search a multiplier ``Pi`` (and optionally ``P``) satisfying the S-procedure LMIs.

    Parameters
    ----------
    g0 : LtiSystem, Plant or tuple
    hset : InterconnectionSet
    P : StorageCertificate or array_like, optional
        Fixed storage.  When omitted, ``P`` is a decision variable, block
        diagonal with sizes `p_blocks` (default: one full block); without
        `perf` it is normalised to ``I <= P <= KAPPA I``.
    perf : QuadraticSupply, optional
        Performance supply on ``(d, z)``.
    structured : tuple of int, optional
        ``(n_v1, n_w1)``: restrict ``Pi`` to the neutral block-diagonal
        family ``-(s1 (+) mirror(s1))`` with free ``s1`` of that size.
    box : float
        Entry-wise bound on ``Pi`` (spectral bound ``-box I <= Pi <= box I``).

    Returns
    -------
    FeasibilityResult
        ``witness["Pi"]`` holds the multiplier and ``witness["P"]`` the storage.

    Raises
    ------
    Undecided
        When the search neither finds nor excludes a multiplier and
        `raise_undecided` is true.
    """
    plant = as_plant(g0)
    n_v, n_w, n = plant.B.shape[1], plant.C.shape[0], plant.A.shape[0]
    if hset.shape != (n_v, n_w):
        raise InvalidInput(f"generators must be {(n_v, n_w)}, got {hset.shape}")
    prob = LmiProblem()
    if structured is None:
        prob.add_block("Pi", n_v + n_w)

        def pi_of(v):
            return v["Pi"]
    else:
        a, b = structured
        if n_v != a + b or n_w != b + a:
            raise InvalidInput("structured split does not match the channel sizes")
        prob.add_block("Q1", a).add_block("S1", a, b, symmetric=False).add_block("R1", b)

        def pi_of(v):
            return neutral_multiplier_affine(v["Q1"], v["S1"], v["R1"])
    fixed_p = P is not None
    if fixed_p:
        Pm = _resolve_p(P)

        def p_of(v):
            return Pm
    else:
        sizes = tuple(p_blocks) if p_blocks else (n,)
        for k, s in enumerate(sizes):
            prob.add_block(f"P{k}", s)

        def p_of(v):
            return block_diag(*[v[f"P{k}"] for k in range(len(sizes))])
        if perf is None:
            prob.add_constraint(lambda v: np.eye(n) - p_of(v), strict=False, name="p_lower")
            prob.add_constraint(lambda v: p_of(v) - KAPPA * np.eye(n), strict=False,
                                name="p_upper")
    for k, H in enumerate(hset.generators):
        prob.add_constraint(lambda v, H=H: -multiplier_condition(H, pi_of(v)), strict=False,
                            name=f"H{k}")
    prob.add_constraint(lambda v: _main_lmi(plant, pi_of(v), p_of(v), perf), strict=True,
                        name="main")
    m = n_v + n_w
    prob.add_constraint(lambda v: pi_of(v) - box * np.eye(m), strict=False, name="box_upper")
    prob.add_constraint(lambda v: -pi_of(v) - box * np.eye(m), strict=False, name="box_lower")
    res = prob.solve(tol, max_iter)
    if res.witness:
        w = dict(res.witness)
        w["Pi"] = pi_of(res.witness)
        w["P"] = p_of(res.witness)
        res.witness = w
        res.margin = res.margins.get("main", np.nan)
    if res.status != FEASIBLE and raise_undecided:
        raise Undecided(f"no multiplier found ({res.message})")
    return res


def neutral_multiplier_affine(Q1, S1, R1):
    """Multiplier ``diag`` structure built from multiplier blocks of the first system.

    With ``Pi_1 = [[Q1, S1], [S1^T, R1]]`` on ``(v_1, w_1)``, the second
    system's blocks are ``(-R1, -S1^T, -Q1)`` on ``(v_2, w_2)``; the result is
    ordered ``(v_1, v_2, w_1, w_2)``.  Linear in ``(Q1, S1, R1)``.
    """
    return np.block([
        [block_diag(Q1, -R1), block_diag(S1, -S1.T)],
        [block_diag(S1.T, -S1), block_diag(R1, -Q1)],
    ])
