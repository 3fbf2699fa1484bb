"""Command-line front end and the network file format.

Network file (JSON)::

    {
      "schema": "neutral-supply/network-1",
      "systems": [
        {"id": 1, "A": [[...]],
         "ports": [{"to": 2, "B": [[...]], "C": [[...]], "D": [[...]], "K": [[...]]}],
         "E": [[...]], "F": [[...]], "L": [[...]]}
      ],
      "edges": [{"src": 1, "dst": 2, "dim": 1}],
      "certificate": [{"id": 1, "P": [[...]]}],
      "supplies": [{"src": 1, "dst": 2, "Q": [[...]], "S": [[...]], "R": [[...]]}]
    }

Ids are integers or strings.  ``D``, ``K``, ``E``, ``F``, ``L``,
``certificate`` and ``supplies`` are optional.  Matrices are row-major
nested lists; an empty dimension is written as ``[]`` together with an
explicit ``"shape"`` entry (``"B_shape": [n, 0]`` and so on) when needed.

Exit codes: 0 success, 1 usage, 2 unreadable input, 3 hypothesis or
certificate failure, 4 undecided.
"""

import argparse
import json
import math
import sys

import numpy as np

from . import __version__
from .dcgrid import REFERENCE_STORAGE, dcgrid_network
from .decompose import DecompositionConfig
from .errors import (
    GammaSearchExhausted,
    HypothesisViolated,
    IllPosed,
    InvalidInput,
    InvalidMatrix,
    NeutralSupplyError,
    NotAcyclic,
    PreconditionFailed,
    SingularPivot,
    Undecided,
    UnknownSystem,
)
from .linalg import Tolerance
from .lmi import FEASIBLE, UNDECIDED, find_additive_lyapunov
from .model import LtiSystem, NetworkGraph, QuadraticSupply, StorageCertificate
from .netgraph import (
    Grouping,
    condense,
    condense_certificate,
    decompose_acyclic,
    is_acyclic,
    port_supplies,
    verify_network_supplies,
)
from .robustness import edge_removal_survey, system_removal_certificate

__all__ = [
    "SCHEMA",
    "ParseError",
    "network_to_dict",
    "network_from_dict",
    "load_network",
    "dump_network",
    "parse_report",
    "main",
    "EXIT_OK",
    "EXIT_USAGE",
    "EXIT_PARSE",
    "EXIT_HYPOTHESIS",
    "EXIT_UNDECIDED",
]

SCHEMA = "neutral-supply/network-1"
MACHINE_MARKER = "--- machine-readable ---"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PARSE = 2
EXIT_HYPOTHESIS = 3
EXIT_UNDECIDED = 4


class ParseError(NeutralSupplyError, ValueError):
    """The network file is malformed."""


class UsageError(NeutralSupplyError):
    """Bad command-line arguments."""


# ---------------------------------------------------------------------------
# network file

def _mat(m):
    return np.asarray(m, dtype=float).tolist()


def _read_mat(obj, key, shape=None):
    if key not in obj or obj[key] is None:
        return None
    raw = obj[key]
    try:
        m = np.array(raw, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{key}: not a numeric matrix") from exc
    given = obj.get(f"{key}_shape", shape)
    if m.size == 0:
        if given is None:
            return None
        return np.zeros(tuple(given))
    if m.ndim != 2:
        raise ParseError(f"{key}: expected a nested row-major array, got {m.ndim} dimensions")
    if not np.all(np.isfinite(m)):
        raise ParseError(f"{key}: non-finite entries")
    return m


def _put(out, key, m):
    m = np.asarray(m, dtype=float)
    out[key] = _mat(m)
    if m.size == 0:
        out[f"{key}_shape"] = list(m.shape)


def _key(i):
    if isinstance(i, bool) or not isinstance(i, (int, str)):
        raise ParseError(f"system ids must be integers or strings, got {i!r}")
    return i


def network_to_dict(net, cert=None, supplies=None):
    """Serializable form of a network with optional certificate and supplies."""
    systems = []
    for i in net.ids:
        g = net.systems[i]
        entry = {"id": i}
        _put(entry, "A", g.A)
        ports = []
        for j, p in g.ports.items():
            pe = {"to": j}
            _put(pe, "B", p.B)
            _put(pe, "C", p.C)
            _put(pe, "D", p.D)
            if g.n_z:
                _put(pe, "K", g.K[j])
            ports.append(pe)
        entry["ports"] = ports
        if g.has_exogenous:
            _put(entry, "E", g.E)
            _put(entry, "F", g.F)
            _put(entry, "L", g.L)
        systems.append(entry)
    edges = [{"src": a, "dst": b, "dim": int(d)} for a, b, d in net.edges]
    out = {"schema": SCHEMA, "systems": systems, "edges": edges}
    if cert is not None:
        out["certificate"] = [{"id": i, "P": _mat(P)} for i, P in cert.blocks.items()]
    if supplies:
        rows = []
        for (i, j), s in sorted(supplies.items(), key=lambda kv: repr(kv[0])):
            e = {"src": i, "dst": j}
            _put(e, "Q", s.Q)
            _put(e, "S", s.S)
            _put(e, "R", s.R)
            rows.append(e)
        out["supplies"] = rows
    return out


def _reject_constant(name):
    raise ParseError(f"non-finite number {name} in input")


def network_from_dict(data):
    """Inverse of :func:`network_to_dict`.

    Returns
    -------
    net : NetworkGraph
    cert : StorageCertificate or None
    supplies : dict or None
        ``{(i, j): QuadraticSupply}``.

    Raises
    ------
    ParseError
    """
    if not isinstance(data, dict):
        raise ParseError("top level must be an object")
    schema = data.get("schema")
    if schema != SCHEMA:
        raise ParseError(f"unsupported schema {schema!r} (expected {SCHEMA!r})")
    try:
        systems = {}
        for entry in data["systems"]:
            i = _key(entry["id"])
            if i in systems:
                raise ParseError(f"duplicate system id {i!r}")
            A = _read_mat(entry, "A")
            if A is None:
                raise ParseError(f"system {i!r}: missing A")
            ports, Ks = {}, {}
            for pe in entry.get("ports", []):
                j = _key(pe["to"])
                ports[j] = {k: _read_mat(pe, k) for k in ("B", "C", "D")
                            if _read_mat(pe, k) is not None}
                K = _read_mat(pe, "K")
                if K is not None:
                    Ks[j] = K
            systems[i] = LtiSystem(A, ports, E=_read_mat(entry, "E"), F=_read_mat(entry, "F"),
                                   K=Ks or None, L=_read_mat(entry, "L"))
        edges = [(_key(e["src"]), _key(e["dst"]), int(e["dim"])) for e in data.get("edges", [])]
        if len({type(i) for i in systems}) > 1:
            raise ParseError("system ids must be all integers or all strings")
        net = NetworkGraph(systems, edges)
        cert = None
        if data.get("certificate"):
            blocks = {_key(c["id"]): _read_mat(c, "P") for c in data["certificate"]}
            cert = StorageCertificate.from_blocks(blocks)
        supplies = None
        if data.get("supplies"):
            supplies = {}
            for e in data["supplies"]:
                Q, S, R = (_read_mat(e, k) for k in ("Q", "S", "R"))
                supplies[(_key(e["src"]), _key(e["dst"]))] = QuadraticSupply(Q, S, R)
    except ParseError:
        raise
    except (KeyError, TypeError) as exc:
        raise ParseError(f"missing or malformed field: {exc}") from exc
    except (InvalidMatrix, InvalidInput, ValueError) as exc:
        raise ParseError(str(exc)) from exc
    return net, cert, supplies


def loads_network(text):
    try:
        data = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from exc
    return network_from_dict(data)


def load_network(path):
    """Read a network file; see the module docstring for the format."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    return loads_network(text)


def dumps_network(net, cert=None, supplies=None):
    return json.dumps(network_to_dict(net, cert, supplies), indent=1)


def dump_network(path, net, cert=None, supplies=None):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_network(net, cert, supplies))
        fh.write("\n")


# ---------------------------------------------------------------------------
# reports

class Report:
    """Human-readable lines plus a JSON payload carrying the same numbers."""

    def __init__(self, command):
        self.command = command
        self.lines = []
        self.data = {"command": command}

    def line(self, text=""):
        self.lines.append(text)

    def render(self):
        body = "\n".join([f"$ neutral-supply {' '.join(self.command)}", *self.lines])
        return f"{body}\n{MACHINE_MARKER}\n{json.dumps(_jsonable(self.data), indent=1)}\n"


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k) if not isinstance(k, str) else k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def parse_report(text):
    """Machine-readable section of a rendered report."""
    _, sep, tail = text.partition(MACHINE_MARKER)
    if not sep:
        raise ParseError("no machine-readable section")
    return json.loads(tail)


def _fmt(m):
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.size == 0:
        return "[]"
    return "[" + "; ".join(" ".join(f"{v:.6g}" for v in row) for row in m) + "]"


def _supply_dict(s):
    return {"Q": s.Q, "S": s.S, "R": s.R}


def _edge_name(e):
    return f"{e[0]}-{e[1]}"


# ---------------------------------------------------------------------------
# commands

def _parse_id(text, net):
    for i in net.ids:
        if str(i) == text:
            return i
    raise UnknownSystem(text)


def _parse_grouping(spec, net):
    """``"1,2,3;4,5,6"``: groups separated by ``;``, members by ``,``."""
    assignment = {}
    for gid, part in enumerate(spec.split(";"), start=1):
        for tok in part.split(","):
            tok = tok.strip()
            if not tok:
                continue
            i = _parse_id(tok, net)
            if i in assignment:
                raise UsageError(f"system {tok} appears in two groups")
            assignment[i] = gid
    return Grouping(assignment)


def _config(args):
    tol = Tolerance(definiteness_eps=args.tol_def, rank_eps=args.tol_rank)
    alpha = getattr(args, "alpha", 0.5)
    return DecompositionConfig(alpha=alpha, tol=tol)


def _certificate(args, net, file_cert, cfg, report):
    if args.solve_cert or file_cert is None:
        if args.use_cert:
            raise UsageError("--use-cert given but the file has no certificate")
        res = find_additive_lyapunov(net, cfg.tol)
        report.data["lyapunov_search"] = {"status": res.status, "margin": res.margin}
        if res.status == UNDECIDED:
            raise Undecided(f"no additive certificate found ({res.message})")
        if res.status != FEASIBLE:
            raise HypothesisViolated("lyapunov", "the network admits no additive certificate",
                                     margin=res.margin)
        report.line(f"certificate: solved (margin {res.margin:.6g})")
        return res.certificate
    cert = StorageCertificate.certify(net, file_cert.blocks, cfg.tol)
    report.line(f"certificate: from file (margin {cert.margin:.6g})")
    return cert


def _grouped(args, net, cert, report):
    if not args.group:
        return net, cert
    grouping = _parse_grouping(args.group, net)
    net2 = condense(net, grouping)
    cert2 = None if cert is None else condense_certificate(cert, grouping)
    report.line(f"grouping: {grouping.groups()}")
    report.data["groups"] = {str(k): v for k, v in grouping.groups().items()}
    return net2, cert2


def cmd_lyapunov(args, report):
    net, _, _ = load_network(args.file)
    net, _ = _grouped(args, net, None, report)
    cfg = _config(args)
    res = find_additive_lyapunov(net, cfg.tol)
    report.data["status"] = res.status
    report.data["margin"] = res.margin
    report.line(f"status: {res.status}")
    if res.certificate is not None and res.status == FEASIBLE:
        report.line(f"margin (lambda_max of A^T P + P A): {res.margin:.6g}")
        report.line("note: the certificate is not unique; any positive multiple and many "
                    "other block-diagonal matrices also certify")
        report.data["certificate"] = {str(i): P for i, P in res.certificate.blocks.items()}
        for i, P in res.certificate.blocks.items():
            report.line(f"P[{i}] = {_fmt(P)}")
        return EXIT_OK
    if res.status == UNDECIDED:
        report.line(f"detail: {res.message}")
        return EXIT_UNDECIDED
    return EXIT_HYPOTHESIS


def cmd_decompose(args, report):
    net, file_cert, _ = load_network(args.file)
    cfg = _config(args)
    cert = None if args.solve_cert else file_cert
    net, cert = _grouped(args, net, cert, report)
    if not is_acyclic(net):
        raise NotAcyclic("the interconnection graph has a cycle")
    cert = _certificate(args, net, cert, cfg, report)
    dec = decompose_acyclic(net, cert, cfg)
    report.line(f"alpha: {cfg.alpha}")
    edges = {}
    for (i, j), pair in dec.items():
        v = pair.verification
        report.line(f"edge {i}-{j} ({pair.method})")
        for name, s in ((f"s[{i},{j}]", pair.s_fwd), (f"s[{j},{i}]", pair.s_bwd)):
            report.line(f"  {name}: Q={_fmt(s.Q)} S={_fmt(s.S)} R={_fmt(s.R)}")
        report.line(f"  residuals {v.residual_fwd:.6g} / {v.residual_bwd:.6g}, "
                    f"neutrality {v.neutrality:.3g}")
        edges[_edge_name((i, j))] = {
            "fwd": _supply_dict(pair.s_fwd), "bwd": _supply_dict(pair.s_bwd),
            "residual_fwd": v.residual_fwd, "residual_bwd": v.residual_bwd,
            "neutrality": v.neutrality, "method": pair.method, "gamma": list(pair.gamma)}
    for i, lam in dec.system_residuals.items():
        report.line(f"system {i}: local residual {lam:.6g}")
    report.data.update(alpha=cfg.alpha, edges=edges,
                       system_residuals={str(i): v for i, v in dec.system_residuals.items()})
    if args.emit:
        dump_network(args.emit, net, cert, port_supplies(dec))
        report.line(f"wrote {args.emit}")
    return EXIT_OK


def cmd_verify(args, report):
    net, cert, supplies = load_network(args.file)
    cfg = _config(args)
    if cert is None:
        raise ParseError("the file has no certificate")
    if not supplies:
        raise ParseError("the file has no supplies")
    for i, g in net.systems.items():
        for j in g.port_keys:
            if (i, j) not in supplies:
                raise ParseError(f"no supply for port ({i}, {j})")
    ok_all = True
    neutral = {}
    for (i, j) in sorted({tuple(sorted((a, b), key=repr)) for a, b in supplies}, key=repr):
        s, t = supplies[(i, j)], supplies[(j, i)]
        m = s.mirror().matrix
        if m.shape != t.matrix.shape:
            err = math.inf
        else:
            err = float(np.max(np.abs(m - t.matrix), initial=0.0))
        scale = 1.0 + float(np.max(np.abs(m), initial=0.0))
        ok = err <= cfg.tol.rank_eps * scale
        ok_all &= ok
        neutral[_edge_name((i, j))] = {"mismatch": err, "ok": ok}
        report.line(f"edge {i}-{j}: neutrality {'pass' if ok else 'FAIL'} (mismatch {err:.3g})")
    local = {}
    for i, (ok, lam) in verify_network_supplies(net, supplies, cert, cfg.tol).items():
        ok_all &= bool(ok)
        local[str(i)] = {"residual": lam, "ok": bool(ok)}
        report.line(f"system {i}: local dissipativity {'pass' if ok else 'FAIL'} "
                    f"(lambda_max {lam:.6g})")
    report.data.update(neutrality=neutral, local=local, ok=ok_all)
    report.line("verdict: " + ("pass" if ok_all else "FAIL"))
    return EXIT_OK if ok_all else EXIT_HYPOTHESIS


def _cert_summary(c):
    return {"conclusion": c.conclusion, "hurwitz": c.hurwitz, "diagnostic": c.diagnostic,
            "conditions": {k: {"ok": v.ok, "margin": v.margin} for k, v in c.conditions.items()},
            "alphas": c.alphas, "spectral_abscissa": c.spectral_abscissa}


def cmd_robustness(args, report):
    net, file_cert, _ = load_network(args.file)
    cfg = _config(args)
    cert = None if args.solve_cert else file_cert
    if sum(bool(x) for x in (args.edge, args.system, args.all)) != 1:
        raise UsageError("give exactly one of --edge, --system, --all")
    if args.system:
        i = _parse_id(args.system, net)
        cert = _certificate(args, net, cert, cfg, report)
        results = {str(i): system_removal_certificate(net, cert, i, cfg)}
    else:
        target = None
        if args.edge:
            a, _, b = args.edge.partition("-")
            target = (_parse_id(a, net), _parse_id(b, net))
        net, cert = _grouped(args, net, cert, report)
        if not is_acyclic(net):
            raise NotAcyclic("the interconnection graph has a cycle")
        cert = _certificate(args, net, cert, cfg, report)
        survey = edge_removal_survey(net, cert, cfg)
        if target is not None:
            e = target if target in survey else (target[1], target[0])
            if e not in survey:
                raise UnknownSystem(f"no edge {args.edge}")
            survey = {e: survey[e]}
        results = {_edge_name(e): c for e, c in survey.items()}
    ok_all = True
    for name, c in results.items():
        ok_all &= c.conclusion
        conds = ", ".join(f"{k} {'ok' if v.ok else 'fails'}" for k, v in c.conditions.items())
        report.line(f"{name}: {'certified' if c.conclusion else 'not certified'} ({conds}); "
                    f"eigenvalue grid {'stable' if c.hurwitz else 'UNSTABLE'}")
        if c.diagnostic:
            report.line(f"  diagnostic: {c.diagnostic}")
    report.data.update(results={k: _cert_summary(c) for k, c in results.items()}, ok=ok_all)
    return EXIT_OK if ok_all else EXIT_HYPOTHESIS


def cmd_example(args, report):
    if args.name != "dcgrid":
        raise UsageError(f"unknown example {args.name!r}")
    net = dcgrid_network()
    cert = StorageCertificate.from_blocks(REFERENCE_STORAGE)
    text = dumps_network(net, cert)
    if args.emit:
        with open(args.emit, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
        report.line(f"wrote {args.emit}")
    else:
        report.lines.append(text)
    report.data["example"] = args.name
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol-def", type=float, default=1e-8,
                        help="relative margin for strict definiteness (default 1e-8)")
    common.add_argument("--tol-rank", type=float, default=1e-9,
                        help="relative singular value cut-off (default 1e-9)")
    cert = argparse.ArgumentParser(add_help=False)
    g = cert.add_mutually_exclusive_group()
    g.add_argument("--use-cert", action="store_true",
                   help="use the certificate stored in the file")
    g.add_argument("--solve-cert", action="store_true",
                   help="search a certificate even if the file has one")
    group = argparse.ArgumentParser(add_help=False)
    group.add_argument("--group", help='condense groups first, e.g. "1,2,3;4,5,6"')

    p = _Parser(prog="neutral-supply",
                description="Neutral supply functions for networks of LTI systems.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("lyapunov", parents=[common, group],
                       help="search an additive quadratic Lyapunov function")
    s.add_argument("file")
    s.set_defaults(func=cmd_lyapunov)

    s = sub.add_parser("decompose", parents=[common, cert, group],
                       help="neutral supplies on every link of an acyclic network")
    s.add_argument("file")
    s.add_argument("--alpha", type=float, default=0.5, help="weight in (0, 1) (default 0.5)")
    s.add_argument("--emit", help="write the network with certificate and supplies here")
    s.set_defaults(func=cmd_decompose)

    s = sub.add_parser("verify", parents=[common],
                       help="check neutrality and local dissipativity of stored supplies")
    s.add_argument("file")
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("robustness", parents=[common, cert, group],
                       help="link or system removal certificates")
    s.add_argument("file")
    s.add_argument("--edge", help='one link, e.g. "1-2"')
    s.add_argument("--system", help="disconnect one system")
    s.add_argument("--all", action="store_true", help="every link")
    s.add_argument("--alpha", type=float, default=0.5, help=argparse.SUPPRESS)
    s.set_defaults(func=cmd_robustness)

    s = sub.add_parser("example", parents=[common], help="built-in example networks")
    s.add_argument("name", nargs="?", default="dcgrid", help="example name (dcgrid)")
    s.add_argument("--emit", help="write the network file here instead of stdout")
    s.set_defaults(func=cmd_example)
    return p


def _exit_code(exc):
    if isinstance(exc, (UsageError, UnknownSystem)):
        return EXIT_USAGE
    if isinstance(exc, ParseError):
        return EXIT_PARSE
    if isinstance(exc, Undecided):
        return EXIT_UNDECIDED
    if isinstance(exc, (HypothesisViolated, NotAcyclic, PreconditionFailed, IllPosed,
                        GammaSearchExhausted, SingularPivot, InvalidInput, InvalidMatrix)):
        return EXIT_HYPOTHESIS
    return EXIT_HYPOTHESIS


def run(argv=None, out=None, err=None):
    """Run the CLI and return ``(exit_code, report_text)``."""
    out = sys.stdout if out is None else out
    err = sys.stderr if err is None else err
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    report = Report(argv)
    try:
        args = parser.parse_args(argv)
        if hasattr(args, "tol_def"):
            try:
                _config(args)
            except (ValueError, InvalidInput) as exc:
                raise UsageError(str(exc)) from exc
        code = args.func(args, report)
    except NeutralSupplyError as exc:
        code = _exit_code(exc)
        kind = type(exc).__name__
        report.line(f"error ({kind}): {exc}")
        if isinstance(exc, NotAcyclic):
            report.line("hint: condense the cycles first with --group, "
                        'e.g. --group "1,2,3;4,5,6"')
        report.data["error"] = {"type": kind, "message": str(exc)}
        if code == EXIT_USAGE and not report.lines[:-1]:
            err.write(f"neutral-supply: {exc}\n")
    report.data["exit_code"] = code
    text = report.render()
    out.write(text)
    return code, text


def main(argv=None):
    code, _ = run(argv)
    return code


if __name__ == "__main__":
    sys.exit(main())
