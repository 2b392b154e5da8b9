"""Command-line front end.

Operator files::

    # divergence in the plane
    n=2
    order=1
    dim_from=2
    dim_to=1
    term alpha=(1,0): [[1,0]]
    term alpha=(0,1): [[0,1]]

Terms are written in descending graded-lex order of ``alpha`` with rationals
in lowest terms, so writing a parsed file reproduces it byte for byte when it
was canonical to begin with.  Wherever an operator path is expected,
``builtin:NAME:N`` names a built-in operator instead.

Every command prints a report of ``key: value`` lines grouped in
``[section]`` blocks.  The report status decides the exit code: ``ok`` 0,
``falsified`` 1, ``inconclusive`` 2, ``error`` 3.
"""

from __future__ import annotations

import argparse
import io
import os
import re
import sys
import tempfile
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import afree, envelope, exactness, spectral
from .diffop import BUILTINS, DegreeMismatch, DiffOp, builtin
from .polymat import format_rational, parse_rational

EXIT_CODES = {"ok": 0, "falsified": 1, "inconclusive": 2, "error": 3}


# -- operator files --------------------------------------------------------

class OperatorFileError(ValueError):
    def __init__(self, msg, lineno=None, path=None):
        where = f"{path or '<operator>'}:{lineno}: " if lineno else (f"{path}: " if path else "")
        super().__init__(where + msg)
        self.lineno = lineno


_HEADER_KEYS = ("n", "order", "dim_from", "dim_to")
_TERM = re.compile(r"term\s+alpha\s*=\s*\(([^)]*)\)\s*:\s*(\[.*\])\s*$")


def _parse_matrix(text):
    text = text.strip()
    if not (text.startswith("[[") and text.endswith("]]")):
        raise ValueError("matrix must look like [[a,b],[c,d]]")
    rows = re.split(r"\]\s*,\s*\[", text[2:-2])
    return [[parse_rational(x) for x in row.split(",")] for row in rows]


def parse_operator_text(text, path=None) -> DiffOp:
    header = {}
    terms = {}
    term_lines = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("term"):
            m = _TERM.match(line)
            if not m:
                raise OperatorFileError("malformed term line", lineno, path)
            try:
                alpha = tuple(int(t) for t in m.group(1).split(","))
                mat = _parse_matrix(m.group(2))
            except ValueError as exc:
                raise OperatorFileError(str(exc), lineno, path) from None
            if any(a < 0 for a in alpha):
                raise OperatorFileError(f"negative multi-index {alpha}", lineno, path)
            if alpha in terms:
                raise OperatorFileError(f"duplicate term for alpha={alpha}", lineno, path)
            terms[alpha] = mat
            term_lines[alpha] = lineno
            continue
        key, sep, val = line.partition("=")
        key = key.strip()
        if not sep or key not in _HEADER_KEYS:
            raise OperatorFileError(f"unrecognized line {raw.strip()!r}", lineno, path)
        if key in header:
            raise OperatorFileError(f"duplicate header key {key!r}", lineno, path)
        try:
            header[key] = int(val.strip())
        except ValueError:
            raise OperatorFileError(f"{key} must be an integer", lineno, path) from None
    missing = [k for k in _HEADER_KEYS if k not in header]
    if missing:
        raise OperatorFileError(f"missing header keys: {', '.join(missing)}", path=path)
    n, k = header["n"], header["order"]
    dim_from, dim_to = header["dim_from"], header["dim_to"]
    for alpha, mat in terms.items():
        lineno = term_lines[alpha]
        if len(alpha) != n:
            raise OperatorFileError(f"alpha={alpha} has length {len(alpha)}, expected n={n}",
                                    lineno, path)
        if sum(alpha) != k:
            raise OperatorFileError(f"|alpha| = {sum(alpha)} for alpha={alpha}, order is {k}",
                                    lineno, path)
        if len(mat) != dim_to or any(len(r) != dim_from for r in mat):
            raise OperatorFileError(
                f"matrix is {len(mat)} x {len(mat[0])}, expected {dim_to} x {dim_from}",
                lineno, path)
    try:
        return DiffOp(n, k, dim_from, dim_to, terms)
    except (ValueError, DegreeMismatch) as exc:
        raise OperatorFileError(str(exc), path=path) from None


def format_operator(op: DiffOp, comment=None) -> str:
    out = io.StringIO()
    if comment:
        for line in comment.splitlines():
            out.write(f"# {line}\n")
    out.write(f"n={op.n}\norder={op.k}\ndim_from={op.dim_from}\ndim_to={op.dim_to}\n")
    for alpha, mat in op.coeffs.items():
        rows = ",".join("[" + ",".join(format_rational(c) for c in r) + "]" for r in mat)
        out.write(f"term alpha=({','.join(str(a) for a in alpha)}): [{rows}]\n")
    return out.getvalue()


def load_operator(source: str) -> DiffOp:
    if source.startswith("builtin:"):
        parts = source.split(":")
        if len(parts) != 3 or parts[1] not in BUILTINS:
            raise OperatorFileError(
                f"builtin operators are written builtin:NAME:N with NAME in {', '.join(BUILTINS)}")
        return builtin(parts[1], int(parts[2]))
    path = Path(source)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise OperatorFileError(f"cannot read operator file: {exc.strerror}", path=source) from None
    return parse_operator_text(text, path=source)


def atomic_write(path, data: str | bytes):
    path = Path(path)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"encoding": "utf-8"})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# -- reports ---------------------------------------------------------------

def _fmt(v):
    if isinstance(v, bool):
        return "yes" if v else "no"
    if isinstance(v, float):
        return format(v, ".17g")
    if isinstance(v, Fraction):
        return format_rational(v)
    if isinstance(v, (tuple, list)):
        return "(" + ",".join(_fmt(x) for x in v) + ")"
    return str(v)


class Report:
    def __init__(self, command):
        self.command = command
        self.status = "ok"
        self.sections = []
        self.wall_time = None

    def section(self, name):
        rows = []
        self.sections.append((name, rows))
        return rows

    def add(self, name, key, value):
        for sec, rows in self.sections:
            if sec == name:
                rows.append((key, value))
                return
        self.section(name).append((key, value))

    @property
    def exit_code(self):
        return EXIT_CODES[self.status]

    def render(self):
        out = [f"command: {self.command}", f"status: {self.status}"]
        if self.wall_time is not None:
            out.append(f"wall_time: {self.wall_time:.3f}")
        for name, rows in self.sections:
            out.append("")
            out.append(f"[{name}]")
            for k, v in rows:
                out.append(f"{k}: {_fmt(v)}")
        return "\n".join(out) + "\n"


# -- field helpers ---------------------------------------------------------

def load_field(path, binary=False):
    if binary or str(path).endswith(".npz"):
        return spectral.load_afield_binary(path)
    with open(path, encoding="utf-8") as fh:
        return spectral.read_afield(fh)


def save_field(field, path, binary=False):
    if binary:
        buf = io.BytesIO()
        np.savez(buf, coeffs=field.coeffs, real=np.array(field.real))
        atomic_write(path, buf.getvalue())
        return
    buf = io.StringIO()
    spectral.write_afield(field, buf)
    atomic_write(path, buf.getvalue())


def _parse_vector(text):
    try:
        return [float(Fraction(t)) for t in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _parse_ints(text):
    try:
        return [int(t) for t in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _read_config(path):
    cfg = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        cfg[key.strip()] = val.strip()
    return cfg


# -- commands --------------------------------------------------------------

def _rank_section(rep, report: exactness.RankReport):
    rep.add("rank", "generic_rank", report.generic_rank)
    for j, a in enumerate(report.a_coeffs):
        rep.add("rank", f"a_{j}", a.to_str("xi") if not a.is_zero() else "0")


def _certificate_section(rep, cert):
    rep.add("certificate", "status", cert.status)
    if isinstance(cert, exactness.Certified):
        rep.add("certificate", "depth", cert.depth)
        rep.add("certificate", "boxes", cert.boxes)
    elif isinstance(cert, exactness.Falsified):
        rep.add("certificate", "witness", tuple(Fraction(x) for x in cert.witness))
        rep.status = "falsified"
    else:
        rep.add("certificate", "min_sampled_value", float(cert.min_sampled_value))
        rep.add("certificate", "samples", cert.samples)
        rep.status = "inconclusive"


def cmd_rank(args, rep):
    a = load_operator(args.operator)
    if getattr(args, "certify", False) or args.command == "certify":
        report = exactness.analyze(a, max_depth=args.max_depth, falsify_budget=args.budget,
                                   seed=args.seed)
        _rank_section(rep, report)
        _certificate_section(rep, report.certificate)
    else:
        _rank_section(rep, exactness.generic_rank(a))


def _synthesize(args, rep, which):
    op = load_operator(args.operator)
    fn = exactness.potential if which == "potential" else exactness.annihilator
    try:
        out = fn(op, seed=args.seed)
    except exactness.NotConstantRank as exc:
        rep.status = "falsified"
        rep.add("result", "error", str(exc))
        if exc.witness is not None:
            rep.add("result", "witness", tuple(Fraction(x) for x in exc.witness))
        return
    rep.add("result", "order", out.k)
    rep.add("result", "dim_from", out.dim_from)
    rep.add("result", "dim_to", out.dim_to)
    rep.add("result", "terms", len(out.coeffs))
    text = format_operator(out, comment=f"{which} of {Path(args.operator).name}")
    if args.output:
        atomic_write(args.output, text)
        rep.add("result", "written", args.output)
    else:
        rep.add("result", "operator", "\n" + text.rstrip("\n"))


def cmd_potential(args, rep):
    _synthesize(args, rep, "potential")


def cmd_annihilator(args, rep):
    _synthesize(args, rep, "annihilator")


def cmd_verify(args, rep):
    a = load_operator(args.annihilator)
    b = load_operator(args.potential)
    try:
        pair = exactness.verify_exact_pair(a, b, sample_count=args.samples, seed=args.seed)
    except exactness.CompositionNonzero as exc:
        rep.status = "falsified"
        rep.add("verify", "symbolic_zero", False)
        rep.add("verify", "entry", exc.index)
        rep.add("verify", "value", exc.entry.to_str("xi"))
        return
    except exactness.RankSumFailure as exc:
        rep.status = "falsified"
        rep.add("verify", "symbolic_zero", True)
        rep.add("verify", "rank_sum_failure_at", tuple(Fraction(x) for x in exc.xi))
        rep.add("verify", "ranks", exc.ranks)
        return
    rep.add("verify", "symbolic_zero", pair.symbolic_zero)
    rep.add("verify", "samples", len(pair.rank_samples))
    rep.add("verify", "dim_W", a.dim_from)
    ranks = sorted({(ra, rb) for _, ra, rb in pair.rank_samples})
    rep.add("verify", "rank_pairs", ranks)
    lines = ["sample," + ",".join(f"xi{i + 1}" for i in range(a.n)) + ",rank_A,rank_B"]
    for i, (xi, ra, rb) in enumerate(pair.rank_samples):
        lines.append(f"{i}," + ",".join(format_rational(x) for x in xi) + f",{ra},{rb}")
    if args.output:
        atomic_write(args.output, "\n".join(lines) + "\n")
        rep.add("verify", "table", args.output)


def cmd_project(args, rep):
    a = load_operator(args.annihilator)
    w = load_field(args.field, args.binary)
    pw = spectral.project_afree(a, w, method=args.method)
    norm = w.l2_norm()
    resid = spectral.apply_diffop(a, pw).l2_norm()
    again = spectral.project_afree(a, pw, method=args.method)
    rep.add("project", "l2_norm_in", norm)
    rep.add("project", "l2_norm_out", pw.l2_norm())
    rep.add("project", "residual_A", resid)
    rep.add("project", "idempotency_defect", (again - pw).l2_norm())
    if resid > args.tol * max(norm, 1e-300):
        rep.status = "inconclusive"
    if args.output:
        save_field(pw, args.output, args.binary)
        rep.add("project", "written", args.output)


def cmd_recover(args, rep):
    b = load_operator(args.potential)
    w = load_field(args.field, args.binary)
    ann = load_operator(args.annihilator) if args.annihilator else None
    try:
        u = spectral.recover_potential(b, w, subtract_mean=args.subtract_mean, annihilator=ann,
                                       tol=args.tol)
    except (spectral.NonZeroMean, spectral.NotAFree) as exc:
        rep.status = "falsified"
        rep.add("recover", "error", str(exc))
        return
    target = w.copy()
    target.coeffs[(slice(None),) + (0,) * w.n] = 0
    resid = (spectral.apply_diffop(b, u) - target).l2_norm()
    rep.add("recover", "l2_norm_field", w.l2_norm())
    rep.add("recover", "l2_norm_potential", u.l2_norm())
    rep.add("recover", "residual", resid)
    rep.add("recover", "relative_residual", resid / max(target.l2_norm(), 1e-300))
    if args.output:
        save_field(u, args.output, args.binary)
        rep.add("recover", "written", args.output)


def cmd_envelope(args, rep):
    b = load_operator(args.potential)
    f = envelope.parse_integrand(args.f)
    params = envelope.SearchParams(shape=(args.grid,) * b.n, m_max=args.modes)
    res = envelope.estimate_envelope(f, args.eta, b, budget=args.budget, seed=args.seed,
                                     params=params)
    rep.add("envelope", "integrand", f.expression())
    rep.add("envelope", "eta", tuple(args.eta))
    rep.add("envelope", "f_eta", res.f_eta)
    rep.add("envelope", "value", res.value)
    rep.add("envelope", "diverged", res.diverged)
    rep.add("envelope", "evaluations", res.evaluations)
    rep.add("envelope", "best_amplitude", res.best_amplitude)
    rep.add("envelope", "best_seed", res.best_seed if res.best_seed is not None else "descent")
    rep.add("envelope", "grid", args.grid)
    rep.add("envelope", "modes", args.modes)
    if args.output:
        atomic_write(args.output, res.trace_csv())
        rep.add("envelope", "trace", args.output)


def _input_fields(args, d):
    if args.fields:
        out = []
        for p in args.fields:
            tf = load_field(p, args.binary)
            out.append(spectral.inverse(tf))
        return out
    shape = (args.grid,) * args.dim
    return afree.oscillation_family(shape, args.indices, component=1, d=d)


def cmd_pipeline(args, rep):
    a = load_operator(args.annihilator)
    b = load_operator(args.potential)
    cfg = _read_config(args.config) if args.config else {}
    for item in args.set or []:
        key, sep, val = item.partition("=")
        if not sep:
            raise ValueError(f"--set expects key=value, got {item!r}")
        cfg[key.strip()] = val.strip()
    params = afree.PipelineParams.from_mapping(cfg)
    if args.dim is None:
        args.dim = a.n
    ws = _input_fields(args, a.dim_from)
    out = afree.compactify_sequence(a, b, ws, params)
    errs = afree.moment_errors([o.bu for o in out], ws)
    rows = ["index,alpha,margin_first,margin_final,afree_defect,band_leakage,moment_error"]
    for j, (o, e) in enumerate(zip(out, errs)):
        sec = f"element {j}"
        rep.add(sec, "alpha", o.alpha)
        rep.add(sec, "margin_first", o.margin_first)
        rep.add(sec, "margin_final", o.margin_final)
        rep.add(sec, "band_width", o.band_width)
        rep.add(sec, "band_zero", bool(np.all(o.bu[:, afree.band_mask(o.bu.shape[1:], o.band_width)] == 0)))
        rep.add(sec, "afree_defect", o.afree_defect)
        rep.add(sec, "band_leakage", o.band_leakage)
        rep.add(sec, "moment_error", float(e))
        rows.append(",".join(_fmt(x) for x in (j, o.alpha, o.margin_first, o.margin_final,
                                                o.afree_defect, o.band_leakage, float(e))))
    rep.add("pipeline", "elements", len(out))
    rep.add("pipeline", "max_moment_error", float(np.max(errs)) if len(errs) else 0.0)
    rep.add("pipeline", "alpha_ladder", "default" if params.alphas is None else "configured")
    if args.output:
        atomic_write(args.output, "\n".join(rows) + "\n")
        rep.add("pipeline", "table", args.output)


def cmd_moments(args, rep):
    d = args.components
    if args.fields:
        ws = [spectral.inverse(load_field(p, args.binary)) for p in args.fields]
        d = ws[0].shape[0]
    else:
        ws = afree.oscillation_family((args.grid,) * args.dim, args.indices, component=1, d=d)
    integrands = None
    if args.f:
        integrands = [(t, envelope.parse_integrand(t)) for t in args.f]
    ann = load_operator(args.annihilator) if args.annihilator else None
    diag = afree.ym_moments(ws, integrands, annihilator=ann)
    names = [t for t in args.f] if args.f else [n for n, _ in afree.default_integrands(d)]
    for j in range(len(ws)):
        sec = f"element {j}"
        rep.add(sec, "l2_norm", diag.lp_norms[j])
        if ann is not None:
            rep.add(sec, "residual", diag.residuals[j])
        for name, val in zip(names, diag.moments[j]):
            rep.add(sec, name, float(val))
    for a, t in zip(diag.alphas, diag.tail_mass):
        rep.add("tail mass", f"alpha={_fmt(a)}", t)


COMMANDS = {
    "rank": cmd_rank, "certify": cmd_rank, "potential": cmd_potential,
    "annihilator": cmd_annihilator, "verify": cmd_verify, "project": cmd_project,
    "recover": cmd_recover, "envelope": cmd_envelope, "pipeline": cmd_pipeline,
    "moments": cmd_moments,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CODES["error"], f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(prog="apotential", description=__doc__.split("\n\n")[0])
    p.add_argument("--timing", action="store_true", help="include wall time in the report")
    p.add_argument("--report", metavar="PATH", help="also write the report to PATH")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, seed=True):
        if seed:
            sp.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
        return sp

    for name in ("rank", "certify"):
        sp = common(sub.add_parser(name, help="generic rank and constant-rank certificate"))
        sp.add_argument("operator")
        if name == "rank":
            sp.add_argument("--certify", action="store_true", help="also certify constant rank")
        sp.add_argument("--max-depth", type=int, default=exactness.DEFAULT_MAX_DEPTH,
                        help="branch-and-bound depth cap (default %(default)s)")
        sp.add_argument("--budget", type=int, default=200,
                        help="falsification sample budget (default %(default)s)")
    for name in ("potential", "annihilator"):
        sp = common(sub.add_parser(name, help=f"synthesize the {name} operator"))
        sp.add_argument("operator")
        sp.add_argument("-o", "--output", help="operator file to write")
    sp = common(sub.add_parser("verify", help="check an (annihilator, potential) pair"))
    sp.add_argument("annihilator")
    sp.add_argument("potential")
    sp.add_argument("--samples", type=int, default=100, help="rank samples (default 100)")
    sp.add_argument("-o", "--output", help="CSV sample table to write")

    sp = sub.add_parser("project", help="project an AFIELD onto A-free fields")
    sp.add_argument("annihilator")
    sp.add_argument("field")
    sp.add_argument("--method", choices=("exact", "svd"), default="exact")
    sp.add_argument("--tol", type=float, default=1e-8, help="relative residual tolerance")
    sp.add_argument("--binary", action="store_true", help="use the binary field format")
    sp.add_argument("-o", "--output")

    sp = sub.add_parser("recover", help="recover a periodic potential of an A-free field")
    sp.add_argument("potential")
    sp.add_argument("field")
    sp.add_argument("--annihilator", help="check the field is A-free for this operator first")
    sp.add_argument("--subtract-mean", action="store_true", help="drop the mean instead of failing")
    sp.add_argument("--tol", type=float, default=1e-8, help="A-free tolerance (default 1e-8)")
    sp.add_argument("--binary", action="store_true")
    sp.add_argument("-o", "--output")

    sp = common(sub.add_parser("envelope", help="upper bound on the quasiconvex envelope"))
    sp.add_argument("potential")
    sp.add_argument("--f", required=True, help="integrand expression")
    sp.add_argument("--eta", type=_parse_vector, required=True, help="comma-separated point")
    sp.add_argument("--budget", type=int, default=200)
    sp.add_argument("--grid", type=int, default=32)
    sp.add_argument("--modes", type=int, default=2)
    sp.add_argument("-o", "--output", help="CSV convergence trace to write")

    for name in ("pipeline", "moments"):
        sp = sub.add_parser(name, help="compactify a sequence" if name == "pipeline"
                            else "Young-measure moment diagnostics")
        if name == "pipeline":
            sp.add_argument("annihilator")
            sp.add_argument("potential")
            sp.add_argument("--config", help="key=value parameter file")
            sp.add_argument("--set", action="append", metavar="KEY=VALUE")
        else:
            sp.add_argument("--f", action="append", help="integrand (repeatable)")
            sp.add_argument("--annihilator", help="report residuals for this operator")
            sp.add_argument("--components", type=int, default=2)
        sp.add_argument("fields", nargs="*", help="AFIELD files (default: oscillation family)")
        sp.add_argument("--indices", type=_parse_ints, default=[1, 2, 4])
        sp.add_argument("--grid", type=int, default=128)
        sp.add_argument("--dim", type=int, default=None if name == "pipeline" else 2)
        sp.add_argument("--binary", action="store_true")
        sp.add_argument("-o", "--output")
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    rep = Report(args.command)
    start = time.perf_counter()
    try:
        COMMANDS[args.command](args, rep)
    except (OperatorFileError, envelope.IntegrandSyntaxError, ValueError, OSError) as exc:
        rep.status = "error"
        rep.add("error", "message", str(exc))
    except Exception as exc:  # report, never traceback
        rep.status = "error"
        rep.add("error", "message", f"{type(exc).__name__}: {exc}")
    if args.timing:
        rep.wall_time = time.perf_counter() - start
    text = rep.render()
    sys.stdout.write(text)
    if args.report:
        atomic_write(args.report, text)
    return rep.exit_code


if __name__ == "__main__":
    sys.exit(main())
