"""Command-line front end: experiment orchestration with reproducible seeds.

Every run writes outputs atomically (temp file + rename); every CSV carries
a header row and a trailing metadata comment block recording the seed and
package version.  Exit codes: 0 success, 1 property/assertion failure (the
witness goes to the output), 2 usage errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import __version__
from .algebra import AlgebraElement, AlgebraError, MatrixBlockAlgebra
from .freeword import (
    AvitzourConditionError,
    FreeElement,
    FreeProductAmbient,
    avitzour_phi,
    avitzour_shape_check,
    conjugation_word_shape,
    free_state,
    l2_inner_free,
    reset_cache_probe,
    three_factor_ambient,
)
from .fock import (
    FockError,
    build_fock,
    fock_dimension,
    moment_norm_estimate,
    norm_lower_bound,
    vacuum_expectation,
)
from .khintchine import HomogeneousWordElement, rx_check
from .measure import CompactMeasure, MeasureError, degree_filtration
from .rdcert import (
    ConstantFiltration,
    classify_abelian,
    find_avitzour_triple,
    free_filtration,
    orthogonality_hypotheses,
    rd_report,
    verify_avitzour_triple,
)
from .scalars import QC, to_complex

USAGE_ERROR = 2
CHECK_FAILED = 1


@dataclass
class RunConfig:
    """Parsed invocation: subcommand, shared knobs, per-command options.

    The seed always lands in the output metadata; option keys are exactly
    the ones the subcommand grammar declares (argparse rejects the rest).
    Command handlers read options attribute-style.
    """

    subcommand: str
    seed: int = 0
    threads: int = 1
    out: str | None = None
    as_json: bool = False
    options: dict = field(default_factory=dict)

    def __getattr__(self, name):
        if name == "options":
            raise AttributeError(name)
        try:
            return self.options[name]
        except KeyError:
            raise AttributeError(name) from None


class CliError(Exception):
    def __init__(self, message, code=USAGE_ERROR):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# IO helpers
# ---------------------------------------------------------------------------


def _atomic_write(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _csv_text(header, rows, meta: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(row)
    for key, value in meta.items():
        buf.write(f"# {key}={value}\n")
    return buf.getvalue()


def _load_json_file(path: str):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise CliError(f"no such file: {path}")
    except json.JSONDecodeError as exc:
        raise CliError(
            f"malformed JSON in {path}: line {exc.lineno} column {exc.colno}: {exc.msg}"
        )


def _reject_unknown_keys(data: dict, allowed, where: str):
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise CliError(f"unknown keys in {where}: {', '.join(unknown)}")


def _parse_weights(text: str):
    out = []
    for piece in text.split(","):
        piece = piece.strip()
        if not piece:
            continue
        try:
            out.append(Fraction(piece))
        except ValueError:
            try:
                out.append(float(piece))
            except ValueError:
                raise CliError(f"bad weight {piece!r}")
    if not out:
        raise CliError("empty weight list")
    return out


def _load_space(args) -> dict:
    """Resolve --builtin/--space into {'measure': ...} or {'algebra': ...} or
    {'free_product': [...]}."""
    if getattr(args, "builtin", None):
        return {"measure": CompactMeasure.builtin(args.builtin)}
    if getattr(args, "space", None):
        data = _load_json_file(args.space)
        _reject_unknown_keys(data, {"measure", "algebra", "free_product"}, args.space)
        if "measure" in data:
            return {"measure": CompactMeasure.from_json(data["measure"])}
        if "algebra" in data:
            return {"algebra": MatrixBlockAlgebra.from_json(data["algebra"])}
        if "free_product" in data:
            return {
                "free_product": [
                    MatrixBlockAlgebra.from_json(f) for f in data["free_product"]
                ]
            }
    raise CliError("provide --builtin NAME or --space FILE")


def _load_factors(path: str):
    data = _load_json_file(path)
    if isinstance(data, dict) and "factors" in data:
        return FreeProductAmbient.from_json(data)
    raise CliError(f"{path} must contain {{'factors': [algebra, ...]}}")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


_RECIPES = {"measure": "degree", "algebra": "constant", "free_product": "free"}


def _cmd_rd_certify(args) -> int:
    space = _load_space(args)
    (kind,) = space.keys()
    if args.filtration not in ("auto", _RECIPES[kind]):
        raise CliError(
            f"filtration recipe {args.filtration!r} does not apply to a {kind} space "
            f"(expected {_RECIPES[kind]!r})"
        )
    if kind == "measure":
        filt = degree_filtration(space["measure"], args.max_n)
    elif kind == "algebra":
        filt = ConstantFiltration(space["algebra"])
    else:
        filt = free_filtration(
            [ConstantFiltration(a) for a in space["free_product"]], probe_seed=args.seed
        )
    report = rd_report(filt, args.max_n, threads=args.threads)
    meta = {"seed": args.seed, "version": __version__, "recipe": report.recipe,
            "alpha_hat": repr(report.alpha_hat)}
    if args.as_json:
        _atomic_write(args.out, json.dumps(report.to_json(), indent=2) + "\n")
    else:
        rows = [
            (n, repr(lo), repr(up), d) for (n, lo, up, d) in report.rows
        ]
        _atomic_write(args.out, _csv_text(["n", "C_lower", "C_upper", "dim"], rows, meta))
    return 0


def _cmd_classify_abelian(args) -> int:
    result = classify_abelian(_parse_weights(args.a), _parse_weights(args.b))
    if args.as_json:
        _atomic_write(args.out, json.dumps(result.to_json(), indent=2) + "\n")
    else:
        lines = [result.verdict]
        lines += [f"  reason: {r}" for r in result.reasons]
        _atomic_write(args.out, "\n".join(lines) + "\n")
    return 0


def _cmd_fock_dim(args) -> int:
    ambient = _load_factors(args.factors)
    rows = []
    for depth in range(args.depth + 1):
        rows.append((depth, fock_dimension(ambient.factors, depth)))
    meta = {"seed": args.seed, "version": __version__}
    _atomic_write(args.out, _csv_text(["depth", "dimension"], rows, meta))
    return 0


def _cmd_free_moments(args) -> int:
    ambient = _load_factors(args.factors)
    x = FreeElement.from_json(ambient, _load_json_file(args.element))
    est = moment_norm_estimate(x, args.rmax)
    sym = free_state(x)
    vac = vacuum_expectation(x)
    drift = abs(to_complex(sym) - to_complex(vac))
    rows = [
        (r, repr(to_complex(q).real), repr(root), repr(ratio), repr(best))
        for (r, q, root, ratio, best) in est.rows
    ]
    meta = {
        "seed": args.seed,
        "version": __version__,
        "method": est.method,
        "state": repr(to_complex(sym)),
        "state_vs_vacuum_drift": repr(drift),
    }
    _atomic_write(
        args.out, _csv_text(["r", "moment_2r", "power_root", "ratio", "best"], rows, meta)
    )
    return 0 if drift < 1e-10 else CHECK_FAILED


def _cmd_norm_estimate(args) -> int:
    ambient = _load_factors(args.factors)
    x = FreeElement.from_json(ambient, _load_json_file(args.element))
    depth = args.depth if args.depth is not None else max(4, 2 * x.max_word_length())
    fock = build_fock(ambient.factors, depth)
    lb_fock = norm_lower_bound(fock, x)
    est = moment_norm_estimate(x, args.moment_rmax)
    rows = [
        (r, repr(to_complex(q).real), repr(root), repr(ratio), repr(best))
        for (r, q, root, ratio, best) in est.rows
    ]
    meta = {
        "seed": args.seed,
        "version": __version__,
        "depth": depth,
        "fock_dimension": fock.dimension,
        "fock_lower_bound": repr(lb_fock),
        "best_lower_bound": repr(max(lb_fock, est.max)),
        "method": est.method,
    }
    _atomic_write(
        args.out, _csv_text(["r", "moment_2r", "power_root", "ratio", "best"], rows, meta)
    )
    return 0


def _default_kh_factors():
    return FreeProductAmbient(
        (MatrixBlockAlgebra.matrix_with_trace(2), MatrixBlockAlgebra.matrix_with_trace(2))
    )


def _cmd_kh_norm(args) -> int:
    ambient = (
        _load_factors(args.factors) if args.factors else _default_kh_factors()
    )
    rows = []
    failures = []

    def one_trial(trial):
        rng = np.random.default_rng(args.seed + trial)
        x = HomogeneousWordElement.random(ambient, args.length, rng)
        report = rx_check(x, moment_rmax=args.moment_rmax)
        return trial, report

    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            results = list(pool.map(one_trial, range(args.trials)))
    else:
        results = [one_trial(t) for t in range(args.trials)]
    for trial, report in results:
        rows.append(
            (
                trial,
                repr(report.l2),
                repr(report.kh_lower),
                repr(report.kh_upper),
                repr(report.norm_lb),
                repr(report.margin),
            )
        )
        if not report.ok:
            failures.append((trial, report))
    meta = {
        "seed": args.seed,
        "version": __version__,
        "length": args.length,
        "trials": args.trials,
        "failures": len(failures),
    }
    _atomic_write(
        args.out,
        _csv_text(
            ["trial", "l2", "kh_lower", "kh_upper", "norm_lb", "rx_margin"], rows, meta
        ),
    )
    if failures:
        sys.stderr.write(f"witness: trial {failures[0][0]}: {failures[0][1]}\n")
        return CHECK_FAILED
    return 0


def _cmd_avitzour_find(args) -> int:
    a = MatrixBlockAlgebra.from_json(_load_json_file(args.a))
    b = MatrixBlockAlgebra.from_json(_load_json_file(args.b))
    triple = find_avitzour_triple(
        ConstantFiltration(a), ConstantFiltration(b), seed=args.seed, trials=args.trials
    )
    if triple is None:
        payload = {"found": False, "seed": args.seed}
    else:
        residuals = verify_avitzour_triple(triple.u, triple.v, triple.w)
        payload = {
            "found": True,
            "seed": args.seed,
            "triple": triple.to_json(),
            "residuals": {k: repr(v) for k, v in residuals.items()},
        }
    _atomic_write(args.out, json.dumps(payload, indent=2) + "\n")
    return 0


def _cmd_avitzour_check(args) -> int:
    if args.factors:
        ambient2 = _load_factors(args.factors)
        if len(ambient2.factors) != 2:
            raise CliError("avitzour-check needs exactly two factors")
        a1, a2 = ambient2.factors
    else:
        a1 = a2 = MatrixBlockAlgebra.matrix_with_trace(2)
    triple = find_avitzour_triple(
        ConstantFiltration(a1), ConstantFiltration(a2), seed=args.seed, trials=args.trials
    )
    if triple is None:
        sys.stderr.write("witness: no unitary triple exists for these factors\n")
        return CHECK_FAILED
    u, v, w = triple.u, triple.v, triple.w
    amb3 = three_factor_ambient(a1, a2)
    amb2 = FreeProductAmbient((a1, a2))
    rng = np.random.default_rng(args.seed)
    rows = []
    failures = []
    from .algebra import center as center_op

    def random_centered(algebra):
        while True:
            blocks = []
            for n in algebra.block_dims:
                blocks.append(
                    [
                        [QC(Fraction(int(rng.integers(-3, 4))), Fraction(int(rng.integers(-3, 4))))
                         for _ in range(n)]
                        for _ in range(n)
                    ]
                )
            x = center_op(AlgebraElement(algebra, blocks))
            if any(bool(val) for blk in x.blocks for row in blk for val in row):
                return x

    def random_word(ambient, length):
        from .freeword import Letter

        letters = []
        prev = -1
        for _ in range(length):
            choices = [j for j in range(len(ambient.factors)) if j != prev]
            j = int(choices[rng.integers(0, len(choices))])
            letters.append(Letter(j, random_centered(ambient.factors[j])))
            prev = j
        return FreeElement.word(ambient, letters)

    for trial in range(args.trials):
        ell = int(rng.integers(1, args.lmax + 1))
        word3 = random_word(amb3, ell)
        n_tr = ell // 2 + 1
        n_iso = ell + 1
        img = avitzour_phi(n_tr, u, v, w, word3)
        trace_ok = free_state(img) == free_state(word3)
        img_iso = avitzour_phi(n_iso, u, v, w, word3)
        iso_ok = l2_inner_free(img_iso, img_iso) == l2_inner_free(word3, word3)
        word2 = random_word(amb2, ell)
        shape_ok = all(
            avitzour_shape_check(ell // 2 + 1, u, v, w, word2, mode).ok
            for mode in ("i", "ii", "iii")
        )
        _, p = conjugation_word_shape(v, word3)
        length_ok = p <= 3 * ell + 2
        ok = trace_ok and iso_ok and shape_ok and length_ok
        rows.append((trial, ell, int(trace_ok), int(iso_ok), int(shape_ok), p, int(ok)))
        if not ok:
            failures.append(trial)
    meta = {
        "seed": args.seed,
        "version": __version__,
        "trials": args.trials,
        "lmax": args.lmax,
        "failures": len(failures),
    }
    _atomic_write(
        args.out,
        _csv_text(
            ["trial", "ell", "trace_ok", "isometry_ok", "shape_ok", "conj_length", "ok"],
            rows,
            meta,
        ),
    )
    if failures:
        sys.stderr.write(f"witness: trial {failures[0]} failed\n")
        return CHECK_FAILED
    return 0


def _cmd_orthogonality_check(args) -> int:
    if args.config:
        cfg = _load_json_file(args.config)
        _reject_unknown_keys(cfg, {"algebra", "u", "v_span", "fhat_span"}, args.config)
        algebra = MatrixBlockAlgebra.from_json(cfg["algebra"])
        u = AlgebraElement.from_json(algebra, cfg["u"])
        v_span = [AlgebraElement.from_json(algebra, e) for e in cfg["v_span"]]
        fhat = [AlgebraElement.from_json(algebra, e) for e in cfg.get("fhat_span", cfg["v_span"])]
        reports = [("config", orthogonality_hypotheses(v_span, u, fhat))]
    else:
        # demo: shifts of growing order on a discretized circle
        n_atoms = args.atoms
        algebra = MatrixBlockAlgebra.from_weights([Fraction(1, n_atoms)] * n_atoms)

        def character(k):
            return algebra.element(
                [[[complex(np.exp(2j * np.pi * k * t / n_atoms))]] for t in range(n_atoms)]
            )

        v_span = [character(k) for k in range(-args.level, args.level + 1) if k != 0]
        reports = []
        for k in args.orders:
            reports.append((f"k={k}", orthogonality_hypotheses(v_span, character(k), v_span)))
    rows = []
    for tag, rep in reports:
        rows.append(
            (
                tag,
                repr(rep.sup_conjugated),
                repr(rep.sup_mixed),
                repr(rep.inflated_constant),
                repr(rep.containment_l2),
                repr(rep.containment_op),
            )
        )
    meta = {"seed": args.seed, "version": __version__}
    _atomic_write(
        args.out,
        _csv_text(
            ["case", "sup_conjugated", "sup_mixed", "inflated_constant",
             "containment_l2", "containment_op"],
            rows,
            meta,
        ),
    )
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="freedecay",
        description="Rapid-decay certificates and free-product state experiments.",
    )
    parser.add_argument("--version", action="version", version=f"freedecay {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0, help="RNG seed recorded in outputs")
        p.add_argument("--threads", type=int, default=1, help="parallel trials (default 1)")
        p.add_argument("--out", default=None, help="output path (default: stdout)")
        p.add_argument("--json", dest="as_json", action="store_true", help="JSON output")

    p = sub.add_parser("rd-certify", help="filtration constants and fitted exponent")
    p.add_argument("--builtin", help="builtin measure name")
    p.add_argument("--space", help="JSON file with measure/algebra/free_product")
    p.add_argument(
        "--filtration",
        default="auto",
        choices=["auto", "degree", "constant", "free"],
        help="recipe; must match the space kind (default: inferred)",
    )
    p.add_argument("--max-n", type=int, default=20, dest="max_n")
    common(p)
    p.set_defaults(func=_cmd_rd_certify)

    p = sub.add_parser("classify-abelian", help="selflessness verdict for abelian pairs")
    p.add_argument("--a", required=True, help="comma-separated atom weights")
    p.add_argument("--b", required=True, help="comma-separated atom weights")
    common(p)
    p.set_defaults(func=_cmd_classify_abelian)

    p = sub.add_parser("fock-dim", help="truncated space dimensions per depth")
    p.add_argument("--factors", required=True, help="JSON file with {'factors': [...]}")
    p.add_argument("--depth", type=int, default=4)
    common(p)
    p.set_defaults(func=_cmd_fock_dim)

    p = sub.add_parser("free-moments", help="moments of x*x with the vacuum cross-check")
    p.add_argument("--factors", required=True)
    p.add_argument("--element", required=True, help="JSON file with the element")
    p.add_argument("--rmax", type=int, default=4)
    common(p)
    p.set_defaults(func=_cmd_free_moments)

    p = sub.add_parser("norm-estimate", help="lower bounds for the reduced norm")
    p.add_argument("--factors", required=True)
    p.add_argument("--element", required=True)
    p.add_argument("--depth", type=int, default=None)
    p.add_argument("--moment-rmax", type=int, default=4, dest="moment_rmax")
    common(p)
    p.set_defaults(func=_cmd_norm_estimate)

    p = sub.add_parser("kh-norm", help="random homogeneous-element norm bracket sweep")
    p.add_argument("--factors", default=None)
    p.add_argument("--length", type=int, default=2)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--moment-rmax", type=int, default=2, dest="moment_rmax")
    common(p)
    p.set_defaults(func=_cmd_kh_norm)

    p = sub.add_parser("avitzour-find", help="search for a unitary triple")
    p.add_argument("--a", required=True, help="JSON file with the first algebra")
    p.add_argument("--b", required=True, help="JSON file with the second algebra")
    p.add_argument("--trials", type=int, default=10_000)
    common(p)
    p.set_defaults(func=_cmd_avitzour_find)

    p = sub.add_parser("avitzour-check", help="conjugation identities on random words")
    p.add_argument("--factors", default=None)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--lmax", type=int, default=4)
    common(p)
    p.set_defaults(func=_cmd_avitzour_check)

    p = sub.add_parser(
        "orthogonality-check",
        help="almost-orthogonality / containment numbers for a candidate unitary",
    )
    p.add_argument("--config", default=None, help="JSON config with algebra/u/v_span")
    p.add_argument("--atoms", type=int, default=48, help="demo: circle discretization size")
    p.add_argument("--level", type=int, default=2, help="demo: low-frequency band half-width")
    p.add_argument("--orders", type=int, nargs="+", default=[3, 6, 12],
                   help="demo: character orders to test")
    common(p)
    p.set_defaults(func=_cmd_orthogonality_check)

    return parser


def _to_config(args) -> tuple[RunConfig, object]:
    ns = dict(vars(args))
    func = ns.pop("func")
    cfg = RunConfig(
        subcommand=ns.pop("subcommand"),
        seed=ns.pop("seed", 0),
        threads=ns.pop("threads", 1),
        out=ns.pop("out", None),
        as_json=ns.pop("as_json", False),
        options=ns,
    )
    return cfg, func


def run(argv) -> int:
    """Execute one invocation; returns the exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return USAGE_ERROR if exc.code not in (0,) else 0
    reset_cache_probe()
    cfg, func = _to_config(args)
    try:
        return func(cfg)
    except CliError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return exc.code
    except (AlgebraError, MeasureError, FockError, AvitzourConditionError, ValueError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return USAGE_ERROR


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
