"""Command line entry point: ``affdim <subcommand> ...``.

Every file written carries a run manifest (command, config hashes, seed,
version, timestamp). Exit status is 2 for invalid configuration and 1 for
numerical failures.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path
from typing import Sequence

from . import __version__, presets
from .decompose import decompose
from .drb import ConvergenceError, drb_limit_gap, drb_linear, rdf_oracle_scalar
from .empirical import empirical_rid, parse_scales
from .linalg import RationalMatrix, as_fraction, fraction_str, rank, spark
from .ma import (
    MAConfig,
    bid_report,
    chernoff_tail_bounds,
    concentration_bounds,
    parse_m_range,
    parse_taps,
    sample_size_threshold,
)
from .model import (
    DiscreteSpec,
    Gaussian,
    NuJointPMF,
    SourceSpec,
    SpecError,
    Uniform,
    ensure_valid,
    source_from_json,
)
from .rid import check_spark_condition, rid_linear, rid_linear_mc


class ConfigError(Exception):
    """Unreadable or malformed input file."""


# ---------------------------------------------------------------------------
# manifest and output helpers
# ---------------------------------------------------------------------------


def _timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    now = datetime.fromtimestamp(int(epoch), timezone.utc) if epoch else datetime.now(timezone.utc)
    return now.strftime("%Y-%m-%dT%H:%M:%SZ")


def run_manifest(command: str, argv: Sequence[str], configs: dict[str, bytes], seed: int | None) -> dict:
    return {
        "command": command,
        "argv": list(argv),
        "config_sha256": {name: hashlib.sha256(raw).hexdigest() for name, raw in sorted(configs.items())},
        "seed": seed,
        "version": __version__,
        "timestamp": _timestamp(),
    }


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _csv_text(manifest: dict, header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    buf.write("# manifest: " + json.dumps(manifest, sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def exact(x: Fraction) -> dict:
    return {"value": fraction_str(x), "kind": "exact"}


def approx(x: float, method: str) -> dict:
    return {"value": x, "kind": "float", "method": method}


# ---------------------------------------------------------------------------
# config loading
# ---------------------------------------------------------------------------


def _read(path: str, configs: dict[str, bytes]) -> dict:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    configs[path] = raw
    try:
        return json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc


def load_source(path: str, configs: dict[str, bytes]) -> SourceSpec:
    spec = source_from_json(_read(path, configs))
    return ensure_valid(spec)


def load_matrix(path: str, configs: dict[str, bytes]) -> RationalMatrix:
    obj = _read(path, configs)
    try:
        return RationalMatrix.from_json(obj if isinstance(obj, dict) else {"entries": obj})
    except (KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
        msg = str(exc)
        raise SpecError([msg if msg.startswith("RationalMatrix") else f"RationalMatrix: {msg}"]) from exc


def _check_shapes(spec: SourceSpec, A: RationalMatrix) -> None:
    if A.cols != spec.n:
        raise SpecError([f"RationalMatrix: {A.cols} columns but SourceSpec has n={spec.n}"])


def _scaled_scalar(spec: SourceSpec, A: RationalMatrix) -> SourceSpec:
    """Law of ``a X`` for a scalar source and a 1x1 matrix ``[a]``."""
    if spec.n != 1 or A.shape != (1, 1):
        raise SpecError(["RationalMatrix: the rate-distortion oracle needs a scalar source and a 1x1 matrix"])
    a = A.entries[0][0]
    if a == 1:
        return spec
    if a == 0:
        raise SpecError(["RationalMatrix: zero scalar map"])
    c = spec.continuous[0]
    if isinstance(c, Gaussian):
        cont = Gaussian(float(a) * c.mean, float(a * a) * c.variance)
    else:
        lo, hi = sorted((float(a) * c.lo, float(a) * c.hi))
        cont = Uniform(lo, hi)
    nm = spec.nu_model
    if not nm.is_product:
        raise SpecError(["NuJointPMF: the rate-distortion oracle needs the independent form"])
    disc = DiscreteSpec(tuple((a * v, p) for v, p in nm.discrete[0].atoms))
    return SourceSpec(1, (cont,), NuJointPMF(1, nm.alphas, (disc,)))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_rid(args, argv) -> int:
    configs: dict[str, bytes] = {}
    spec = load_source(args.source, configs)
    A = load_matrix(args.matrix, configs)
    _check_shapes(spec, A)
    if args.mc:
        res = rid_linear_mc(spec, A, args.mc, args.seed)
        body = {"rid": approx(res.value, "monte-carlo"), "ci95": list(res.ci), "samples": args.mc}
    else:
        res = rid_linear(spec, A)
        body = {"rid": exact(res.value), "patterns": res.patterns}
    body["manifest"] = run_manifest("rid", argv, configs, args.seed if args.mc else None)
    _emit(_dumps(body), args.out)
    return 0


def cmd_decompose(args, argv) -> int:
    configs: dict[str, bytes] = {}
    spec = load_source(args.source, configs)
    A = load_matrix(args.matrix, configs)
    _check_shapes(spec, A)
    D = decompose(spec, A, with_entropy=args.entropy)
    body = {
        "components": [c.to_json(spec.n, args.audit) for c in D.components],
        "rid": exact(D.rid),
        "selector_entropy_bits": approx(D.selector_entropy_bits, "exact-pmf"),
        "source_entropy_bits": approx(D.source_entropy_bits, "exact-pmf"),
        "manifest": run_manifest("decompose", argv, configs, None),
    }
    _emit(_dumps(body), args.out)
    return 0


def _parse_floats(text: str) -> list[float]:
    return [float(as_fraction(t)) for t in text.split(",") if t.strip()]


def cmd_drb(args, argv) -> int:
    configs: dict[str, bytes] = {}
    spec = load_source(args.source, configs)
    A = load_matrix(args.matrix, configs)
    _check_shapes(spec, A)
    res = drb_linear(spec, A, args.path)
    body = res.to_json()
    body["rid"] = exact(res.rid)
    body["drb_bits"] = approx(res.drb_bits, res.formula)
    body["gaps"] = []
    if args.oracle:
        scalar = _scaled_scalar(spec, A)
        ds = sorted(_parse_floats(args.oracle), reverse=True)
        curve = [rdf_oracle_scalar(scalar, D, args.grid_step) for D in ds]
        body["rdf"] = [pt.to_json() for pt in curve]
        if len(curve) >= 2:
            gaps = drb_limit_gap(res, curve)
            body["gaps"] = gaps.gaps
            body["gaps_decreasing"] = gaps.decreasing
    body["manifest"] = run_manifest("drb", argv, configs, None)
    _emit(_dumps(body), args.out)
    return 0


def cmd_empirical(args, argv) -> int:
    configs: dict[str, bytes] = {}
    spec = load_source(args.source, configs)
    A = load_matrix(args.matrix, configs) if args.matrix else None
    if A is not None:
        _check_shapes(spec, A)
    est = empirical_rid(spec, A, parse_scales(args.scales), args.samples, args.seed)
    manifest = run_manifest("empirical-rid", argv, configs, args.seed)
    rows = [[m, repr(h)] for m, h in zip(est.scales, est.entropies)]
    csv_text = _csv_text(manifest, ["scale", "entropy_bits"], rows)
    if args.csv:
        Path(args.csv).write_text(csv_text, encoding="utf-8")
    body = {
        "slope": approx(est.slope, "least-squares entropy vs log2 scale"),
        "stderr": est.stderr,
        "scales": est.scales,
        "dropped_scales": est.dropped,
        "warnings": est.warnings,
        "manifest": manifest,
    }
    if not args.csv:
        body["rows"] = [{"scale": m, "entropy_bits": h} for m, h in zip(est.scales, est.entropies)]
    _emit(_dumps(body), args.out)
    for w in est.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return 0


def _ma_config(args, m: int = 1) -> MAConfig:
    try:
        taps = parse_taps(args.taps)
        alpha = as_fraction(args.alpha)
    except (ValueError, ZeroDivisionError) as exc:
        raise SpecError([f"MAConfig: {exc}"]) from exc
    return MAConfig(taps, alpha, m, args.l1)


def cmd_ma(args, argv) -> int:
    cfg = _ma_config(args)
    ms = parse_m_range(args.m)
    mode = "mc" if args.mc else "exact"
    rep = bid_report(cfg, ms, mode, samples=args.mc or 100_000, seed=args.seed)
    manifest = run_manifest("ma", argv, {}, args.seed if args.mc else None)
    rows = [r.csv_fields() + [r.method] for r in rep.rows]
    _emit(_csv_text(manifest, ["m", "d_per_symbol", "lower", "upper", "method"], rows), args.out)
    return 0


def cmd_ma_bounds(args, argv) -> int:
    cfg = _ma_config(args)
    body: dict = {"n": args.n, "k": args.k, "alpha": fraction_str(cfg.alpha), "l1": cfg.l1, "l2": cfg.l2}
    if args.k is not None:
        body["bounds"] = concentration_bounds(cfg, args.n, args.k).to_json()
        body["counting_bounds"] = chernoff_tail_bounds(cfg, args.n, args.k).to_json()
    if args.eps is not None and args.delta is not None:
        try:
            first, second = sample_size_threshold(as_fraction(args.eps), as_fraction(args.delta),
                                                  cfg.alpha, cfg.l1, cfg.l2)
        except ValueError as exc:
            raise SpecError([f"MAConfig: {exc}"]) from exc
        body["thresholds"] = {"n_for_lower_tail": first, "n_for_upper_tail": second}
    body["manifest"] = run_manifest("ma-bounds", argv, {}, None)
    _emit(_dumps(body), args.out)
    return 0


def cmd_spark(args, argv) -> int:
    configs: dict[str, bytes] = {}
    A = load_matrix(args.matrix, configs)
    body = {
        "spark": spark(A),
        "rank": rank(A),
        "spark_condition": check_spark_condition(A),
        "manifest": run_manifest("spark", argv, configs, None),
    }
    _emit(_dumps(body), args.out)
    return 0


# ---------------------------------------------------------------------------
# repro
# ---------------------------------------------------------------------------

_GNUPLOT_BID = """set datafile separator ','
set datafile commentschars '#'
set key autotitle columnhead
set xlabel 'm'
set ylabel 'd(Y^m)/m'
set terminal pngcairo size 800,500
set output 'bid.png'
plot 'bid.csv' using 1:(column(2)) with linespoints title 'exact', \\
     '' using 1:(column(3)) with lines dt 2 title 'lower', \\
     '' using 1:(column(4)) with lines dt 3 title 'upper'
"""

_GNUPLOT_RDF = """set datafile separator ','
set datafile commentschars '#'
set logscale x
set xlabel 'D'
set ylabel 'bits'
set terminal pngcairo size 800,500
set output 'rdf_gap.png'
plot 'rdf.csv' using 1:2 with linespoints title 'R(D)', \\
     '' using 1:4 with linespoints title 'gap'
"""


def cmd_repro(args, argv) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = run_manifest("repro", argv, {}, None)
    lines = ["# Reproduced example values", ""]

    rid = {
        "invertible": rid_linear(presets.bg_triple(), presets.A_INVERTIBLE).value,
        "rank_deficient": rid_linear(presets.bg_triple(), presets.A_DEFICIENT).value,
    }
    for name in presets.NU_TABLES:
        rid[f"row_{name}"] = rid_linear(presets.table_source(name), presets.A_ROW).value
    (out / "rid.json").write_text(_dumps({"rid": {k: exact(v) for k, v in rid.items()},
                                          "manifest": manifest}), encoding="utf-8")
    lines += ["| case | information dimension |", "|---|---|"]
    lines += [f"| {k} | {fraction_str(v)} |" for k, v in rid.items()]

    cfg = MAConfig(presets.MA_TAPS, presets.MA_ALPHA)
    rep = bid_report(cfg, range(1, args.ma_max + 1))
    rows = [r.csv_fields() for r in rep.rows]
    (out / "bid.csv").write_text(_csv_text(manifest, ["m", "d_per_symbol", "lower", "upper"], rows),
                                 encoding="utf-8")
    (out / "bid.gp").write_text(_GNUPLOT_BID, encoding="utf-8")
    lines += ["", "## Moving average, taps -2, 1/2, 1, alpha 7/10", "",
              "| m | d(Y^m)/m | lower | upper |", "|---|---|---|---|"]
    lines += [f"| {r[0]} | {r[1]} | {r[2]} | {r[3]} |" for r in rows]

    drb = {
        "bg_scalar": drb_linear(presets.bg_scalar(), RationalMatrix.identity(1)),
        "invertible": drb_linear(presets.bg_triple(), presets.A_INVERTIBLE),
        "rank_deficient": drb_linear(presets.bg_triple(), presets.A_DEFICIENT, "decomposition"),
    }
    drb_json = {k: v.to_json() for k, v in drb.items()}
    curve = [rdf_oracle_scalar(presets.bg_scalar(), D) for D in args.distortions]
    gaps = drb_limit_gap(drb["bg_scalar"], curve)
    rdf_rows = [[repr(pt.distortion), repr(pt.rate_bits), repr(pt.lower_bound_bits), repr(g)]
                for pt, g in zip(curve, gaps.gaps)]
    (out / "rdf.csv").write_text(_csv_text(manifest, ["distortion", "rate_bits", "lower_bound_bits", "gap_bits"],
                                           rdf_rows), encoding="utf-8")
    (out / "rdf.gp").write_text(_GNUPLOT_RDF, encoding="utf-8")
    drb_json["bg_scalar_gaps"] = gaps.to_json()
    drb_json["manifest"] = manifest
    (out / "drb.json").write_text(_dumps(drb_json), encoding="utf-8")
    lines += ["", "## Dimensional rate bias (bits)", "", "| case | b | d |", "|---|---|---|"]
    lines += [f"| {k} | {v.drb_bits:.6f} | {fraction_str(v.rid)} |" for k, v in drb.items()]
    lines += ["", "| D | R(D) | gap |", "|---|---|---|"]
    lines += [f"| {pt.distortion:g} | {pt.rate_bits:.6f} | {g:.6f} |" for pt, g in zip(curve, gaps.gaps)]
    lines += ["", "Run manifest:", "", "```json", json.dumps(manifest, indent=2, sort_keys=True), "```", ""]
    (out / "report.md").write_text("\n".join(lines), encoding="utf-8")
    print(str(out / "report.md"))
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _fix_negative_values(argv: Sequence[str]) -> list[str]:
    """Glue ``--taps -2,...`` into ``--taps=-2,...`` so argparse does not read
    the value as an option."""
    out = []
    it = iter(argv)
    for tok in it:
        if tok in ("--taps", "--alpha"):
            nxt = next(it, None)
            if nxt is None:
                out.append(tok)
            else:
                out.append(f"{tok}={nxt}")
        else:
            out.append(tok)
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="affdim", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"affdim {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, matrix=True, source=True):
        if source:
            sp.add_argument("--source", required=True, help="source JSON file")
        if matrix:
            sp.add_argument("--matrix", required=True, help="matrix JSON file")
        sp.add_argument("--out", help="write here instead of stdout")

    sp = sub.add_parser("rid", help="information dimension of A X")
    common(sp)
    sp.add_argument("--mc", type=int, metavar="N", help="sample N indicator patterns instead of enumerating")
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_rid)

    sp = sub.add_parser("decompose", help="affine components of A X")
    common(sp)
    sp.add_argument("--audit", action="store_true", help="list the cells merged into each component")
    sp.add_argument("--entropy", action="store_true", help="attach component differential entropies")
    sp.set_defaults(func=cmd_decompose)

    sp = sub.add_parser("drb", help="dimensional rate bias of A X")
    common(sp)
    sp.add_argument("--path", choices=["auto", "full-column-rank", "decomposition"], default="auto")
    sp.add_argument("--oracle", metavar="D1,D2,...", help="also run the rate-distortion oracle (scalar only)")
    sp.add_argument("--grid-step", type=float, default=None)
    sp.set_defaults(func=cmd_drb)

    sp = sub.add_parser("empirical-rid", help="slope estimate from quantized samples")
    sp.add_argument("--source", required=True)
    sp.add_argument("--matrix")
    sp.add_argument("--scales", default="16..1024")
    sp.add_argument("--samples", type=int, default=1_000_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--csv", help="write per-scale entropies here")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_empirical)

    sp = sub.add_parser("ma", help="block information dimension of a moving average")
    sp.add_argument("--taps", required=True, help='comma separated, e.g. "-2,0.5,1"')
    sp.add_argument("--alpha", required=True)
    sp.add_argument("--l1", type=int, default=0)
    sp.add_argument("--m", default="1..12")
    sp.add_argument("--mc", type=int, metavar="N")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_ma)

    sp = sub.add_parser("ma-bounds", help="concentration bounds and sample-size thresholds")
    sp.add_argument("--taps", required=True)
    sp.add_argument("--alpha", required=True)
    sp.add_argument("--l1", type=int, default=0)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--k", type=int)
    sp.add_argument("--eps")
    sp.add_argument("--delta")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_ma_bounds)

    sp = sub.add_parser("spark", help="spark and rank of a matrix")
    common(sp, source=False)
    sp.set_defaults(func=cmd_spark)

    sp = sub.add_parser("repro", help="regenerate the worked examples into a report directory")
    sp.add_argument("--out", default="report")
    sp.add_argument("--ma-max", type=int, default=12)
    sp.add_argument("--distortions", type=lambda s: _parse_floats(s), default=[1e-2, 1e-3, 1e-4])
    sp.set_defaults(func=cmd_repro)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(_fix_negative_values(argv))
    try:
        return args.func(args, argv)
    except SpecError as exc:
        for v in exc.violations:
            print(f"error: {v}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ArithmeticError, ConvergenceError, ValueError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
