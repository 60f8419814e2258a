"""Command-line interface: ``dimcert <command> [flags]``.

Matrices are exchanged as labeled CSV and reports as JSON (sorted keys, no
timestamps, so reruns are byte-identical).  ``--config FILE`` supplies
defaults from a JSON object whose keys are flag names; explicit flags win.

Exit codes: 0 success, 2 input or parameter error, 3 protocol error,
4 numerical error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .certify import calibrate_maximal_weight, certify
from .errors import DimcertError, InputError, NumericalError, ParameterError, ProtocolError
from .ingest import (LabelMap, natural_map, optimize_label_map, permutation_average,
                     permuted_reconstructions, read_counts_csv, reconstruct, write_counts_csv)
from .pmatrix import ProbMatrix, assemble, classical_dimension_lower_bound, read_csv, singular_spectrum, write_csv
from .prep import SELECTIONS, optimize_preparations, states_to_json
from .protocol import VARIANTS, build_variant
from .reference import BENCHMARKS, MACHINE_ZERO, PERMUTED_BENCHMARK
from .sim import DEFAULT_COUNTS, DEFAULT_RUNS, NoiseModel, simulate_counts

EXIT_OK, EXIT_INPUT, EXIT_PROTOCOL, EXIT_NUMERICAL = 0, 2, 3, 4
MISMATCH_TOL = 0.01


def _dump(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _weight(args, d):
    w = getattr(args, "weight", None)
    if w is None or args.variant != "maximal":
        return None
    if str(w) == "calibrated":
        row = BENCHMARKS.get(("maximal", d))
        if row is None:
            raise ParameterError(f"no calibration target for d={d}")
        r = d * (d + 1) // 2
        sel = "center" if args.selection == "auto" else args.selection
        cal = calibrate_maximal_weight(d, row["sigma"][r], selection=sel)
        if not cal.resolved:
            raise NumericalError(f"weight calibration failed for d={d}")
        return cal.weight
    try:
        return float(w)
    except ValueError as exc:
        raise ParameterError(f"bad --weight {w!r}") from exc


def _theory(args):
    """(povm, states, t, P) for the configured protocol."""
    if args.d is None:
        raise ParameterError("--d is required")
    povm = build_variant(args.d, args.variant, p=args.p, weight=_weight(args, args.d))
    states, t = optimize_preparations(povm, selection=args.selection)
    return povm, states, t, assemble(states, povm)


def _read_matrix_with_std(path, std_path=None):
    pm = read_csv(path)
    sp = Path(std_path) if std_path else Path(path).with_name(Path(path).stem + ".std" + Path(path).suffix)
    std = read_csv(sp).values if (std_path or sp.exists()) else None
    if std is not None and std.shape != pm.values.shape:
        raise InputError("std matrix shape differs from the observed matrix")
    return pm, std


def _ingest(args, povm, states, P):
    """Counts -> (P', std, metadata) under --map / --search-map / --permute."""
    counts = read_counts_csv(args.counts, args.std)
    if args.search_map:
        lmap, _ = optimize_label_map(counts, povm, states, P)
    elif args.map:
        lmap = LabelMap.parse(args.map)
    else:
        lmap = natural_map(povm.d)
    if args.permute:
        Pp, std = permutation_average(permuted_reconstructions(counts, povm, states, lmap))
    else:
        Pp, std = reconstruct(counts, povm, states, lmap)
    meta = {"map": str(lmap), "variant": povm.variant, "dimension": povm.d, "runs": counts.runs,
            "permutation_average": bool(args.permute), "seed": counts.metadata.get("noise_model", {}).get("seed")}
    return Pp, std, meta


# ------------------------------------------------------------------ commands


def cmd_protocol(args):
    if args.d is None:
        raise ParameterError("--d is required")
    povm = build_variant(args.d, args.variant, p=args.p, weight=_weight(args, args.d))
    _emit(povm.to_json() + "\n", args.out)


def cmd_states(args):
    povm, states, t, _ = _theory(args)
    _emit(states_to_json(states, t, povm) + "\n", args.out)


def cmd_pmatrix(args):
    _, _, _, P = _theory(args)
    text = write_csv(P)
    _emit(text, args.out)
    s = singular_spectrum(P)
    sys.stderr.write(f"rank {classical_dimension_lower_bound(P, args.tol)} at tol {args.tol:g}; "
                     f"sigma = {', '.join(f'{v:.4g}' for v in s)}\n")


def cmd_simulate(args):
    if not args.out:
        raise ParameterError("simulate needs --out PATH for the count CSV")
    noise = NoiseModel(crosstalk=args.crosstalk, counts=args.n_counts, dark=args.dark, runs=args.runs,
                       seed=args.seed, analytic=args.analytic)
    cm = simulate_counts(None, noise)
    paths = write_counts_csv(cm, args.out)
    sys.stdout.write(_dump({"files": [str(p) for p in paths], "labels": len(cm.labels),
                            "noise_model": json.loads(noise.to_json())}))


def cmd_ingest(args):
    if not args.counts:
        raise ParameterError("ingest needs --counts PATH")
    povm, states, _, P = _theory(args)
    Pp, std, meta = _ingest(args, povm, states, P)
    if args.out:
        out = Path(args.out)
        write_csv(Pp, out)
        write_csv(ProbMatrix(std, Pp.row_labels, Pp.col_labels), out.with_name(out.stem + ".std" + out.suffix))
        out.with_suffix(".json").write_text(_dump(meta))
        sys.stdout.write(_dump(meta))
    else:
        sys.stdout.write(write_csv(Pp))


def cmd_permavg(args):
    args.permute = True
    cmd_ingest(args)


def cmd_certify(args):
    if args.counts and args.target:
        raise ParameterError("--counts needs the theory target (omit --target)")
    if args.target:
        P, povm, states = read_csv(args.target), None, None
    else:
        povm, states, _, P = _theory(args)
    d_q = args.d
    meta = {"rank_tol": args.tol, "rank": classical_dimension_lower_bound(P, args.tol)}
    if args.observed:
        Pp, std = _read_matrix_with_std(args.observed, args.std)
        if Pp.values.shape != P.values.shape:
            raise InputError("observed and target shapes differ")
        rep = certify(P.values, Pp.values, std=std, d_q=d_q, seed=args.seed, metadata=meta)
    elif args.counts:
        Pp, std, m = _ingest(args, povm, states, P)
        meta.update(m)
        rep = certify(P, Pp, std=std, d_q=d_q, seed=args.seed, metadata=meta)
    elif args.e_norm is not None:
        rep = certify(P, e_norm=args.e_norm, std=args.e_std, d_q=d_q, metadata=meta)
    else:
        rep = certify(P, P, d_q=d_q, metadata=meta)
    text = rep.to_json() + "\n"
    if args.out:
        Path(args.out).write_text(text)
        sys.stdout.write(rep.table() + "\n")
    else:
        sys.stdout.write(text)
        sys.stderr.write(rep.table() + "\n")


def _compare(d, variant, s, row):
    cells = []
    for r, ref in sorted(row["sigma"].items()):
        got = float(s[r - 1]) if r - 1 < s.size else 0.0
        if ref <= MACHINE_ZERO:
            ok = got <= MACHINE_ZERO
            cells.append({"r": r, "reference": "<= 1e-12", "computed": "<= 1e-12" if ok else got, "match": ok})
        else:
            rel = abs(got - ref) / ref
            cells.append({"r": r, "reference": ref, "computed": got, "relative_error": rel,
                          "match": rel <= MISMATCH_TOL})
    return cells


def reproduce_tables(variants=("convex", "maximal"), dims=(3, 5, 7)) -> dict:
    rows = []
    for variant, d in sorted(BENCHMARKS):
        if variant not in variants or d not in dims:
            continue
        row = BENCHMARKS[(variant, d)]
        entry = {"variant": variant, "d": d, "n": row["n"]}
        weight = None
        if variant == "maximal":
            r = d * (d + 1) // 2
            cal = calibrate_maximal_weight(d, row["sigma"][r])
            weight = cal.weight
            entry["calibration"] = {"method": cal.method, "weight": cal.weight, "residual": cal.residual,
                                    "resolved": cal.resolved, "default_weight": 1 / d,
                                    "default_sigma": cal.evaluations[0][1]}
        povm = build_variant(d, variant, weight=weight)
        states, _ = optimize_preparations(povm)
        s = singular_spectrum(assemble(states, povm))
        entry["rank"] = int(np.count_nonzero(s > 1e-10))
        entry["cells"] = _compare(d, variant, s, row)
        if (variant, d) == ("convex", 5):
            entry["permuted_cells"] = _compare(d, variant, s, PERMUTED_BENCHMARK)
        rows.append(entry)
    mism = [(e["variant"], e["d"], c["r"]) for e in rows for c in e["cells"] + e.get("permuted_cells", [])
            if not c["match"]]
    return {"rows": rows, "mismatches": [list(m) for m in mism], "tolerance": MISMATCH_TOL}


def cmd_reproduce_tables(args):
    variants = (args.variant,) if args.variant_given else ("convex", "maximal")
    dims = (args.d,) if args.d else (3, 5, 7)
    doc = reproduce_tables(variants, dims)
    _emit(_dump(doc), args.out)
    for e in doc["rows"]:
        for c in e["cells"] + e.get("permuted_cells", []):
            comp = c["computed"] if isinstance(c["computed"], str) else f"{c['computed']:.4g}"
            ref = c["reference"] if isinstance(c["reference"], str) else f"{c['reference']:.4g}"
            flag = "ok" if c["match"] else "MISMATCH"
            sys.stderr.write(f"{e['variant']:>8} d={e['d']} sigma_{c['r']:<3} {comp:>10} vs {ref:>10}  {flag}\n")


COMMANDS = {
    "protocol": cmd_protocol, "states": cmd_states, "pmatrix": cmd_pmatrix, "simulate": cmd_simulate,
    "ingest": cmd_ingest, "certify": cmd_certify, "permavg": cmd_permavg, "reproduce-tables": cmd_reproduce_tables,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of flag defaults (flags win)")
    common.add_argument("--d", type=int, help="qudit dimension (odd, >= 3)")
    common.add_argument("--variant", choices=VARIANTS, default="convex")
    common.add_argument("--p", type=float, help="incoherent POVM weight (convex/coherent/incoherent)")
    common.add_argument("--weight", help="maximal-variant incoherent weight, or 'calibrated'")
    common.add_argument("--selection", choices=SELECTIONS, default="auto")
    common.add_argument("--tol", type=float, default=1e-10, help="rank tolerance")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", help="output path (stdout if omitted)")
    common.add_argument("--counts", help="count-matrix CSV")
    common.add_argument("--std", help="std CSV (defaults to the <name>.std.csv sibling)")
    common.add_argument("--target", help="target P CSV (theory if omitted)")
    common.add_argument("--observed", help="observed P' CSV")
    common.add_argument("--e-norm", type=float, help="inject ||E||_2 instead of data")
    common.add_argument("--e-std", type=float, help="uncertainty of an injected ||E||_2")
    common.add_argument("--map", help="label map as comma-separated charges, e.g. 0,1,-1")
    common.add_argument("--search-map", action="store_true", help="exhaustive label-map search")
    common.add_argument("--permute", action="store_true", help="average over the protocol symmetries")
    common.add_argument("--crosstalk", type=float, default=0.0)
    common.add_argument("--n-counts", type=float, default=DEFAULT_COUNTS)
    common.add_argument("--runs", type=int, default=DEFAULT_RUNS)
    common.add_argument("--dark", type=float, default=0.0)
    common.add_argument("--analytic", action="store_true", help="exact expected counts, no sampling")
    parser = argparse.ArgumentParser(prog="dimcert", description="Classical-dimension certification toolkit.")
    parser.add_argument("--version", action="version", version=f"dimcert {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    parser._subs = {name: sub.add_parser(name, parents=[common]) for name in COMMANDS}
    return parser


def _load_config(path) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise InputError("config must be a JSON object")
    return {k.replace("-", "_"): v for k, v in cfg.items()}


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    given = any(a == "--variant" or a.startswith("--variant=") for a in argv)
    args.variant_given = given
    if args.config:
        cfg = _load_config(args.config)
        sp = parser._subs[args.command]
        known = {a.dest for a in sp._actions}
        bad = sorted(set(cfg) - known)
        if bad:
            raise InputError(f"unknown config keys: {', '.join(bad)}")
        sp.set_defaults(**cfg)
        args = parser.parse_args(argv)
        args.variant_given = given or "variant" in cfg
    return args


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
        COMMANDS[args.command](args)
    except ProtocolError as exc:
        sys.stderr.write(f"protocol error: {exc}\n")
        return EXIT_PROTOCOL
    except NumericalError as exc:
        sys.stderr.write(f"numerical error: {exc}\n")
        return EXIT_NUMERICAL
    except (DimcertError, ValueError, OSError) as exc:
        sys.stderr.write(f"input error: {exc}\n")
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
