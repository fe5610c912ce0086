"""``homwave`` command line: build pipelines, run checks and experiments, write reports."""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .io import FormatError, coefficient_rows, csv_text, dumps, function_rows, read_coefficients, read_function, write_csv, write_json
from .space import SpaceError, load_space, parse_fixture, space_to_json

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

NORMS = ("lp", "bmo", "bmo_plus", "carleson", "h1", "llog", "grand_maximal", "atomic", "all")
CONFIG_KEYS = {"space", "fixture", "delta", "mode", "samples", "seed", "kmin", "kmax", "tol", "out", "format", "experiment"}


class ConfigError(Exception):
    pass


class CheckFailed(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _emit(text: str, args, name: str | None = None):
    """Write ``text`` to ``--out/name`` when an output directory is set, else to stdout."""
    if args.out and name:
        from .io import atomic_write

        atomic_write(Path(args.out) / name, text)
    else:
        sys.stdout.write(text)


# -- pipeline helpers -------------------------------------------------------


def _space(args):
    if bool(args.space) == bool(args.fixture):
        raise ConfigError("give exactly one of --space or --fixture")
    if args.space:
        return load_space(args.space)
    return parse_fixture(args.fixture)


def _system(args, S):
    from .dyadic import build_system

    tiebreak = getattr(args, "tiebreak", "deterministic")
    return build_system(S, args.delta, k_min=args.kmin, k_max=args.kmax, tiebreak=tiebreak, seed=args.seed if tiebreak == "random" else None)


def _pipeline(args, S=None):
    from .mra import build_splines
    from .wavelet import build_wavelets

    S = _space(args) if S is None else S
    D = _system(args, S)
    B = build_splines(D)
    return S, D, B, build_wavelets(B)


def _function(S, path):
    if path is None:
        raise ConfigError("missing function CSV")
    return read_function(S, path)


# -- subcommands ------------------------------------------------------------


def cmd_gen_space(args):
    S = _space(args)
    _emit(dumps(space_to_json(S)), args, "space.json")
    return EXIT_OK


def cmd_dump_dyadic(args):
    from .dyadic import cube_rows, net_rows

    S = _space(args)
    D = _system(args, S)
    cubes = csv_text(("level", "center_id", "point_id"), cube_rows(D))
    nets = csv_text(("level", "center_id"), net_rows(D))
    if args.out:
        _emit(cubes, args, "cubes.csv")
        _emit(nets, args, "nets.csv")
    else:
        sys.stdout.write(cubes)
    return EXIT_OK


def _decay_rows(W):
    ids = W.space.ids
    for i, (k, t, y) in enumerate(W.fits["samples"]):
        b = W.index[i][1]
        for tt, yy in zip(t, y):
            yield k, ids[b], float(tt), float(yy)


def cmd_build(args):
    from .mra import build_splines, gram, spline_checks

    S, D, B, W = _pipeline(args)
    basis = build_splines(D, "smoothed", replicas=args.samples, seed=args.seed) if args.mode == "smoothed" else B
    sr = spline_checks(basis)
    fits = W.fits
    doc = {
        "schema": "build/v1",
        "space": S.name,
        "n": S.n,
        "params": {"delta": args.delta, "mode": args.mode, "samples": args.samples, "seed": args.seed},
        "doubling": S.doubling.to_dict(),
        "levels": {
            str(k): {"centers": len(D.centers(k)), "new_labels": len(D.new_labels(k)) if k < D.k_max else 0} for k in D.levels
        },
        "k_min": D.k_min,
        "k_max": D.k_max,
        "gram": [gram(basis, k).to_dict() for k in D.levels] if args.mode == "haar" else [],
        "splines": sr.to_dict(),
        "wavelets": {
            "count": len(W),
            "coarse": len(W.coarse),
            "decay": {"pooled": fits["pooled"], "per_level": {str(k): v for k, v in fits["per_level"].items()}},
            "eps0": None if math.isinf(fits["eps0"]) else fits["eps0"],
            "eta_hat": fits["eta_hat"],
        },
    }
    spline_rows = [
        (k, S.ids[c], S.ids[p], float(v))
        for k in D.levels
        for c, row in zip(D.centers(k), basis.s[k])
        for p in np.flatnonzero(row)
        for v in (row[p],)
    ]
    if args.out:
        _emit(dumps(doc), args, "build.json")
        write_csv(Path(args.out) / "splines.csv", ("level", "center_id", "point_id", "value"), spline_rows)
        write_csv(Path(args.out) / "decay.csv", ("level", "beta_id", "t", "log_scaled_abs"), _decay_rows(W))
    elif args.format == "csv":
        sys.stdout.write(csv_text(("level", "center_id", "point_id", "value"), spline_rows))
    else:
        sys.stdout.write(dumps(doc))
    return EXIT_OK


def cmd_check(args):
    from .checks import parse_tolerances, run_suite

    try:
        tol = parse_tolerances(args.tol)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    S = _space(args)
    rep = run_suite(S, args.delta, args.mode, args.samples, args.seed, tol, kmin=args.kmin, kmax=args.kmax)
    _emit(dumps(rep.to_dict()), args, "check.json")
    if not rep.ok:
        bad = [f"{i.module}.{i.name}" for i in rep.invariants if i.hard and not i.passed]
        raise CheckFailed(f"hard invariants failed: {', '.join(bad)}")
    return EXIT_OK


def cmd_transform(args):
    from .wavelet import analyze, synthesize

    S, D, B, W = _pipeline(args)
    if args.inverse:
        if args.coeffs is None:
            raise ConfigError("--inverse needs --coeffs")
        f = synthesize(W, read_coefficients(W, args.coeffs))
        _emit(csv_text(("point_id", "value"), function_rows(S, f)), args, "function.csv")
        return EXIT_OK
    c = analyze(W, _function(S, args.function))
    if args.format == "json":  # csv unless asked
        rows = [dict(zip(("kind", "level", "beta_id", "value"), r)) for r in coefficient_rows(c)]
        _emit(dumps({"schema": "coeffs/v1", "space": S.name, "coefficients": rows}), args, "coefficients.json")
    else:
        _emit(csv_text(("kind", "level", "beta_id", "value"), coefficient_rows(c)), args, "coefficients.csv")
    return EXIT_OK


def cmd_norms(args):
    from . import fnorms
    from .wavelet import analyze

    S, D, B, W = _pipeline(args)
    f = _function(S, args.function)
    wanted = NORMS[:-1] if args.norm == "all" else (args.norm,)
    out = []
    for name in wanted:
        if name == "lp":
            p = math.inf if args.p in ("inf", "infinity") else float(args.p)
            out.append(fnorms.NormValue("lp", fnorms.lp_norm(S, f, p), params={"p": args.p}))
        elif name == "bmo":
            out.append(fnorms.bmo_norm(S, f))
        elif name == "bmo_plus":
            out.append(fnorms.bmo_plus(S, f, args.x0))
        elif name == "carleson":
            out.append(fnorms.carleson_norm(D, analyze(W, f)))
        elif name == "h1":
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                n3, n4, n5 = fnorms.h1_wavelet_norms(W, f)
            params = {"eps0": None if math.isinf(W.eps0) else W.eps0, "mean_zero": not caught}
            out += [fnorms.NormValue(f"h1_{tag}", v, params=params) for tag, v in (("iii", n3), ("iv", n4), ("v", n5))]
        elif name == "llog":
            x0 = S.idx(args.x0) if args.x0 else S.base_point
            out.append(fnorms.NormValue("llog", fnorms.llog_norm(S, f, x0), params={"x0": S.ids[x0]}))
        elif name == "grand_maximal":
            m = fnorms.grand_maximal(S, f, args.beta, args.gamma)
            if args.format == "csv" and args.norm == "grand_maximal":
                _emit(csv_text(("point_id", "value"), function_rows(S, m)), args, "grand_maximal.csv")
                return EXIT_OK
            out.append(
                fnorms.NormValue(
                    "grand_maximal_l1",
                    fnorms.lp_norm(S, m, 1),
                    params={"beta": args.beta, "gamma": args.gamma, "values": dict(zip(S.ids, map(float, m))), "lower_bound": True},
                )
            )
        elif name == "atomic":
            try:
                out.append(fnorms.atomic_norm_upper(W, f))
            except fnorms.NormError as e:
                if args.norm == "atomic":
                    raise
                out.append(fnorms.NormValue("atomic_upper", math.nan, params={"skipped": str(e)}))
    if len(out) == 1:
        doc = out[0].to_dict()
    else:
        doc = {"schema": "norms/v1", "space": S.name, "norms": [v.to_dict() for v in out]}
    _emit(dumps(doc), args, "norms.json")
    return EXIT_OK


def cmd_decompose(args):
    from .paraproduct import paraproducts

    S, D, B, W = _pipeline(args)
    f, g = _function(S, args.f), _function(S, args.g)
    r = paraproducts(B, W, f, g)
    scale = float(np.abs(f).max() * np.abs(g).max())
    if args.format == "csv":
        rows = zip(S.ids, r.pi1, r.pi2, r.pi3, r.coarse)
        _emit(csv_text(("point_id", "pi1", "pi2", "pi3", "coarse"), rows), args, "decompose.csv")
    else:
        doc = r.to_dict(S.ids)
        doc.update({"space": S.name, "relative_residual": r.residual / scale if scale else 0.0})
        _emit(dumps(doc), args, "decompose.json")
    tol = 1e-10 * max(scale, np.finfo(float).tiny)
    if r.residual > tol:
        raise CheckFailed(f"decomposition residual {r.residual:.3e} exceeds {tol:.3e}")
    return EXIT_OK


def _experiment_config(args) -> dict:
    cfg = dict(args.experiment or {})
    if args.fixture:
        cfg["fixtures"] = [s for s in args.fixture.split(";") if s]
    if args.seeds:
        cfg["seeds"] = [int(s) for s in args.seeds.split(",")]
    elif "seeds" not in cfg:
        cfg["seeds"] = [args.seed]
    if args.atoms is not None:
        cfg["atoms"] = args.atoms
    if args.functions is not None:
        cfg["functions"] = args.functions
    if args.delta_set:
        cfg["delta"] = args.delta
    cfg.setdefault("delta", args.delta)
    if args.operators:
        cfg["operators"] = True
    return cfg


def cmd_experiment(args):
    from .paraproduct import boundedness_experiment

    if args.space:
        raise ConfigError("experiment runs on fixtures; use --fixture or a config experiment block")
    rep = boundedness_experiment(_experiment_config(args))
    header = ("space", "seed", "atom_center", "atom_radius", "g_kind", "r1", "r2", "r3", "residual")
    rows = [
        (r["space"], r["seed"], r["atom_ball"]["center"], r["atom_ball"]["radius"], r["g_kind"], r["r1"], r["r2"], r["r3"], r["residual"])
        for r in rep["records"]
    ]
    if args.out:
        _emit(dumps(rep), args, "experiment.json")
        write_csv(Path(args.out) / "experiment.csv", header, rows)
    elif args.format == "csv":
        sys.stdout.write(csv_text(header, rows))
    else:
        sys.stdout.write(dumps(rep))
    bad = rep["summary"]["residual"]["max"]
    if bad is not None and bad > 1e-10:
        raise CheckFailed(f"decomposition residual {bad:.3e} exceeds 1e-10")
    return EXIT_OK


def _ratio_rows(runs: dict):
    by_n: dict = {}
    for doc in runs.values():
        if not isinstance(doc, dict) or doc.get("schema") != "experiment/v1":
            continue
        for sp in doc.get("spaces", []):
            for q in ("max", "p50", "p95"):
                slot = by_n.setdefault((q, sp["n"]), {})
                for key in ("r1", "r2", "r3"):
                    v = sp.get(key, {}).get(q)
                    if v is not None:
                        slot[key] = max(slot.get(key, -math.inf), v)
    order = {"max": 0, "p50": 1, "p95": 2}
    return [
        {"quantile": q, "n": n, **{k: vals.get(k, "") for k in ("r1", "r2", "r3")}}
        for (q, n), vals in sorted(by_n.items(), key=lambda t: (order[t[0][0]], t[0][1]))
    ]


def cmd_report(args):
    import csv

    roots = [Path(p) for p in (args.inputs or [args.out])] if (args.inputs or args.out) else []
    if not roots:
        raise ConfigError("report needs --out DIR or input directories")
    out = Path(args.out or roots[0])
    runs, decay = {}, []
    for root in roots:
        if not root.is_dir():
            raise ConfigError(f"not a directory: {root}")
        for path in sorted(root.rglob("*.json")):
            if path.name == "report.json":
                continue
            key = str(path.relative_to(root)) if len(roots) == 1 else f"{root.name}/{path.relative_to(root)}"
            try:
                runs[key] = json.loads(path.read_text(encoding="utf-8"))
            except (json.JSONDecodeError, UnicodeDecodeError) as e:
                raise FormatError(f"corrupt run file {path}: {e}") from None
        for path in sorted(root.rglob("decay.csv")):
            with path.open(encoding="utf-8") as fh:
                for row in csv.DictReader(fh):
                    decay.append({"source": str(path.parent.relative_to(root)) or ".", **row})
    if not runs:
        print(json.dumps({"warning": "no run files found", "inputs": [str(r) for r in roots]}), file=sys.stderr)
    ratios = _ratio_rows(runs)
    write_json(out / "report.json", {"schema": "report/v1", "runs": runs, "metadata": {"version": __version__, "inputs": len(runs)}})
    plots = out / "plots"
    write_csv(plots / "decay.csv", ("source", "level", "beta_id", "t", "log_scaled_abs"), [tuple(r.values()) for r in decay])
    write_csv(plots / "ratios_vs_n.csv", ("quantile", "n", "r1", "r2", "r3"), [tuple(r.values()) for r in ratios])
    if not args.no_figures:
        from .plotting import decay_figure, ratios_figure

        decay_figure(decay, plots / "decay.png")
        ratios_figure(ratios, plots / "ratios_vs_n.png")
    return EXIT_OK


# -- parser -----------------------------------------------------------------


def _positive_delta(text):
    v = float(text)
    if not 0 < v <= 0.5:
        raise argparse.ArgumentTypeError(f"delta must lie in (0, 1/2], got {text}")
    return v


def _count(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"count must be >= 1, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--space", help="space/v1 JSON file")
    common.add_argument("--fixture", help="fixture name, e.g. line4, ring:16, cloud:64:2:7")
    common.add_argument("--delta", type=_positive_delta, default=0.25)
    common.add_argument("--mode", choices=("haar", "smoothed"), default="haar")
    common.add_argument("--samples", type=_count, default=16, help="replicas in smoothed mode")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--kmin", type=int)
    common.add_argument("--kmax", type=int)
    common.add_argument("--tol", action="append", default=[], metavar="NAME=VALUE")
    common.add_argument("--out", help="output directory")
    common.add_argument("--format", choices=("json", "csv"), help="output format (transform defaults to csv, others to json)")
    common.add_argument("--config", help="RunConfig JSON providing defaults for these flags")

    p = _Parser(prog="homwave", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("gen-space", parents=[common], help="write a space file").set_defaults(func=cmd_gen_space)
    s = sub.add_parser("dump-dyadic", parents=[common], help="write cube and net CSVs")
    s.add_argument("--tiebreak", choices=("deterministic", "random"), default="deterministic")
    s.set_defaults(func=cmd_dump_dyadic)
    sub.add_parser("build", parents=[common], help="build splines and wavelets, report fits").set_defaults(func=cmd_build)
    sub.add_parser("check", parents=[common], help="run every invariant suite").set_defaults(func=cmd_check)
    s = sub.add_parser("transform", parents=[common], help="wavelet analysis or synthesis")
    s.add_argument("--function")
    s.add_argument("--coeffs")
    s.add_argument("--inverse", action="store_true")
    s.set_defaults(func=cmd_transform)
    s = sub.add_parser("norms", parents=[common], help="function-space norms of a function CSV")
    s.add_argument("--function")
    s.add_argument("--norm", choices=NORMS, default="all")
    s.add_argument("--p", default="2")
    s.add_argument("--x0")
    s.add_argument("--beta", type=float, default=0.5)
    s.add_argument("--gamma", type=float, default=0.5)
    s.set_defaults(func=cmd_norms)
    s = sub.add_parser("decompose", parents=[common], help="paraproduct decomposition of f*g")
    s.add_argument("--f")
    s.add_argument("--g")
    s.set_defaults(func=cmd_decompose)
    s = sub.add_parser("experiment", parents=[common], help="atom x BMO boundedness sweep")
    s.add_argument("--seeds", help="comma-separated seeds")
    s.add_argument("--atoms", type=_count)
    s.add_argument("--functions", type=_count)
    s.add_argument("--operators", action="store_true", help="also sweep sigma_max(U_{k,i})")
    s.set_defaults(func=cmd_experiment)
    s = sub.add_parser("report", parents=[common], help="merge run outputs into one report")
    s.add_argument("inputs", nargs="*", help="run directories (default: --out)")
    s.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    s.set_defaults(func=cmd_report)
    return p


def _apply_config(parser, argv):
    pre = _Parser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return {}
    try:
        cfg = json.loads(Path(known.config).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {known.config}: {e}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(cfg) - CONFIG_KEYS - {"schema"}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "delta" in cfg and not 0 < float(cfg["delta"]) <= 0.5:
        raise ConfigError("config delta must lie in (0, 1/2]")
    if "samples" in cfg and int(cfg["samples"]) < 1:
        raise ConfigError("config samples must be >= 1")
    if isinstance(cfg.get("tol"), dict):
        cfg["tol"] = [f"{k}={v}" for k, v in cfg["tol"].items()]
    return cfg


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        parser = build_parser()
        cfg = _apply_config(parser, argv)
        args = parser.parse_args(argv)
        given = {a.split("=", 1)[0] for a in argv if a.startswith("--")}
        args.delta_set = "--delta" in given
        for key, value in cfg.items():
            if key == "experiment":
                continue
            if f"--{key}" not in given:
                setattr(args, key, value)
        if "delta" in cfg and not args.delta_set:
            args.delta_set = True
        args.experiment = cfg.get("experiment")
        if args.tol:
            from .checks import parse_tolerances

            parse_tolerances(args.tol)
        return args.func(args)
    except CheckFailed as e:
        print(json.dumps({"error": "check_failed", "message": str(e)}), file=sys.stderr)
        return EXIT_FAIL
    except (ConfigError, SpaceError, FormatError, FileNotFoundError, ValueError) as e:
        print(json.dumps({"error": type(e).__name__, "message": str(e)}), file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
