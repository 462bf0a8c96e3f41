"""Command-line front end: ``milpgen <subcommand> [options]``.

Every subcommand accepts ``--config run.json``. The config is a versioned
JSON document with the sections below; command-line flags override it and the
fully resolved config is written next to the outputs as
``resolved_config.json``. Exit codes: 0 success, 1 usage error, 2 data error,
3 numeric failure. Failures also print one JSON error record to stderr.

    {"version": 1, "seed": 0,
     "family": {"family": "mis", "params": {}},
     "train": {...TrainConfig...}, "gen": {...GenConfig...},
     "solver": {...SolverLimits...}, "benchmark": {"extended": false, ...},
     "paths": {...}}
"""

from __future__ import annotations

import argparse
import csv
import glob
import json
import logging
import os
import sys
from dataclasses import asdict

import numpy as np

CONFIG_VERSION = 1
CONFIG_SECTIONS = {
    "version": None, "seed": None, "family": {"family", "params", "count"},
    "train": None, "gen": None, "solver": None, "paths": None,
    "benchmark": {"extended", "downstream"},
}
USAGE, DATA, NUMERIC = 1, 2, 3

log = logging.getLogger("milpgen")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# --------------------------------------------------------------------------
# config handling


def _section_keys():
    from .benchmark import DownstreamConfig
    from .pipeline import GenConfig, TrainConfig
    from .solver import SolverLimits

    keys = dict(CONFIG_SECTIONS)
    keys["train"] = set(TrainConfig.__dataclass_fields__)
    keys["gen"] = set(GenConfig.__dataclass_fields__)
    keys["solver"] = set(SolverLimits.__dataclass_fields__)
    keys["benchmark"] = {"extended", "downstream"}
    keys["downstream"] = set(DownstreamConfig.__dataclass_fields__) - {"limits"}
    return keys


def load_config(path) -> dict:
    """Read and validate a run config; unknown keys and versions are usage errors."""
    if path is None:
        return {"version": CONFIG_VERSION}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from None
    validate_config(cfg)
    return cfg


def validate_config(cfg) -> None:
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    if cfg.get("version") != CONFIG_VERSION:
        raise UsageError(f"unsupported config version {cfg.get('version')!r}; expected {CONFIG_VERSION}")
    keys = _section_keys()
    for k, v in cfg.items():
        if k not in CONFIG_SECTIONS:
            raise UsageError(f"unknown config key {k!r}")
        allowed = keys.get(k)
        if allowed is None or k == "paths":
            continue
        if not isinstance(v, dict):
            raise UsageError(f"config section {k!r} must be an object")
        for kk in v:
            if kk not in allowed:
                raise UsageError(f"unknown key {kk!r} in config section {k!r}")
        if k == "benchmark" and isinstance(v.get("downstream"), dict):
            for kk in v["downstream"]:
                if kk not in keys["downstream"]:
                    raise UsageError(f"unknown key {kk!r} in benchmark.downstream")


def _merge(cfg, section, **flags):
    sec = dict(cfg.get(section, {}))
    sec.update({k: v for k, v in flags.items() if v is not None})
    cfg[section] = sec
    return sec


def _write_resolved(cfg, out_path) -> None:
    d = out_path if os.path.isdir(out_path) else os.path.dirname(os.path.abspath(out_path))
    os.makedirs(d, exist_ok=True)
    with open(os.path.join(d, "resolved_config.json"), "w") as fh:
        json.dump(cfg, fh, indent=1, sort_keys=True, default=float)


# --------------------------------------------------------------------------
# I/O helpers


def _mps_files(path) -> list:
    if os.path.isfile(path):
        return [path]
    if not os.path.isdir(path):
        raise FileNotFoundError(f"no such file or directory: {path}")
    files = sorted(glob.glob(os.path.join(path, "*.mps")))
    if not files:
        raise ValueError(f"no .mps files in {path}")
    return files


def _read_set(path) -> tuple:
    from .mps import MpsParseError, read_mps

    files = _mps_files(path)
    insts = []
    for f in files:
        try:
            insts.append(read_mps(f))
        except MpsParseError as exc:
            raise ValueError(f"{f}: {exc}") from None
    return files, insts


def _write_set(out_dir, insts, prefix) -> list:
    from .mps import write_mps

    os.makedirs(out_dir, exist_ok=True)
    names = []
    for i, inst in enumerate(insts):
        fname = f"{prefix}_{i:05d}.mps"
        with open(os.path.join(out_dir, fname), "w") as fh:
            fh.write(write_mps(inst))
        names.append(fname)
    return names


def _emit(obj, out=None) -> None:
    from .benchmark import to_json

    text = to_json(obj)
    if out:
        d = os.path.dirname(os.path.abspath(out))
        os.makedirs(d, exist_ok=True)
        with open(out, "w") as fh:
            fh.write(text + "\n")
    print(text)


def _limits(cfg, args):
    from .solver import SolverLimits

    sec = _merge(cfg, "solver", max_nodes=args.max_nodes, max_seconds=args.max_seconds)
    return SolverLimits(**sec)


# --------------------------------------------------------------------------
# subcommands


def cmd_gen_data(args, cfg):
    from .generators import FamilyParams, write_corpus

    params = json.loads(args.params) if args.params else None
    fam = _merge(cfg, "family", family=args.family, params=params, count=args.count)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if "family" not in fam:
        raise UsageError("--family is required")
    seed = int(cfg.get("seed", 0))
    FamilyParams(fam["family"], fam.get("params", {}), seed)
    man = write_corpus(args.out, fam["family"], int(fam.get("count", 100)), seed,
                       fam.get("params", {}), jobs=args.jobs)
    _write_resolved(cfg, args.out)
    print(f"wrote {man['count']} instances to {args.out}")


def cmd_train(args, cfg):
    from .pipeline import TrainConfig, train

    sec = _merge(cfg, "train", steps=args.steps, seed=args.seed, lr=args.lr,
                 selection=args.selection, eval_interval=args.eval_interval,
                 graphs_per_batch=args.graphs_per_batch)
    if args.beta is not None:
        sec["beta"] = {**sec.get("beta", {}), "target": args.beta}
    if args.beta_schedule is not None:
        sec["beta"] = {**sec.get("beta", {}), "kind": args.beta_schedule}
    tc = TrainConfig.from_dict(sec)
    cfg["train"] = tc.to_dict()
    _, data = _read_set(args.data)
    cfg.setdefault("paths", {}).update(data=args.data)
    log_path = args.log or os.path.splitext(args.out)[0] + ".log.jsonl"
    d = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(d, exist_ok=True)
    with open(log_path, "w") as fh:
        ck = train(data, tc, log=fh)
    ck.save(args.out)
    _write_resolved(cfg, args.out)
    print(f"saved checkpoint (step {ck.step}) to {args.out}")


def _gen_config(cfg, args):
    from .pipeline import GenConfig

    sec = _merge(cfg, "gen", eta=args.eta, count=args.count, seed=args.seed, order=args.order)
    gc = GenConfig(**sec)
    cfg["gen"] = asdict(gc)
    return gc


def cmd_generate(args, cfg):
    from .pipeline import Checkpoint, generate_many

    gc = _gen_config(cfg, args)
    ck = Checkpoint.load(args.checkpoint)
    _, src = _read_set(args.data)
    out = generate_many(ck, src, gc, jobs=args.jobs)
    cfg.setdefault("paths", {}).update(checkpoint=args.checkpoint, data=args.data)
    _write_set(args.out, out, "gen")
    _write_resolved(cfg, args.out)
    print(f"wrote {len(out)} instances to {args.out}")


def cmd_baseline(args, cfg):
    from .generators import derive_seed
    from .milp import dataset_norm_bounds
    from .pipeline import BowlyStats, bowly_baseline, random_baseline_many

    gc = _gen_config(cfg, args)
    _, src = _read_set(args.data)
    if args.kind == "random":
        out = random_baseline_many(src, gc, dataset_norm_bounds(src), jobs=args.jobs)
    else:
        stats = BowlyStats.fit(src)
        rng = np.random.default_rng(derive_seed(gc.seed, 0))
        m = int(round(np.mean([x.m for x in src])))
        n = int(round(np.mean([x.n for x in src])))
        out = bowly_baseline(stats, (m, n), gc.count, rng)
    cfg.setdefault("paths", {}).update(data=args.data, baseline=args.kind)
    _write_set(args.out, out, args.kind)
    _write_resolved(cfg, args.out)
    print(f"wrote {len(out)} {args.kind} instances to {args.out}")


def cmd_stats(args, cfg):
    from .benchmark import compute_stats_many, stats_csv

    files, insts = _read_set(args.data)
    stats = compute_stats_many(insts, jobs=args.jobs)
    text = stats_csv([os.path.basename(f) for f in files], stats)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_similarity(args, cfg):
    from .benchmark import compute_stats_many, similarity_csv, similarity_score

    bench = _merge(cfg, "benchmark", extended=True if args.extended else None)
    _, a = _read_set(args.set_a)
    _, b = _read_set(args.set_b)
    sa = compute_stats_many(a, jobs=args.jobs)
    sb = compute_stats_many(b, jobs=args.jobs)
    rep = similarity_score(sa, sb, extended=bool(bench.get("extended", False)))
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(similarity_csv(rep))
    _emit(rep.to_dict(), args.out)


def cmd_solve(args, cfg):
    from .solver import ExternalSolverConfig, solve_external, solve_milp

    limits = _limits(cfg, args)
    files, insts = _read_set(args.input)
    ext = None
    if args.external:
        with open(args.external) as fh:
            ext = ExternalSolverConfig(**json.load(fh))
    rows = []
    for f, inst in zip(files, insts):
        res = solve_external(inst, ext) if ext else solve_milp(inst, limits)
        rows.append({"file": os.path.basename(f), "status": res.status, "objective": res.objective,
                     "nodes": res.nodes, "seconds": res.seconds})
    _emit(rows, args.out)


def cmd_hardness(args, cfg):
    from .benchmark import feasibility_fraction, hardness_report

    limits = _limits(cfg, args)
    _, insts = _read_set(args.data)
    _, ref = _read_set(args.reference)
    rep = hardness_report(insts, ref, limits).to_dict()
    rep["feasibility"] = feasibility_fraction(insts, limits)
    _emit(rep, args.out)


def cmd_downstream(args, cfg):
    from .benchmark import DownstreamConfig, downstream_optimal_value

    limits = _limits(cfg, args)
    bench = cfg.setdefault("benchmark", {})
    ds = dict(bench.get("downstream", {}))
    ds.update({k: v for k, v in (("epochs", args.epochs), ("seed", args.seed)) if v is not None})
    bench["downstream"] = ds
    dc = DownstreamConfig(**ds, limits=limits)
    _, tr = _read_set(args.train)
    _, te = _read_set(args.test)
    au = _read_set(args.augment)[1] if args.augment else []
    _emit(downstream_optimal_value(tr, au, te, dc).to_dict(), args.out)


def cmd_export_embeddings(args, cfg):
    from .benchmark import instance_embeddings
    from .pipeline import Checkpoint

    ck = Checkpoint.load(args.checkpoint)
    files, insts = _read_set(args.data)
    emb = instance_embeddings(ck, insts)
    d = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(d, exist_ok=True)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["instance"] + [f"e{k}" for k in range(emb.shape[1])])
        for f, row in zip(files, emb):
            w.writerow([os.path.basename(f)] + [repr(float(v)) for v in row])
    print(f"wrote {len(files)} embeddings to {args.out}")


def cmd_roundtrip_check(args, cfg):
    from .milp import from_bipartite, to_bipartite
    from .mps import parse_mps, write_mps

    files, insts = _read_set(args.data)
    bad = []
    for f, inst in zip(files, insts):
        ok_graph = from_bipartite(to_bipartite(inst)).replace(name=inst.name) == inst
        ok_mps = parse_mps(write_mps(inst)) == inst
        if not (ok_graph and ok_mps):
            bad.append({"file": os.path.basename(f), "graph": ok_graph, "mps": ok_mps})
    _emit({"checked": len(insts), "failures": bad})
    if bad:
        raise ValueError(f"{len(bad)} instance(s) failed the round trip")


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="milpgen", description="MILP instance generation and benchmarking.")
    p.add_argument("--verbose", "-v", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="versioned JSON run config")
        sp.set_defaults(func=fn)
        return sp

    def gen_flags(sp):
        sp.add_argument("--data", required=True, help="directory of source MPS files")
        sp.add_argument("--out", required=True)
        sp.add_argument("--eta", type=float)
        sp.add_argument("--count", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--order", choices=("uniform", "index-ascending", "index-descending"))
        sp.add_argument("--jobs", type=int, default=1)

    def solver_flags(sp):
        sp.add_argument("--max-nodes", type=int)
        sp.add_argument("--max-seconds", type=float)
        sp.add_argument("--out")

    sp = add("gen-data", cmd_gen_data, "generate a synthetic corpus")
    sp.add_argument("--family", choices=("mis", "setcover", "mik"))
    sp.add_argument("--count", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--params", help="generator parameters as a JSON object")
    sp.add_argument("--out", required=True)
    sp.add_argument("--jobs", type=int, default=1)

    sp = add("train", cmd_train, "train the masked VAE")
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True, help="checkpoint path")
    sp.add_argument("--log", help="JSONL training log (default: next to the checkpoint)")
    sp.add_argument("--steps", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--beta", type=float)
    sp.add_argument("--beta-schedule", choices=("constant", "sigmoid"))
    sp.add_argument("--selection", choices=("similarity", "hardness", "final"))
    sp.add_argument("--eval-interval", type=int)
    sp.add_argument("--graphs-per-batch", type=int)

    sp = add("generate", cmd_generate, "generate instances from a checkpoint")
    sp.add_argument("--checkpoint", required=True)
    gen_flags(sp)

    sp = add("baseline", cmd_baseline, "random or statistics-driven baseline instances")
    sp.add_argument("--kind", choices=("random", "bowly"), default="random")
    gen_flags(sp)

    sp = add("stats", cmd_stats, "per-instance structural statistics as CSV")
    sp.add_argument("--data", required=True)
    sp.add_argument("--out")
    sp.add_argument("--jobs", type=int, default=1)

    sp = add("similarity", cmd_similarity, "distributional similarity of two sets")
    sp.add_argument("--set-a", required=True)
    sp.add_argument("--set-b", required=True)
    sp.add_argument("--extended", action="store_true", help="add objective and continuous-ratio stats")
    sp.add_argument("--csv", help="per-statistic CSV report")
    sp.add_argument("--out", help="JSON report path")
    sp.add_argument("--jobs", type=int, default=1)

    sp = add("solve", cmd_solve, "solve MPS files with the mini-solver")
    sp.add_argument("--input", required=True, help="MPS file or directory")
    sp.add_argument("--external", help="JSON ExternalSolverConfig for an external solver")
    solver_flags(sp)

    sp = add("hardness", cmd_hardness, "solver time / node statistics vs a reference set")
    sp.add_argument("--data", required=True)
    sp.add_argument("--reference", required=True)
    solver_flags(sp)

    sp = add("downstream", cmd_downstream, "optimal-value prediction with and without augmentation")
    sp.add_argument("--train", required=True)
    sp.add_argument("--test", required=True)
    sp.add_argument("--augment")
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--seed", type=int)
    solver_flags(sp)

    sp = add("export-embeddings", cmd_export_embeddings, "mean-pooled encoder embeddings as CSV")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True)

    sp = add("roundtrip-check", cmd_roundtrip_check, "verify graph and MPS round trips")
    sp.add_argument("--data", required=True)
    return p


def _fail(code, exc) -> int:
    kind = {USAGE: "usage", DATA: "data", NUMERIC: "numeric"}[code]
    print(f"milpgen: error: {exc}", file=sys.stderr)
    rec = {"error": kind, "type": type(exc).__name__, "message": str(exc), "exit_code": code}
    print(json.dumps(rec, sort_keys=True), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = load_config(args.config)
        if getattr(args, "jobs", 1) < 1:
            raise UsageError("--jobs must be >= 1")
        args.func(args, cfg)
    except UsageError as exc:
        return _fail(USAGE, exc)
    except FloatingPointError as exc:
        return _fail(NUMERIC, exc)
    except (ValueError, OSError, KeyError, TypeError) as exc:
        return _fail(DATA, exc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
