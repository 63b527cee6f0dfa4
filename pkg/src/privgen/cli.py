"""Command-line experiment runner.

Subcommands: ``bounds``, ``verify``, ``train``, ``sweep``,
``data gen | inspect``.  Exit codes: 0 ok, 1 verification failure,
2 config error, 3 data error.  Configs are JSON, schema-validated with
unknown keys rejected; every output file embeds a version string, a config
hash, and the seed for provenance.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys

import numpy as np
import jsonschema

from . import __version__, data as data_mod, metrics, models, privacy, trainers
from .numerics import RngStream
from .verify import run_suite

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_CONFIG = 2
EXIT_DATA = 3


class ConfigError(ValueError):
    pass


PGD_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "gamma": {"type": "number", "minimum": 0},
        "attack_steps": {"type": "integer", "minimum": 0},
        "attack_step_size": {"type": ["number", "null"]},
        "random_start": {"type": "boolean"},
    },
    "required": ["gamma"],
}

DATASET_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "type": {"enum": ["csv", "adult", "synthetic"]},
        "path": {"type": "string"},
        "split": {"type": "array", "items": {"type": "number"},
                  "minItems": 3, "maxItems": 3},
        "split_seed": {"type": "integer"},
        "standardize": {"type": "boolean"},
        # synthetic mixture parameters
        "q": {"type": "array", "items": {"type": "number"}},
        "n": {"type": "integer", "minimum": 1},
        "dim": {"type": "integer", "minimum": 1},
        "noise_std": {"type": "number", "minimum": 0},
        "center_scale": {"type": "number"},
        "seed": {"type": "integer"},
    },
    "required": ["type"],
}

TRAIN_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "algorithm": {"enum": list(trainers.ALGORITHMS)},
        "lr": {"type": "number", "exclusiveMinimum": 0},
        "steps": {"type": "integer", "minimum": 1},
        "batch_size": {"type": "integer", "minimum": 1},
        "pbar": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "clip": {"type": "number", "exclusiveMinimum": 0},
        "sigma": {"type": "number", "exclusiveMinimum": 0},
        "sigma_n": {"type": "number", "minimum": 0},
        "weight_decay": {"type": "number", "minimum": 0},
        "delta": {"type": "number"},
        "pgd": PGD_SCHEMA,
        "arch": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["logreg", "mlp"]},
                "hidden": {"type": "integer", "minimum": 1},
            },
        },
        "dataset": DATASET_SCHEMA,
        "seeds": {"type": "array", "items": {"type": "integer"},
                  "minItems": 1},
        "out_dir": {"type": "string"},
    },
    "required": ["algorithm", "lr", "steps", "dataset", "seeds", "out_dir"],
}

SWEEP_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        **{k: v for k, v in TRAIN_SCHEMA["properties"].items()},
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "param": {"enum": ["sigma", "sigma_n", "algorithm"]},
                "values": {"type": "array", "minItems": 1},
            },
            "required": ["param", "values"],
        },
    },
    "required": ["algorithm", "lr", "steps", "dataset", "seeds", "out_dir",
                 "grid"],
}


def _load_config(path, schema):
    try:
        with open(path) as f:
            cfg = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"{path}: {e}") from None
    try:
        jsonschema.validate(cfg, schema)
    except jsonschema.ValidationError as e:
        loc = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"{path}: at {loc}: {e.message}") from None
    return cfg


def _config_hash(cfg):
    return hashlib.sha256(
        json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:16]


def _provenance(cfg, seed=None):
    return {"version": f"privgen-{__version__}",
            "config_hash": _config_hash(cfg), "seed": seed}


def _resolve_dataset(spec):
    kind = spec["type"]
    if kind in ("csv", "adult"):
        path = spec.get("path")
        if not path or not os.path.exists(path):
            raise FileNotFoundError(f"dataset file not found: {path}")
        if kind == "adult":
            ds, meta = data_mod.load_adult(path)
        else:
            ds = data_mod.load_identity_csv(path)
            meta = {}
    else:
        q = spec.get("q", [0.75, 0.25])
        dim = spec.get("dim", 10)
        scale = spec.get("center_scale", 1.0)
        rng = RngStream(spec.get("seed", 0))
        m = len(q)
        means = scale * rng.normal((m, 2, dim))
        ds = data_mod.synth_group_mixture(q, means, spec.get("n", 2000),
                                          spec.get("noise_std", 1.0), rng)
        meta = {"synthetic": True}
    fractions = spec.get("split")
    if fractions:
        rng = RngStream(spec.get("split_seed", 0))
        train, val, test = data_mod.split(ds, fractions, rng)
    else:
        train, val, test = ds, None, ds
    if spec.get("standardize", False):
        others = [d for d in (val, test) if d is not None]
        out = data_mod.standardize(train, *others)
        train = out[0]
        rest = list(out[1:-1])
        meta["standardization"] = out[-1]
        if val is not None:
            val = rest.pop(0)
        if rest:
            test = rest.pop(0)
    return train, val, test, meta


def _train_config(cfg, seed):
    pgd = None
    if "pgd" in cfg:
        p = cfg["pgd"]
        pgd = trainers.PgdConfig(p["gamma"], p.get("attack_steps", 10),
                                 p.get("attack_step_size"),
                                 p.get("random_start", False))
    return trainers.TrainConfig(
        algorithm=cfg["algorithm"], lr=cfg["lr"], steps=cfg["steps"],
        batch_size=cfg.get("batch_size"), pbar=cfg.get("pbar"),
        clip=cfg.get("clip"), sigma=cfg.get("sigma"),
        sigma_n=cfg.get("sigma_n", 0.0),
        weight_decay=cfg.get("weight_decay", 0.0),
        pgd=pgd, delta=cfg.get("delta"), seed=seed)


def _init_for(cfg, ds):
    arch_spec = cfg.get("arch", {"kind": "logreg"})
    classes = ds.num_classes
    if arch_spec.get("kind", "logreg") == "mlp":
        arch = models.mlp(ds.d, arch_spec.get("hidden", 8), classes)
    else:
        arch = models.logreg(ds.d, classes)
    return models.init_params(arch)


def _run_one(cfg, seed, train_ds, test_ds):
    tc = _train_config(cfg, seed)
    rng = RngStream(seed)
    init = _init_for(cfg, train_ds)
    return trainers.train(train_ds, tc, rng, test_data=test_ds, init=init)


def cmd_bounds(args):
    eps_grid = np.arange(args.eps_start, args.eps_stop + 1e-12, args.eps_step)
    deltas = [float(d) for d in args.delta]
    lines = ["eps,delta,loose,cmi,tight"]
    for eps in eps_grid:
        for d in deltas:
            b = privacy.DpBudget(float(eps), d)
            tight = privacy.tv_from_dp(b)
            loose = privacy.tv_from_dp_loose(b)
            cmi = privacy.dg_bound_cmi(float(eps))
            assert tight <= min(loose, cmi) + 1e-12
            lines.append(f"{eps:.10g},{d:.10g},{loose:.12g},{cmi:.12g},"
                         f"{tight:.12g}")
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "bounds.csv")
    arg_doc = {k: v for k, v in vars(args).items()
               if k not in ("fn", "command")}
    header = {"version": f"privgen-{__version__}",
              "config_hash": _config_hash(arg_doc), "seed": None}
    with open(path, "w") as f:
        f.write("# " + json.dumps(header) + "\n")
        f.write("\n".join(lines) + "\n")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_verify(args):
    claims = run_suite(seed=args.seed)
    report = {"provenance": _provenance({"seed": args.seed}, args.seed),
              "claims": claims}
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "verification.json")
        with open(path, "w") as f:
            json.dump(report, f, indent=2)
    for c in claims:
        status = "PASS" if c["pass"] else "FAIL"
        print(f"{status} {c['claim']} (lhs={c['lhs']:.6g} rhs={c['rhs']:.6g})")
    failing = [c for c in claims if not c["pass"]]
    if failing:
        print(f"FAILED: {failing[0]['claim']}", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def cmd_train(args):
    cfg = _load_config(args.config, TRAIN_SCHEMA)
    train_ds, _, test_ds, meta = _resolve_dataset(cfg["dataset"])
    out_dir = cfg["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    for seed in cfg["seeds"]:
        p, record = _run_one(cfg, seed, train_ds, test_ds)
        doc = json.loads(record.to_json())
        doc["provenance"] = _provenance(cfg, seed)
        doc["dataset_meta"] = {k: v for k, v in meta.items()
                               if k != "standardization"}
        base = os.path.join(out_dir, f"run_seed{seed}")
        with open(base + ".json", "w") as f:
            json.dump(doc, f, indent=2)
        with open(base + "_trajectory.csv", "w") as f:
            f.write("# " + json.dumps(_provenance(cfg, seed)) + "\n")
            f.write(record.trajectory_csv())
        final = record.trajectory[-1] if record.trajectory else {}
        eps = (record.privacy or {}).get("eps")
        print(f"seed={seed} test_acc={final.get('test_acc')} "
              f"eps={eps}")
    return EXIT_OK


def _aggregate(rows):
    arr = np.array([r for r in rows if r is not None], dtype=np.float64)
    if arr.size == 0:
        return None, None
    se = arr.std(ddof=1) / math.sqrt(arr.size) if arr.size > 1 else 0.0
    return float(arr.mean()), float(se)


def cmd_sweep(args):
    cfg = _load_config(args.config, SWEEP_SCHEMA)
    train_ds, _, test_ds, _ = _resolve_dataset(cfg["dataset"])
    grid = cfg["grid"]
    out_dir = cfg["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    lines = ["param,value,metric,mean,se"]
    for value in grid["values"]:
        cell = dict(cfg)
        cell.pop("grid")
        cell[grid["param"]] = value
        per_metric = {}
        for seed in cfg["seeds"]:
            _, record = _run_one(cell, seed, train_ds, test_ds)
            final = record.trajectory[-1]
            interest = {
                "train_acc": final.get("train_acc"),
                "test_acc": final.get("test_acc"),
                "train_worst_group_acc": final.get("train_worst_group_acc"),
                "test_worst_group_acc": final.get("test_worst_group_acc"),
                "disparity": final.get("test_disparity"),
                "wggap": None,
                "robust_gap": None,
            }
            twa = final.get("train_worst_group_acc")
            vwa = final.get("test_worst_group_acc")
            if twa is not None and vwa is not None:
                interest["wggap"] = twa - vwa
            tra = final.get("train_robust_acc")
            tea = final.get("test_robust_acc")
            if tra is not None and tea is not None:
                interest["robust_gap"] = tra - tea
            if record.privacy:
                interest["eps"] = record.privacy["eps"]
            for k, v in interest.items():
                per_metric.setdefault(k, []).append(v)
        for metric, vals in per_metric.items():
            mean, se = _aggregate(vals)
            if mean is None:
                continue
            lines.append(f"{grid['param']},{value},{metric},{mean:.10g},"
                         f"{se:.10g}")
    path = os.path.join(out_dir, "sweep.csv")
    with open(path, "w") as f:
        f.write("# " + json.dumps(_provenance(cfg)) + "\n")
        f.write("\n".join(lines) + "\n")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_data_gen(args):
    spec = _load_config(args.config, DATASET_SCHEMA)
    if spec["type"] != "synthetic":
        raise ConfigError("data gen requires a synthetic dataset spec")
    train_ds, _, _, meta = _resolve_dataset({**spec, "split": None})
    data_mod.write_csv(train_ds, args.out)
    meta_doc = {**meta, "provenance": _provenance(spec, spec.get("seed", 0)),
                "group_probs": list(map(float, train_ds.group_probs))}
    data_mod.write_metadata(meta_doc, args.out + ".meta.json")
    print(f"wrote {args.out} ({train_ds.n} rows)")
    return EXIT_OK


def cmd_data_inspect(args):
    ds = data_mod.load_identity_csv(args.path)
    counts = data_mod.group_counts(ds)
    print(json.dumps({
        "n": ds.n, "dim": ds.d, "classes": ds.num_classes,
        "group_counts": counts.tolist(),
        "group_fractions": (counts / ds.n).round(6).tolist(),
    }, indent=2))
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="privgen")
    sub = ap.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bounds", help="emit the DG-bound curves as CSV")
    b.add_argument("--eps-start", type=float, default=0.02)
    b.add_argument("--eps-stop", type=float, default=5.0)
    b.add_argument("--eps-step", type=float, default=0.02)
    b.add_argument("--delta", nargs="*", type=float, default=[0.0])
    b.add_argument("--out", required=True)
    b.set_defaults(fn=cmd_bounds)

    v = sub.add_parser("verify", help="run the theory-verification suite")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out", default=None)
    v.set_defaults(fn=cmd_verify)

    t = sub.add_parser("train", help="run a training config")
    t.add_argument("config")
    t.set_defaults(fn=cmd_train)

    s = sub.add_parser("sweep", help="run a grid sweep config")
    s.add_argument("config")
    s.set_defaults(fn=cmd_sweep)

    d = sub.add_parser("data", help="dataset utilities")
    dsub = d.add_subparsers(dest="data_command", required=True)
    g = dsub.add_parser("gen", help="generate a synthetic mixture CSV")
    g.add_argument("config")
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_data_gen)
    i = dsub.add_parser("inspect", help="summarize a dataset CSV")
    i.add_argument("path")
    i.set_defaults(fn=cmd_data_inspect)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, data_mod.SchemaError, data_mod.ParseError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
