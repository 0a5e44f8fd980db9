"""Command-line pipeline: generate -> train -> recognize -> plan -> experiment.

Every subcommand takes explicit seeds, writes new files only (inputs are
never mutated), and stamps outputs with a metadata block (tool version,
seed, effective-config hash) sufficient to reproduce them. Progress goes to
stderr; data goes to files or stdout.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .corpus import (ConfigError, DataFormatError, DimensionError,
                     SyntheticConfig, generate_synthetic, load_dataset,
                     observations_subset, save_dataset)
from .experiment import (emit_report, emit_sweep, ig_variance_sweep,
                         load_report, run_experiment)
from .model import default_config, load_model, save_model, train
from .planners import brute_force_select, greedy_select, lazy_greedy_select, random_select
from .recognition import ObservationError, recognize
from .rng import DATASET_RNG_ID, SAMPLER_RNG_ID, derive_seed

log = logging.getLogger("mhdp_active")


def _config_hash(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _meta(command: str, seed, payload: dict) -> dict:
    return {"tool": "mhdp-active", "version": __version__, "command": command,
            "seed": seed, "config_hash": _config_hash(payload),
            "rng": [DATASET_RNG_ID, SAMPLER_RNG_ID]}


def _merge_config_file(args, parser_defaults: dict) -> dict:
    """File values override defaults; explicit flags override the file."""
    effective = dict(parser_defaults)
    if getattr(args, "config", None):
        with open(args.config) as fh:
            fileconf = json.load(fh)
        for key, val in fileconf.items():
            if key in effective:
                effective[key] = val
    for key in effective:
        cli_val = getattr(args, key, None)
        if cli_val is not None and cli_val != parser_defaults.get(key):
            effective[key] = cli_val
        elif cli_val is not None and key not in effective:
            effective[key] = cli_val
    return effective


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip() != ""]


def _write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _cmd_generate(args) -> int:
    defaults = {"pure": 14, "mixed": 7, "per_class": 3, "modalities": 20,
                "tokens": 20, "dim": 10}
    eff = _merge_config_file(args, defaults)
    cfg = SyntheticConfig(num_pure=eff["pure"], num_mixed=eff["mixed"],
                          objects_per_class=eff["per_class"],
                          num_modalities=eff["modalities"],
                          dimension=eff["dim"],
                          tokens_per_modality=eff["tokens"], seed=args.seed)
    ds = generate_synthetic(cfg)
    ds.meta.update(_meta("generate", args.seed, eff))
    save_dataset(ds, args.out)
    log.info("wrote %s (%d objects, %d modalities)", args.out,
             len(ds.objects), len(ds.modalities))
    return 0


def _cmd_train(args) -> int:
    defaults = {"sweeps": 200, "lam": 1.0, "gamma": 1.0,
                "recog_sweeps": 50, "recog_burnin": 10}
    eff = _merge_config_file(args, defaults)
    ds = load_dataset(args.data)
    config = default_config(ds, lam=eff["lam"], gamma=eff["gamma"],
                            train_sweeps=eff["sweeps"],
                            recog_sweeps=eff["recog_sweeps"],
                            recog_burnin=eff["recog_burnin"])
    model = train(ds, config, seed=args.seed)
    model.meta.update(_meta("train", args.seed, eff))
    save_model(model, args.out)
    log.info("wrote %s (%d topics)", args.out, model.num_topics)
    return 0


def _pick_object(dataset, object_id):
    if object_id is None:
        return dataset.objects[0]
    for obj in dataset.objects:
        if obj.object_id == object_id:
            return obj
    raise DataFormatError(f"object {object_id} not found")


def _cmd_recognize(args) -> int:
    model = load_model(args.model)
    ds = load_dataset(args.object)
    obj = _pick_object(ds, args.object_id)
    mids = _int_list(args.modalities) if args.modalities else sorted(obj.observations)
    obs = observations_subset(obj, mids)
    state = recognize(model, obs, args.seed)
    doc = {"meta": _meta("recognize", args.seed,
                         {"modalities": mids, "object_id": obj.object_id}),
           "object_id": obj.object_id,
           "observed": mids,
           "category_posterior": [float(p) for p in state.category_posterior],
           "novel_mass": float(state.category_posterior[-1]),
           "argmax_category": int(np.argmax(state.category_posterior))}
    if args.out:
        _write_json(args.out, doc)
        log.info("wrote %s", args.out)
    else:
        json.dump(doc, sys.stdout, sort_keys=True, indent=1)
        sys.stdout.write("\n")
    return 0


def _cmd_plan(args) -> int:
    model = load_model(args.model)
    ds = load_dataset(args.object)
    obj = _pick_object(ds, args.object_id)
    observed = _int_list(args.observed) if args.observed else []
    policy = args.policy
    if policy == "greedy":
        plan, stats = greedy_select(model, obj.observations, observed,
                                    args.budget, args.mc, args.seed)
    elif policy == "lazy":
        plan, stats = lazy_greedy_select(model, obj.observations, observed,
                                         args.budget, args.mc, args.seed)
    elif policy == "random":
        plan, stats = random_select(model, obj.observations, observed,
                                    args.budget, args.seed)
    elif policy == "brute":
        obs = {m: obj.observations[m] for m in observed}
        plan, stats = brute_force_select(model, obs, args.budget)
    else:
        raise ConfigError(f"unknown policy {policy!r}")
    log.info("planned %d steps with %d IG evaluations (%.2fs)",
             len(plan.steps), stats.ig_evaluations, stats.wall_time)
    doc = {
        "meta": _meta("plan", args.seed,
                      {"policy": policy, "budget": args.budget, "mc": args.mc,
                       "observed": observed, "object_id": obj.object_id}),
        "object_id": obj.object_id,
        "policy": policy,
        "initial_observed": list(plan.initial_observed),
        "budget": plan.budget,
        "steps": [
            {"modality": mid,
             **({"ig": est.value, "std_error": est.std_error,
                 "mc_samples": est.mc_samples} if est is not None else {})}
            for mid, est in plan.steps
        ],
        "stats": {"ig_evaluations": stats.ig_evaluations,
                  "re_evaluations": stats.re_evaluations},
    }
    _write_json(args.out, doc)
    log.info("wrote %s", args.out)
    return 0


def _cmd_experiment(args) -> int:
    model = load_model(args.model)
    ds = load_dataset(args.data)
    policies = [p.strip() for p in args.policies.split(",") if p.strip()]
    seeds = [derive_seed(args.seed, 7000 + i) % (2 ** 31) for i in range(args.seeds)]
    observed = _int_list(args.observed) if args.observed else None
    report = run_experiment(ds, model, policies, args.budget, args.mc, seeds,
                            initial_observed=observed, jobs=args.jobs)
    report.metadata.update(_meta("experiment", args.seed,
                                 {"policies": policies, "budget": args.budget,
                                  "mc": args.mc, "seeds": args.seeds,
                                  "observed": observed}))
    formats = tuple(f.strip() for f in args.format.split(","))
    paths = emit_report(report, args.out, formats=formats)
    for policy in policies:
        mean, sd = report.eval_stats(policy)
        log.info("%s: mean IG evaluations %.1f (SD %.1f)", policy, mean, sd)
    log.info("wrote %s", ", ".join(paths))
    return 0


def _cmd_sweep(args) -> int:
    model = load_model(args.model)
    ds = load_dataset(args.object)
    obj = _pick_object(ds, args.object_id)
    observed = _int_list(args.observed) if args.observed else [
        min(ms.modality_id for ms in model.modalities)]
    obs = {m: obj.observations[m] for m in observed}
    rows = ig_variance_sweep(model, obs, args.modality,
                             _int_list(args.counts), args.reps, args.seed)
    emit_sweep(rows, args.out)
    meta_path = args.out + ".meta.json"
    _write_json(meta_path, _meta("sweep", args.seed,
                                 {"modality": args.modality,
                                  "counts": _int_list(args.counts),
                                  "reps": args.reps, "observed": observed,
                                  "object_id": obj.object_id}))
    log.info("wrote %s and %s", args.out, meta_path)
    return 0


def _cmd_report(args) -> int:
    report = load_report(args.input)
    paths = emit_report(report, args.out, formats=("csv",))
    log.info("wrote %s", ", ".join(paths))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mhdp-active",
        description="Multimodal HDP categorization and active perception")
    parser.add_argument("--verbose", "-v", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="draw a synthetic dataset")
    p.add_argument("--pure", type=int, default=14)
    p.add_argument("--mixed", type=int, default=7)
    p.add_argument("--per-class", dest="per_class", type=int, default=3)
    p.add_argument("--modalities", type=int, default=20)
    p.add_argument("--tokens", type=int, default=20)
    p.add_argument("--dim", type=int, default=10)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("train", help="train a model on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--sweeps", type=int, default=200)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--recog-sweeps", dest="recog_sweeps", type=int, default=50)
    p.add_argument("--recog-burnin", dest="recog_burnin", type=int, default=10)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("recognize", help="category posterior for an object")
    p.add_argument("--model", required=True)
    p.add_argument("--object", required=True, help="dataset file")
    p.add_argument("--object-id", dest="object_id", type=int, default=None)
    p.add_argument("--modalities", default=None, help="comma list, default all")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_recognize)

    p = sub.add_parser("plan", help="select an action sequence for an object")
    p.add_argument("--model", required=True)
    p.add_argument("--object", required=True)
    p.add_argument("--object-id", dest="object_id", type=int, default=None)
    p.add_argument("--observed", default="", help="comma list of observed modalities")
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--policy", choices=("greedy", "lazy", "random", "brute"),
                   default="greedy")
    p.add_argument("--mc", type=int, default=5000)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_plan)

    p = sub.add_parser("experiment", help="KL-decay curves for policies")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--policies", default="greedy,lazy,random")
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--mc", type=int, default=5000)
    p.add_argument("--seeds", type=int, default=5, help="number of experiment seeds")
    p.add_argument("--seed", type=int, default=0, help="base seed")
    p.add_argument("--observed", default="", help="initially observed modalities")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.add_argument("--format", default="csv,json")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("sweep", help="IG estimator variance vs sample count")
    p.add_argument("--model", required=True)
    p.add_argument("--object", required=True)
    p.add_argument("--object-id", dest="object_id", type=int, default=None)
    p.add_argument("--modality", type=int, required=True)
    p.add_argument("--observed", default="")
    p.add_argument("--counts", default="250,500,1000,2000,4000")
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("report", help="re-emit CSVs from a saved report")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(stream=sys.stderr, level=level,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, DataFormatError, DimensionError, ObservationError,
            ValueError, KeyError, OSError) as exc:
        log.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
