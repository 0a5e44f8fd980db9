"""Recognition-distance metric, the synthetic experiment harness, and reports.

The harness rolls each policy forward on every object, recomputing the
recognition state after each revealed modality and measuring KL divergence
to the final state (all modalities observed). One canonical recognition
seed per (object, experiment seed) makes the final state and every step
state share the same chain whenever the conditioning set matches, so the
curve ends at exactly zero and step 0 is identical across policies.
"""
from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .corpus import Dataset, DimensionError
from .model import TrainedModel
from .planners import greedy_select, lazy_greedy_select, random_select
from .recognition import recognize
from .rng import derive_seed

KL_EPS = 1e-10

_POLICY_CODE = {"greedy": 1, "lazy": 2, "random": 3}


def kl_divergence(p, q, *, eps: float = KL_EPS) -> float:
    """KL(p || q) with epsilon smoothing and renormalization of both sides.

    Exactly zero when the inputs already match to 1e-12.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise DimensionError(f"length mismatch: {p.shape} vs {q.shape}")
    for name, v in (("p", p), ("q", q)):
        if abs(v.sum() - 1.0) > 1e-6 or np.any(v < 0):
            raise ValueError(f"{name} is not a probability vector")
    if np.allclose(p, q, rtol=0.0, atol=1e-12):
        return 0.0
    ps = p + eps
    ps /= ps.sum()
    qs = q + eps
    qs /= qs.sum()
    return float(np.sum(ps * np.log(ps / qs)))


@dataclass(frozen=True)
class ExperimentRow:
    object_id: int
    policy: str
    step: int
    kl_to_final: float
    seed: int


@dataclass(frozen=True)
class PlannerRecord:
    object_id: int
    policy: str
    seed: int
    ig_evaluations: int
    re_evaluations: int


@dataclass
class ExperimentReport:
    rows: list[ExperimentRow]
    planner_records: list[PlannerRecord]
    metadata: dict = field(default_factory=dict)

    def policies(self) -> list[str]:
        seen = []
        for r in self.rows:
            if r.policy not in seen:
                seen.append(r.policy)
        return seen

    def curve(self, policy: str) -> tuple[np.ndarray, np.ndarray]:
        """(mean, sd) of kl_to_final by step, over objects and seeds."""
        steps = sorted({r.step for r in self.rows if r.policy == policy})
        mean = np.empty(len(steps))
        sd = np.empty(len(steps))
        for i, s in enumerate(steps):
            vals = np.array([r.kl_to_final for r in self.rows
                             if r.policy == policy and r.step == s])
            mean[i] = vals.mean()
            sd[i] = vals.std(ddof=1) if len(vals) > 1 else 0.0
        return mean, sd

    def eval_stats(self, policy: str) -> tuple[float, float]:
        vals = np.array([pr.ig_evaluations for pr in self.planner_records
                         if pr.policy == policy], dtype=float)
        if len(vals) == 0:
            return 0.0, 0.0
        return float(vals.mean()), float(vals.std(ddof=1) if len(vals) > 1 else 0.0)


def _run_unit(args):
    (model, record_obs, object_id, exp_seed, policies, budget, mc_samples,
     initial_observed, allow_new) = args
    recog_seed = derive_seed(exp_seed, 101, object_id)
    full_obs = {m: record_obs[m] for m in sorted(record_obs)}
    final = recognize(model, full_obs, recog_seed, allow_new_topics=allow_new)
    base_obs = {m: record_obs[m] for m in initial_observed}
    state0 = recognize(model, base_obs, recog_seed, allow_new_topics=allow_new)
    kl0 = kl_divergence(final.category_posterior, state0.category_posterior)

    rows: list[ExperimentRow] = []
    planner_records: list[PlannerRecord] = []
    for policy in policies:
        pseed = derive_seed(exp_seed, 202, object_id, _POLICY_CODE[policy])
        if policy == "greedy":
            plan, stats = greedy_select(model, record_obs, initial_observed,
                                        budget, mc_samples, pseed,
                                        allow_new_topics=allow_new)
        elif policy == "lazy":
            plan, stats = lazy_greedy_select(model, record_obs, initial_observed,
                                             budget, mc_samples, pseed,
                                             allow_new_topics=allow_new)
        elif policy == "random":
            plan, stats = random_select(model, record_obs, initial_observed,
                                        budget, pseed)
        else:
            raise ValueError(f"unknown policy {policy!r}")
        rows.append(ExperimentRow(object_id, policy, 0, kl0, exp_seed))
        obs = dict(base_obs)
        for step, (mid, _est) in enumerate(plan.steps, start=1):
            obs[mid] = record_obs[mid]
            st = recognize(model, obs, recog_seed, allow_new_topics=allow_new)
            rows.append(ExperimentRow(
                object_id, policy, step,
                kl_divergence(final.category_posterior, st.category_posterior),
                exp_seed))
        planner_records.append(PlannerRecord(object_id, policy, exp_seed,
                                             stats.ig_evaluations,
                                             stats.re_evaluations))
    return rows, planner_records


def run_experiment(dataset: Dataset, model: TrainedModel,
                   policies: Sequence[str], budget: int, mc_samples: int,
                   seeds: Sequence[int], *,
                   initial_observed: Sequence[int] | None = None,
                   allow_new_topics: bool = True,
                   jobs: int = 1) -> ExperimentReport:
    """Roll every policy over every (object, seed); aggregate KL-decay curves.

    Results are bit-identical for any ``jobs`` because every unit derives
    its seeds from (experiment seed, object id) alone.
    """
    for p in policies:
        if p not in _POLICY_CODE:
            raise ValueError(f"unknown policy {p!r}; pick from "
                             f"{sorted(_POLICY_CODE)}")
    model_ids = [ms.modality_id for ms in model.modalities]
    if initial_observed is None:
        initial_observed = [min(model_ids)]
    initial_observed = sorted(initial_observed)
    units = []
    for exp_seed in seeds:
        for obj in dataset.objects:
            units.append((model, dict(obj.observations), obj.object_id,
                          int(exp_seed), list(policies), budget, mc_samples,
                          tuple(initial_observed), allow_new_topics))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_unit, units, chunksize=1))
    else:
        results = [_run_unit(u) for u in units]
    rows: list[ExperimentRow] = []
    planner_records: list[PlannerRecord] = []
    for r, pr in results:
        rows.extend(r)
        planner_records.extend(pr)
    meta = {"policies": list(policies), "budget": budget,
            "mc_samples": mc_samples, "seeds": [int(s) for s in seeds],
            "initial_observed": list(initial_observed),
            "allow_new_topics": allow_new_topics,
            "num_objects": len(dataset.objects)}
    return ExperimentReport(rows=rows, planner_records=planner_records,
                            metadata=meta)


@dataclass(frozen=True)
class SweepRow:
    mc_samples: int
    mean: float
    sd: float


def ig_variance_sweep(model: TrainedModel, observations: Mapping[int, np.ndarray],
                      modality_id: int, sample_counts: Sequence[int],
                      replicates: int, seed: int, *,
                      allow_new_topics: bool = True) -> list[SweepRow]:
    """Replicate the IG estimate at several sample counts; report mean/SD."""
    from .planners import estimate_ig_mc

    out = []
    for K in sample_counts:
        vals = np.array([
            estimate_ig_mc(model, observations, modality_id, int(K),
                           derive_seed(seed, int(K), rep),
                           allow_new_topics=allow_new_topics).value
            for rep in range(replicates)
        ])
        out.append(SweepRow(int(K), float(vals.mean()),
                            float(vals.std(ddof=1) if replicates > 1 else 0.0)))
    return out


def _fmt(x: float) -> str:
    return repr(float(x))


def emit_report(report: ExperimentReport, out_dir, formats=("csv", "json")):
    """Write detail/summary/stats CSVs (and optionally the full JSON).

    Emission is deterministic: fixed column order, repr-formatted floats,
    sorted keys. Returns the written paths.
    """
    import os

    os.makedirs(out_dir, exist_ok=True)
    written = []
    if "csv" in formats:
        detail = os.path.join(out_dir, "detail.csv")
        with open(detail, "w") as fh:
            fh.write("object_id,policy,step,kl_to_final,seed\n")
            for r in report.rows:
                fh.write(f"{r.object_id},{r.policy},{r.step},"
                         f"{_fmt(r.kl_to_final)},{r.seed}\n")
        written.append(detail)

        summary = os.path.join(out_dir, "summary.csv")
        with open(summary, "w") as fh:
            fh.write("policy,step,mean_kl,sd_kl\n")
            for policy in report.policies():
                mean, sd = report.curve(policy)
                for step, (m, s) in enumerate(zip(mean, sd)):
                    fh.write(f"{policy},{step},{_fmt(m)},{_fmt(s)}\n")
        written.append(summary)

        stats = os.path.join(out_dir, "stats.csv")
        with open(stats, "w") as fh:
            fh.write("policy,mean_evals,sd_evals\n")
            for policy in report.policies():
                m, s = report.eval_stats(policy)
                fh.write(f"{policy},{_fmt(m)},{_fmt(s)}\n")
        written.append(stats)
    if "json" in formats:
        path = os.path.join(out_dir, "report.json")
        doc = {
            "metadata": report.metadata,
            "rows": [{"object_id": r.object_id, "policy": r.policy,
                      "step": r.step, "kl_to_final": r.kl_to_final,
                      "seed": r.seed} for r in report.rows],
            "planner_records": [
                {"object_id": pr.object_id, "policy": pr.policy,
                 "seed": pr.seed, "ig_evaluations": pr.ig_evaluations,
                 "re_evaluations": pr.re_evaluations}
                for pr in report.planner_records],
        }
        with open(path, "w") as fh:
            json.dump(doc, fh, sort_keys=True, indent=1)
            fh.write("\n")
        written.append(path)
    return written


def load_report(path) -> ExperimentReport:
    with open(path) as fh:
        doc = json.load(fh)
    rows = [ExperimentRow(int(r["object_id"]), r["policy"], int(r["step"]),
                          float(r["kl_to_final"]), int(r["seed"]))
            for r in doc["rows"]]
    planner_records = [PlannerRecord(int(p["object_id"]), p["policy"],
                                     int(p["seed"]), int(p["ig_evaluations"]),
                                     int(p["re_evaluations"]))
                       for p in doc["planner_records"]]
    return ExperimentReport(rows=rows, planner_records=planner_records,
                            metadata=doc.get("metadata", {}))


def emit_sweep(rows: Sequence[SweepRow], path):
    with open(path, "w") as fh:
        fh.write("mc_samples,mean,sd\n")
        for r in rows:
            fh.write(f"{r.mc_samples},{_fmt(r.mean)},{_fmt(r.sd)}\n")
    return path
