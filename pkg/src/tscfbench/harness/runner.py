"""Benchmark orchestration: sampling, timeouts, metric evaluation.

For every (dataset, model, method) triple the runner generates
counterfactuals over the (possibly capped) test instances, re-verifies
validity against the model, evaluates the metric suite, and aggregates.
Instance-level generation can fan out over worker processes; records are
keyed by instance index so collection order never matters.
"""

from __future__ import annotations

import itertools
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..cf import (
    STATUS_TIMED_OUT,
    CFRequest,
    ComteConfig,
    Counterfactual,
    InvocationRecord,
    MethodNotApplicable,
    SetsConfig,
    ShapeletSet,
    TsevoConfig,
    WachterConfig,
    comte,
    mad_from_train,
    native_guide,
    nun_cf,
    sets,
    sets_mine,
    tsevo,
    wachter,
)
from ..classifier import ClassifierModel, TrainConfig, predict, predict_labels, train
from ..dataset import (
    Dataset,
    TimeSeries,
    load_multivariate,
    load_univariate_tsv,
    stack_values,
    stratified_sample,
)
from ..metrics import (
    ConsistencyResult,
    MetricReport,
    PlausibilityConfig,
    PlausibilityIndex,
    SparsityConfig,
    consistency,
    evaluate_counterfactual,
)
from .config import DatasetSpec, ExperimentConfig, MethodSpec, ModelSpec

PAIR_OK = "ok"
PAIR_ABORTED = "aborted"
PAIR_SKIPPED = "not_applicable"


def select_target(model: ClassifierModel, x: TimeSeries) -> int:
    """Class with the second-highest probability (lowest index on ties)."""
    probs = predict(model, x).probs.copy()
    probs[int(probs.argmax())] = -np.inf
    return int(probs.argmax())


@dataclass
class MethodContext:
    """Per (dataset, model) assets shared by all generator invocations."""

    dataset: Dataset
    model: ClassifierModel
    train_values: np.ndarray
    train_pred: np.ndarray
    _mad: np.ndarray | None = None
    _shapelets: dict[tuple, ShapeletSet] = field(default_factory=dict)
    mine_seed: int = 0

    @property
    def mad(self) -> np.ndarray:
        if self._mad is None:
            self._mad = mad_from_train(self.dataset.train)
        return self._mad

    def shapelets(self, cfg: dict) -> ShapeletSet:
        key = tuple(sorted(cfg.items()))
        if key not in self._shapelets:
            scfg = SetsConfig(
                tau_quantile=cfg.get("tau_quantile", 0.05),
                per_class=cfg.get("per_class", 5),
                length_fracs=tuple(cfg.get("length_fracs", (0.1, 0.2, 0.3))),
                mine_budget=cfg.get("mine_budget", 5.0),
            )
            self._shapelets[key] = sets_mine(
                self.dataset.train,
                self.model,
                budget=scfg.mine_budget,
                per_class=scfg.per_class,
                cfg=scfg,
                seed=self.mine_seed,
            )
        return self._shapelets[key]


def _gen_nun_cf(request, ctx, cfg, seed):
    return nun_cf(request, ctx.dataset.train, ctx.model, train_pred=ctx.train_pred)


def _gen_native_guide(request, ctx, cfg, seed):
    return native_guide(
        request,
        ctx.dataset.train,
        ctx.model,
        train_pred=ctx.train_pred,
        length_schedule=cfg.get("length_schedule", "linear"),
        growth=cfg.get("growth", 1.5),
    )


def _gen_comte(request, ctx, cfg, seed):
    keys = ("lam", "sigma", "tau", "restarts", "max_steps")
    ccfg = ComteConfig(**{k: cfg[k] for k in keys if k in cfg})
    return comte(
        request, ctx.dataset.train, ctx.model, cfg=ccfg, seed=seed,
        train_pred=ctx.train_pred,
    )


def _gen_sets(request, ctx, cfg, seed):
    return sets(
        request, ctx.shapelets(cfg), ctx.dataset.train, ctx.model,
        train_pred=ctx.train_pred,
    )


def _gen_wachter(request, ctx, cfg, seed):
    keys = ("lambda_init", "lambda_growth", "growth_every", "max_iters", "step_size")
    wcfg = WachterConfig(mad=ctx.mad, **{k: cfg[k] for k in keys if k in cfg})
    return wachter(request, ctx.model, wcfg)


def _gen_tsevo(request, ctx, cfg, seed):
    keys = (
        "population", "generations", "prob_opposing", "prob_frequency",
        "prob_gaussian", "noise_scale",
    )
    tcfg = TsevoConfig(**{k: cfg[k] for k in keys if k in cfg})
    return tsevo(
        request, ctx.model, ctx.dataset.train, tcfg, seed=seed,
        train_pred=ctx.train_pred,
    )


GENERATORS = {
    "nun_cf": _gen_nun_cf,
    "native_guide": _gen_native_guide,
    "comte": _gen_comte,
    "sets": _gen_sets,
    "wachter": _gen_wachter,
    "tsevo": _gen_tsevo,
}


def register_method(name: str, fn) -> None:
    """Plug in an external generator (same signature as the built-ins)."""
    GENERATORS[name] = fn


@dataclass
class InstanceRecord:
    dataset: str
    model: str
    method: str
    index: int
    original_pred: int
    target: int
    status: str
    valid: bool
    report: MetricReport
    invocation: InvocationRecord
    gen_time: float | None = None
    error: str | None = None
    # raw generator output, kept in memory for re-evaluation; not serialized
    _cf: Counterfactual | None = field(default=None, repr=False)


@dataclass
class AggregateRecord:
    dataset: str
    model: str
    method: str
    pair_status: str
    n_attempted: int
    n_valid: int
    validity: float | None
    metric_means: dict[str, float | None]
    metric_stds: dict[str, float | None]


@dataclass
class ConsistencyRecord:
    dataset: str
    model_a: str
    model_b: str
    method: str
    result: ConsistencyResult


@dataclass
class RunResult:
    config: ExperimentConfig
    records: list[InstanceRecord]
    aggregates: list[AggregateRecord]
    consistency: list[ConsistencyRecord]
    pair_status: dict[tuple[str, str, str], str]
    timings: list[tuple[str, str, str, int, float]]
    provenance: dict


VALID_ONLY_METRICS = (
    "l1", "l2", "linf", "l0", "thresh_l0", "sens", "num_seg",
    "dist_all", "dist_class",
)


def _derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def load_dataset(spec: DatasetSpec, base_dir) -> Dataset:
    if spec.format == "univariate":
        return load_univariate_tsv(
            base_dir / spec.train,
            test_path=(base_dir / spec.test) if spec.test else None,
            name=spec.name,
            normalize=spec.normalize,
        )
    return load_multivariate(base_dir / spec.manifest, normalize=spec.normalize)


# worker-process state, installed before the pool forks
_WORKER: dict = {}


def _attempt(args) -> tuple[int, Counterfactual | None, str | None]:
    """Generate one counterfactual; exceptions come back as strings."""
    method_name, method_cfg, index, original_pred, target, seed, timeout_s = args
    ctx: MethodContext = _WORKER["ctx"]
    request = CFRequest(
        instance=ctx.dataset.test[index].series,
        original_pred=original_pred,
        target=target,
        time_budget=timeout_s,
    )
    try:
        cf = GENERATORS[method_name](request, ctx, method_cfg, seed)
        return index, cf, None
    except MethodNotApplicable:
        raise
    except Exception:
        return index, None, traceback.format_exc(limit=5)


def _aggregate(
    ds_name: str, model_tag: str, method: str, pair_status: str,
    records: list[InstanceRecord],
) -> AggregateRecord:
    n = len(records)
    valid_reports = [r.report for r in records if r.valid]
    means: dict[str, float | None] = {}
    stds: dict[str, float | None] = {}
    for metric in VALID_ONLY_METRICS:
        vals = [getattr(r, metric) for r in valid_reports]
        vals = [v for v in vals if v is not None]
        if vals:
            means[metric] = float(np.mean(vals))
            stds[metric] = float(np.std(vals))
        else:
            means[metric] = None
            stds[metric] = None
    return AggregateRecord(
        dataset=ds_name,
        model=model_tag,
        method=method,
        pair_status=pair_status,
        n_attempted=n,
        n_valid=len(valid_reports),
        validity=(len(valid_reports) / n) if n else None,
        metric_means=means,
        metric_stds=stds,
    )


def run_benchmark(cfg: ExperimentConfig) -> RunResult:
    records: list[InstanceRecord] = []
    aggregates: list[AggregateRecord] = []
    consistency_records: list[ConsistencyRecord] = []
    pair_status: dict[tuple[str, str, str], str] = {}
    timings: list[tuple[str, str, str, int, float]] = []
    sparsity_cfg = SparsityConfig(
        tau=cfg.metrics.get("tau", 0.0025),
        tolerance_frac=cfg.metrics.get("tolerance_frac", 0.01),
    )
    plaus_cfg = PlausibilityConfig(k=cfg.metrics.get("k", 5))

    # records per (dataset, model, method) needed again for consistency
    by_pair: dict[tuple[str, str, str], list[InstanceRecord]] = {}

    for di, ds_spec in enumerate(cfg.datasets):
        dataset = load_dataset(ds_spec, cfg.base_dir)
        capped_indices = stratified_sample(
            dataset.test, min(cfg.sample_cap, len(dataset.test)), seed=cfg.global_seed
        )
        models: list[ClassifierModel] = []
        for mi, m_spec in enumerate(cfg.models):
            model = train(
                m_spec.arch,
                dataset,
                TrainConfig(
                    epochs=m_spec.epochs,
                    batch=m_spec.batch,
                    learning_rate=m_spec.learning_rate,
                    seed=m_spec.seed,
                ),
            )
            models.append(model)

        for mi, (m_spec, model) in enumerate(zip(cfg.models, models)):
            train_values = stack_values(dataset.train)
            ctx = MethodContext(
                dataset=dataset,
                model=model,
                train_values=train_values,
                train_pred=predict_labels(model, train_values),
                mine_seed=_derive_seed(cfg.global_seed, di, mi),
            )
            plaus = PlausibilityIndex(model, train_values, plaus_cfg)
            test_values = stack_values(dataset.test)
            test_pred = predict_labels(model, test_values)

            for method_i, m in enumerate(cfg.methods):
                pair_key = (ds_spec.name, m_spec.tag, m.name)
                indices = (
                    capped_indices
                    if m.name in cfg.capped_methods
                    else list(range(len(dataset.test)))
                )
                pair_records, status = _run_pair(
                    cfg, ctx, m, indices, test_pred, di, mi, method_i,
                )
                pair_status[pair_key] = status
                if status == PAIR_SKIPPED:
                    continue
                for rec in pair_records:
                    rec.report = evaluate_counterfactual(
                        dataset.test[rec.index].series,
                        rec._cf,
                        model,
                        plaus=plaus,
                        sparsity=sparsity_cfg,
                    )
                    rec.valid = rec.report.valid
                    if rec.gen_time is not None:
                        timings.append(
                            (ds_spec.name, m_spec.tag, m.name, rec.index, rec.gen_time)
                        )
                records.extend(pair_records)
                by_pair[pair_key] = pair_records
                aggregates.append(
                    _aggregate(ds_spec.name, m_spec.tag, m.name, status, pair_records)
                )

        for (ai, bi) in cfg.consistency_pairs:
            model_a, model_b = models[ai], models[bi]
            tag_a, tag_b = cfg.models[ai].tag, cfg.models[bi].tag
            for m in cfg.methods:
                pair_recs = by_pair.get((ds_spec.name, tag_a, m.name))
                if not pair_recs:
                    continue
                test_sub = [dataset.test[r.index] for r in pair_recs]
                cfs = [r._cf for r in pair_recs]
                consistency_records.append(
                    ConsistencyRecord(
                        dataset=ds_spec.name,
                        model_a=tag_a,
                        model_b=tag_b,
                        method=m.name,
                        result=consistency(cfs, model_a, model_b, test_sub),
                    )
                )

    from .. import __version__

    return RunResult(
        config=cfg,
        records=records,
        aggregates=aggregates,
        consistency=consistency_records,
        pair_status=pair_status,
        timings=timings,
        provenance={"package_version": __version__, "global_seed": cfg.global_seed},
    )


def _run_pair(
    cfg: ExperimentConfig,
    ctx: MethodContext,
    method: MethodSpec,
    indices: list[int],
    test_pred: np.ndarray,
    di: int,
    mi: int,
    method_i: int,
) -> tuple[list[InstanceRecord], str]:
    """Generate CFs for one (dataset, model, method); handles abort logic."""
    if method.name not in GENERATORS:
        raise KeyError(f"unknown method {method.name!r}")
    ds_name = cfg.datasets[di].name
    model_tag = cfg.models[mi].tag

    tasks = []
    for index in indices:
        x = ctx.dataset.test[index].series
        original_pred = int(test_pred[index])
        target = select_target(ctx.model, x)
        seed = _derive_seed(cfg.global_seed, di, mi, method_i, index)
        tasks.append(
            (method.name, method.config, index, original_pred, target, seed,
             cfg.timeout_s)
        )

    pair_records: list[InstanceRecord] = []
    consecutive_timeouts = 0
    aborted = False
    _WORKER["ctx"] = ctx
    pool = (
        ProcessPoolExecutor(max_workers=cfg.workers) if cfg.workers > 1 else None
    )
    try:
        task_iter = iter(tasks)
        while not aborted:
            wave = list(itertools.islice(task_iter, max(1, cfg.workers)))
            if not wave:
                break
            try:
                if pool is None:
                    outcomes = [_attempt(t) for t in wave]
                else:
                    outcomes = list(pool.map(_attempt, wave))
            except MethodNotApplicable:
                return [], PAIR_SKIPPED
            for task, (index, cf, error) in zip(wave, outcomes):
                gen_time = cf.gen_time if cf is not None else None
                timed_out = cf is not None and (
                    cf.status == STATUS_TIMED_OUT or cf.gen_time > cfg.timeout_s
                )
                consecutive_timeouts = consecutive_timeouts + 1 if timed_out else 0
                rec = InstanceRecord(
                    dataset=ds_name,
                    model=model_tag,
                    method=method.name,
                    index=index,
                    original_pred=task[3],
                    target=task[4],
                    status=(cf.status if cf is not None else "error"),
                    valid=False,  # set after metric evaluation
                    report=MetricReport(valid=False),
                    invocation=InvocationRecord(
                        method=method.name, config=method.config, seed=task[5]
                    ),
                    gen_time=gen_time,
                    error=error,
                    _cf=cf,
                )
                pair_records.append(rec)
                if consecutive_timeouts >= cfg.consecutive_timeout_abort:
                    aborted = True
                    break
    finally:
        if pool is not None:
            pool.shutdown()
        _WORKER.pop("ctx", None)
    return pair_records, (PAIR_ABORTED if aborted else PAIR_OK)
