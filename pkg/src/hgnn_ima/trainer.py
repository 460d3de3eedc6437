"""Full-graph semi-supervised training, evaluation and multi-seed runs."""
from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import Dataset
from .metrics import f1_scores
from .model import HgnnIma, ModelConfig, ParameterSet, RunConfig
from .model.network import classification_loss
from .numerics import AdamState, NonFiniteError, Tape, adam_step, backward

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class IterationRecord:
    iteration: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


@dataclass
class TrainReport:
    seed: int
    history: list[IterationRecord] = field(default_factory=list)
    best_iteration: int = 0
    stop_iteration: int = 0
    stopped_early: bool = False
    test_micro_f1: float = float("nan")
    test_macro_f1: float = float("nan")
    val_micro_f1: float = float("nan")
    val_macro_f1: float = float("nan")
    seconds_per_iteration: list[float] = field(default_factory=list)

    def to_dict(self, timing: bool = False) -> dict:
        """JSON-ready dict; wall-clock data only on request so that reports
        of identical runs compare equal byte for byte."""
        d = asdict(self)
        if not timing:
            d.pop("seconds_per_iteration")
        return d

    @property
    def best(self) -> IterationRecord:
        return self.history[self.best_iteration - 1]


def _accuracy(probs: np.ndarray, ids: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(np.argmax(probs[ids], axis=1) == labels)) if len(ids) else float("nan")


def split_loss(model: HgnnIma, result, ids: np.ndarray, labels: np.ndarray) -> float:
    """L_cro on ``ids`` plus the (label-free) attention loss of ``result``."""
    l_cro = classification_loss(result.logits, result.modality_logits, ids, labels,
                                model.config.individual_modality_loss)
    return l_cro.item() + result.l_att.item()


class EarlyStopper:
    """Counts iterations whose validation loss exceeds every earlier value
    while validation accuracy sits below the best so far.  The count resets
    when validation loss reaches a new minimum or accuracy a new maximum;
    ``update`` returns True once the count exceeds ``patience``."""

    def __init__(self, patience: int):
        self.patience = patience
        self.strikes = 0
        self.max_loss, self.min_loss, self.max_acc = -np.inf, np.inf, -np.inf
        self.seen = 0

    def update(self, val_loss: float, val_acc: float) -> bool:
        trigger = self.seen > 0 and val_loss > self.max_loss and val_acc < self.max_acc
        if trigger:
            self.strikes += 1
        elif val_loss < self.min_loss or val_acc > self.max_acc:
            self.strikes = 0
        self.seen += 1
        self.max_loss = max(self.max_loss, val_loss)
        self.min_loss = min(self.min_loss, val_loss)
        self.max_acc = max(self.max_acc, val_acc)
        return self.strikes > self.patience


def train(dataset: Dataset, config: RunConfig | None = None, model: HgnnIma | None = None,
          params: ParameterSet | None = None) -> tuple[ParameterSet, TrainReport]:
    """Adam on the full graph with early stopping; returns the best-validation
    parameters and the run report.

    Stopping follows :class:`EarlyStopper`.  The returned
    parameters are those of the iteration with the highest validation
    accuracy (ties: lowest validation loss).
    """
    config = config or RunConfig()
    tc = config.train
    model = model or HgnnIma.for_dataset(dataset, config.model)
    seed = model.config.seed
    inputs = model.prepare(dataset.store)
    params = params if params is not None else model.init_params(seed)
    split = dataset.split
    tr_ids, va_ids, te_ids = split.train_ids, split.val_ids, split.test_ids
    if tr_ids.size == 0:
        raise ValueError("training split is empty")
    tr_y, va_y = split.label_array(tr_ids), split.label_array(va_ids)

    opt = AdamState(lr=tc.lr)
    report = TrainReport(seed=seed)
    best_key = None
    best_snapshot = params.snapshot()
    stopper = EarlyStopper(tc.patience)
    for it in range(1, tc.max_iters + 1):
        t0 = time.perf_counter()
        rng = np.random.default_rng([seed, it])
        try:
            with Tape() as tape:
                res = model.forward(params, inputs, "train", rng, tr_ids, tr_y)
                grads = backward(tape, res.loss)
            adam_step(opt, params, grads)
            ev = model.forward(params, inputs, "eval", None, tr_ids, tr_y)
        except (NonFiniteError, FloatingPointError) as exc:
            raise TrainingDiverged(f"iteration {it}: non-finite values ({exc})") from exc
        if not np.isfinite(ev.loss.item()):
            raise TrainingDiverged(f"iteration {it}: non-finite loss")
        val_loss = split_loss(model, ev, va_ids, va_y) if va_ids.size else float("nan")
        rec = IterationRecord(it, ev.loss.item(), _accuracy(ev.probs, tr_ids, tr_y), val_loss,
                              _accuracy(ev.probs, va_ids, va_y))
        report.history.append(rec)
        report.seconds_per_iteration.append(time.perf_counter() - t0)

        key = (rec.val_acc, -rec.val_loss) if va_ids.size else (rec.train_acc, -rec.train_loss)
        if best_key is None or key > best_key:
            best_key = key
            best_snapshot = params.snapshot()
            report.best_iteration = it

        report.stop_iteration = it
        if va_ids.size and stopper.update(val_loss, rec.val_acc):
            report.stopped_early = True
            log.info("early stop at iteration %d (best %d)", it, report.best_iteration)
            break

    params.load(best_snapshot)
    if te_ids.size:
        report.test_micro_f1, report.test_macro_f1 = evaluate(model, params, dataset, "test", inputs)
    if va_ids.size:
        report.val_micro_f1, report.val_macro_f1 = evaluate(model, params, dataset, "val", inputs)
    return params, report


def evaluate(model: HgnnIma, params: ParameterSet, dataset: Dataset, part: str = "test",
             inputs=None) -> tuple[float, float]:
    """(micro-F1, macro-F1) of the fused prediction on one split part."""
    ids = dataset.split.ids(part)
    if ids.size == 0:
        raise ValueError(f"split part {part!r} is empty")
    inputs = inputs or model.prepare(dataset.store)
    res = model.forward(params, inputs, "eval")
    pred = np.argmax(res.probs[ids], axis=1)
    return f1_scores(dataset.split.label_array(ids), pred)


def predictions(model: HgnnIma, params: ParameterSet, dataset: Dataset, part: str = "test"):
    ids = dataset.split.ids(part)
    res = model.forward(params, model.prepare(dataset.store), "eval")
    return ids, np.argmax(res.probs[ids], axis=1), res


@dataclass
class SeedSummary:
    reports: list[TrainReport]
    mean: dict[str, float]
    std: dict[str, float]

    def to_dict(self) -> dict:
        return {"seeds": [r.seed for r in self.reports], "mean": self.mean, "std": self.std,
                "reports": [r.to_dict() for r in self.reports]}


def _run_one(args):
    dataset, config, seed = args
    cfg = RunConfig(config.model.replace(seed=seed), config.train)
    return train(dataset, cfg)[1]


def run_seeds(dataset: Dataset, config: RunConfig, seeds, workers: int = 1, with_std: bool = True) -> SeedSummary:
    """Train once per seed (same split) and aggregate test metrics.

    Standard deviations use ddof=1 and therefore need at least two seeds.
    """
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ValueError("need at least one seed")
    if with_std and len(seeds) < 2:
        raise ValueError("standard deviation needs at least two seeds")
    jobs = [(dataset, config, s) for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(_run_one, jobs))
    else:
        reports = [_run_one(j) for j in jobs]
    keys = ("test_micro_f1", "test_macro_f1")
    mean = {k: float(np.mean([getattr(r, k) for r in reports])) for k in keys}
    std = {k: float(np.std([getattr(r, k) for r in reports], ddof=1)) if len(reports) > 1 else float("nan")
           for k in keys}
    return SeedSummary(reports, mean, std)


def default_model_config() -> ModelConfig:
    return ModelConfig()
