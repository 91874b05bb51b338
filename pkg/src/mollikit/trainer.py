"""Minibatch training with annealed Gaussian data mollification.

Each iteration draws a minibatch, optionally corrupts it with
variance-preserving Gaussian noise whose level follows a schedule, takes one
Adam step on the negative log-likelihood (or negative ELBO / IWAE bound), and
periodically logs a :class:`~mollikit.evalmetrics.MetricRecord`.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import checkpoint, config
from .autodiff import NumericError, Tensor
from .datasets import Dataset, load_csv, toy_dataset
from .evalmetrics import MMD_REPORT_SCALE, MetricRecord, avg_test_loglik, mmd2_rbf, write_jsonl
from .mollify import gaussian_mollify
from .schedules import MollificationSchedule, alpha_sigma

__all__ = [
    "AdamState",
    "adam_step",
    "clip_grad_norm",
    "TrainConfig",
    "TrainResult",
    "TrainingDiverged",
    "train",
    "schedule_position",
    "rng_streams",
    "config_from_flat",
    "dataset_from_flat",
    "model_spec_from_flat",
    "run_single",
    "run_experiment",
]


# ---------------------------------------------------------------------------
# optimiser


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(state: AdamState, params: dict[str, Tensor], grads: dict[str, np.ndarray],
              lr: float) -> None:
    """One bias-corrected Adam update, in place.  Missing gradients count as zero."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros(p.shape)
        elif g.shape != p.shape:
            raise ad.ShapeError("adam_step", p.shape, g.shape)
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros(p.shape)
            state.v[name] = np.zeros(p.shape)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data = p.data - lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def clip_grad_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most ``max_norm``; returns the raw norm."""
    norm = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


# ---------------------------------------------------------------------------
# configuration


@dataclass
class TrainConfig:
    model: dict
    iterations: int = 20_000
    epochs: int = 0
    batch_size: int = 256
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    schedule: MollificationSchedule | None = None
    mollify_fraction: float = 0.5
    eval_every: int = 100
    metric_every: int = 1000
    seed: int = 0
    clip_norm: float | None = 100.0
    objective: str = "nll"
    beta: float = 1.0
    iwae_k: int = 5
    divergence: float = 1e6
    record_wall_time: bool = True
    mmd: bool = True
    mmd_samples: int = 2000
    final_mmd_samples: int = 10_000
    lengthscale: float = 1.0
    variance: float = 1e-4
    eval_iwae_k: int = 100

    def __post_init__(self):
        if not 0.0 <= self.mollify_fraction <= 1.0:
            raise ValueError(f"mollify_fraction must lie in [0, 1], got {self.mollify_fraction}")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.iterations < 1 and self.epochs < 1:
            raise ValueError("need iterations >= 1 or epochs >= 1")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")

    def total_iterations(self, n_train: int) -> int:
        if self.epochs > 0:
            return self.epochs * math.ceil(n_train / self.batch_size)
        return self.iterations

    def mollify_horizon(self, n_train: int) -> int:
        if self.schedule is None:
            return 0
        return int(self.mollify_fraction * self.total_iterations(n_train))


def schedule_position(cfg: TrainConfig, t: int, horizon: int) -> tuple[float, float, float]:
    """``(alpha, sigma, sigma^2)`` used at iteration ``t`` (0-based)."""
    if cfg.schedule is None or t >= horizon:
        return 1.0, 0.0, 0.0
    a, s = alpha_sigma(cfg.schedule, t / horizon)
    return a, s, s * s


class TrainingDiverged(RuntimeError):
    def __init__(self, iteration: int, reason: str, checkpoint_path: str | None,
                 records: list[MetricRecord]):
        where = f"; last good checkpoint: {checkpoint_path}" if checkpoint_path else ""
        super().__init__(f"training diverged at iteration {iteration}: {reason}{where}")
        self.iteration = iteration
        self.checkpoint_path = checkpoint_path
        self.records = records


@dataclass
class TrainResult:
    model: object
    records: list[MetricRecord]
    runtime_ms: int
    final_mmd2: float | None
    final_test_ll: float | None


# ---------------------------------------------------------------------------
# training loop


def _batches(n: int, batch: int, rng: np.random.Generator):
    """Endless stream of index batches; reshuffles each epoch, drops singleton tails."""
    while True:
        perm = rng.permutation(n)
        for i in range(0, n, batch):
            idx = perm[i:i + batch]
            if len(idx) >= 2:
                yield idx


def _loss(model, x: np.ndarray, cfg: TrainConfig, rng: np.random.Generator) -> Tensor:
    if getattr(model, "kind", "") == "vae":
        from .vae import elbo, iwae_bound
        if cfg.objective == "iwae":
            return ad.neg(iwae_bound(model, x, cfg.iwae_k, rng))
        return ad.neg(elbo(model, x, rng, beta=cfg.beta))
    return ad.neg(ad.mean(model.log_prob(x)))


def _evaluate(model, data: Dataset, cfg: TrainConfig, rng: np.random.Generator,
              n_mmd: int) -> tuple[float | None, float | None]:
    model.eval()
    try:
        test_ll = avg_test_loglik(model, data.test, rng=rng, k=cfg.eval_iwae_k)
        mmd = None
        if cfg.mmd and n_mmd > 0:
            ref = data.test[:n_mmd]
            samples = data.unstandardize(model.sample(len(ref), rng))
            mmd = mmd2_rbf(samples, data.unstandardize(ref), cfg.lengthscale, cfg.variance)
    except NumericError:
        test_ll, mmd = None, None
    finally:
        model.train()
    if test_ll is not None and not math.isfinite(test_ll):
        test_ll = None
    return mmd, test_ll


def _snapshot(model) -> list[np.ndarray]:
    return [p.data.copy() for p in model.parameters()] + [b.copy() for _, b in model.named_buffers()]


STREAMS = ("init", "shuffle", "noise", "model", "eval")


def rng_streams(seed: int) -> dict[str, np.random.Generator]:
    """Independent generators for each source of randomness, all derived from ``seed``."""
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return {name: np.random.default_rng(c) for name, c in zip(STREAMS, children)}


def train(cfg: TrainConfig, data: Dataset, model=None, run_dir: str | os.PathLike | None = None,
          ) -> TrainResult:
    """Train ``model`` (built from ``cfg.model`` when omitted) on ``data.train``.

    Separate random streams (see :func:`rng_streams`) drive parameter
    initialisation, minibatch order, mollification noise, model-internal
    sampling (VAE reparameterisation) and evaluation, so e.g. switching
    mollification on does not change the initial parameters or batch order.
    """
    streams = rng_streams(cfg.seed)
    init_rng, shuffle_rng, noise_rng = streams["init"], streams["shuffle"], streams["noise"]
    model_rng, eval_rng = streams["model"], streams["eval"]
    if model is None:
        model = checkpoint.build_model(cfg.model, init_rng)
    model.train()
    run_dir = Path(run_dir) if run_dir is not None else None
    ckpt_path = str(run_dir / "model.ckpt") if run_dir is not None else None
    last_good: str | None = None

    n = len(data.train)
    if cfg.batch_size > n:
        raise ValueError(f"batch_size {cfg.batch_size} exceeds training set size {n}")
    total = cfg.total_iterations(n)
    horizon = cfg.mollify_horizon(n)
    params = dict(model.named_parameters())
    state = AdamState(cfg.beta1, cfg.beta2, cfg.eps)
    batches = _batches(n, cfg.batch_size, shuffle_rng)
    records: list[MetricRecord] = []
    start = time.perf_counter()

    def wall() -> int:
        return int((time.perf_counter() - start) * 1000) if cfg.record_wall_time else 0

    for t in range(total):
        x = data.train[next(batches)]
        alpha, sigma, sigma2 = schedule_position(cfg, t, horizon)
        x = gaussian_mollify(x, alpha, sigma, noise_rng)

        model.zero_grad()
        try:
            loss = _loss(model, x, cfg, model_rng)
        except NumericError as exc:
            raise TrainingDiverged(t, str(exc), last_good, records) from exc
        value = float(loss.data)
        if not math.isfinite(value) or value > cfg.divergence:
            raise TrainingDiverged(t, f"loss {value}", last_good, records)
        ad.backward(loss)
        grads = {k: p.grad for k, p in params.items() if p.grad is not None}
        if cfg.clip_norm:
            norm = clip_grad_norm(grads, cfg.clip_norm)
            if not math.isfinite(norm):
                raise TrainingDiverged(t, "non-finite gradient", last_good, records)
        adam_step(state, params, grads, cfg.lr)

        step = t + 1
        final = step == total
        if step % cfg.eval_every == 0 or final or t == 0:
            rec = MetricRecord(iteration=step, wall_ms=wall(), train_loss=value,
                               schedule_sigma2=sigma2)
            heavy = final or (cfg.metric_every > 0 and step % cfg.metric_every == 0)
            if heavy:
                rec.mmd2, rec.test_ll = _evaluate(
                    model, data, cfg, eval_rng,
                    cfg.final_mmd_samples if final else cfg.mmd_samples)
                if ckpt_path is not None:
                    checkpoint.save(model, ckpt_path)
                    last_good = ckpt_path
            records.append(rec)

    runtime = int((time.perf_counter() - start) * 1000)
    model.eval()
    last = records[-1]
    return TrainResult(model, records, runtime, last.mmd2, last.test_ll)


# ---------------------------------------------------------------------------
# experiment orchestration


def model_spec_from_flat(cfg: dict, dim: int) -> dict:
    kind = cfg["model.kind"]
    if kind == "realnvp":
        return dict(kind="realnvp", dim=dim, n_layers=cfg["model.layers"], hidden=cfg["model.hidden"],
                    n_hidden=cfg["model.n_hidden"], batchnorm=cfg["model.batchnorm"],
                    scale_activation=cfg["model.scale_activation"],
                    shift_activation=cfg["model.shift_activation"],
                    bound_init=cfg["model.bound_init"])
    if kind == "maf":
        return dict(kind="maf", dim=dim, n_layers=cfg["model.layers"], hidden=cfg["model.hidden"],
                    n_hidden=cfg["model.n_hidden"], batchnorm=cfg["model.batchnorm"],
                    activation=cfg["model.activation"])
    if kind == "vae":
        return dict(kind="vae", dim=dim, latent=cfg["model.latent"], hidden=cfg["model.hidden"],
                    n_hidden=cfg["model.n_hidden"], activation="relu",
                    sample_mean=cfg["model.sample_mean"])
    raise config.ConfigError(f"model.kind must be realnvp, maf or vae; got {kind!r}")


def schedule_from_flat(cfg: dict) -> MollificationSchedule | None:
    kind = str(cfg["schedule.kind"]).lower()
    if kind == "none":
        return None
    return MollificationSchedule(kind=kind, tau=cfg["schedule.tau"], start=cfg["schedule.start"],
                                 end=cfg["schedule.end"], ns=cfg["schedule.ns"],
                                 ds=cfg["schedule.ds"], clip_min=cfg["schedule.clip_min"])


def data_dir() -> Path:
    return Path(os.environ.get("MOLLIKIT_DATA", "data"))


def dataset_from_flat(cfg: dict) -> Dataset:
    name = cfg["data.name"]
    if name == "csv":
        path = Path(cfg["data.path"])
        if not path.is_absolute() and not path.exists():
            path = data_dir() / path
        if not path.exists():
            raise FileNotFoundError(
                f"dataset file {path} not found; place the CSV there or set MOLLIKIT_DATA")
        drop = tuple(c.strip() for c in str(cfg["data.drop"]).split(",") if c.strip())
        return load_csv(path, cfg["data.split_seed"], drop_columns=drop)
    return toy_dataset(name, seed=cfg["train.seed"], n_train=cfg["data.n_train"],
                       n_test=cfg["data.n_test"])


def config_from_flat(cfg: dict, dim: int) -> TrainConfig:
    return TrainConfig(
        model=model_spec_from_flat(cfg, dim),
        iterations=cfg["train.iterations"],
        epochs=cfg["train.epochs"],
        batch_size=cfg["train.batch_size"],
        lr=cfg["train.lr"],
        beta1=cfg["train.beta1"],
        beta2=cfg["train.beta2"],
        eps=cfg["train.eps"],
        schedule=schedule_from_flat(cfg),
        mollify_fraction=cfg["train.mollify_fraction"],
        eval_every=cfg["train.eval_every"],
        metric_every=cfg["train.metric_every"],
        seed=cfg["train.seed"],
        clip_norm=cfg["train.clip_norm"] or None,
        objective=cfg["train.objective"],
        beta=cfg["train.beta"],
        iwae_k=cfg["train.iwae_k"],
        divergence=cfg["train.divergence"],
        record_wall_time=cfg["train.record_wall_time"],
        mmd=cfg["eval.mmd"] and dim == 2,
        mmd_samples=cfg["eval.mmd_samples"],
        final_mmd_samples=cfg["eval.final_mmd_samples"],
        lengthscale=cfg["eval.lengthscale"],
        variance=cfg["eval.variance"],
        eval_iwae_k=cfg["eval.iwae_k"],
    )


def run_single(cfg: dict, out: str | os.PathLike, data: Dataset | None = None) -> dict:
    """Train one configuration into ``out``; returns its summary entry."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    data = data if data is not None else dataset_from_flat(cfg)
    checkpoint.atomic_write_text(out / "config.snapshot", config.dumps(cfg))
    tcfg = config_from_flat(cfg, data.dim)
    entry: dict = {"diverged": False}
    try:
        res = train(tcfg, data, run_dir=out)
        records, runtime = res.records, res.runtime_ms
        entry.update(final_mmd2=res.final_mmd2, final_test_ll=res.final_test_ll)
        checkpoint.save(res.model, out / "model.ckpt")
    except TrainingDiverged as exc:
        records, runtime = exc.records, 0
        entry.update(diverged=True, diverged_at=exc.iteration, final_mmd2=None,
                     final_test_ll=None)
    write_jsonl(out / "metrics.jsonl", records)
    entry["final_mmd2_x1e4"] = (None if entry["final_mmd2"] is None
                                else entry["final_mmd2"] * MMD_REPORT_SCALE)
    entry["runtime_ms"] = runtime
    return entry


def run_experiment(recipe: str | None, out: str | os.PathLike, overrides: dict | None = None,
                   file_values: dict | None = None, variants: tuple[str, ...] = ("vanilla", "mollified"),
                   ) -> dict:
    """Paired vanilla / mollified runs sharing one seed and one dataset.

    Writes ``<out>/<variant>/{config.snapshot, metrics.jsonl, model.ckpt}``
    and ``<out>/summary.json``.
    """
    out = Path(out)
    base = config.resolve(recipe, file_values, overrides)
    data = dataset_from_flat(base)
    runs = {}
    for variant in variants:
        cfg = dict(base)
        if variant == "vanilla":
            cfg["schedule.kind"] = "none"
        elif cfg["schedule.kind"] == "none":
            raise config.ConfigError("mollified run requested with schedule.kind = none")
        runs[variant] = run_single(cfg, out / variant, data)
    summary: dict = {"recipe": recipe, "seed": base["train.seed"], "dataset": data.source,
                     "runs": runs}
    v, m = runs.get("vanilla"), runs.get("mollified")
    if v and m:
        if v["final_mmd2"] is not None and m["final_mmd2"]:
            summary["mmd2_ratio"] = v["final_mmd2"] / m["final_mmd2"]
        if v["final_test_ll"] is not None and m["final_test_ll"] is not None:
            summary["test_ll_gap"] = m["final_test_ll"] - v["final_test_ll"]
    checkpoint.atomic_write_text(out / "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary
