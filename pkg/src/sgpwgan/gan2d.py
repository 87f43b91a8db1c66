"""Two-dimensional WGAN experiments with the simple gradient penalty.

Both players are 3 x 64 tanh MLPs.  Every iteration evaluates the joint
drift with :func:`dynamics.vector_field` on fresh batches and moves both
parameter vectors from the same state (simultaneous updates).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .dynamics import MCConfig, SGPProblem, penalty_value, vector_field
from .errors import ConfigError, NumericalFailure
from .export import scatter_svg, write_csv
from .measure import DEFAULT_ANCHOR, TABLE1_KINDS, make_table1_measure, substream
from .nets import MLPDiscriminator, MLPGenerator

DATASETS = ("gauss8", "gauss25", "swissroll")
METRIC_COLUMNS = ("iter", "wgan_loss", "penalty_value", "mode_coverage", "high_quality_fraction")
EVAL_SAMPLES = 2048


@dataclass(frozen=True)
class Dataset:
    """A seeded 2D target; ``sample(n, seed)`` is deterministic in ``(self.seed, seed)``."""

    kind: str
    seed: int
    centers: Optional[np.ndarray]
    std: float
    meta: dict = field(default_factory=dict)

    def sample(self, n: int, seed: int = 0) -> np.ndarray:
        rng = np.random.default_rng(substream(self.seed, "dataset", seed))
        if self.kind == "swissroll":
            u = rng.random(n)
            t = 1.5 * np.pi * (1.0 + 2.0 * u)
            pts = np.column_stack([t * np.cos(t), t * np.sin(t)])
            pts += self.meta["noise"] * rng.standard_normal((n, 2))
            return pts / self.meta["scale"]
        idx = rng.integers(0, len(self.centers), n)
        return self.centers[idx] + self.std * rng.standard_normal((n, 2))

    def __call__(self, n, seed):
        return self.sample(n, seed)

    def describe(self) -> dict:
        d = {"kind": self.kind, "seed": self.seed, "std": self.std, **self.meta}
        if self.centers is not None:
            d["centers"] = self.centers.tolist()
        return d


def make_dataset(kind: str, seed: int = 0) -> Dataset:
    """``gauss8`` (radius 2, std 0.02), ``gauss25`` (grid -4..4 step 2, std 0.05)
    or ``swissroll`` (scaled into [-2, 2]^2)."""
    if kind == "gauss8":
        k = np.arange(8)
        centers = 2.0 * np.column_stack([np.cos(k * np.pi / 4), np.sin(k * np.pi / 4)])
        return Dataset(kind, int(seed), centers, 0.02, {"radius": 2.0})
    if kind == "gauss25":
        g = np.arange(-4.0, 5.0, 2.0)
        centers = np.array([[a, b] for a in g for b in g])
        return Dataset(kind, int(seed), centers, 0.05, {"spacing": 2.0})
    if kind == "swissroll":
        # raw radius reaches 4.5 pi ~ 14.1; dividing by 7.5 keeps it inside [-2, 2]^2
        return Dataset(kind, int(seed), None, 0.25 / 7.5, {"noise": 0.25, "scale": 7.5})
    raise ConfigError(f"unknown dataset {kind!r}; expected one of {DATASETS}")


def mode_coverage(samples, centers, radius=None, std=None, min_count: int = 20):
    """``(covered, high_quality_fraction)``.

    A centre is covered when at least ``min_count`` samples fall within
    ``radius`` of it (default ``3 * std``); the fraction counts samples within
    ``radius`` of any centre.
    """
    samples = np.asarray(samples, float)
    if samples.size == 0:
        raise ConfigError("mode_coverage needs at least one sample")
    if radius is None:
        if std is None:
            raise ConfigError("give radius or the component std")
        radius = 3.0 * std
    if radius <= 0:
        raise ConfigError("radius must be positive")
    centers = np.asarray(centers, float)
    d2 = ((samples[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    near = d2 <= radius * radius
    covered = int(np.sum(near.sum(axis=0) >= min_count))
    return covered, float(near.any(axis=1).mean())


# ---------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class TrainConfig:
    dataset: str = "gauss8"
    penalty_kind: str = "gp"
    anchor: Optional[tuple] = None
    rho: float = 10.0
    lr: float = 1e-4
    batch: int = 256
    iters: int = 30_000
    d_steps_per_g: int = 1
    seed: int = 0
    hidden: tuple = (64, 64, 64)
    optimizer: str = "gd"  # gd | adam
    adam_betas: tuple = (0.5, 0.9)
    log_every: int = 100
    checkpoint_every: int = 5000
    svg_every: int = 5000
    data_seed: int = 0

    def validate(self):
        if self.dataset not in DATASETS:
            raise ConfigError(f"unknown dataset {self.dataset!r}")
        if self.penalty_kind not in TABLE1_KINDS:
            raise ConfigError(f"unknown penalty kind {self.penalty_kind!r}")
        if self.anchor is not None and self.penalty_kind != "g_anc":
            raise ConfigError("anchor is only used with penalty kind g_anc")
        if self.optimizer not in ("gd", "adam"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        for name in ("lr", "rho"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("batch", "d_steps_per_g", "log_every"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.iters < 0:
            raise ConfigError("iters must be >= 0")
        return self

    def resolved_anchor(self):
        if self.penalty_kind != "g_anc":
            return None
        return tuple(self.anchor) if self.anchor is not None else DEFAULT_ANCHOR

    def to_dict(self):
        d = asdict(self)
        d["anchor"] = None if self.resolved_anchor() is None else list(self.resolved_anchor())
        d["hidden"] = list(self.hidden)
        d["adam_betas"] = list(self.adam_betas)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown train2d options {sorted(extra)}")
        for k in ("anchor", "hidden", "adam_betas"):
            if d.get(k) is not None:
                d[k] = tuple(d[k])
        return cls(**d).validate()


def _gaussian_latent(n, seed):
    return np.random.default_rng(seed).standard_normal((n, 2))


def build_problem(cfg: TrainConfig, dataset: Optional[Dataset] = None) -> SGPProblem:
    data = dataset or make_dataset(cfg.dataset, cfg.data_seed)
    D = MLPDiscriminator(2, cfg.hidden)
    G = MLPGenerator(2, 2, cfg.hidden)
    mu = make_table1_measure(cfg.penalty_kind, cfg.resolved_anchor(), data.sample,
                             lambda th, n, s: G.sample(_gaussian_latent(n, s), th))
    return SGPProblem(D, G, data.sample, _gaussian_latent, mu, float(cfg.rho), name=f"gan2d-{cfg.dataset}",
                      meta={"dataset": data.describe()})


def init_params(problem: SGPProblem, seed: int):
    psi = problem.discriminator.init(substream(seed, "init", "D"))
    theta = problem.generator.init(substream(seed, "init", "G"))
    return psi, theta


@dataclass
class TrainRecord:
    rows: list
    config: dict
    status: str = "ok"
    psi: Optional[np.ndarray] = None
    theta: Optional[np.ndarray] = None
    checkpoints: list = field(default_factory=list)
    failure: Optional[str] = None

    def column(self, name):
        return np.array([r[name] for r in self.rows])

    @property
    def final(self) -> dict:
        return self.rows[-1]

    def to_csv(self, path):
        return write_csv(path, METRIC_COLUMNS, [[r[c] for c in METRIC_COLUMNS] for r in self.rows])

    def to_dict(self):
        return {"status": self.status, "failure": self.failure, "config": self.config,
                "final": self.final, "checkpoints": self.checkpoints}


class _Adam:
    def __init__(self, size, lr, betas, eps=1e-8):
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0
        self.lr, self.b1, self.b2, self.eps = lr, betas[0], betas[1], eps

    def step(self, d):
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * d
        self.v = self.b2 * self.v + (1 - self.b2) * d * d
        mh = self.m / (1 - self.b1 ** self.t)
        vh = self.v / (1 - self.b2 ** self.t)
        return self.lr * mh / (np.sqrt(vh) + self.eps)


def evaluate(problem: SGPProblem, dataset: Dataset, psi, theta, seed: int, batch: int):
    """Metrics row on fixed evaluation batches."""
    xs = problem.gen_sampler(theta, EVAL_SAMPLES, substream(seed, "eval"))
    mc = MCConfig(batch, substream(seed, "eval-batch"))
    xd = problem.data_sampler(batch, substream(mc.seed, "data"))
    xg = problem.gen_sampler(theta, batch, substream(mc.seed, "latent"))
    D = problem.discriminator
    wgan = float(np.mean(D.value(xd, psi)) - np.mean(D.value(xg, psi)))
    pen = penalty_value(problem, psi, theta, mc)
    if dataset.centers is not None:
        cov, hq = mode_coverage(xs, dataset.centers, std=dataset.std)
    else:
        cov, hq = 0, float("nan")
    return {"wgan_loss": wgan, "penalty_value": pen, "mode_coverage": cov, "high_quality_fraction": hq}, xs


def _write_checkpoint(out, cfg, problem, it, psi, theta):
    stem = out / f"checkpoint_{it:07d}"
    np.concatenate([psi, theta]).astype("<f8").tofile(stem.with_suffix(".bin"))
    header = {"arch": {"discriminator": problem.discriminator.arch, "generator": problem.generator.arch,
                       "activation": "tanh", "layout": "per layer W (in x out, row-major) then b; psi then theta"},
              "iter": it, "seed": cfg.seed, "dtype": "float64-le", "n_psi": int(psi.size), "n_theta": int(theta.size)}
    stem.with_suffix(".json").write_text(json.dumps(header, sort_keys=True, indent=2) + "\n")
    return str(stem.with_suffix(".bin").name)


def load_checkpoint(path):
    path = Path(path)
    header = json.loads(path.with_suffix(".json").read_text())
    flat = np.fromfile(path.with_suffix(".bin"), dtype="<f8")
    return flat[:header["n_psi"]], flat[header["n_psi"]:], header


def train(cfg: TrainConfig, out_dir=None, progress=None) -> TrainRecord:
    """Run simultaneous updates; metrics every ``log_every`` iterations.

    With ``out_dir`` set, checkpoints (``.bin`` + JSON header) and SVG
    scatter plots of 2048 generator samples are written at their intervals.
    A non-finite drift stops the run with status ``numerical_failure`` and
    keeps the last finite parameters.
    """
    cfg = cfg.validate()
    dataset = make_dataset(cfg.dataset, cfg.data_seed)
    problem = build_problem(cfg, dataset)
    psi, theta = init_params(problem, cfg.seed)
    out = None if out_dir is None else Path(out_dir)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    record = TrainRecord([], cfg.to_dict())
    opt_d = opt_g = None
    if cfg.optimizer == "adam":
        opt_d = _Adam(psi.size, cfg.lr, cfg.adam_betas)
        opt_g = _Adam(theta.size, cfg.lr, cfg.adam_betas)

    def log(it):
        row, xs = evaluate(problem, dataset, psi, theta, cfg.seed, cfg.batch)
        row = {"iter": it, **row}
        record.rows.append(row)
        if progress is not None:
            progress(row)
        if out is not None and cfg.svg_every and it % cfg.svg_every == 0:
            (out / f"samples_{it:07d}.svg").write_text(
                scatter_svg(xs, (-3, 3), (-3, 3), dataset.centers, f"{cfg.dataset} {cfg.penalty_kind} iter {it}"))
        return row

    def checkpoint(it):
        if out is not None and cfg.checkpoint_every and it % cfg.checkpoint_every == 0:
            record.checkpoints.append(_write_checkpoint(out, cfg, problem, it, psi, theta))

    log(0)
    checkpoint(0)
    for it in range(1, cfg.iters + 1):
        try:
            for s in range(cfg.d_steps_per_g - 1):
                mc = MCConfig(cfg.batch, substream(cfg.seed, "iter", it, "d", s))
                dpsi, _ = vector_field(problem, psi, theta, mc)
                new_psi = psi + (opt_d.step(dpsi) if opt_d else cfg.lr * dpsi)
                if not np.all(np.isfinite(new_psi)):
                    raise NumericalFailure(f"non-finite discriminator update at iteration {it}")
                psi = new_psi
            mc = MCConfig(cfg.batch, substream(cfg.seed, "iter", it))
            dpsi, dtheta = vector_field(problem, psi, theta, mc)
            new_psi = psi + (opt_d.step(dpsi) if opt_d else cfg.lr * dpsi)
            new_theta = theta + (opt_g.step(dtheta) if opt_g else cfg.lr * dtheta)
            if not (np.all(np.isfinite(new_psi)) and np.all(np.isfinite(new_theta))):
                raise NumericalFailure(f"non-finite update at iteration {it}")
            psi, theta = new_psi, new_theta
            if it % cfg.log_every == 0 or it == cfg.iters:
                row = log(it)
                if not np.isfinite(row["wgan_loss"]) or not np.isfinite(row["penalty_value"]):
                    raise NumericalFailure(f"non-finite loss at iteration {it}")
            checkpoint(it)
        except NumericalFailure as exc:
            record.status = "numerical_failure"
            record.failure = str(exc)
            break
    record.psi, record.theta = psi, theta
    return record
