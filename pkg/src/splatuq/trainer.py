"""Training of the per-gaussian uncertainty field from training-camera visibility.

Each supervision record pairs a gaussian with a direction ``x`` from which some
training camera sees it with blend weight at least ``threshold_t``. The loss
pulls ``u(x)`` toward 0 and keeps uncertainty high elsewhere, either at the
opposite direction ``-x`` or on average over random directions:

    opposite:      (1 - lam) * u(x) + lam * (1 - u(-x))
    sampled_mean:  (1 - lam) * u(x) + lam * (1 - mean_s u(s))

With ``lam < 0.5`` a gaussian seen from both ``x`` and ``-x`` still ends up
certain from both sides.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from numba import njit

from . import sh
from .errors import ConfigError
from .optim import Adam
from .parallel import ordered_map
from .render import collect_contributions
from .scene import Scene, sigmoid

VARIANTS = ("opposite", "sampled_mean")


@dataclass(frozen=True)
class TrainConfig:
    lam: float = 0.2
    threshold_t: float = 0.05
    variant: str = "opposite"
    mean_samples: int = 16
    iterations: int = 2000
    learning_rate: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.lam < 0.5:
            raise ConfigError(f"lambda must be strictly between 0 and 0.5, got {self.lam}")
        if not 0.0 < self.threshold_t < 1.0:
            raise ConfigError(f"threshold must lie in (0, 1), got {self.threshold_t}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.mean_samples < 1:
            raise ConfigError("mean_samples must be positive")
        if self.iterations < 0:
            raise ConfigError("iterations must be non-negative")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")


@dataclass
class TrainReport:
    iterations: int
    final_loss: float
    loss_curve: list[float] = field(repr=False)
    wall_time_s: float
    records: int
    config: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1)


@dataclass
class Supervision:
    """Deduplicated supervision: one record per (gaussian, camera)."""

    gaussian_id: np.ndarray
    camera: np.ndarray
    view_dir: np.ndarray
    weight: np.ndarray

    def __len__(self) -> int:
        return len(self.gaussian_id)


def _check_lambda(lam: float) -> None:
    if not 0.0 < lam < 0.5:
        raise ConfigError(f"lambda must be strictly between 0 and 0.5, got {lam}")


def loss_opposite(u_x, u_negx, lam: float):
    _check_lambda(lam)
    return (1.0 - lam) * np.asarray(u_x) + lam * (1.0 - np.asarray(u_negx))


def loss_sampled_mean(u_x, u_bar, lam: float):
    _check_lambda(lam)
    return (1.0 - lam) * np.asarray(u_x) + lam * (1.0 - np.asarray(u_bar))


def record_loss_grad(coeffs, direction, lam: float, variant: str = "opposite", samples=None):
    """Loss of one record and its gradient with respect to the SH coefficients.

    ``samples`` are the random directions averaged for the sampled-mean variant.
    """
    coeffs = np.asarray(coeffs, dtype=np.float64)
    degree = sh.degree_from_count(len(coeffs))
    y_x = sh.eval_basis(direction, degree)
    u_x = sigmoid(coeffs @ y_x)
    grad = (1.0 - lam) * u_x * (1.0 - u_x) * y_x
    if variant == "opposite":
        y_n = sh.eval_basis(-np.asarray(direction, dtype=np.float64), degree)
        u_n = sigmoid(coeffs @ y_n)
        loss = loss_opposite(u_x, u_n, lam)
        grad -= lam * u_n * (1.0 - u_n) * y_n
    elif variant == "sampled_mean":
        y_s = sh.eval_basis(samples, degree)
        u_s = sigmoid(y_s @ coeffs)
        loss = loss_sampled_mean(u_x, u_s.mean(), lam)
        grad -= lam * ((u_s * (1.0 - u_s)) @ y_s) / len(u_s)
    else:
        raise ConfigError(f"unknown variant {variant!r}")
    return float(loss), grad


def harvest(scene: Scene, cameras, threshold_t: float) -> Supervision:
    """Collect contribution records over all cameras, keeping the strongest per (gaussian, camera)."""
    per_cam = ordered_map(lambda c: collect_contributions(scene, c, threshold_t), cameras)
    gids, cams, dirs, weights = [], [], [], []
    for ci, rec in enumerate(per_cam):
        if not len(rec):
            continue
        order = np.lexsort((-rec.weight, rec.gaussian_id))
        gid = rec.gaussian_id[order]
        first = np.ones(len(gid), bool)
        first[1:] = gid[1:] != gid[:-1]
        sel = order[first]
        gids.append(rec.gaussian_id[sel])
        cams.append(np.full(len(sel), ci))
        dirs.append(rec.view_dir[sel])
        weights.append(rec.weight[sel])
    if not gids:
        return Supervision(np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros((0, 3)), np.zeros(0))
    return Supervision(np.concatenate(gids), np.concatenate(cams), np.concatenate(dirs), np.concatenate(weights))


@njit(cache=True)
def _record_pass(params, local, y_x, y_neg, lam, use_opposite, grad):
    """Mean loss over records and its gradient; the sampled-mean term is left to the caller."""
    grad[:] = 0.0
    n_rec = local.shape[0]
    total = 0.0
    for r in range(n_rec):
        g = local[r]
        f_x = 0.0
        f_n = 0.0
        for k in range(params.shape[1]):
            f_x += params[g, k] * y_x[r, k]
            f_n += params[g, k] * y_neg[r, k]
        u_x = 0.5 * (1.0 + math.tanh(0.5 * f_x))
        a = (1.0 - lam) * u_x * (1.0 - u_x) / n_rec
        total += (1.0 - lam) * u_x
        b = 0.0
        if use_opposite:
            u_n = 0.5 * (1.0 + math.tanh(0.5 * f_n))
            total += lam * (1.0 - u_n)
            b = lam * u_n * (1.0 - u_n) / n_rec
        for k in range(params.shape[1]):
            grad[g, k] += a * y_x[r, k] - b * y_neg[r, k]
    return total / n_rec


def train(scene: Scene, cameras, config: TrainConfig = TrainConfig(),
          supervision: Supervision | None = None) -> tuple[Scene, TrainReport]:
    """Fit every gaussian's uncertainty SH; geometry and color are untouched.

    Gaussians without any supervision record keep their coefficients bit-for-bit.
    """
    cameras = list(cameras)
    if not cameras:
        raise ValueError("no training cameras")
    start = time.perf_counter()
    if supervision is None:
        supervision = harvest(scene, cameras, config.threshold_t)
    if not len(supervision):
        raise ValueError("threshold too high: no supervision")

    degree = scene.uncert_degree
    lam = config.lam
    n_rec = len(supervision)
    supervised, local = np.unique(supervision.gaussian_id, return_inverse=True)
    local = local.astype(np.int64)
    n_sup = len(supervised)
    params = scene.uncert_sh[supervised].astype(np.float64)
    y_x = sh.eval_basis(supervision.view_dir, degree)
    y_neg = sh.eval_basis(-supervision.view_dir, degree)
    counts = np.bincount(local, minlength=n_sup).astype(np.float64)
    rng = np.random.default_rng(config.seed)
    opt = Adam(params, config.learning_rate)
    curve = []

    opposite = config.variant == "opposite"
    grad = np.empty_like(params)
    for _ in range(config.iterations):
        loss = _record_pass(params, local, y_x, y_neg, lam, opposite, grad)
        if not opposite:
            y_s = sh.eval_basis(sh.sample_sphere(rng, config.mean_samples), degree)
            u_s = sigmoid(params @ y_s.T)  # (n_sup, samples)
            loss += lam * np.dot(counts, 1.0 - u_s.mean(axis=1)) / n_rec
            grad -= (lam * counts / n_rec)[:, None] * ((u_s * (1.0 - u_s)) @ y_s) / config.mean_samples
        curve.append(float(loss))
        opt.step(grad)

    out = scene.copy()
    out.uncert_sh[supervised] = params.astype(np.float32)
    report = TrainReport(
        iterations=config.iterations,
        final_loss=curve[-1] if curve else float("nan"),
        loss_curve=curve,
        wall_time_s=time.perf_counter() - start,
        records=n_rec,
        config=asdict(config),
    )
    return out, report

