"""Sparsification curves and AUSE with mean absolute error.

Pixels are removed in decreasing order of a ranking map (ties broken by
ascending flat pixel index) and the MAE of the remaining pixels is tracked.
AUSE is the mean, over the fraction grid, of the gap between the curve ranked
by uncertainty and the oracle curve ranked by the errors themselves, both
normalized by the MAE with nothing removed.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

DEFAULT_FRACTIONS = np.arange(100) / 100.0


class DegenerateErrorWarning(UserWarning):
    """The error map is all zero, so AUSE is defined as 0."""


@dataclass
class SparsificationCurve:
    fractions: np.ndarray
    mae: np.ndarray
    normalized: bool = False


def removal_order(ranking: np.ndarray) -> np.ndarray:
    """Flat indices sorted by descending ranking, ties by ascending index."""
    r = np.asarray(ranking, dtype=np.float64).ravel()
    return np.lexsort((np.arange(r.size), -r))


def sparsification_curve(errors, ranking, fractions=DEFAULT_FRACTIONS, normalized: bool = False) -> SparsificationCurve:
    errors = np.asarray(errors, dtype=np.float64)
    ranking = np.asarray(ranking, dtype=np.float64)
    if errors.shape != ranking.shape:
        raise ValueError(f"shape mismatch: errors {errors.shape} vs ranking {ranking.shape}")
    if errors.size == 0:
        raise ValueError("empty error map")
    fractions = np.asarray(fractions, dtype=np.float64)
    if np.any((fractions < 0) | (fractions >= 1)):
        raise ValueError("fractions must lie in [0, 1)")
    n = errors.size
    ordered = errors.ravel()[removal_order(ranking)]
    # suffix[m] = sum of the errors left after removing the first m pixels
    suffix = np.concatenate([np.cumsum(ordered[::-1])[::-1], [0.0]])
    removed = np.floor(fractions * n + 1e-9).astype(np.int64)
    mae = suffix[removed] / (n - removed)
    if normalized:
        mae = mae / mae[0] if mae[0] > 0 else np.zeros_like(mae)
    return SparsificationCurve(fractions, mae, normalized)


@dataclass
class AuseResult:
    value: float
    uncertainty_curve: SparsificationCurve
    oracle_curve: SparsificationCurve
    degenerate: bool = False


def ause_detail(errors, uncertainty, fractions=DEFAULT_FRACTIONS) -> AuseResult:
    errors = np.asarray(errors, dtype=np.float64)
    unc = sparsification_curve(errors, uncertainty, fractions, normalized=True)
    oracle = sparsification_curve(errors, errors, fractions, normalized=True)
    degenerate = not np.any(errors != 0)
    if degenerate:
        warnings.warn("all-zero error map: AUSE defined as 0", DegenerateErrorWarning, stacklevel=3)
        return AuseResult(0.0, unc, oracle, True)
    return AuseResult(float(np.mean(unc.mae - oracle.mae)), unc, oracle)


def ause(errors, uncertainty, fractions=DEFAULT_FRACTIONS) -> float:
    return ause_detail(errors, uncertainty, fractions).value


def error_map(rendered_rgb, gt_rgb) -> np.ndarray:
    """Per-pixel mean absolute RGB error."""
    return np.abs(np.asarray(rendered_rgb, np.float64) - np.asarray(gt_rgb, np.float64)).mean(axis=-1)


@dataclass
class EvalReport:
    per_view_ause: list[float]
    mean_ause: float
    fractions: np.ndarray = field(repr=False)
    mean_uncertainty_curve: np.ndarray = field(repr=False)
    mean_oracle_curve: np.ndarray = field(repr=False)
    degenerate_views: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "per_view_ause": self.per_view_ause,
            "mean_ause": self.mean_ause,
            "degenerate_views": self.degenerate_views,
            "curves": {
                "fraction": self.fractions.tolist(),
                "mae_uncertainty": self.mean_uncertainty_curve.tolist(),
                "mae_oracle": self.mean_oracle_curve.tolist(),
            },
        }


def evaluate_maps(error_maps, uncertainty_maps, fractions=DEFAULT_FRACTIONS) -> EvalReport:
    error_maps, uncertainty_maps = list(error_maps), list(uncertainty_maps)
    if len(error_maps) != len(uncertainty_maps) or not error_maps:
        raise ValueError("error and uncertainty maps must be non-empty and aligned")
    results = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateErrorWarning)
        for err, unc in zip(error_maps, uncertainty_maps):
            results.append(ause_detail(err, unc, fractions))
    per_view = [r.value for r in results]
    return EvalReport(
        per_view_ause=per_view,
        mean_ause=float(np.mean(per_view)),
        fractions=np.asarray(fractions, np.float64),
        mean_uncertainty_curve=np.mean([r.uncertainty_curve.mae for r in results], axis=0),
        mean_oracle_curve=np.mean([r.oracle_curve.mae for r in results], axis=0),
        degenerate_views=[i for i, r in enumerate(results) if r.degenerate],
    )


def evaluate_method(scene, eval_cameras, gt_images, uncertainty_maps, fractions=DEFAULT_FRACTIONS) -> EvalReport:
    """AUSE of ``uncertainty_maps`` against the errors of ``scene`` rendered at ``eval_cameras``.

    ``gt_images`` are RenderBuffers or (H, W, 3) arrays aligned with the cameras.
    """
    from .render import render

    eval_cameras, gt_images = list(eval_cameras), list(gt_images)
    uncertainty_maps = list(uncertainty_maps)
    if not (len(eval_cameras) == len(gt_images) == len(uncertainty_maps)):
        raise ValueError("cameras, ground-truth images and uncertainty maps must be aligned")
    errors = []
    for cam, gt in zip(eval_cameras, gt_images):
        gt_rgb = gt.color if hasattr(gt, "color") else gt
        errors.append(error_map(render(scene, cam, "color").color, gt_rgb))
    return evaluate_maps(errors, uncertainty_maps, fractions)


def write_curves_csv(path, fractions, mae_uncertainty, mae_oracle) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["fraction", "mae_uncertainty", "mae_oracle"])
        for row in zip(fractions, mae_uncertainty, mae_oracle):
            writer.writerow([f"{v:.6g}" if i == 0 else repr(float(v)) for i, v in enumerate(row)])
