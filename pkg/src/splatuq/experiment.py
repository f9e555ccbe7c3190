"""End-to-end holdout experiment: SH uncertainty vs. ensemble vs. random ranking.

A synthetic scene is captured on an orbit, a contiguous arc of cameras is held
out, a reconstruction is fit on the remaining views, and each uncertainty
method is scored by AUSE on the held-out views.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import ensemble, sparsify, synth, trainer
from .render import render, render_many

# Offset between the reconstruction seed and the scene seed, so the two draw
# different random streams.
RECON_SEED_OFFSET = 1_000_003


@dataclass(frozen=True)
class HoldoutConfig:
    kind: str = "poster"
    n_gaussians: int = 2000
    n_cams: int = 64
    holdout: int = 16
    size: int = 128
    radius: float = 3.5
    elevation_deg: float = 30.0
    target_z: float = 0.4
    seed: int = 0
    members: int = 10
    recon_iterations: int = 500
    train: trainer.TrainConfig = field(default_factory=trainer.TrainConfig)


@dataclass
class HoldoutResult:
    config: dict
    ause: dict
    per_view_ause: dict
    seconds: dict
    mean_uncertainty: dict
    records: int
    curves: dict = field(repr=False, default_factory=dict)


def orbit_for(cfg: HoldoutConfig):
    return synth.make_orbit(cfg.n_cams, cfg.radius, cfg.elevation_deg, 360.0,
                            width=cfg.size, height=cfg.size, target=(0.0, 0.0, cfg.target_z))


def run_holdout(cfg: HoldoutConfig = HoldoutConfig()) -> HoldoutResult:
    true_scene = synth.make_scene(cfg.kind, cfg.n_gaussians, cfg.seed)
    cams = orbit_for(cfg)
    train_idx, eval_idx = synth.holdout_indices(len(cams), cfg.holdout, cfg.seed)
    train_cams = [cams[i] for i in train_idx]
    eval_cams = [cams[i] for i in eval_idx]
    gt_train = render_many(true_scene, train_cams)
    gt_eval = render_many(true_scene, eval_cams)
    recon = synth.reconstruct(true_scene, train_cams, gt_train, cfg.seed + RECON_SEED_OFFSET,
                              iterations=cfg.recon_iterations)
    errors = [sparsify.error_map(render(recon, c).color, g.color) for c, g in zip(eval_cams, gt_eval)]

    start = time.perf_counter()
    uncertain, report = trainer.train(recon, train_cams, cfg.train)
    t_sh = time.perf_counter() - start
    sh_maps = [render(uncertain, c, "uncertainty").uncert for c in eval_cams]

    ens_cfg = ensemble.EnsembleConfig(members=cfg.members, seed=cfg.seed)
    start = time.perf_counter()
    members, member_times = ensemble.run_ensemble(recon, train_cams, gt_train, ens_cfg)
    t_ens = time.perf_counter() - start
    ens_maps = [ensemble.ensemble_uncertainty(members, c) for c in eval_cams]

    rng = np.random.default_rng(cfg.seed)
    random_maps = [rng.random(e.shape) for e in errors]

    reports = {
        "sh": sparsify.evaluate_maps(errors, sh_maps),
        "ensemble": sparsify.evaluate_maps(errors, ens_maps),
        "random": sparsify.evaluate_maps(errors, random_maps),
    }
    # Middle of the held-out arc vs. the training camera diametrically opposite it.
    mid = int(eval_idx[len(eval_idx) // 2])
    far = (mid + len(cams) // 2) % len(cams)
    mean_unc = {
        "heldout_camera": float(render(uncertain, cams[mid], "uncertainty").uncert.mean()),
        "train_camera": float(render(uncertain, cams[far], "uncertainty").uncert.mean()),
        "heldout_index": mid,
        "train_index": far,
    }
    cfg_dict = asdict(cfg)
    return HoldoutResult(
        config=cfg_dict,
        ause={k: r.mean_ause for k, r in reports.items()},
        per_view_ause={k: r.per_view_ause for k, r in reports.items()},
        seconds={"sh_training": t_sh, "ensemble_total": t_ens, "ensemble_members": member_times},
        mean_uncertainty=mean_unc,
        records=report.records,
        curves={k: {"fraction": r.fractions.tolist(), "mae_uncertainty": r.mean_uncertainty_curve.tolist(),
                    "mae_oracle": r.mean_oracle_curve.tolist()} for k, r in reports.items()},
    )
