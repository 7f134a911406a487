"""
Replicate streaming for the fluctuation ensembles

Replicates are simulated in fixed-size chunks; replicate r always reads the noise stream
(seed, r), so the statistics of the first N replicates do not depend on how many follow.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np
import torch
from tqdm import tqdm

from datasets.noise import noise_rows
from graphs.models.population import deterministic_flow
from graphs.models.spde import MildSPDE, SimScheme
from utils.metrics import MomentAccumulator


logger = logging.getLogger("Ensemble")

DEFAULT_CHUNK = 250


@dataclass
class EnsembleStatistics:
    probes: list
    moments: MomentAccumulator
    seed: int
    normalized: bool
    thresholds: tuple = ()
    exceedances: Optional[np.ndarray] = None
    functionals: Dict[str, MomentAccumulator] = field(default_factory=dict)
    samples: Optional[np.ndarray] = None
    breaches: int = 0

    @property
    def replicates(self):
        return self.moments.count

    @property
    def mean(self):
        return self.moments.mean

    @property
    def variance(self):
        return self.moments.variance

    @property
    def covariance(self):
        return self.moments.covariance

    @property
    def standard_error(self):
        return self.moments.standard_error

    @property
    def variance_defined(self):
        return self.moments.defined

    def exceedance_frequency(self):
        """(probes, thresholds) empirical P(z > delta)."""
        return self.exceedances / max(self.replicates, 1)

    def rows(self):
        """(probe_t, probe_y, mean, var, se, n) per probe."""
        var, se = self.variance, self.standard_error
        return [(t, y, float(self.mean[i]), float(var[i]), float(se[i]), self.replicates)
                for i, (t, y) in enumerate(self.probes)]


def probe_indices(grid, probes):
    """(t, y) probes -> (time index, node index) pairs; probes must sit on the grid."""
    return [(grid.time_index(t), grid.node_index(y)) for t, y in probes]


def run_ensemble(model, grid, scheme=None, replicates=1000, seed=0, probes=((1.0, 0.0),), normalize=True,
                 thresholds=(), functionals=None, keep_samples=False, chunk_size=DEFAULT_CHUNK, device=None):
    """
    Streams replicates of v^eps and accumulates probe statistics.
    :param normalize: report z^eps = v^eps / a(eps) = (u^eps - u^0) / sqrt(eps) instead of v^eps
    :param thresholds: levels delta for the exceedance tallies P(value > delta) at each probe
    :param functionals: name -> callable(u paths (B, nt+1, nx+1), u0 frames) -> (B,) or (B, d) values
    :return: EnsembleStatistics
    """
    if replicates < 1:
        raise ValueError("replicates must be >= 1, got {}".format(replicates))
    if chunk_size < 1:
        raise ValueError("chunk_size must be >= 1")
    index = probe_indices(grid, probes)
    scheme = scheme or SimScheme.default_for(model.kind)
    u0 = deterministic_flow(model, grid)
    engine = MildSPDE(model, grid, scheme, mode="v", u0=u0)
    if device is not None:
        engine = engine.to(device)
    if normalize and model.epsilon == 0:
        raise ValueError("normalized fluctuations need epsilon > 0")
    scale = 1.0 / model.a_eps if normalize else 1.0

    functionals = functionals or {}
    stats = EnsembleStatistics(list(probes), MomentAccumulator(len(index)), seed, normalize, tuple(thresholds),
                               np.zeros((len(index), len(thresholds)), dtype=np.int64))
    samples = []
    keep_path = bool(functionals) or any(k != grid.nt for k, _ in index)
    starts = range(0, replicates, chunk_size)
    for start in tqdm(starts, total=len(starts), desc="{} eps={:g}".format(model.kind, model.epsilon),
                      disable=len(starts) < 2):
        block = list(range(start, min(start + chunk_size, replicates)))
        engine.breaches = 0
        paths = engine.integrate(lambda k: noise_rows(seed, block, k, model.mark_grid, grid.dt),
                                 batch=len(block), keep_path=keep_path)
        stats.breaches += engine.breaches
        if keep_path:
            values = np.stack([paths[:, k, i] for k, i in index], axis=1) * scale
        else:
            values = paths[:, [i for _, i in index]] * scale
        stats.moments.update(values)
        if thresholds:
            stats.exceedances += (values[:, :, None] > np.asarray(thresholds)[None, None, :]).sum(axis=0)
        if functionals:
            u_paths = model.fluctuation_scale * paths + u0.frames[None]
            for name, fn in functionals.items():
                values_f = np.asarray(fn(u_paths, u0.frames), dtype=np.float64).reshape(len(block), -1)
                stats.functionals.setdefault(name, MomentAccumulator(values_f.shape[1])).update(values_f)
        if keep_samples:
            samples.append(values)
        logger.debug("chunk %d-%d done", block[0], block[-1])

    if keep_samples:
        stats.samples = np.concatenate(samples, axis=0)
    if not stats.variance_defined:
        logger.info("single replicate: variances are undefined")
    logger.info("%s ensemble of %d replicates (seed %d), probe variances %s", model.kind, replicates, seed,
                np.array2string(stats.variance, precision=5))
    return stats


def set_threads(threads):
    if threads is not None and threads > 0:
        torch.set_num_threads(int(threads))
