"""
Streaming statistics of the ensembles and the check result record
"""
import math
from dataclasses import dataclass, asdict, field

import numpy as np


class MomentAccumulator:
    """
    Mean and co-moment matrix of a vector observable, mergeable in any order
    (pairwise update of Chan, Golub and LeVeque).
    """
    def __init__(self, dim):
        self.dim = dim
        self.reset()

    def reset(self):
        self.count = 0
        self.mean = np.zeros(self.dim)
        self.comoment = np.zeros((self.dim, self.dim))

    def update(self, batch):
        """
        :param batch: (n, dim) array of samples
        """
        batch = np.asarray(batch, dtype=np.float64).reshape(-1, self.dim)
        if batch.shape[0] == 0:
            return self
        other = MomentAccumulator(self.dim)
        other.count = batch.shape[0]
        other.mean = batch.mean(axis=0)
        centered = batch - other.mean
        other.comoment = centered.T @ centered
        return self.merge(other)

    def merge(self, other):
        if other.count == 0:
            return self
        total = self.count + other.count
        delta = other.mean - self.mean
        self.comoment = self.comoment + other.comoment + np.outer(delta, delta) * self.count * other.count / total
        self.mean = self.mean + delta * other.count / total
        self.count = total
        return self

    @property
    def defined(self):
        """Variances need at least two samples."""
        return self.count >= 2

    @property
    def covariance(self):
        if not self.defined:
            return np.full((self.dim, self.dim), np.nan)
        return self.comoment / (self.count - 1)

    @property
    def variance(self):
        return np.diag(self.covariance).copy()

    @property
    def standard_error(self):
        """Standard error of the mean."""
        return np.sqrt(self.variance / self.count) if self.defined else np.full(self.dim, np.nan)

    @property
    def variance_standard_error(self):
        """Gaussian approximation sqrt(2/(n-1)) * var of the sample variance."""
        if not self.defined:
            return np.full(self.dim, np.nan)
        return self.variance * math.sqrt(2.0 / (self.count - 1))


@dataclass
class CheckResult:
    name: str
    passed: bool
    observed: float
    target: float
    tol: float
    se: float = float("nan")
    runtime_s: float = 0.0
    status: str = field(default="")

    def __post_init__(self):
        if not self.status:
            self.status = "pass" if self.passed else "fail"

    def row(self):
        values = asdict(self)
        return [values["name"], "inconclusive" if self.status == "inconclusive" else str(bool(self.passed)).lower(),
                repr(float(self.observed)), repr(float(self.target)), repr(float(self.tol)),
                repr(float(self.se)), "{:.3f}".format(self.runtime_s)]
