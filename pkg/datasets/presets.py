"""
Initial distribution functions F

SBM uses the 0-anchored convention F(y) = mu_0([0, y]) (negative for y < 0), FVP the
-infinity anchored CDF F(y) = mu_0((-inf, y]).
"""
import csv
import logging

import numpy as np
from scipy.stats import norm

from graphs.grid import Field


logger = logging.getLogger("Presets")

PRESETS = ("lebesgue-cdf", "gaussian-cdf", "point-mass-cdf", "uniform01-cdf")


def _sbm_preset(name, y):
    if name == "lebesgue-cdf":
        return y.copy()
    if name == "gaussian-cdf":
        return norm.cdf(y) - 0.5
    if name == "point-mass-cdf":
        return 0.5 * np.sign(y)
    if name == "uniform01-cdf":
        return np.clip(y, 0.0, 1.0)
    raise ValueError("unknown initial condition preset '{}'".format(name))


def _fvp_preset(name, y):
    if name == "gaussian-cdf":
        return norm.cdf(y)
    if name == "point-mass-cdf":
        return (y >= 0).astype(np.float64)
    if name == "uniform01-cdf":
        return np.clip(y, 0.0, 1.0)
    if name == "lebesgue-cdf":
        raise ValueError("lebesgue-cdf is not a probability distribution function (FVP)")
    raise ValueError("unknown initial condition preset '{}'".format(name))


def initial_condition(name, kind, grid):
    y = grid.nodes
    if kind == "SBM":
        return Field(_sbm_preset(name, y))
    if kind == "FVP":
        return Field(_fvp_preset(name, y))
    # Custom models accept any preset under the FVP convention, plus the Lebesgue field
    return Field(_sbm_preset(name, y) if name == "lebesgue-cdf" else _fvp_preset(name, y))


def load_field_csv(path, grid):
    """Reads columns (y, value) and interpolates them onto the grid nodes."""
    ys, values = [], []
    with open(path, "r") as csv_file:
        for row in csv.DictReader(csv_file):
            ys.append(float(row["y"]))
            values.append(float(row["value"]))
    if len(ys) < 2:
        raise ValueError("{} holds fewer than two samples".format(path))
    order = np.argsort(ys)
    ys, values = np.asarray(ys)[order], np.asarray(values)[order]
    if ys[0] > grid.nodes[0] or ys[-1] < grid.nodes[-1]:
        logger.warning("Field file %s does not cover [-%g, %g]; end values are held constant",
                       path, grid.L, grid.L)
    return Field(np.interp(grid.nodes, ys, values))
