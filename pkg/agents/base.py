"""
The Base Agent class, where all other agents inherit from, that contains definitions for all the necessary functions
"""
import os
import time
import logging

import torch
from tensorboardX import SummaryWriter

from datasets.presets import initial_condition, load_field_csv
from graphs.grid import make_grid
from graphs.models.population import make_fvp, make_sbm, make_white_noise_model
from graphs.models.spde import SimScheme
from utils.io import write_manifest, write_results_csv
from utils.misc import versions


def build_grid(config):
    return make_grid(config.grid.L, config.grid.nx, config.grid.T, config.grid.nt)


def build_model(config, epsilon=None, grid=None):
    """ModelSpec of the model block, at the first epsilon of the list unless given."""
    grid = grid or build_grid(config)
    block = config.model
    epsilon = block.epsilon[0] if epsilon is None else epsilon
    if block.kind == "Custom":
        F = load_field_csv(block.field_file, grid) if block.get("field_file") else None
        return make_white_noise_model(grid, block.sigma, F, epsilon, block.kappa)
    if block.get("field_file"):
        F = load_field_csv(block.field_file, grid)
    else:
        F = initial_condition(block.initial_condition, block.kind, grid)
    if block.kind == "SBM":
        return make_sbm(grid, F, epsilon, block.kappa, na=config.grid.na, A=block.get("mark_halfwidth"))
    return make_fvp(grid, F, epsilon, block.kappa, na=config.grid.na)


class BaseAgent:
    """
    This base class will contain the base functions to be overloaded by any agent you will implement.
    """

    def __init__(self, config):
        self.config = config
        self.logger = logging.getLogger("Agent")
        self.results = []
        self.artifacts = []
        self.start_time = time.time()
        self.summary_writer = SummaryWriter(log_dir=self.config.summary_dir, comment=self.config.exp_name)

        # set cuda flag
        self.is_cuda = torch.cuda.is_available()
        if self.is_cuda and not self.config.cuda:
            self.logger.info("WARNING: You have a CUDA device, so you should probably enable CUDA")
        self.cuda = self.is_cuda and self.config.cuda
        self.device = torch.device("cuda") if self.cuda else torch.device("cpu")
        self.logger.info("Program will run on %s", "GPU-CUDA" if self.cuda else "CPU")

        self.grid = build_grid(config)
        self.scheme = SimScheme(projection=config.ensemble.projection)

    def out_path(self, name):
        path = os.path.join(self.config.out_dir, name)
        self.artifacts.append(name)
        return path

    def run(self):
        """
        The main operator
        :return:
        """
        raise NotImplementedError

    @property
    def passed(self):
        return all(result.passed for result in self.results)

    def finalize(self):
        """
        Finalizes all the operations of the operator: results.csv, manifest.json, summaries
        :return:
        """
        if self.results:
            write_results_csv(self.out_path("results.csv"), self.results)
        manifest = {
            "exp_name": self.config.exp_name,
            "agent": type(self).__name__,
            "config_file": self.config.config_file,
            "config_hash": self.config.config_hash,
            "seed": self.config.ensemble.seed,
            "model": dict(self.config.model),
            "grid": dict(self.config.grid),
            "versions": versions(),
            "wall_time_s": time.time() - self.start_time,
            "artifacts": sorted(set(self.artifacts)),
            "checks": {"total": len(self.results), "passed": sum(r.passed for r in self.results)},
            "note": "tolerances are numerical calibrations; the exponential tail asymptotics are not "
                    "observable at this scale and are reported, not tested",
        }
        write_manifest(os.path.join(self.config.exp_dir, "manifest.json"), manifest)
        self.summary_writer.export_scalars_to_json(os.path.join(self.config.summary_dir, "all_scalars.json"))
        self.summary_writer.close()
