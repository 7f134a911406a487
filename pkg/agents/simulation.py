"""
Single realizations and fluctuation ensembles of u^eps and v^eps
"""
import numpy as np

from agents.base import BaseAgent, build_model
from agents.ensemble import run_ensemble
from datasets.noise import sample_white_noise
from graphs.measures import path_to_measure_path
from graphs.models.population import deterministic_flow
from graphs.models.spde import center_rescale, simulate_u, simulate_v
from utils.io import ENSEMBLE_COLUMNS, write_binary, write_field_csv, write_rows
from utils.misc import timeit


class SimulationAgent(BaseAgent):

    def __init__(self, config):
        super().__init__(config)
        self.mode = config.get("mode", "simulate")
        if self.mode not in ("simulate", "ensemble"):
            raise ValueError("SimulationAgent runs 'simulate' or 'ensemble', got {}".format(self.mode))

    @timeit
    def run(self):
        """
        The main operator
        :return:
        """
        try:
            if self.mode == "simulate":
                self.simulate()
            else:
                self.ensemble()
        except KeyboardInterrupt:
            self.logger.info("You have entered CTRL+C.. Wait to finalize")

    def _dump(self, name, path, data, role):
        formats = self.config.output.formats
        if "csv" in formats:
            write_field_csv(self.out_path(name + ".csv"), path)
        if "binary" in formats:
            write_binary(self.out_path(name + ".bin"), data, self.grid, role)

    def simulate(self):
        """One replicate of u^eps, its deterministic flow u^0, v^eps and the measure path of v^eps."""
        config = self.config
        model = build_model(config, grid=self.grid)
        noise = sample_white_noise(self.grid, model.mark_grid, config.ensemble.seed, 0)
        u0 = deterministic_flow(model, self.grid)
        u = simulate_u(model, self.grid, self.scheme, noise)
        v = simulate_v(model, self.grid, self.scheme, noise, u0=u0)
        omega = path_to_measure_path(v, anchor=model.anchor)

        gap = float(np.max(np.abs(center_rescale(u, u0, model.epsilon, model.kappa).frames - v.frames)))
        self.logger.info("eps=%g: max |center_rescale(u) - v| = %.3g", model.epsilon, gap)
        self.summary_writer.add_scalar("simulate/pathwise_gap", gap, 0)

        for name, path in (("u", u), ("u0", u0), ("v", v)):
            self._dump(name, path, path.frames, "field-path")
        self._dump("omega", omega, omega.densities, "measure-density")

    def ensemble(self):
        """Probe statistics of z^eps = v^eps / a(eps), one table per epsilon."""
        config = self.config
        probes = [tuple(p) for p in config.ensemble.probes]
        for step, eps in enumerate(config.model.epsilon):
            model = build_model(config, eps, self.grid)
            stats = run_ensemble(model, self.grid, self.scheme, config.ensemble.replicates, config.ensemble.seed,
                                 probes=probes, chunk_size=config.ensemble.chunk_size, device=self.device)
            write_rows(self.out_path("ensemble_eps{:g}.csv".format(eps)), ENSEMBLE_COLUMNS, stats.rows())
            if stats.breaches:
                self.logger.warning("eps=%g: %d state values left the mark window", eps, stats.breaches)
            for (t, y), var in zip(probes, stats.variance):
                self.summary_writer.add_scalar("ensemble/variance_t{:g}_y{:g}".format(t, y), var, step)
