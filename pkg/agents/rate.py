"""
Rate functionals of a target fluctuation path: the minimal-norm control and, for SBM and FVP,
the closed forms through the Radon-Nikodym derivative against mu^0
"""
import json

import numpy as np

from agents.base import BaseAgent, build_model
from agents.checks import record_result, smooth_control
from graphs.grid import FieldPath
from graphs.losses.rate import (WITNESS_REL_SLACK, cameron_martin_check, rate_fvp, rate_general, rate_sbm,
                                within_witness_bound)
from graphs.measures import path_to_measure_path
from graphs.models.controlled import solve_controlled
from graphs.models.population import deterministic_flow
from utils.io import read_binary, write_binary, write_rows
from utils.misc import timeit


class RateAgent(BaseAgent):

    def __init__(self, config):
        super().__init__(config)
        self.model = build_model(config, grid=self.grid)
        self.u0 = deterministic_flow(self.model, self.grid)
        self.witness = None

    def load_target(self):
        """The witness gamma(h) of a random smooth control, or a field-path dump of v."""
        block = self.config.rate
        if block.target == "witness":
            rng = np.random.default_rng(self.config.ensemble.seed)
            self.witness = smooth_control(self.grid, self.model.mark_grid, rng, block.modes)
            return solve_controlled(self.witness, self.model, self.u0, self.grid)
        role, grid, data = read_binary(block.target)
        if role != "field-path":
            raise ValueError("{} holds a {} dump, a field-path is needed".format(block.target, role))
        if grid != self.grid:
            raise ValueError("{} was written on {}, the configuration declares {}".format(block.target, grid,
                                                                                       self.grid))
        return FieldPath(grid, data)

    @timeit
    def run(self):
        """
        The main operator
        :return:
        """
        block = self.config.rate
        v = self.load_target()
        general = rate_general(v, self.model, self.u0, tol=block.tol)
        report = {"epsilon": self.model.epsilon, "kind": self.model.kind, "variational": general.to_dict()}
        self.logger.info("variational rate %.6g (residual %.3g, %d iterations%s)", general.value, general.residual,
                         general.iterations, ", infinite" if general.infinite else "")

        if self.witness is not None:
            energy = self.witness.energy(self.grid.T)
            report["witness_energy"] = energy
            self.results.append(record_result("rate-witness-bound", within_witness_bound(general.value, energy),
                                              general.value, energy, WITNESS_REL_SLACK * energy))

        if self.model.kind in ("SBM", "FVP"):
            anchor = self.model.anchor
            omega, mu0 = path_to_measure_path(v, anchor=anchor), path_to_measure_path(self.u0, anchor=anchor)
            closed_form = rate_sbm if self.model.kind == "SBM" else rate_fvp
            closed = closed_form(omega, mu0, laplacian=block.laplacian, padding=self.model.padding)
            cm = cameron_martin_check(omega, mu0, self.model.kind, laplacian=block.laplacian,
                                      padding=self.model.padding)
            report["closed_form"] = closed.to_dict()
            report["cameron_martin"] = cm.to_dict()
            if not (general.infinite or closed.infinite):
                scale = max(general.value, closed.value, 1e-300)
                discrepancy = abs(general.value - closed.value) / scale
                tol = self.config.checks.rate_rel_tol
                self.results.append(record_result("{}-rate-equivalence".format(self.model.kind.lower()),
                                              discrepancy <= tol, discrepancy, 0.0, tol))
            else:
                self.logger.info("rate is infinite (variational %s, closed form %s)", general.infinite,
                                 closed.infinite)

        with open(self.out_path("rate.json"), "w") as out:
            json.dump(report, out, indent=2, default=str)
        self.write_minimizer(general.minimizer)

    def write_minimizer(self, control):
        if control is None:
            return
        formats = self.config.output.formats
        if "binary" in formats:
            write_binary(self.out_path("minimizer.bin"), control.values, self.grid, "control")
        if "csv" in formats:
            times = self.grid.times[:-1]
            rows = ((repr(float(t)), repr(float(a)), repr(float(h)))
                    for t, row in zip(times, control.values) for a, h in zip(control.mark_grid.midpoints, row))
            write_rows(self.out_path("minimizer.csv"), ["t", "a", "value"], rows)
