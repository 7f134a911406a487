import os
import re
import math
import json
import hashlib
import logging
from logging import Formatter
from logging.handlers import RotatingFileHandler
from pprint import pformat

from easydict import EasyDict

from datasets.presets import PRESETS
from utils.dirs import create_dirs


KINDS = ("SBM", "FVP", "Custom")
COEFFICIENTS = ("white",)
PROJECTIONS = ("none", "clamp01", "monotone")
LAPLACIANS = ("semigroup", "central")
SUITES = ("identities", "qv", "mass", "covariance", "rates", "mdp", "moments")
FORMATS = ("csv", "binary")
OUT_ENV = "MDP_SPDE_OUT"


class ConfigError(Exception):
    def __init__(self, message, line=None):
        super().__init__(message)
        self.message = message
        self.line = line

    def __str__(self):
        return "line {}: {}".format(self.line, self.message) if self.line else self.message


def setup_logging(log_dir):
    log_file_format = "[%(levelname)s] - %(asctime)s - %(name)s - : %(message)s in %(pathname)s:%(lineno)d"
    log_console_format = "[%(levelname)s]: %(message)s"

    # Main logger
    main_logger = logging.getLogger()
    main_logger.setLevel(logging.INFO)
    for handler in [h for h in main_logger.handlers if getattr(h, "_mdp_spde", False)]:
        main_logger.removeHandler(handler)
        handler.close()

    console_handler = logging.StreamHandler()
    console_handler.setLevel(logging.INFO)
    console_handler.setFormatter(Formatter(log_console_format))

    exp_file_handler = RotatingFileHandler(os.path.join(log_dir, 'exp_debug.log'), maxBytes=10**6, backupCount=5)
    exp_file_handler.setLevel(logging.DEBUG)
    exp_file_handler.setFormatter(Formatter(log_file_format))

    exp_errors_file_handler = RotatingFileHandler(os.path.join(log_dir, 'exp_error.log'), maxBytes=10**6,
                                                  backupCount=5)
    exp_errors_file_handler.setLevel(logging.WARNING)
    exp_errors_file_handler.setFormatter(Formatter(log_file_format))

    for handler in (console_handler, exp_file_handler, exp_errors_file_handler):
        handler._mdp_spde = True
        main_logger.addHandler(handler)


def _line_of(raw, *keys):
    """1-based line of the last key of a nested path in the raw JSON text, searching in order."""
    lines = raw.splitlines()
    position, found = 0, None
    for key in keys:
        pattern = re.compile(r'"{}"\s*:'.format(re.escape(str(key))))
        for number in range(position, len(lines)):
            if pattern.search(lines[number]):
                position, found = number, number + 1
                break
        else:
            return found
    return found


def get_config_from_json(json_file):
    """
    Get the config from a json file
    :param json_file: the path of the config file
    :return: config(namespace), config(dictionary), raw text
    """
    try:
        with open(json_file, 'r') as config_file:
            raw = config_file.read()
    except OSError as err:
        raise ConfigError("cannot read {}: {}".format(json_file, err))
    try:
        config_dict = json.loads(raw)
    except ValueError as err:
        raise ConfigError("invalid JSON: {}".format(getattr(err, "msg", err)), getattr(err, "lineno", None))
    if not isinstance(config_dict, dict):
        raise ConfigError("the configuration must be a JSON object", 1)
    # EasyDict allows to access dict values as attributes (works recursively).
    return EasyDict(config_dict), config_dict, raw


def _number(value):
    return isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)


def _integer(value):
    return isinstance(value, int) and not isinstance(value, bool)


def _block(config, name):
    if name not in config or config[name] is None:
        setattr(config, name, EasyDict())
    return config[name]


def validate_config(config, raw=""):
    """
    Checks a parsed configuration and fills defaults.
    :raise ConfigError: carrying the line of the offending key
    """
    def fail(message, *keys):
        raise ConfigError(message, _line_of(raw, *keys) if keys else None)

    for block in ("exp_name", "model", "grid"):
        if block not in config:
            fail("missing required entry '{}'".format(block))
    if not isinstance(config.exp_name, str) or not config.exp_name:
        fail("exp_name must be a non-empty string", "exp_name")

    model = config.model
    if model.get("kind") not in KINDS:
        fail("model.kind must be one of {}".format(KINDS), "model", "kind")
    if model.kind == "Custom" and model.get("coefficient", "white") not in COEFFICIENTS:
        fail("Custom models from a file support the coefficients {}".format(COEFFICIENTS), "model", "coefficient")
    if model.get("field_file") is None:
        preset = model.get("initial_condition", "gaussian-cdf")
        if preset not in PRESETS:
            fail("unknown initial_condition '{}'".format(preset), "model", "initial_condition")
        if model.kind == "FVP" and preset == "lebesgue-cdf":
            fail("lebesgue-cdf is not a distribution function for FVP", "model", "initial_condition")
        model.initial_condition = preset
    elif not os.path.exists(model.field_file):
        fail("field_file {} does not exist".format(model.field_file), "model", "field_file")
    epsilons = model.get("epsilon", 1e-3)
    epsilons = epsilons if isinstance(epsilons, list) else [epsilons]
    if not epsilons or not all(_number(e) and e > 0 for e in epsilons):
        fail("epsilon must be a positive number or a list of them", "model", "epsilon")
    model.epsilon = epsilons
    model.kappa = model.get("kappa", 0.25)
    if not _number(model.kappa) or not 0 < model.kappa < 0.5:
        fail("kappa must lie in (0, 1/2)", "model", "kappa")
    model.sigma = model.get("sigma", 1.0)
    if not _number(model.sigma) or model.sigma < 0:
        fail("sigma must be >= 0", "model", "sigma")
    if model.get("mark_halfwidth") is not None and not (_number(model.mark_halfwidth) and model.mark_halfwidth > 0):
        fail("mark_halfwidth must be positive", "model", "mark_halfwidth")
    if "agent" in config and not isinstance(config.agent, str):
        fail("agent must name an agent class", "agent")

    grid = config.grid
    for key, default in (("L", None), ("T", 1.0)):
        value = grid.get(key, default)
        if not _number(value) or value <= 0:
            fail("grid.{} must be positive".format(key), "grid", key)
        setattr(grid, key, value)
    for key, default in (("nx", None), ("nt", None), ("na", 256)):
        value = grid.get(key, default)
        if not _integer(value) or value < 2:
            fail("grid.{} must be an integer >= 2".format(key), "grid", key)
        setattr(grid, key, value)

    ensemble = _block(config, "ensemble")
    ensemble.replicates = ensemble.get("replicates", 1000)
    if not _integer(ensemble.replicates) or ensemble.replicates < 1:
        fail("ensemble.replicates must be a positive integer", "ensemble", "replicates")
    ensemble.seed = ensemble.get("seed", 0)
    if not _integer(ensemble.seed) or not 0 <= ensemble.seed < 2 ** 64:
        fail("ensemble.seed must be an unsigned 64-bit integer", "ensemble", "seed")
    ensemble.chunk_size = ensemble.get("chunk_size", 250)
    if not _integer(ensemble.chunk_size) or ensemble.chunk_size < 1:
        fail("ensemble.chunk_size must be a positive integer", "ensemble", "chunk_size")
    ensemble.projection = ensemble.get("projection", "clamp01" if model.kind == "FVP" else "none")
    if ensemble.projection not in PROJECTIONS:
        fail("ensemble.projection must be one of {}".format(PROJECTIONS), "ensemble", "projection")
    dx, dt = 2.0 * grid.L / grid.nx, grid.T / grid.nt
    default_probes = [[grid.T, -grid.L + round((y + grid.L) / dx) * dx] for y in (-1.0, -0.5, 0.0, 0.5, 1.0)]
    ensemble.probes = ensemble.get("probes", default_probes)
    for probe in ensemble.probes:
        if not (isinstance(probe, list) and len(probe) == 2 and all(_number(p) for p in probe)):
            fail("probes are [t, y] pairs", "ensemble", "probes")
        t, y = probe
        k, i = round(t / dt), round((y + grid.L) / dx)
        on_grid = abs(k * dt - t) < 1e-9 and abs(-grid.L + i * dx - y) < 1e-9
        if not (0 <= k <= grid.nt and 0 <= i <= grid.nx and on_grid):
            fail("probe {} is not a grid node".format(probe), "ensemble", "probes")

    checks = _block(config, "checks")
    checks.suite = checks.get("suite", ["identities"])
    if not isinstance(checks.suite, list) or not all(s in SUITES for s in checks.suite):
        fail("checks.suite entries must be among {}".format(SUITES), "checks", "suite")
    for key, default in (("rel_tol", 0.05), ("variance_rel_tol", 0.10), ("duality_rel_tol", 0.02), ("delta", 1.0),
                         ("rate_rel_tol", 0.02)):
        setattr(checks, key, checks.get(key, default))
        if not _number(checks[key]) or checks[key] <= 0:
            fail("checks.{} must be positive".format(key), "checks", key)
    checks.witnesses = checks.get("witnesses", 5)
    if not _integer(checks.witnesses) or checks.witnesses < 1:
        fail("checks.witnesses must be a positive integer", "checks", "witnesses")
    checks.refinement = checks.get("refinement", 0)
    if not _integer(checks.refinement) or not 0 <= checks.refinement <= 3:
        fail("checks.refinement must be an integer in [0, 3]", "checks", "refinement")

    rate = _block(config, "rate")
    rate.target = rate.get("target", "witness")
    if rate.target != "witness" and not (isinstance(rate.target, str) and os.path.exists(rate.target)):
        fail("rate.target must be 'witness' or an existing field-path dump", "rate", "target")
    rate.modes = rate.get("modes", 1)
    if not _integer(rate.modes) or rate.modes < 0:
        fail("rate.modes must be a nonnegative integer", "rate", "modes")
    rate.laplacian = rate.get("laplacian", "semigroup")
    if rate.laplacian not in LAPLACIANS:
        fail("rate.laplacian must be one of {}".format(LAPLACIANS), "rate", "laplacian")
    rate.tol = rate.get("tol", 1e-8)
    if not _number(rate.tol) or rate.tol <= 0:
        fail("rate.tol must be positive", "rate", "tol")

    output = _block(config, "output")
    output.formats = output.get("formats", ["csv"])
    if not isinstance(output.formats, list) or not all(f in FORMATS for f in output.formats):
        fail("output.formats entries must be among {}".format(FORMATS), "output", "formats")
    output.directory = output.get("directory", "experiments")
    config.cuda = bool(config.get("cuda", False))
    return config


def config_hash(raw):
    return hashlib.sha256(raw.encode("utf-8")).hexdigest()


def process_config(json_file, out=None, seed=None, create=True):
    """
    Get the json file
    Processing it with EasyDict to be accessible as attributes
    then validating it and editing the path of the experiments folder
    creating some important directories in the experiment folder
    Then setup the logging in the whole program
    Then return the config
    :param json_file: the path of the config file
    :param out: output root overriding the environment and the file
    :param seed: overrides ensemble.seed
    :return: config object(namespace)
    """
    config, _, raw = get_config_from_json(json_file)
    config = validate_config(config, raw)
    if seed is not None:
        if not 0 <= seed < 2 ** 64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        config.ensemble.seed = seed
    config.config_file = json_file
    config.config_hash = config_hash(raw)
    if not create:
        return config

    root = out or os.environ.get(OUT_ENV) or config.output.directory
    # create some important directories to be used for that experiment.
    config.exp_dir = os.path.join(root, config.exp_name)
    config.summary_dir = os.path.join(config.exp_dir, "summaries/")
    config.out_dir = os.path.join(config.exp_dir, "out/")
    config.log_dir = os.path.join(config.exp_dir, "logs/")
    create_dirs([config.summary_dir, config.out_dir, config.log_dir])

    # setup logging in the project
    setup_logging(config.log_dir)

    logging.getLogger().info("The experiment name is %s", config.exp_name)
    logging.getLogger().debug("Configuration:\n%s", pformat(dict(config)))
    return config
