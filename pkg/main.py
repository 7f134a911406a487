"""
Main procedure of the small-noise SPDE lab

Main
-Parse the subcommand and its options
-Process the json config passed
-Create the agent of the subcommand
-Run the agent and map its outcome to the exit status
"""

import sys
import logging
import argparse

from utils.config import SUITES, ConfigError, process_config
from graphs.models.spde import SimulationError
from agents.ensemble import set_threads

from agents import AGENTS
from agents import *


COMMANDS = {
    "simulate": ("SimulationAgent", "simulate"),
    "ensemble": ("SimulationAgent", "ensemble"),
    "rate": ("RateAgent", "rate"),
    "check": ("VerificationAgent", "check"),
    "scan": ("VerificationAgent", "scan"),
}
CHECKING = ("check", "scan")


def build_parser():
    arg_parser = argparse.ArgumentParser(prog="mdp-spde-lab",
                                         description="Small-noise SPDEs of super-Brownian motion and Fleming-Viot")
    commands = arg_parser.add_subparsers(dest="command", metavar="subcommand")
    commands.required = True
    for name in list(COMMANDS) + ["validate-config"]:
        command = commands.add_parser(name)
        command.add_argument(
            '--config',
            metavar='config_json_file',
            required=True,
            help='The Configuration file in json format')
        if name == "validate-config":
            continue
        command.add_argument('--out', default=None, help='output root, overrides $MDP_SPDE_OUT and the config')
        command.add_argument('--seed', type=int, default=None, help='overrides ensemble.seed')
        command.add_argument('--threads', type=int, default=None, help='torch intra-op threads')
        if name == "check":
            command.add_argument('--suite', choices=SUITES, default=None, help='run a single suite')
    return arg_parser


def _report(path, err):
    location = "{}:{}".format(path, err.line) if err.line else path
    print("{}: {}".format(location, err.message), file=sys.stderr)


def cli_main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as err:
        return err.code if isinstance(err.code, int) else 2

    # parse the config json file
    try:
        if args.command == "validate-config":
            process_config(args.config, create=False)
            print("{}: ok".format(args.config))
            return 0
        config = process_config(args.config, out=args.out, seed=args.seed)
    except ConfigError as err:
        _report(args.config, err)
        return 2

    set_threads(args.threads)
    default_agent, config.mode = COMMANDS[args.command]
    if args.command == "check" and args.suite:
        config.checks.suite = [args.suite]

    # Create the Agent and pass all the configuration to it then run it..
    agent_name = config.get("agent") or default_agent
    if agent_name not in AGENTS:
        _report(args.config, ConfigError("unknown agent '{}'".format(agent_name)))
        return 2
    try:
        agent = globals()[agent_name](config)
    except ValueError as err:
        _report(args.config, ConfigError(str(err)))
        return 2
    try:
        agent.run()
    except SimulationError as err:
        logging.getLogger().error("simulation aborted at frame %d: %s", err.frame_index, err)
        agent.finalize()
        return 1
    agent.finalize()

    if args.command in CHECKING:
        return 0 if agent.passed else 1
    return 0


def main():
    sys.exit(cli_main())


if __name__ == '__main__':
    main()
