"""
Collective QSV - Command-line Runner

This module contains the subcommands of the toolkit (analytic, simulate,
compile, discriminate, figures), the experiment configuration they share and
the mapping from toolkit errors to process exit codes.

Configuration precedence: config.py defaults < JSON config section < flags.
"""

import argparse
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from src import config
from src.analytic_formulas import (
    EXACT,
    MODES,
    DivergentRoundsError,
    baselines,
    complexity,
    output_infidelity,
    pass_probability,
    significance,
)
from src.circuit_compiler import (
    build_cswap_chain,
    distributed_construct,
    emit_circuit,
    lower_to_fredkin,
    parse_circuit,
    summarize,
)
from src.collective_protocol import (
    Scheme,
    default_workers,
    pass_probability_exact,
    prepare_ensemble,
    run_experiment,
)
from src.data_handler import ConfigError, DataHandler
from src.noise_models import NOISE_KINDS, NoiseSpec
from src.qstate_core import (
    DimensionOverflowError,
    InvalidStateError,
    ParameterError,
)
from src.target_states import bell, dicke, ghz, homogeneous_strategy, state_from_amplitudes

logger = logging.getLogger(__name__)

__all__ = ["ConfigError", "ExperimentConfig", "main"]

STANDARD_QSV = "standard_qsv"

# JSON key -> ExperimentConfig field
CONFIG_KEYS = {
    "target": "target",
    "lambda": "lam",
    "epsilon": "epsilons",
    "epsilons": "epsilons",
    "delta": "delta",
    "schemes": "schemes",
    "noise": "noise",
    "rounds": "rounds",
    "seed": "seed",
    "mode": "mode",
    "out": "out",
    "workers": "workers",
    "observed_rate": "observed_rate",
    "n_total": "n_total",
    "register_size": "register_size",
    "distributed": "distributed",
}


@dataclass
class ExperimentConfig:
    """Parameters of one subcommand run"""
    command: str
    target: str = config.DEFAULT_TARGET
    lam: float = config.DEFAULT_LAMBDA
    epsilons: list = field(default_factory=lambda: list(config.DEFAULT_EPSILONS))
    delta: float = config.DEFAULT_DELTA
    schemes: Optional[list] = None
    noise: Optional[list] = None
    rounds: int = config.DEFAULT_ROUNDS
    seed: int = config.DEFAULT_SEED
    mode: str = config.DEFAULT_MODE
    out: Optional[str] = None
    workers: Optional[int] = None
    observed_rate: Optional[float] = None
    n_total: Optional[int] = None
    register_size: Optional[int] = None
    distributed: bool = False

    def apply_section(self, section):
        """Override fields from a JSON config section"""
        for key, value in section.items():
            if key not in CONFIG_KEYS:
                raise ConfigError(f"unknown config key '{key}' for '{self.command}'")
            name = CONFIG_KEYS[key]
            if name == "epsilons" and not isinstance(value, list):
                value = [value]
            elif name == "noise" and isinstance(value, str):
                value = [value]
            elif name == "schemes":
                value = _scheme_pairs(value)
            setattr(self, name, value)

    def resolved_schemes(self):
        if self.schemes is not None:
            pairs = self.schemes
        elif self.command == "figures":
            pairs = config.FIGURE_SCHEMES
        else:
            pairs = config.DEFAULT_SCHEMES
        return [Scheme(k, t, self.delta) for k, t in pairs]

    def resolved_noise(self):
        if self.noise is not None:
            return list(self.noise)
        if self.command == "discriminate":
            return list(config.DISCRIMINATE_MODELS)
        if self.command == "figures":
            return list(config.FIGURE_NOISE)
        return [config.DEFAULT_NOISE]

    def validate(self):
        """Check every range; raises ConfigError or ParameterError"""
        try:
            self.lam = float(self.lam)
            self.delta = float(self.delta)
            self.epsilons = [float(x) for x in self.epsilons]
            self.rounds = int(self.rounds)
            self.seed = int(self.seed)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"malformed numeric setting: {e}") from e
        if not self.epsilons:
            raise ConfigError("epsilon list is empty")
        if self.schemes is not None and not self.schemes:
            raise ConfigError("scheme list is empty")
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError(f"lambda must lie in [0, 1], got {self.lam}")
        if any(not 0.0 <= x <= 1.0 for x in self.epsilons):
            raise ConfigError(f"epsilons must lie in [0, 1], got {self.epsilons}")
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode '{self.mode}', expected one of {MODES}")
        unknown = [kind for kind in self.resolved_noise() if kind not in NOISE_KINDS]
        if unknown:
            raise ConfigError(f"unknown noise kinds {unknown}, expected any of {NOISE_KINDS}")
        if self.rounds < 0:
            raise ConfigError(f"rounds must be >= 0, got {self.rounds}")
        if not 0 <= self.seed <= config.MAX_SEED:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.workers is not None and int(self.workers) < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        self.resolved_schemes()


def _scheme_pairs(value):
    if not isinstance(value, list):
        raise ConfigError(f"schemes must be a list of [k, t] pairs, got {value!r}")
    pairs = []
    for entry in value:
        if not isinstance(entry, (list, tuple)) or len(entry) != 2:
            raise ConfigError(f"scheme entries must be [k, t] pairs, got {entry!r}")
        try:
            pairs.append((int(entry[0]), int(entry[1])))
        except (TypeError, ValueError) as e:
            raise ConfigError(f"malformed scheme {entry!r}: {e}") from e
    return pairs


def _schemes_from_flags(ks, ts, current):
    """Pair --k and --t lists; a single value broadcasts against the other list"""
    current = current or config.DEFAULT_SCHEMES
    ks = ks or [k for k, _ in current]
    ts = ts or [t for _, t in current]
    if len(ts) == 1:
        ts = ts * len(ks)
    if len(ks) == 1:
        ks = ks * len(ts)
    if len(ks) != len(ts):
        raise ConfigError(f"--k and --t lists differ in length: {ks} vs {ts}")
    return list(zip(ks, ts))


def build_config(args):
    """Resolve defaults, the JSON section and command-line flags"""
    settings = ExperimentConfig(command=args.command)
    if args.config:
        settings.apply_section(DataHandler.load_experiment_config(args.config, args.command))

    flag_fields = {
        "target": args.target, "lam": args.lam, "epsilons": args.epsilon,
        "delta": args.delta, "noise": args.noise, "rounds": args.rounds,
        "seed": args.seed, "mode": args.mode, "out": args.out, "workers": args.workers,
        "observed_rate": getattr(args, "observed", None),
        "n_total": getattr(args, "samples", None),
        "register_size": getattr(args, "n", None),
        "distributed": getattr(args, "distributed", None),
    }
    for name, value in flag_fields.items():
        if value is not None:
            setattr(settings, name, value)
    if args.k or args.t:
        settings.schemes = _schemes_from_flags(args.k, args.t, settings.schemes)
    settings.validate()
    logger.debug("resolved %s", settings)
    return settings


def target_qubits(spec):
    """Qubit count of a target spec without building the state"""
    kind, *rest = spec.split(":", 1)
    try:
        if kind == "bell" and not rest:
            return 2
        if kind == "ghz":
            return int(rest[0])
        if kind == "dicke":
            return int(rest[0].split(":")[0])
        if kind == "file":
            return int(round(math.log2(len(DataHandler.load_amplitudes(rest[0])))))
    except (IndexError, ValueError) as e:
        raise ConfigError(f"malformed target '{spec}': {e}") from e
    raise ConfigError(f"unknown target '{spec}', expected bell, ghz:n, dicke:n:w or file:path")


def build_target(spec):
    """StateVector for bell | ghz:n | dicke:n:w | file:path"""
    kind, *rest = spec.split(":", 1)
    try:
        if kind == "bell" and not rest:
            return bell()
        if kind == "ghz":
            return ghz(int(rest[0]))
        if kind == "dicke":
            n, w = rest[0].split(":")
            return dicke(int(n), int(w))
        if kind == "file":
            return state_from_amplitudes(DataHandler.load_amplitudes(rest[0]))
    except (IndexError, ValueError) as e:
        if isinstance(e, ParameterError):
            raise
        raise ConfigError(f"malformed target '{spec}': {e}") from e
    raise ConfigError(f"unknown target '{spec}', expected bell, ghz:n, dicke:n:w or file:path")


def _default_out(settings, name):
    return settings.out or os.path.join(config.OUTPUT_DIR, name)


def _sort_rows(rows, keys):
    return sorted(rows, key=lambda row: tuple(
        (row.get(key) is None, row.get(key) if row.get(key) is not None else 0) for key in keys))


def _complexity_fields(scheme, kind, lam, epsilon, d, mode):
    """rounds_M, samples_N and n_opt of one point, or the flag explaining their absence"""
    if epsilon == 0.0:
        return {}, ["epsilon_zero"]
    fields = {"n_opt": baselines(lam, epsilon, scheme.delta).n_opt}
    try:
        report = complexity(scheme, kind, lam, epsilon, d, mode)
    except DivergentRoundsError as e:
        logger.warning("%s k=%d t=%d eps=%.4g: %s", kind, scheme.k, scheme.t, epsilon, e)
        return fields, ["diverges"]
    fields.update(rounds_M=report.rounds_M, samples_N=report.samples_N)
    return fields, []


def cmd_analytic(settings):
    """Closed-form complexities for every (noise kind, scheme, epsilon)

    A point with no finite round count keeps its row, flagged and with blank counts.

    Returns:
        str: Path of the CSV written
    """
    d = 2 ** target_qubits(settings.target)
    rows = []
    for kind in settings.resolved_noise():
        for scheme in settings.resolved_schemes():
            for epsilon in settings.epsilons:
                fields, flags = _complexity_fields(scheme, kind, settings.lam, epsilon, d,
                                                   settings.mode)
                infidelity = None
                if scheme.t < scheme.k:
                    infidelity = output_infidelity(kind, scheme.k, scheme.t, settings.lam,
                                                   epsilon, d, settings.mode)
                else:
                    flags.append("no_unmeasured_copy")
                rows.append({
                    "k": scheme.k, "t": scheme.t, "noise": kind,
                    "lambda": settings.lam, "epsilon": epsilon, "delta": scheme.delta,
                    "p_closed_form": pass_probability(kind, scheme.k, scheme.t, settings.lam,
                                                      epsilon, d, settings.mode),
                    "output_infidelity": infidelity,
                    "flag": ";".join(flags),
                    **fields,
                })
    logger.info("analytic: %d rows in %s mode", len(rows), settings.mode)
    rows = _sort_rows(rows, ["noise", "k", "t", "epsilon"])
    return DataHandler.save_csv(rows, _default_out(settings, "analytic.csv"))


def point_seed(seed, index):
    """Independent 64-bit seed for sweep point index"""
    state = np.random.SeedSequence([seed, index]).generate_state(1, dtype=np.uint64)
    return int(state[0])


def _simulate_point(settings, strategy, d, kind, scheme, epsilon, seed, workers):
    noise = NoiseSpec(kind, epsilon)
    stats = run_experiment(scheme, noise, strategy, settings.rounds, seed, workers)
    ensemble = prepare_ensemble(scheme, noise, strategy)
    row = {
        "k": scheme.k, "t": scheme.t, "noise": kind,
        "lambda": settings.lam, "epsilon": epsilon, "delta": scheme.delta,
        "p_exact": pass_probability_exact(scheme, ensemble, strategy),
        "p_closed_form": pass_probability(kind, scheme.k, scheme.t, settings.lam, epsilon, d),
        "output_infidelity": stats.posted_unmeasured_infidelity,
        "seed": seed,
    }
    fields, flags = _complexity_fields(scheme, kind, settings.lam, epsilon, d, settings.mode)
    row.update(fields)
    if stats.pass_rate_defined:
        low, high = stats.wilson_ci_95
        row.update(pass_rate=stats.pass_rate, ci_low=low, ci_high=high)
    else:
        flags.append("no_rounds")
    if stats.posted_unmeasured_infidelity is None:
        flags.append("no_unmeasured_copy")
    row["flag"] = ";".join(flags)
    return row


def cmd_simulate(settings):
    """Monte Carlo runs next to the exact and closed-form pass probabilities

    Returns:
        str: Path of the CSV written
    """
    target = build_target(settings.target)
    strategy = homogeneous_strategy(target, settings.lam)
    workers = settings.workers or default_workers()
    points = [(kind, scheme, epsilon)
              for kind in settings.resolved_noise()
              for scheme in settings.resolved_schemes()
              for epsilon in settings.epsilons]
    seeds = [point_seed(settings.seed, index) for index in range(len(points))]
    logger.info("simulate: %d point(s), %d rounds each", len(points), settings.rounds)

    if len(points) == 1 or workers == 1:
        rows = [_simulate_point(settings, strategy, target.dimension, *point, seed, workers)
                for point, seed in zip(points, seeds)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_simulate_point, settings, strategy, target.dimension,
                                   *point, seed, 1)
                       for point, seed in zip(points, seeds)]
            rows = [future.result() for future in futures]
    rows = _sort_rows(rows, ["noise", "k", "t", "epsilon"])
    return DataHandler.save_csv(rows, _default_out(settings, "simulate.csv"))


def cmd_compile(settings):
    """Emit the Fredkin-level circuit and a JSON count summary

    Returns:
        str: Path of the circuit text file
    """
    scheme = settings.resolved_schemes()[0]
    if settings.distributed:
        size = settings.register_size or max(1, target_qubits(settings.target) // 2)
        circuit = distributed_construct(register_size=size)
        name = f"distributed_n{size}.txt"
    else:
        size = settings.register_size or target_qubits(settings.target)
        circuit = build_cswap_chain(scheme.k, size)
        name = f"cswap_chain_k{scheme.k}_n{size}.txt"

    lowered = lower_to_fredkin(circuit)
    text = emit_circuit(lowered)
    if parse_circuit(text) != lowered:
        raise InvalidStateError("emitted circuit does not parse back to itself")

    out = _default_out(settings, name)
    DataHandler.save_text(text, out)
    summary = summarize(circuit)
    summary["distributed"] = bool(settings.distributed)
    DataHandler.save_json(summary, os.path.splitext(out)[0] + "_summary.json")
    logger.info("compile: %d Fredkin gates (bound %d), %d two-qubit gates (bound %d)",
                summary["fredkin"], summary["fredkin_bound"],
                summary["two_qubit"], summary["two_qubit_bound"])
    return out


def cmd_discriminate(settings):
    """Significance of an observed pass rate under each candidate noise model

    No decision threshold is applied; every model's significance is reported.

    Returns:
        str: Path of the CSV written
    """
    if settings.observed_rate is None or settings.n_total is None:
        raise ConfigError("discriminate needs --observed and --samples")
    observed = float(settings.observed_rate)
    n_total = int(settings.n_total)
    d = 2 ** target_qubits(settings.target)

    rows = []
    for epsilon in settings.epsilons:
        for kind in settings.resolved_noise():
            for scheme in settings.resolved_schemes():
                rate = pass_probability(kind, scheme.k, scheme.t, settings.lam, epsilon, d)
                rows.append(_significance_row(kind, scheme.k, scheme.t, settings.lam, epsilon,
                                              rate, observed, n_total))
        standard = 1.0 - epsilon + settings.lam * epsilon
        rows.append(_significance_row(STANDARD_QSV, None, 1, settings.lam, epsilon,
                                      standard, observed, n_total))
    rows = _sort_rows(rows, ["model", "k", "t", "epsilon"])
    return DataHandler.save_csv(rows, _default_out(settings, "discriminate.csv"),
                                columns=config.DISCRIMINATE_COLUMNS)


def _significance_row(model, k, t, lam, epsilon, rate, observed, n_total):
    result = significance(observed, rate, n_total)
    logger.info("discriminate: %s k=%s t=%s eps=%.4g -> significance %.6g",
                model, k, t, epsilon, result.significance)
    return {
        "model": model, "k": k, "t": t, "lambda": lam, "epsilon": epsilon,
        "model_rate": rate, "observed_rate": observed, "n_total": n_total,
        "divergence": result.divergence, "significance": result.significance,
    }


def _figure_row(kind, scheme, lam, epsilon, d, mode):
    fields, flags = _complexity_fields(scheme, kind, lam, epsilon, d, mode)
    infidelity = ratio = None
    if scheme.t < scheme.k:
        infidelity = output_infidelity(kind, scheme.k, scheme.t, lam, epsilon, d, mode)
        ratio = infidelity / epsilon
    return {
        "noise": kind, "k": scheme.k, "t": scheme.t, "lambda": lam,
        "epsilon": epsilon, "delta": scheme.delta,
        "n_std": baselines(lam, epsilon, scheme.delta).n_std,
        "output_infidelity": infidelity, "infidelity_ratio": ratio,
        "flag": ";".join(flags),
        **fields,
    }


def _output_row(kind, scheme, lam, epsilon, d):
    infidelity = output_infidelity(kind, scheme.k, scheme.t, lam, epsilon, d, EXACT)
    return {
        "noise": kind, "k": scheme.k, "t": scheme.t, "lambda": lam,
        "epsilon": epsilon, "delta": scheme.delta,
        "output_infidelity": infidelity, "infidelity_ratio": infidelity / epsilon,
    }


def cmd_figures(settings):
    """Data behind the four figure families, one CSV each

    The k- and t-sweeps always use the exact closed forms.

    Returns:
        list: Paths of the CSVs written
    """
    d = 2 ** target_qubits(settings.target)
    lam, delta = settings.lam, settings.delta
    kinds = settings.resolved_noise()
    out_dir = settings.out or os.path.join(config.OUTPUT_DIR, "figures")
    epsilons = [float(x) for x in np.logspace(np.log10(config.FIGURE_EPSILON_MIN),
                                              np.log10(config.FIGURE_EPSILON_MAX),
                                              config.FIGURE_EPSILON_POINTS)]
    epsilon = config.FIGURE_EPSILON
    sweep_k = [Scheme(k, 1, delta) for k in config.FIGURE_K_VALUES]
    sweep_t = [Scheme(config.FIGURE_T_ENSEMBLE, t, delta)
               for t in range(1, config.FIGURE_T_ENSEMBLE)]

    tables = {
        "infidelity": [_figure_row(kind, scheme, lam, eps, d, settings.mode)
                       for kind in kinds for scheme in settings.resolved_schemes()
                       for eps in epsilons],
        "k": [_figure_row(kind, scheme, lam, epsilon, d, EXACT)
              for kind in kinds for scheme in sweep_k],
        "t": [_figure_row(kind, scheme, lam, epsilon, d, EXACT)
              for kind in kinds for scheme in sweep_t],
        "output": [_output_row(kind, scheme, lam, epsilon, d)
                   for kind in kinds for scheme in sweep_k],
    }
    paths = []
    for key, rows in tables.items():
        rows = _sort_rows(rows, ["noise", "k", "t", "epsilon"])
        path = os.path.join(out_dir, config.FIGURE_FILES[key])
        paths.append(DataHandler.save_csv(rows, path, columns=config.FIGURE_COLUMNS))
    return paths


COMMANDS = {
    "analytic": cmd_analytic,
    "simulate": cmd_simulate,
    "compile": cmd_compile,
    "discriminate": cmd_discriminate,
    "figures": cmd_figures,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with one section per subcommand")
    common.add_argument("--target", help="bell | ghz:n | dicke:n:w | file:path")
    common.add_argument("--lambda", dest="lam", type=float,
                        help="second-largest eigenvalue of the strategy (1 = worst case)")
    common.add_argument("--epsilon", type=float, nargs="+", help="infidelities to sweep")
    common.add_argument("--delta", type=float, help="failure budget")
    common.add_argument("--k", type=int, nargs="+", help="copies per round")
    common.add_argument("--t", type=int, nargs="+", help="measured copies per round")
    common.add_argument("--noise", nargs="+", choices=NOISE_KINDS)
    common.add_argument("--rounds", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--mode", choices=MODES)
    common.add_argument("--out", help="output file (directory for figures)")
    common.add_argument("--workers", type=int,
                        help=f"worker threads, defaults to ${config.THREADS_ENV_VAR}")
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", action="store_true")
    verbosity.add_argument("--quiet", action="store_true")

    parser = argparse.ArgumentParser(prog="collective-qsv", description=config.TOOLKIT_TITLE)
    subparsers = parser.add_subparsers(dest="command", required=True)
    subparsers.add_parser("analytic", parents=[common], help="closed-form complexities")
    subparsers.add_parser("simulate", parents=[common], help="Monte Carlo protocol runs")
    compile_parser = subparsers.add_parser("compile", parents=[common],
                                           help="controlled-SWAP circuit and gate counts")
    compile_parser.add_argument("--n", type=int, help="qubits per register")
    compile_parser.add_argument("--distributed", action="store_true", default=None,
                                help="two-party construction with a Bell-pair ancilla")
    discriminate_parser = subparsers.add_parser("discriminate", parents=[common],
                                                help="significance of each noise model")
    discriminate_parser.add_argument("--observed", type=float, help="observed pass rate")
    discriminate_parser.add_argument("--samples", type=int, help="total number of samples")
    subparsers.add_parser("figures", parents=[common], help="figure data as CSV")
    return parser


def configure_logging(verbose=False, quiet=False):
    if verbose:
        level = logging.DEBUG
    elif quiet:
        level = logging.WARNING
    else:
        level = getattr(logging, config.LOG_LEVEL)
    logging.basicConfig(format=config.LOG_FORMAT)
    logging.getLogger().setLevel(level)


def main(argv=None):
    """Run one subcommand

    Returns:
        int: Exit code (0 ok, 2 usage/config, 3 dimension cap, 4 numerical invariant)
    """
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose, args.quiet)
    try:
        settings = build_config(args)
        COMMANDS[args.command](settings)
    except ParameterError as e:
        logger.error("%s", e)
        return config.EXIT_USAGE
    except DimensionOverflowError as e:
        logger.error("%s", e)
        return config.EXIT_RESOURCE
    except MemoryError as e:
        logger.error("out of memory at the requested dimension: %s", e)
        return config.EXIT_RESOURCE
    except InvalidStateError as e:
        logger.error("%s", e)
        return config.EXIT_NUMERICAL
    return config.EXIT_OK
