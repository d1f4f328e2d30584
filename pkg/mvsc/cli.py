import argparse
import logging
import sys
from typing import Dict, List, Optional

from .config import ConfigError, build_config, load_config_file
from .experiment import EXIT_INPUT_ERROR, ExperimentController

logger = logging.getLogger(__name__)

COMMANDS = ("fit", "eval", "sweep", "synth")

# (flag, help) per group; every value arrives as a string and is parsed by config.build_config
SOLVER_FLAGS = (
    ("--lambda", "Gewicht der Nuklearnorm (Default 0.1)"),
    ("--beta", "Gewicht des Sichten-Graph-Terms (Default 0.1)"),
    ("--gamma", "Gewicht des latenten Graph-Terms (Default 0.1, 0 = GRMSC)"),
    ("--latent-dim", "Latente Dimension m oder 'auto'"),
    ("--knn", "Nachbarn k im k-NN-Graphen (Default 5)"),
    ("--sigma", "Kernelbreite der Sichten-Graphen oder 'auto'"),
    ("--latent-sigma", "Kernelbreite des latenten Graphen oder 'auto'"),
    ("--mu0", "Start-Penalty (Default 1e-4)"),
    ("--rho", "Penalty-Wachstum (Default 1.2)"),
    ("--mu-max", "Penalty-Obergrenze (Default 1e6)"),
    ("--eps", "Abbruchschwelle der Residuen (Default 1e-6)"),
    ("--max-iter", "Maximale Iterationen (Default 300)"),
    ("--seed", "Seed für Y-Initialisierung und ersten k-means-Lauf"),
    ("--ly-refresh", "L_Y-Neuberechnung: every, every:<t> oder frozen:<t>"),
)

DATA_FLAGS = (
    ("--dataset", "Datensatz-Verzeichnis (view_1.csv ... view_V.csv, labels.csv)"),
    ("--clusters", "Anzahl Cluster c (Default: aus labels.csv)"),
    ("--n-per-cluster", "Synthetisch: Samples pro Cluster"),
    ("--synth-clusters", "Synthetisch: Anzahl Cluster"),
    ("--views", "Synthetisch: Anzahl Sichten"),
    ("--synth-latent-dim", "Synthetisch: latente Dimension"),
    ("--view-dims", "Synthetisch: Dimensionen pro Sicht, z.B. 12,10,8"),
    ("--noise", "Synthetisch: Rauschstärke"),
    ("--separation", "Synthetisch: Mindestabstand der Zentren"),
    ("--data-seed", "Synthetisch: Seed des Generators"),
)

EXPERIMENT_FLAGS = (
    ("--runs", "Anzahl Clustering-Läufe (Default 30)"),
    ("--ablation", "DGRMSC, GRMSC oder BOTH"),
    ("--out", "Ausgabeverzeichnis (Default results)"),
    ("--sweep-runs", "Läufe pro Gitterpunkt im Sweep"),
    ("--lambda-grid", "Sweep-Werte für lambda, kommagetrennt"),
    ("--beta-grid", "Sweep-Werte für beta"),
    ("--gamma-grid", "Sweep-Werte für gamma"),
    ("--latent-dim-grid", "Sweep-Werte für m"),
    ("--knn-grid", "Sweep-Werte für k"),
)

SWITCHES = (
    ("--transpose", "CSV-Dateien sind Samples x Features"),
    ("--minmax", "Features je Sicht auf [0, 1] skalieren"),
    ("--zero-errors", "Fehlerterme E_L, E_S auf 0 festhalten"),
    ("--refit-per-run", "Pro Lauf neu fitten (Y neu gesät)"),
)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="key=value Konfigurationsdatei")
    for title, flags in (("Solver", SOLVER_FLAGS), ("Daten", DATA_FLAGS), ("Experiment", EXPERIMENT_FLAGS)):
        group = common.add_argument_group(title)
        for flag, help_text in flags:
            group.add_argument(flag, default=argparse.SUPPRESS, help=help_text)
    switches = common.add_argument_group("Schalter")
    for flag, help_text in SWITCHES:
        switches.add_argument(flag, action="store_const", const="true", default=argparse.SUPPRESS, help=help_text)
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="Debug-Ausgaben")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="Nur Warnungen und Fehler")

    parser = argparse.ArgumentParser(
        prog="dgrmsc",
        description="Multi-View Subspace Clustering mit latenter Darstellung und dualer Graph-Regularisierung",
    )
    subparsers = parser.add_subparsers(dest="command", metavar="command")
    subparsers.required = True
    descriptions = {
        "fit": "Einmal fitten und Y, W, Z, E_L, E_S, Affinität und Trace schreiben",
        "eval": "Fitten und Spektral-Clustering über mehrere Seeds auswerten",
        "sweep": "Parameter-Gitter auswerten und sweep.csv schreiben",
        "synth": "Synthetischen Datensatz erzeugen und speichern",
    }
    for command in COMMANDS:
        subparsers.add_parser(command, parents=[common], help=descriptions[command],
                              description=descriptions[command])
    return parser


def configure_logging(verbose: bool = False, quiet: bool = False):
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def collect_settings(args: argparse.Namespace) -> Dict[str, str]:
    """Config file values overridden by flags given on the command line."""
    flags = {key: value for key, value in vars(args).items()
             if key not in ("command", "config", "verbose", "quiet")}
    settings = load_config_file(args.config) if hasattr(args, "config") else {}
    settings.update(flags)
    return settings


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose, args.quiet)
    try:
        config = build_config(collect_settings(args))
    except ConfigError as e:
        print(f"Konfigurations-Fehler: {str(e)}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    logger.debug("Running '%s' with %s", args.command, config)
    return ExperimentController(config).run(args.command)
