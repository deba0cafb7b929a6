"""
CLI entry-point for running episodes, planner suites and lane detection.

Run the module from the project root:

    python -m bench.main run scenarios/reference.yaml --planner teb --plot ref.svg
    python -m bench.main suite scenarios --out results.csv
    python -m bench.main lane-detect frame.ppm --speed 0.8

Exit codes: 0 on success, 2 on a configuration error, 3 when ``run --strict``
ends in a collision.
"""

import logging
import sys
from argparse import ArgumentParser, Namespace

from bench.data import ScenarioLoader, load_dir
from bench.evaluate import SuiteEvaluator, write_results_csv
from bench.plot import plot_trace
from core.config import settings
from core.errors import ScenarioConfigError
from core.imageio import read_ppm
from core.lane_vision import LanePipeline
from core.schemas import PLANNER_NAMES, CameraConfig, LaneVisionConfig
from core.simulation import EpisodeRunner, write_trace
from core.tracking import ExperimentStore

logging.basicConfig(
    level=settings.LOG_LEVEL,
    format="%(asctime)s | %(levelname)s | %(name)s | %(message)s",
)
logger = logging.getLogger("bench")

EXIT_OK = 0
EXIT_CONFIG_ERROR = 2
EXIT_COLLISION = 3


def run(args: Namespace) -> int:
    """Simulate one scenario and write the requested outputs."""
    scenario = ScenarioLoader(args.scenario).load()
    if args.planner:
        scenario = scenario.with_planner(args.planner)
    if args.noise is not None:
        scenario = scenario.with_lighting_noise(args.noise)

    runner = EpisodeRunner(scenario)
    if args.costmap:
        runner.build_global_costmap().save_pgm(args.costmap)
    metrics, trace = runner.run()
    if args.trace:
        write_trace(args.trace, trace)
    if args.plot and trace:
        plot_trace(trace, scenario, out_path=args.plot)
    print(metrics.model_dump_json())

    if args.strict and metrics.collided:
        return EXIT_COLLISION
    return EXIT_OK


def suite(args: Namespace) -> int:
    """Run the planner comparison over every scenario of a directory."""
    scenarios = load_dir(args.directory)
    evaluator = SuiteEvaluator(
        scenarios,
        planners=args.planners,
        noise_levels=args.noise,
        n_jobs=args.jobs,
        artifact_dir=args.artifacts,
    )
    results = evaluator.evaluate()
    write_results_csv(results, args.out, include_timing=args.timing)

    if args.track:
        store = ExperimentStore()
        for metrics, files in evaluator.runs:
            store.log_run(metrics, artifact_files=files)
    return EXIT_OK


def lane_detect(args: Namespace) -> int:
    """Print the lane target of one P6 image as a JSON line."""
    if args.scenario:
        scenario = ScenarioLoader(args.scenario).load()
        vision, camera = scenario.vision, scenario.camera
    else:
        vision, camera = LaneVisionConfig(), CameraConfig()
    image = read_ppm(args.image)
    target = LanePipeline(vision, camera).detect(image, args.speed)
    print(target.model_dump_json())
    return EXIT_OK


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="bench")
    commands = parser.add_subparsers(dest="command", required=True)

    run_parser = commands.add_parser("run", help="Simulate one scenario.")
    run_parser.add_argument("scenario", help="Path to a YAML scenario file.")
    run_parser.add_argument("--planner", choices=PLANNER_NAMES, default=None)
    run_parser.add_argument("--trace", default=None, help="JSON-lines trace path.")
    run_parser.add_argument("--plot", default=None, help="SVG plot path.")
    run_parser.add_argument("--costmap", default=None, help="Global costmap P5 path.")
    run_parser.add_argument("--noise", type=float, default=None)
    run_parser.add_argument(
        "--strict", action="store_true", help="Exit with 3 when the vehicle collides."
    )
    run_parser.set_defaults(handler=run)

    suite_parser = commands.add_parser("suite", help="Compare planners.")
    suite_parser.add_argument(
        "directory", nargs="?", default=settings.DEFAULT_SCENARIO_DIR
    )
    suite_parser.add_argument("--out", default="results.csv")
    suite_parser.add_argument(
        "--planners", nargs="+", choices=PLANNER_NAMES, default=list(PLANNER_NAMES)
    )
    suite_parser.add_argument("--noise", nargs="+", type=float, default=None)
    suite_parser.add_argument("--jobs", type=int, default=settings.SUITE_N_JOBS)
    suite_parser.add_argument("--artifacts", default=None)
    suite_parser.add_argument(
        "--track", action="store_true", help="Log every cell to MLflow."
    )
    suite_parser.add_argument(
        "--timing", action="store_true", help="Include wall-clock columns."
    )
    suite_parser.set_defaults(handler=suite)

    detect_parser = commands.add_parser("lane-detect", help="Detect the lane.")
    detect_parser.add_argument("image", help="P6 image path.")
    detect_parser.add_argument("--speed", type=float, default=0.0)
    detect_parser.add_argument("--scenario", default=None)
    detect_parser.set_defaults(handler=lane_detect)
    return parser


def main(argv: list[str] | None = None) -> int:
    """
    Parse ``argv`` and dispatch to the sub-command.

    Returns:
        The process exit code.
    """
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except (ScenarioConfigError, FileNotFoundError) as e:
        logger.error("Configuration error: %s", e)
        return EXIT_CONFIG_ERROR


if __name__ == "__main__":
    sys.exit(main())
