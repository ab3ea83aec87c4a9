import argparse
import json
import logging
import os
import sys

import ODgen
from ODgen.Analysis.Metrics import evaluate, load_detections
from ODgen.Errors.AnnotationParsingError import AnnotationParsingError
from ODgen.Errors.BackgroundTooSmallError import BackgroundTooSmallError
from ODgen.Errors.BehindCameraError import BehindCameraError
from ODgen.Errors.ConfigValidationError import ConfigValidationError
from ODgen.Errors.EmptyMeshError import EmptyMeshError
from ODgen.Errors.GenerationFailedError import GenerationFailedError
from ODgen.Errors.InvalidParamError import InvalidParamError
from ODgen.Errors.InvalidRangeError import InvalidRangeError
from ODgen.Errors.LevelTooLargeError import LevelTooLargeError
from ODgen.Errors.MeshParsingError import MeshParsingError
from ODgen.Errors.NoValidPlacementError import NoValidPlacementError
from ODgen.Errors.NonUnitDirectionError import NonUnitDirectionError
from ODgen.Errors.NumericalOverflowError import NumericalOverflowError
from ODgen.Errors.SchemaVersionMismatchError import SchemaVersionMismatchError
from ODgen.Errors.ShapeMismatchError import ShapeMismatchError
from ODgen.Errors.UnknownCategoryError import UnknownCategoryError
from ODgen.Errors.ZeroAreaImageError import ZeroAreaImageError
from ODgen.Generation.Annotations import read_annotations
from ODgen.Generation.Generator import generate_dataset
from ODgen.Parsing.ParseConfig import load_config
from ODgen.Sampling.PoseGrid import pixel_coverage_report
from ODgen.Transfer.Experiment import ExperimentConfig, FEATURE_CUT, run_ablation, run_transfer_experiment
from ODgen.Transfer.Training import FreezeSchedule

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

RUNTIME_ERRORS = (AnnotationParsingError, BackgroundTooSmallError, BehindCameraError, EmptyMeshError,
                  GenerationFailedError, InvalidParamError, InvalidRangeError, LevelTooLargeError,
                  MeshParsingError, NoValidPlacementError, NonUnitDirectionError, NumericalOverflowError,
                  SchemaVersionMismatchError, ShapeMismatchError, UnknownCategoryError, ZeroAreaImageError,
                  OSError)


class ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, "{}: error: {}\n".format(self.prog, message))


def _config_arguments(parser: argparse.ArgumentParser):
    parser.add_argument('--config', required=True, help='JSON configuration file')
    parser.add_argument('--seed', type=int, help='replaces master_seed and the experiment seeds')
    parser.add_argument('--jobs', type=int, default=1, help='number of worker threads')
    parser.add_argument('--output', help='output directory')
    parser.add_argument('--set', dest='overrides', action='append', default=[], metavar='KEY.PATH=VALUE',
                        help='override a configuration field, may be repeated')


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog='odgen', description='Synthetic object detection data generator')
    parser.add_argument('--version', action='version', version='%(prog)s ' + ODgen.__version__)
    parser.add_argument('-v', '--verbose', action='count', default=0, help='-v for progress, -vv for debugging')
    commands = parser.add_subparsers(dest='command', metavar='COMMAND')
    commands.required = True

    generate = commands.add_parser('generate', help='render a labelled dataset')
    _config_arguments(generate)
    generate.set_defaults(handler=run_generate)

    evaluation = commands.add_parser('evaluate', help='score detections against an annotation file')
    evaluation.add_argument('--gt', required=True, help='annotation file of a generated dataset')
    evaluation.add_argument('--dets', required=True, help='JSON array of detections')
    evaluation.add_argument('--max-dets', type=int, default=100, help='detections kept per image')
    evaluation.add_argument('--output', help='write the report as JSON to this file')
    evaluation.set_defaults(handler=run_evaluate)

    for name, handler, text in (('experiment-distance', run_distance, 'feature distances, frozen vs finetuned'),
                                ('experiment-freeze', run_freeze, 'accuracy per freeze schedule'),
                                ('ablate', run_ablate, 'accuracy per pipeline toggle combination')):
        command = commands.add_parser(name, help=text)
        _config_arguments(command)
        command.set_defaults(handler=handler)

    inspect = commands.add_parser('inspect', help='pose grid and pixel coverage of a configuration')
    _config_arguments(inspect)
    inspect.add_argument('--gt', help='also summarise this annotation file')
    inspect.set_defaults(handler=run_inspect)
    return parser


def _load(args) -> tuple:
    return load_config(args.config, args.overrides, args.seed, args.output if args.command == 'generate' else None)


def _experiment(args) -> tuple:
    config, experiment = _load(args)
    if experiment is None:
        experiment = ExperimentConfig(generation=config)
    directory = args.output or experiment.output_dir
    return experiment, directory


def run_generate(args) -> int:
    config, _ = _load(args)
    manifest = generate_dataset(config, args.jobs)
    print("{} images written to {}".format(manifest.total_images, config.output_dir))
    for name, count in manifest.per_class_counts.items():
        print("  {}: {}".format(name, count))
    return EXIT_OK


def run_evaluate(args) -> int:
    records, manifest = read_annotations(args.gt)
    report = evaluate(load_detections(args.dets), records, args.max_dets, manifest.categories)
    print(report.to_table(), end="")
    if args.output:
        with open(args.output, "w") as report_file:
            report_file.write(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def run_distance(args) -> int:
    experiment, directory = _experiment(args)
    frozen = [schedule for schedule in experiment.schedules
              if schedule.frozen_prefix_layers >= FEATURE_CUT and schedule.unfreeze_at_step is None][:1]
    finetuned = [schedule for schedule in experiment.schedules
                 if schedule.frozen_prefix_layers == 0 and schedule.unfreeze_at_step is None][:1]
    schedules = (frozen or [FreezeSchedule('freeze-extractor', FEATURE_CUT)]) + \
                (finetuned or [FreezeSchedule('finetune', 0)])
    report = run_transfer_experiment(experiment, args.jobs, schedules)
    report.save(directory)
    print(report.to_table(), end="")
    return EXIT_OK


def run_freeze(args) -> int:
    experiment, directory = _experiment(args)
    report = run_transfer_experiment(experiment, args.jobs, histograms=False)
    report.save(directory)
    print(report.to_table(), end="")
    return EXIT_OK


def run_ablate(args) -> int:
    experiment, directory = _experiment(args)
    table = run_ablation(experiment, args.jobs)
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "ablation.json"), "w") as ablation_file:
        ablation_file.write(json.dumps(table.to_dict(orient='records'), indent=2) + "\n")
    print(table.drop(columns=['accuracies']).to_string(index=False))
    return EXIT_OK


def run_inspect(args) -> int:
    config, _ = _load(args)
    print("pose grid: {} poses".format(config.pose_grid.size))
    for spec in config.objects:
        print("\n{} (class {})".format(spec.class_name, spec.class_id))
        print(pixel_coverage_report(spec.load(), config.camera, config.pose_grid).to_string(index=False))
    if args.gt:
        records, manifest = read_annotations(args.gt)
        print("\ndataset of {} images, generator {}, master seed {}".format(
            manifest.total_images, manifest.generator_version, manifest.master_seed))
        for name, count in manifest.per_class_counts.items():
            print("  {}: {}".format(name, count))
    return EXIT_OK


def parse_and_dispatch(argv=None) -> int:
    """
    Runs one subcommand.

    :param argv: arguments without the program name, defaults to sys.argv[1:]
    :return: 0 on success, 1 on usage errors, 2 on configuration errors, 3 on runtime failures
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_request:
        return exit_request.code if isinstance(exit_request.code, int) else EXIT_USAGE

    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, format='%(asctime)s - %(levelname)s - %(message)s')
    if getattr(args, 'jobs', 1) < 1:
        parser.print_usage(sys.stderr)
        print("odgen: error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_USAGE

    try:
        return args.handler(args)
    except ConfigValidationError as error:
        print(error, file=sys.stderr)
        return EXIT_CONFIG
    except RUNTIME_ERRORS as error:
        logger.debug("command failed", exc_info=True)
        print(error, file=sys.stderr)
        return EXIT_RUNTIME


def main():
    sys.exit(parse_and_dispatch())


if __name__ == "__main__":
    main()
