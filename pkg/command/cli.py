import click
import glob
import json
import logging
import os
import sys

# Add the project root directory to the Python path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from bounds import BoundQuery, worst_case_bound
from common.errors import ConfigError, FormatError, PoseUncertaintyError
from common.rng import stream
from config.reader import ExperimentConfig, load_config, load_scene_inputs
from conformal import (CalibrationRecord, PredictionSet, calibrate, load_pkhm, load_pkvf, predict_set,
                       save_pkhm, save_pkvf)
from geom3d import load_pose
from pipeline.experiments import (make_scene, nonconformity_config, run_bounds_experiment,
                                  run_coverage_experiment, run_equivalence_check, run_invariance_check)
from pipeline.plotting import plot_all
from pipeline.results import (INVARIANCE_COLUMNS, SCENES_COLUMNS, save_bounds_report, save_coverage_report,
                              scenes_frame, write_csv, write_json)
from purse import Purse, build_purse, ransag

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2
EXIT_PURSE_EMPTY = 3
LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'


def common_options(func):
    """--seed, --config and --out, shared by every subcommand"""
    func = click.option('--out', 'out', default='./output', show_default=True,
                        help='Output directory')(func)
    func = click.option('--config', 'config_path', default=None, type=click.Path(exists=True, dir_okay=False),
                        help='JSON or YAML file overriding config/config.yaml')(func)
    func = click.option('--seed', type=int, default=None, help='64-bit seed (overrides the config)')(func)
    return func


def _config(config_path, seed, **overrides) -> ExperimentConfig:
    overrides['seed'] = seed
    return load_config(config_path, overrides)


def _emit(data: dict) -> None:
    click.echo(json.dumps(data, indent=2))


def _scene_path(out: str, scene_id: int, suffix: str) -> str:
    return os.path.join(out, f'scene_{scene_id:06d}{suffix}')


def _detection_suffix(config: ExperimentConfig) -> str:
    return '.pkvf' if config.kind == 'pvnet' else '.pkhm'


def _load_scene_dir(scene_dir: str, config: ExperimentConfig):
    """(labels, detection) pairs written by ``synth``, ordered by scene_id"""
    pairs = []
    for path in sorted(glob.glob(os.path.join(scene_dir, 'scene_*.json'))):
        with open(path, 'r', encoding='utf-8') as f:
            meta = json.load(f)
        detection_path = path[:-len('.json')] + _detection_suffix(config)
        if not os.path.exists(detection_path):
            raise FormatError(f"detection file {detection_path} is missing")
        detection = load_pkvf(detection_path) if config.kind == 'pvnet' else load_pkhm(detection_path)
        pairs.append((meta['labels'], detection))
    if not pairs:
        raise click.UsageError(f"no scene_*.json files in {scene_dir}")
    return pairs


@click.group()
@click.option('--verbose', is_flag=True, help='Log at DEBUG level')
def cli(verbose):
    """Conformal keypoint prediction sets, PURSEs and certified pose error bounds."""
    logging.basicConfig(level=logging.INFO, format=LOG_FORMAT)
    logging.getLogger().setLevel(logging.DEBUG if verbose else logging.INFO)


@cli.command()
@common_options
@click.option('--count', type=int, default=None, help='Number of scenes (default: n_scenes)')
@click.option('--start', type=int, default=0, show_default=True, help='First scene id')
def synth(seed, config_path, out, count, start):
    """Generate synthetic scenes: detections, poses and labels."""
    config = _config(config_path, seed)
    model, intrinsics = load_scene_inputs(config)
    count = config.n_scenes if count is None else count
    scenes = []
    for scene_id in range(start, start + count):
        scene, detection = make_scene(config, model, intrinsics, scene_id)
        if config.kind == 'pvnet':
            save_pkvf(detection, _scene_path(out, scene_id, '.pkvf'))
        else:
            save_pkhm(detection, _scene_path(out, scene_id, '.pkhm'))
        write_json({'scene_id': scene_id, 'pose': scene.pose.to_dict(), 'labels': scene.labels},
                   _scene_path(out, scene_id, '.json'))
        scenes.append(scene)
    write_csv(scenes_frame(scenes), SCENES_COLUMNS, os.path.join(out, 'scenes.csv'))
    _emit({'scenes': count, 'out': out})


@cli.command('calibrate')
@common_options
@click.option('--scenes', 'scene_dir', default=None, type=click.Path(exists=True, file_okay=False),
              help='Directory written by synth (default: generate scenes 0..n_calib-1)')
def calibrate_command(seed, config_path, out, scene_dir):
    """Score a calibration split and write the CalibrationRecord."""
    config = _config(config_path, seed)
    ncfg = nonconformity_config(config)
    if scene_dir:
        dataset = _load_scene_dir(scene_dir, config)
    else:
        model, intrinsics = load_scene_inputs(config)
        dataset = []
        for scene_id in range(config.n_calib):
            scene, detection = make_scene(config, model, intrinsics, scene_id)
            dataset.append((scene.labels, detection))
    record = calibrate(dataset, ncfg, seed=config.seed)
    path = os.path.join(out, 'calibration.json')
    write_json(record.to_dict(), path)
    _emit({'n': record.n, 'kind': ncfg.kind, 'calibration': path})


@cli.command('predict-sets')
@common_options
@click.option('--calibration', 'calibration_path', required=True, type=click.Path(exists=True, dir_okay=False))
@click.option('--epsilon', type=float, default=None, help='Miscoverage level (default: first configured)')
@click.option('--detection', 'detection_path', default=None, type=click.Path(exists=True, dir_okay=False),
              help='.pkhm heatmap or .pkvf vote fields')
@click.option('--scene-id', type=int, default=None, help='Use the detection of this synthetic scene')
def predict_sets(seed, config_path, out, calibration_path, epsilon, detection_path, scene_id):
    """Build keypoint prediction sets for one detection."""
    config = _config(config_path, seed)
    record = CalibrationRecord.load(calibration_path)
    epsilon = config.epsilons[0] if epsilon is None else epsilon
    if detection_path:
        detection = load_pkvf(detection_path) if detection_path.endswith('.pkvf') else load_pkhm(detection_path)
    elif scene_id is not None:
        model, intrinsics = load_scene_inputs(config)
        _, detection = make_scene(config, model, intrinsics, scene_id)
    else:
        raise click.UsageError('give --detection or --scene-id')
    pred = predict_set(detection, record, epsilon, stream(config.seed, 'vote-pairs', scene_id or 0))
    path = os.path.join(out, 'prediction_set.json')
    write_json(pred.to_dict(), path)
    _emit({'epsilon': epsilon, 'quantile': pred.quantile, 'kind': pred.kind, 'prediction_set': path})


@cli.command('purse')
@common_options
@click.option('--prediction-set', 'pred_path', required=True, type=click.Path(exists=True, dir_okay=False))
@click.option('--trans-bound', type=float, default=None, help='Translation ball radius (default: config)')
def purse_command(seed, config_path, out, pred_path, trans_bound):
    """Turn prediction sets into a PURSE."""
    config = _config(config_path, seed, trans_bound=trans_bound)
    model, intrinsics = load_scene_inputs(config)
    purse = build_purse(PredictionSet.load(pred_path), intrinsics, model, config.trans_bound)
    path = os.path.join(out, 'purse.json')
    write_json(purse.to_dict(), path)
    _emit({'keypoints': purse.num_keypoints, 'trans_bound': purse.trans_bound, 'purse': path})


@cli.command('ransag')
@common_options
@click.option('--purse', 'purse_path', required=True, type=click.Path(exists=True, dir_okay=False))
@click.option('--trials', type=int, default=None, help='Number of trials T (default: config)')
def ransag_command(seed, config_path, out, purse_path, trials):
    """Sample poses from a PURSE and average them."""
    config = _config(config_path, seed, trials=trials)
    purse = Purse.load(purse_path)
    if purse.source is None:
        raise click.UsageError(f"{purse_path} carries no source; rebuild it with the purse command")
    src = purse.source
    result = ransag(purse, src.prediction, src.model, src.intrinsics, config.trials, config.seed)
    write_json(result.to_dict(with_samples=True), os.path.join(out, 'ransag.json'))
    pose_path = os.path.join(out, 'pose.json')
    write_json(result.average.to_dict(), pose_path)
    _emit({'n_samples': len(result.samples), 'fallback_used': result.fallback_used, 'pose': pose_path})


@cli.command('bound')
@common_options
@click.option('--purse', 'purse_path', required=True, type=click.Path(exists=True, dir_okay=False))
@click.option('--pose', 'pose_path', required=True, type=click.Path(exists=True, dir_okay=False))
@click.option('--lambda', 'lam', type=float, default=1.0, show_default=True,
              help='1 bounds rotation, 0 bounds translation')
@click.option('--witness-trials', type=int, default=None, help='RANSAG trials for the lower witness')
@click.option('--order', type=click.IntRange(1, 2), default=None,
              help='Relaxation order, 1 (Shor) or 2 (moment) (default: config)')
@click.pass_context
def bound_command(ctx, seed, config_path, out, purse_path, pose_path, lam, witness_trials, order):
    """Certified worst-case distance from a pose over a PURSE."""
    config = _config(config_path, seed, witness_trials=witness_trials, relaxation_order=order)
    if not 0.0 <= lam <= 1.0:
        raise click.BadParameter(f"lambda must be in [0, 1], got {lam}", param_hint='--lambda')
    result = worst_case_bound(BoundQuery(Purse.load(purse_path), load_pose(pose_path), lam),
                              witness_trials=config.witness_trials, seed=config.seed,
                              order=config.relaxation_order, **config.solver.solver_args())
    data = result.to_dict()
    write_json(data, os.path.join(out, 'bound.json'))
    _emit(data)
    if not result.bounded:
        ctx.exit(EXIT_PURSE_EMPTY)


@cli.command('coverage-exp')
@common_options
@click.option('--checks', is_flag=True, help='Also run the rescaling invariance and membership equivalence checks')
def coverage_exp(seed, config_path, out, checks):
    """Keypoint-set and PURSE coverage over calibration resamples."""
    config = _config(config_path, seed)
    report = run_coverage_experiment(config)
    paths = save_coverage_report(report, out)
    data = {'agreement_rate': report.agreement_rate, 'summary': report.summary.to_dict(orient='records'),
            'files': paths}
    if checks:
        invariance = run_invariance_check(config)
        write_csv(invariance, INVARIANCE_COLUMNS, os.path.join(out, 'invariance.csv'))
        equivalence = run_equivalence_check(config)
        write_json(equivalence.to_dict(), os.path.join(out, 'equivalence.json'))
        data['invariance_mismatches'] = int(invariance['mismatches'].sum())
        data['equivalence'] = equivalence.to_dict()
    write_json(data, os.path.join(out, 'coverage.json'))
    _emit(data)


@cli.command('bounds-exp')
@common_options
def bounds_exp(seed, config_path, out):
    """Worst-case bounds and actual errors over synthetic scenes."""
    config = _config(config_path, seed)
    report = run_bounds_experiment(config)
    paths = save_bounds_report(report, out)
    _emit({'rows': len(report.rows), 'files': paths})


@cli.command('plot')
@common_options
@click.option('--results', 'results_dir', default=None, type=click.Path(exists=True, file_okay=False),
              help='Directory holding the experiment CSVs (default: --out)')
def plot_command(seed, config_path, out, results_dir):
    """Static PNG plots of experiment CSVs."""
    saved = plot_all(results_dir or out, os.path.join(out, 'plots'))
    _emit({'plots': saved})


def _fail(error: Exception, code: int) -> int:
    click.echo(json.dumps({'error': type(error).__name__, 'message': str(error)}), err=True)
    return code


def main(argv=None) -> int:
    """
    Run the CLI and map failures to exit codes.

    Returns:
        0 on success, 1 on usage or configuration errors, 2 on runtime
        errors, 3 when ``bound`` finds the PURSE empty
    """
    try:
        result = cli.main(args=argv, prog_name='pose-uncertainty', standalone_mode=False)
    except (click.ClickException, click.Abort) as e:
        return _fail(e, EXIT_USAGE)
    except (ConfigError, FormatError) as e:
        return _fail(e, EXIT_USAGE)
    except PoseUncertaintyError as e:
        logger.debug(f"Runtime error: {str(e)}", exc_info=True)
        return _fail(e, EXIT_RUNTIME)
    except Exception as e:
        logger.error(f"Unexpected error: {str(e)}", exc_info=True)
        return _fail(e, EXIT_RUNTIME)
    return result if isinstance(result, int) else EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
