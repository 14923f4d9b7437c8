import os
import json
import logging
import configparser

from .exceptions import InvalidParameterValue
from .noise import NoiseSpec
from .structure import ThresholdSchedule
from .features import FdConfig
from .driver import DenoiseConfig
from .evaluate import ClassifierConfig

LOGGER = logging.getLogger('UGD')

DEFAULT_CFG = os.path.join(os.path.dirname(__file__), 'default.cfg')

PRESETS = {
    'paper-synthetic': {
        'sbm': dict(n=400, k=4, p_in=0.05, p_out=0.005, feature_centers_sep=1.5, seed=0, d=32, feature_std=0.5),
        'noise': dict(feature_ratio=0.5, feature_mode='gaussian-replace',
                      structure_ratio=0.1, structure_mode='cross-class', seed=0),
        'denoise': dict(theta_schedule=dict(main_theta=0.05, warmup_theta=-1.0, warmup_iters=1),
                        fd=dict(beta=0.0, gamma=5e-4, lr=1e-3, epochs_per_step=200),
                        epsilon=30, max_iters=5),
        'classifier': dict(),
    },
}


def config_files(cfgfiles=None):
    """Packaged defaults, then the given files, then ``$UGD_CFG``."""
    files = [DEFAULT_CFG]
    if cfgfiles:
        files.extend(cfgfiles)
    if 'UGD_CFG' in os.environ:
        files.append(os.environ['UGD_CFG'])
    return files


def load_config(cfgfiles=None):
    """
    Read the runtime configuration with configparser.

    :param cfgfiles: extra INI files, later ones win
    :return: configparser obj
    """
    files = config_files(cfgfiles)
    for path in files[1:]:
        if not os.path.isfile(path):
            raise InvalidParameterValue('config file not found: {}'.format(path))
    cparser = configparser.ConfigParser(interpolation=None)
    cparser.read(files)
    return cparser


def configure_logging(config, level=None):
    """Install a handler on the ``UGD`` logger from the ``[logging]`` section."""
    level = (level or config.get('logging', 'level', fallback='INFO')).upper()
    if not isinstance(logging.getLevelName(level), int):
        raise InvalidParameterValue('unknown log level {}'.format(level))
    fmt = config.get('logging', 'format', fallback='%(levelname)s %(message)s')
    logfile = config.get('logging', 'file', fallback='').strip()
    handler = logging.FileHandler(logfile) if logfile else logging.StreamHandler()
    handler.setFormatter(logging.Formatter(fmt))
    logger = logging.getLogger('UGD')
    for old in list(logger.handlers):
        logger.removeHandler(old)
        old.close()
    logger.addHandler(handler)
    logger.setLevel(level)
    return logger


def get_threads(config):
    """Worker threads for ``bench``/``sweep``: ``$UGD_THREADS`` overrides ``[runtime] threads``."""
    raw = os.environ.get('UGD_THREADS') or config.get('runtime', 'threads', fallback='1')
    try:
        threads = int(raw)
    except ValueError:
        raise InvalidParameterValue('threads must be an integer, got {!r}'.format(raw))
    if threads < 1:
        raise InvalidParameterValue('threads must be >= 1, got {}'.format(threads))
    return threads


def read_json(path):
    if not path:
        return {}
    try:
        with open(path) as fp:
            data = json.load(fp)
    except json.JSONDecodeError as e:
        raise InvalidParameterValue('{} is not valid JSON: {}'.format(path, e))
    if not isinstance(data, dict):
        raise InvalidParameterValue('{} must hold a JSON object'.format(path))
    return data


def merge(base, overrides):
    """Nested dict update; ``None`` overrides are ignored so unset CLI flags keep file values."""
    out = dict(base)
    for key, value in overrides.items():
        if value is None:
            continue
        if isinstance(value, dict):
            out[key] = merge(out.get(key) or {}, value)
        else:
            out[key] = value
    return out


def merge_denoise(base, overrides):
    """
    :func:`merge` for denoising configs. A main threshold given without a
    warm-up threshold shifts the base warm-up along with it, keeping the gap.
    """
    merged = merge(base, overrides)
    schedule = base.get('theta_schedule') or {}
    given = overrides.get('theta_schedule') or {}
    if not (isinstance(schedule, dict) and isinstance(given, dict)):
        return merged
    if given.get('main_theta') is None or given.get('warmup_theta') is not None:
        return merged
    numbers = [schedule.get('main_theta', 0.0), schedule.get('warmup_theta')]
    if all(isinstance(x, (int, float)) for x in numbers):
        base_schedule = ThresholdSchedule(main_theta=numbers[0], warmup_theta=numbers[1])
        shifted = base_schedule.with_main(float(given['main_theta']))
        merged['theta_schedule'] = dict(merged['theta_schedule'], warmup_theta=shifted.warmup_theta)
    return merged


def denoise_config(path=None, **overrides):
    return DenoiseConfig.from_dict(merge_denoise(read_json(path), overrides))


def classifier_config(path=None, **overrides):
    return ClassifierConfig.from_dict(merge(read_json(path), overrides))


def noise_spec(path=None, **overrides):
    return NoiseSpec.from_dict(merge(read_json(path), overrides))


def load_preset(name, noise_path=None, denoise_path=None, cls_path=None):
    """
    Preset configs, with values from the optional JSON files taking precedence.

    :return: (sbm kwargs, NoiseSpec, DenoiseConfig, ClassifierConfig)
    """
    if name not in PRESETS:
        raise InvalidParameterValue('unknown preset {}, choose from {}'.format(name, ', '.join(sorted(PRESETS))))
    preset = PRESETS[name]
    return (dict(preset['sbm']),
            NoiseSpec.from_dict(merge(preset['noise'], read_json(noise_path))),
            DenoiseConfig.from_dict(merge_denoise(preset['denoise'], read_json(denoise_path))),
            ClassifierConfig.from_dict(merge(preset['classifier'], read_json(cls_path))))


def describe_defaults():
    """Every experiment config field with its default, for ``--help`` epilogs."""
    lines = []
    for title, obj in (('denoise', DenoiseConfig()), ('theta_schedule', ThresholdSchedule()),
                       ('fd', FdConfig()), ('classifier', ClassifierConfig()), ('noise', NoiseSpec())):
        for key, value in obj.to_dict().items():
            if isinstance(value, dict):
                continue
            lines.append('{}.{}={}'.format(title, key, json.dumps(value)))
    return lines
