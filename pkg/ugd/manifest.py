"""Provenance record written next to every command's outputs."""
import os
import json
import hashlib
import logging
from datetime import datetime, timezone
from dataclasses import dataclass, field, asdict

from .__version__ import __version__
from .io import GRAPH_FILES

LOGGER = logging.getLogger('UGD')

MANIFEST_FILE = 'manifest.json'


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(',', ':'))


def config_hash(config):
    """SHA-256 of the sorted-key JSON form, so field order does not matter."""
    return hashlib.sha256(canonical_json(config).encode('utf-8')).hexdigest()


def _update_from_file(h, path):
    with open(path, 'rb') as fp:
        while True:
            chunk = fp.read(1024 * 1024)
            if not chunk:
                break
            h.update(chunk)


def graph_hash(indir):
    """SHA-256 over the graph files present in ``indir``, in fixed order; None without input."""
    if indir is None:
        return None
    h = hashlib.sha256()
    for name in GRAPH_FILES:
        path = os.path.join(indir, name)
        if os.path.isfile(path):
            h.update(name.encode('utf-8'))
            _update_from_file(h, path)
    return h.hexdigest()


def now():
    return datetime.now(timezone.utc).isoformat(timespec='seconds')


@dataclass
class PipelineManifest:
    command: str
    config_hash: str
    input_graph_hash: str = None
    started: str = field(default_factory=now)
    finished: str = None
    outputs: list = field(default_factory=list)
    version: str = __version__

    def write(self, outdir):
        """Finish the record and write it atomically into ``outdir``."""
        self.finished = self.finished or now()
        self.outputs = sorted(set(self.outputs))
        path = os.path.join(outdir, MANIFEST_FILE)
        tmp = path + '.tmp'
        with open(tmp, 'w') as fp:
            json.dump(asdict(self), fp, indent=2, sort_keys=True)
            fp.write('\n')
        os.replace(tmp, path)
        LOGGER.debug('manifest written to %s', path)
        return path

    @classmethod
    def read(cls, outdir):
        with open(os.path.join(outdir, MANIFEST_FILE)) as fp:
            return cls(**json.load(fp))
