"""Reading and writing graph directories.

A graph directory holds:

``graph.edges``
    UTF-8 text, one ``u<TAB>v`` pair per line.
``graph.features``
    binary: magic ``UGDF``, u32 version (1), u64 n, u64 d, then n*d
    little-endian float32 values in row-major order.
``graph.labels`` (optional)
    text, one integer per line.
``graph.masks`` (optional)
    text, one of ``train``, ``val``, ``test``, ``none`` per line.
"""
import os
import struct
import logging

import numpy as np

from .exceptions import GraphFormatError, InvalidParameterValue
from .graph import build_graph, MASK_NAMES

LOGGER = logging.getLogger('UGD')

EDGES_FILE = 'graph.edges'
FEATURES_FILE = 'graph.features'
LABELS_FILE = 'graph.labels'
MASKS_FILE = 'graph.masks'
GRAPH_FILES = (EDGES_FILE, FEATURES_FILE, LABELS_FILE, MASKS_FILE)

FEATURES_MAGIC = b'UGDF'
FEATURES_VERSION = 1
_HEADER = struct.Struct('<4sIQQ')


def write_features(path, X):
    X = np.ascontiguousarray(X, dtype='<f4')
    n, d = X.shape
    with open(path, 'wb') as fp:
        fp.write(_HEADER.pack(FEATURES_MAGIC, FEATURES_VERSION, n, d))
        fp.write(X.tobytes(order='C'))


def read_features(path):
    with open(path, 'rb') as fp:
        header = fp.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise GraphFormatError('{}: truncated header'.format(path))
        magic, version, n, d = _HEADER.unpack(header)
        if magic != FEATURES_MAGIC:
            raise GraphFormatError('{}: bad magic {!r}'.format(path, magic))
        if version != FEATURES_VERSION:
            raise GraphFormatError('{}: unsupported version {}'.format(path, version))
        payload = fp.read()
    if len(payload) != 4 * n * d:
        raise GraphFormatError('{}: expected {} feature bytes, found {}'.format(path, 4 * n * d, len(payload)))
    return np.frombuffer(payload, dtype='<f4').reshape(n, d).astype(np.float64)


def write_edges(path, edges):
    with open(path, 'w', encoding='utf-8', newline='\n') as fp:
        for u, v in edges:
            fp.write('{}\t{}\n'.format(int(u), int(v)))


def read_edges(path):
    edges = []
    with open(path, 'r', encoding='utf-8') as fp:
        for lineno, line in enumerate(fp, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split('\t')
            if len(parts) != 2:
                raise GraphFormatError('{}:{}: expected "u<TAB>v", got {!r}'.format(path, lineno, line))
            try:
                edges.append((int(parts[0]), int(parts[1])))
            except ValueError:
                raise GraphFormatError('{}:{}: non-integer node id in {!r}'.format(path, lineno, line))
    return edges


def _read_lines(path):
    with open(path, 'r', encoding='utf-8') as fp:
        return [line.strip() for line in fp if line.strip()]


def write_graph(g, outdir):
    """
    Write a graph directory. Returns the list of files written.
    """
    os.makedirs(outdir, exist_ok=True)
    written = []
    write_edges(os.path.join(outdir, EDGES_FILE), g.edges)
    write_features(os.path.join(outdir, FEATURES_FILE), g.X)
    written += [EDGES_FILE, FEATURES_FILE]
    if g.labels is not None:
        with open(os.path.join(outdir, LABELS_FILE), 'w', encoding='utf-8', newline='\n') as fp:
            fp.writelines('{}\n'.format(int(y)) for y in g.labels)
        written.append(LABELS_FILE)
    if g.masks is not None:
        names = np.full(g.n, 'none', dtype=object)
        for name in MASK_NAMES:
            names[g.masks[name]] = name
        with open(os.path.join(outdir, MASKS_FILE), 'w', encoding='utf-8', newline='\n') as fp:
            fp.writelines('{}\n'.format(name) for name in names)
        written.append(MASKS_FILE)
    LOGGER.debug('wrote graph n=%s |E|=%s to %s', g.n, g.num_edges, outdir)
    return written


def read_graph(indir):
    """
    Read a graph directory written by :func:`write_graph` (or by hand).

    :param indir: directory path
    :return: Graph
    """
    edges_path = os.path.join(indir, EDGES_FILE)
    features_path = os.path.join(indir, FEATURES_FILE)
    for path in (edges_path, features_path):
        if not os.path.exists(path):
            raise GraphFormatError('missing graph file {}'.format(path))
    X = read_features(features_path)
    n = X.shape[0]
    edges = read_edges(edges_path)

    labels = None
    labels_path = os.path.join(indir, LABELS_FILE)
    if os.path.exists(labels_path):
        try:
            labels = [int(x) for x in _read_lines(labels_path)]
        except ValueError as e:
            raise GraphFormatError('{}: {}'.format(labels_path, e))
        if len(labels) != n:
            raise GraphFormatError('{}: {} labels for {} nodes'.format(labels_path, len(labels), n))

    masks = None
    masks_path = os.path.join(indir, MASKS_FILE)
    if os.path.exists(masks_path):
        names = _read_lines(masks_path)
        if len(names) != n:
            raise GraphFormatError('{}: {} entries for {} nodes'.format(masks_path, len(names), n))
        unknown = set(names) - set(MASK_NAMES) - {'none'}
        if unknown:
            raise GraphFormatError('{}: unknown split names {}'.format(masks_path, sorted(unknown)))
        names = np.array(names)
        masks = {name: names == name for name in MASK_NAMES}

    try:
        return build_graph(edges, X, labels=labels, masks=masks, n=n)
    except InvalidParameterValue as e:
        raise GraphFormatError('{}: {}'.format(indir, e))


def random_split(n, seed, fractions=(0.1, 0.1)):
    """Seeded train/val/test masks; train and val sizes are rounded half-up.

    ``seed`` may also be a ``numpy.random.Generator`` to draw from.
    """
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    n_train = int(np.floor(fractions[0] * n + 0.5))
    n_val = int(np.floor(fractions[1] * n + 0.5))
    masks = {name: np.zeros(n, dtype=bool) for name in MASK_NAMES}
    masks['train'][order[:n_train]] = True
    masks['val'][order[n_train:n_train + n_val]] = True
    masks['test'][order[n_train + n_val:]] = True
    return masks


def read_linqs(indir, name, seed=None):
    """
    Load a LINQS/Planetoid raw export such as Cora or Citeseer.

    Expects ``<name>.content`` (paper id, feature values..., class label) and
    ``<name>.cites`` (cited id, citing id). Citations are treated as
    undirected; citations to papers missing from the content file are dropped.

    :param indir: folder holding the two files
    :param name: dataset stem, e.g. ``cora``
    :param seed: if given, attach a seeded 10/10/80 split
    :return: Graph
    """
    content_path = os.path.join(indir, '{}.content'.format(name))
    cites_path = os.path.join(indir, '{}.cites'.format(name))

    ids, rows, raw_labels = {}, [], []
    with open(content_path, 'r', encoding='utf-8') as fp:
        for line in fp:
            parts = line.split()
            if len(parts) < 2:
                continue
            paper_id, rest = parts[0], parts[1:]
            if paper_id in ids:
                raise GraphFormatError('{}: duplicate paper id {}'.format(content_path, paper_id))
            ids[paper_id] = len(ids)
            try:
                rows.append([float(x) for x in rest[:-1]])
            except ValueError as e:
                raise GraphFormatError('{}: {}'.format(content_path, e))
            raw_labels.append(rest[-1])
    if len({len(r) for r in rows}) > 1:
        raise GraphFormatError('{}: rows have different feature counts'.format(content_path))
    classes = {c: i for i, c in enumerate(sorted(set(raw_labels)))}

    edges, dropped = [], 0
    with open(cites_path, 'r', encoding='utf-8') as fp:
        for line in fp:
            parts = line.split()
            if len(parts) != 2:
                continue
            src, dst = parts
            if src in ids and dst in ids:
                edges.append((ids[src], ids[dst]))
            else:
                dropped += 1
    if dropped:
        LOGGER.warning('%s: dropped %s citations to unknown papers', cites_path, dropped)

    masks = random_split(len(ids), seed) if seed is not None else None
    return build_graph(edges, np.array(rows), labels=[classes[c] for c in raw_labels], masks=masks)
