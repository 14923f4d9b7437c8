# -*- coding: utf-8 -*-

"""Top-level package for ugd, unified graph denoising."""

from .__version__ import __author__, __email__, __version__  # noqa: F401
from .graph import Graph, build_graph  # noqa: F401
from .driver import DenoiseConfig, ugd_run, run_ablation  # noqa: F401
