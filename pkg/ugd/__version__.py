# -*- coding: utf-8 -*-

# This information is located in its own file so that it can be loaded
# without importing the main package when its dependencies are not installed.
# See: https://packaging.python.org/guides/single-sourcing-package-version

__author__ = """UGD developers"""
__email__ = 'ugd-dev@users.noreply.github.com'
__version__ = '0.1.0'
