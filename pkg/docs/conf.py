#!/usr/bin/env python
# -*- coding: utf-8 -*-
#
# irregular_sdm documentation build configuration file.
#
# This file is execfile()d with the current directory set to its
# containing dir.

import sys
import os

# Get the project root dir, which is the parent dir of this
cwd = os.getcwd()
project_root = os.path.dirname(cwd)

# Insert the project root dir as the first element in the PYTHONPATH.
# This lets us ensure that the source package is imported, and that its
# version is used.
sys.path.insert(0, project_root)

import irregular_sdm  # noqa: E402

# -- General configuration ---------------------------------------------

extensions = [
    'sphinx.ext.napoleon', 'sphinx.ext.autodoc', 'sphinx.ext.viewcode'
]
templates_path = ['_templates']
source_suffix = '.rst'
master_doc = 'index'

project = u'Scientific Data Manager for Irregular Applications'
copyright = u"2026, The irregular_sdm developers"

# The short X.Y version.
version = irregular_sdm.__version__
# The full version, including alpha/beta/rc tags.
release = irregular_sdm.__version__

exclude_patterns = ['_build']
pygments_style = 'sphinx'

# -- Options for HTML output -------------------------------------------

html_theme = 'default'
html_static_path = ['_static']
htmlhelp_basename = 'irregular_sdmdoc'

# -- Options for LaTeX output ------------------------------------------

latex_documents = [
    ('index', 'irregular_sdm.tex',
     u'irregular_sdm Documentation',
     u'The irregular_sdm developers', 'manual'),
]

# -- Options for manual page output ------------------------------------

man_pages = [
    ('index', 'irregular-sdm',
     u'irregular_sdm Documentation',
     [u'The irregular_sdm developers'], 1)
]
