"""Build the optional compiled kernels; the package works without them."""

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [Extension("tnconv._kernels", ["src/tnconv/_kernels.pyx"], include_dirs=[np.get_include()])],
        compiler_directives={"language_level": "3"},
    )
except ImportError:  # no Cython: pure numpy fallback only
    ext_modules = []

setup(ext_modules=ext_modules)
