"""Build script for the optional compiled kernel extension.

The package is fully functional without the extension (a pure-NumPy
backend is selected at import time); building it just makes the per-batch
loss/gradient kernels faster.  ``optional=True`` keeps a failed compile
from breaking the install.
"""

import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext_modules = []
if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "fedvar._kernels._ckernels",
                ["src/fedvar/_kernels/_ckernels.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
