import os

import numpy as np
from setuptools import Extension, setup

# The compiled kernel is optional: without Cython the package falls back to
# the pure-Python implementation in droopsat/_pykernel.py.
ext_modules = []
if not os.environ.get("DROOPSAT_NO_EXT"):
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [
                Extension(
                    "droopsat._ckernel",
                    ["src/droopsat/_ckernel.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
