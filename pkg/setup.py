import os

import numpy as np
from setuptools import setup

ext_modules = []
if not os.environ.get("COUNTFLOW_NO_EXT"):
    try:
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "countflow._assignment_ext",
                    ["src/countflow/_assignment_ext.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        # pure-Python fallback is picked up at import time
        ext_modules = []

setup(ext_modules=ext_modules)
