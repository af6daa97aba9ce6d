"""Build the optional compiled screening kernel.

If Cython or a C compiler is missing, the package installs without the
extension and falls back to the numpy kernel at import time.
"""
import os

from setuptools import setup

ext_modules = []
PYX = "src/seqdesign/_screen_ext.pyx"
if os.environ.get("SEQDESIGN_NO_EXT") != "1" and os.path.exists(PYX):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "seqdesign._screen_ext",
                    [PYX],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": 3, "boundscheck": False, "wraparound": False, "cdivision": True},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
