"""Build script for the optional compiled kernel core.

The package works without the extension; ``dkpca._core`` falls back to the
numpy implementation when ``_ext`` cannot be imported.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("DKPCA_NO_EXT", "") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:  # build without the compiled core
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "dkpca._core._ext",
                    ["src/dkpca/_core/_ext.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
            },
        )

setup(ext_modules=ext_modules)
