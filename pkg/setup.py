import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("IMPFLOW_NO_EXT"):
    try:
        from Cython.Build import cythonize
    except ImportError:  # fall back to the pure-Python kernels
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [Extension("impflow._kernels", ["src/impflow/_kernels.pyx"])],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
