import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("POSESIM_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [Extension("posesim.kernels._native", ["src/posesim/kernels/_native.pyx"])],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
