import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

# The compiled kernel is optional: if the toolchain is unavailable the
# package falls back to the pure-numpy implementation at import time.
ext = Extension(
    "semsafe._kernel._core",
    ["src/semsafe/_kernel/_core.pyx"],
    include_dirs=[numpy.get_include()],
    extra_compile_args=["-O3", "-ffp-contract=off"],
    optional=True,
)

setup(ext_modules=cythonize([ext], language_level=3))
