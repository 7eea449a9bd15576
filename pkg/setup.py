import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python install; survicl.kernels falls back to numpy
    ext_modules = []
else:
    ext_modules = cythonize(
        [Extension("survicl._kernels", ["src/survicl/_kernels.pyx"], include_dirs=[numpy.get_include()])],
        language_level=3,
    )

setup(ext_modules=ext_modules)
