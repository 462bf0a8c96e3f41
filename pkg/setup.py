import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

ext = Extension(
    "milpgen._ckernels",
    ["src/milpgen/_ckernels.pyx"],
    include_dirs=[np.get_include()],
    language="c++",
    extra_compile_args=["-O2", "-ffp-contract=off"],
    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    optional=True,
)

setup(ext_modules=cythonize([ext], compiler_directives={"language_level": "3"}))
