import os

from setuptools import Extension, setup

# The compiled event-loop kernel is optional: the package falls back to a
# pure-Python loop at import time if the extension is missing.  Set
# PRODFORM_PURE_PYTHON=1 to skip building it.
ext_modules = []
if not os.environ.get("PRODFORM_PURE_PYTHON"):
    try:
        import numpy
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "prodform._simkernel",
                    ["src/prodform/_simkernel.pyx"],
                    include_dirs=[numpy.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
