"""Build glue for the optional compiled tree kernel.

The package is fully functional without the extension: litmap.learn.backend
falls back to the pure-numpy tree grower when the import fails.  Building is
therefore best-effort.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        "src/litmap/learn/_tree_kernel.pyx",
        compiler_directives={"language_level": "3"},
    )
    for ext in ext_modules:
        ext.include_dirs.append(numpy.get_include())
        ext.define_macros.append(("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION"))
except ImportError:
    pass

setup(ext_modules=ext_modules)
