import os

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

# The compiled core is optional: the package falls back to the numpy
# implementation in recrob._riskeval_py when the extension is absent.
extensions = []
if cythonize is not None and not os.environ.get("RECROB_SKIP_EXTENSION"):
    extensions = cythonize(
        [Extension("recrob._riskeval", ["src/recrob/_riskeval.pyx"])],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=extensions)
