"""Build script for the optional compiled search core.

The package is pure Python plus one Cython extension (``vbmcts._mcts_core``)
that accelerates tree search over GP world models.  If Cython or a C
compiler is unavailable the extension is skipped and the package falls back
to the pure-Python planner at import time.
"""

import sys

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """Build the extension if possible; warn and continue otherwise."""

    def run(self):
        try:
            build_ext.run(self)
        except Exception as exc:  # compiler missing / broken toolchain
            sys.stderr.write(
                "WARNING: compiled search core not built (%s); "
                "falling back to the pure-Python planner\n" % (exc,)
            )

    def build_extension(self, ext):
        try:
            build_ext.build_extension(self, ext)
        except Exception as exc:
            sys.stderr.write(
                "WARNING: failed to compile %s (%s); "
                "falling back to the pure-Python planner\n" % (ext.name, exc)
            )


extensions = []
try:
    import numpy
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "vbmcts._mcts_core",
                ["src/vbmcts/_mcts_core.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )
except ImportError as exc:
    sys.stderr.write(
        "WARNING: Cython/numpy not available at build time (%s); "
        "building without the compiled search core\n" % (exc,)
    )

setup(
    ext_modules=extensions,
    cmdclass={"build_ext": optional_build_ext},
)
