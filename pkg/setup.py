from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [Extension("romfam._stepkernel", ["src/romfam/_stepkernel.pyx"])],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
except ImportError:
    # No Cython available: the package falls back to the pure-python kernel.
    ext_modules = []

setup(ext_modules=ext_modules)
