"""Build hook for the optional compiled kernels.

The package works without the extension: ``annogate.kernels`` falls back to
the numpy implementation when the compiled module is absent.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "annogate.kernels._ce_cython",
                ["src/annogate/kernels/_ce_cython.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                optional=True,
            )
        ],
        language_level=3,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
