from setuptools import Extension, setup
from Cython.Build import cythonize

# -ffp-contract=off: the compiled kernels must produce bit-identical floats
# to the numpy fallback; fused multiply-add would change the last bits of
# the squared-distance sums.
ext_modules = cythonize(
    [
        Extension(
            "foldcodec._kernels._core",
            ["src/foldcodec/_kernels/_core.pyx"],
            extra_compile_args=["-O3", "-ffp-contract=off"],
        )
    ],
    language_level=3,
)

setup(ext_modules=ext_modules)
