from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # the numpy kernel takes over at import time
    ext_modules = []
else:
    ext_modules = cythonize(
        [Extension("rbdderiv._so_kernel", ["src/rbdderiv/_so_kernel.pyx"], extra_compile_args=["-O3"])],
        compiler_directives={"language_level": 3},
    )

setup(ext_modules=ext_modules)
