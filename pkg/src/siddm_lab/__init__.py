"""Few-step semi-implicit denoising diffusion lab on a 2-D mixture benchmark.

Kept import-light on purpose: the CLI entry point must be able to configure
BLAS threading before numpy is first imported, so nothing heavy is pulled
in here.
"""

__version__ = "0.1.0"
