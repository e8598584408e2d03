"""Two-frequency inverse Born series for 2-D Helmholtz media.

Submodules: grids, specfun, pswf, fourier, born, inverse, analysis, media,
io, config, render, cli.
"""

__version__ = "0.1.0"
