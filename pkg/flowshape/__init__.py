from ._version import (
    __version__,
    __version_info__,
)

__author__ = 'flowshape developers'
