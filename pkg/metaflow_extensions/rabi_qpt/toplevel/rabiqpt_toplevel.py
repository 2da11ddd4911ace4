from .rabiqpt_version import rabiqpt_version

__mf_extensions__ = "rabi-qpt"
__version__ = rabiqpt_version
