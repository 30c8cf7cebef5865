"""
Exception types shared by every module.

  LabError            - base class
  ConfigError         - invalid model / plan / config (CLI exit code 2)
  EmptyClusterError   - a class received no nodes
  DimensionError      - shape mismatch between operands
  NoSignalPairsError  - SNR requested with fewer than two classes
  ConsistencyError    - two independent computation paths disagree, or a
                        structural property of the walk census is violated
  GuardExceeded       - a complexity guard would be exceeded
"""


class LabError(Exception):
    pass


class ConfigError(LabError, ValueError):
    pass


class EmptyClusterError(ConfigError):
    pass


class DimensionError(LabError, ValueError):
    pass


class NoSignalPairsError(LabError, ValueError):
    pass


class ConsistencyError(LabError, RuntimeError):
    pass


class GuardExceeded(LabError, RuntimeError):
    pass
