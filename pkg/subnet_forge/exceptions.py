class SubnetForgeError(Exception):
    """Base class for errors raised by subnet_forge."""


class ConfigError(SubnetForgeError, ValueError):
    pass


class ShapeError(SubnetForgeError, ValueError):
    pass


class LayoutError(SubnetForgeError, ValueError):
    pass


class DatasetError(SubnetForgeError, ValueError):
    pass


class NumericError(SubnetForgeError, ArithmeticError):
    pass


class GraphError(SubnetForgeError):
    pass


class CheckpointError(SubnetForgeError):
    pass


class PruningError(SubnetForgeError, ValueError):
    pass
