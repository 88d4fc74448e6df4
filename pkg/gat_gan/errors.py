""" Exception types raised by gat_gan """


class GatGanError(Exception):
    """ Base class for every error raised by the package """


class DimensionError(GatGanError, ValueError):
    """ A tensor operation received shapes it cannot combine """


class ContractError(GatGanError, ValueError):
    """ A documented pre-condition of an operation was violated """


class DataError(GatGanError, ValueError):
    """ Input data could not be parsed """


class ConfigError(GatGanError, ValueError):
    """ A run configuration is invalid or incomplete """

    def __init__(self, field, message):
        super().__init__(f'{field}: {message}')
        self.field = field


class CheckpointError(GatGanError):
    """ A checkpoint container failed to load """

    def __init__(self, section, message):
        super().__init__(f'{section} section: {message}')
        self.section = section


class DivergenceError(GatGanError, ArithmeticError):
    """ Training produced a non-finite loss or gradient """

    def __init__(self, message, checkpoint=None):
        super().__init__(message)
        self.checkpoint = checkpoint
