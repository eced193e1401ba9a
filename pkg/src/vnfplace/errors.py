"""Exception hierarchy shared by every pipeline stage."""


class VnfpError(Exception):
    """Base class for all errors raised by this package."""


class InvalidConfig(VnfpError, ValueError):
    pass


class InfeasibleTrial(VnfpError):
    """No placement satisfies capacity and anti-affinity."""


class BudgetExceeded(VnfpError):
    pass


class GenerationFailed(VnfpError):
    def __init__(self, message, trial_index=None):
        super().__init__(message)
        self.trial_index = trial_index


class SchemaMismatch(VnfpError, ValueError):
    pass


class WidthMismatch(VnfpError, ValueError):
    pass


class VersionMismatch(VnfpError, ValueError):
    pass


class EmptyNode(VnfpError, ValueError):
    pass


class EmptyDataset(VnfpError, ValueError):
    pass


class KTooLarge(VnfpError, ValueError):
    pass


class LengthMismatch(VnfpError, ValueError):
    pass


class SpecMismatch(VnfpError, ValueError):
    pass


class UnassignedInstance(VnfpError, KeyError):
    pass


class EmptyReport(VnfpError, ValueError):
    pass
