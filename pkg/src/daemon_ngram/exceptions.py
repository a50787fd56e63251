class DaemonError(Exception):
    """Base class for all pipeline errors."""


class CorpusError(DaemonError, ValueError):
    pass


class ThresholdError(DaemonError):
    pass


class MiningError(DaemonError, MemoryError):
    pass


class AutomatonError(DaemonError, ValueError):
    pass


class TrainingError(DaemonError, ValueError):
    pass


class CalibrationError(DaemonError, ValueError):
    pass


class BundleError(DaemonError):
    pass


class SynthSpecError(DaemonError, ValueError):
    pass
