"""Exception hierarchy shared by all trex modules."""


class TrexError(Exception):
    """Base class for every error raised by trex."""


class PreferenceError(TrexError, ValueError):
    pass


class NegativeWeight(PreferenceError):
    pass


class SumNotOne(PreferenceError):
    pass


class DimensionMismatch(TrexError, ValueError):
    pass


class EmptyTrajectory(TrexError, ValueError):
    pass


class ConfigError(TrexError, ValueError):
    pass


class EpisodeFinished(TrexError, RuntimeError):
    pass


class InvalidAction(TrexError, ValueError):
    pass


class NotFinite(TrexError, ValueError):
    pass


class NoConvergence(TrexError, RuntimeError):
    pass


class EmptyDataset(TrexError, ValueError):
    """Every transition was excluded; the cluster covers the whole behaviour space."""


class EmptyResult(EmptyDataset):
    pass


class UnknownEncoder(TrexError, KeyError):
    pass


class TooFewPoints(TrexError, ValueError):
    pass


class DegenerateClustering(TrexError, ValueError):
    pass


class DegenerateBaseline(TrexError, ZeroDivisionError):
    pass


class NoClusters(TrexError, ValueError):
    pass


class MissingEpisode(TrexError, KeyError):
    pass


class SchemaError(TrexError, ValueError):
    pass


class StaleInput(TrexError, RuntimeError):
    pass


class IoFailure(TrexError, OSError):
    pass
