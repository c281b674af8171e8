"""Exception hierarchy shared across the pipeline."""


class TvlabError(Exception):
    """Base class for all data/validation errors raised by this package."""


class CorpusError(TvlabError):
    """Malformed corpus file or record."""


class VocabError(TvlabError):
    """Malformed vocabulary file or inconsistent vocabulary."""


class CheckpointError(TvlabError):
    """Unreadable, corrupt, or incompatible checkpoint."""


class ConfigError(TvlabError):
    """Invalid model/train/pipeline configuration."""


class TrainingError(TvlabError):
    """Invalid training input (unlabeled records, empty targets, ...)."""
