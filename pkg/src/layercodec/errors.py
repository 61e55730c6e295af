"""Exception hierarchy shared across the codec."""


class LayercodecError(Exception):
    """Base class for all codec errors."""


class ImageFormatError(LayercodecError):
    """Malformed or unsupported PPM/PGM data."""


class AnnotationError(LayercodecError):
    """Invalid annotation file or instance bookkeeping overflow."""


class ProfileError(LayercodecError):
    """Category/instance value outside the packable range."""


class CorruptProfileError(ProfileError):
    """Decoded profile contains a value no (category, instance) pair maps to."""


class BitstreamError(LayercodecError):
    """Structurally invalid coded payload (bad magic, truncation, overflow)."""


class ChecksumError(BitstreamError):
    """Decoded samples do not match the stored checksum."""


class MissingStreamError(LayercodecError):
    """Requested decode level needs a stream the container does not carry."""


class ModelMismatchError(LayercodecError):
    """Loaded network weights do not match the checksum in the container."""


class TrainingError(LayercodecError):
    """Non-finite loss or gradient encountered during optimization."""
