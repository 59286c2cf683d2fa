"""Exception hierarchy shared across the engine.

Every error carries a stable machine-readable ``code`` (snake_case). The
server maps exceptions to error envelopes by this code, so codes are part
of the wire contract and must not be renamed casually.
"""

from __future__ import annotations


class SceneLabError(Exception):
    """Base class for all engine errors."""

    code = "internal"

    def __init__(self, message: str = ""):
        super().__init__(message or self.__class__.__name__)
        self.message = message or self.__class__.__name__


# --- scene / mesh ---------------------------------------------------------

class ParseError(SceneLabError):
    code = "parse_error"

    def __init__(self, message: str, *, line: int | None = None, offset: int | None = None):
        loc = ""
        if line is not None:
            loc = f" (line {line})"
        elif offset is not None:
            loc = f" (byte {offset})"
        super().__init__(message + loc)
        self.line = line
        self.offset = offset


class UnsupportedFeature(SceneLabError):
    code = "unsupported_feature"


class EmptyScene(SceneLabError):
    code = "empty_scene"


class InvalidMesh(SceneLabError):
    code = "invalid_mesh"


class UnknownObject(SceneLabError):
    code = "unknown_object"


class InvalidTransform(SceneLabError):
    code = "invalid_transform"


# --- selection / snapshot -------------------------------------------------

class IndexOutOfRange(SceneLabError):
    code = "index_out_of_range"


class EmptySelection(SceneLabError):
    code = "empty_selection"


class DegeneratePose(SceneLabError):
    code = "degenerate_pose"


class NothingVisible(SceneLabError):
    code = "nothing_visible"


class NonFiniteInput(SceneLabError):
    code = "non_finite_input"


# --- protocol --------------------------------------------------------------

class ProtocolError(SceneLabError):
    code = "protocol_error"


class FrameTooLarge(ProtocolError):
    code = "frame_too_large"


class FrameTooSmall(ProtocolError):
    code = "frame_too_small"


class Truncated(ProtocolError):
    code = "truncated"


class InvalidUtf8(ProtocolError):
    code = "invalid_utf8"


class MalformedMessage(ProtocolError):
    code = "malformed_message"


class UnsupportedVersion(ProtocolError):
    code = "unsupported_version"


class UnknownType(ProtocolError):
    code = "unknown_type"

    def __init__(self, message: str, *, type_name: str | None = None):
        super().__init__(message)
        self.type_name = type_name


# --- detection --------------------------------------------------------------

class BackendUnavailable(SceneLabError):
    code = "no_backend"


class InvalidImage(SceneLabError):
    code = "invalid_image"


class DetectionTimeout(SceneLabError):
    code = "timeout"


class BackendProtocolError(SceneLabError):
    code = "backend_protocol"


# --- logbook ----------------------------------------------------------------

class StorageFull(SceneLabError):
    code = "storage_full"


class SerializationError(SceneLabError):
    code = "serialization_error"


class ReplayMismatch(SceneLabError):
    code = "replay_mismatch"


class UnknownConfig(SceneLabError):
    code = "unknown_config"


class NameCollision(SceneLabError):
    code = "name_collision"


# --- benchmark / server ------------------------------------------------------

class EmptyCorpus(SceneLabError):
    code = "empty_corpus"


class MissingGroundTruth(SceneLabError):
    code = "missing_ground_truth"


class BindError(SceneLabError):
    code = "bind_error"


class AssetRootMissing(SceneLabError):
    code = "asset_root_missing"


class ForbiddenPath(SceneLabError):
    code = "forbidden"


class AssetNotFound(SceneLabError):
    code = "not_found"


class UnknownScene(SceneLabError):
    code = "unknown_scene"


class NoSession(SceneLabError):
    code = "no_session"
