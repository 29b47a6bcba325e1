"""Typed errors shared by every layer.

Each error carries a stable ``code`` string that is also its wire name in
RPC responses ({"ok": false, "error": {"code": ..., "message": ...}}).
"""

from __future__ import annotations


class GridMeshError(Exception):
    """Base for all application-level failures."""

    code = "Internal"

    def __init__(self, message: str = ""):
        super().__init__(message or self.code)


# --- sheet-core ---------------------------------------------------------

class MalformedAddress(GridMeshError):
    code = "MalformedAddress"


class MalformedFormula(GridMeshError):
    code = "MalformedFormula"


class BadHeader(GridMeshError):
    code = "BadHeader"


class MalformedLine(GridMeshError):
    code = "MalformedLine"

    def __init__(self, line_no: int, message: str = ""):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}" if message else f"line {line_no}")


# --- formula-engine -----------------------------------------------------

class FormulaSyntaxError(GridMeshError):
    code = "SyntaxError"

    def __init__(self, position: int, message: str = ""):
        self.position = position
        super().__init__(f"position {position}: {message}" if message else f"position {position}")


# --- command-protocol ---------------------------------------------------

class MalformedCommand(GridMeshError):
    code = "MalformedCommand"

    def __init__(self, message: str = "", index: int | None = None):
        self.index = index
        if index is not None:
            message = f"command {index}: {message}" if message else f"command {index}"
        super().__init__(message)


# --- sync-server --------------------------------------------------------

class AuthRequired(GridMeshError):
    code = "AuthRequired"


class BadCredentials(GridMeshError):
    code = "BadCredentials"


class UsernameTaken(GridMeshError):
    code = "UsernameTaken"


class WeakPassword(GridMeshError):
    code = "WeakPassword"


class BadUsername(GridMeshError):
    code = "BadUsername"


class SheetExists(GridMeshError):
    code = "SheetExists"


class BadGroupName(GridMeshError):
    code = "BadGroupName"


class NoSuchSheet(GridMeshError):
    code = "NoSuchSheet"


class AuthDenied(GridMeshError):
    code = "AuthDenied"


class NotMember(GridMeshError):
    code = "NotMember"


class BadSeq(GridMeshError):
    code = "BadSeq"


class EmptyMessage(GridMeshError):
    code = "EmptyMessage"


class BadMessage(GridMeshError):
    code = "BadMessage"


class NoSuchSnapshot(GridMeshError):
    code = "NoSuchSnapshot"


class BadName(GridMeshError):
    code = "BadName"


class BadRequest(GridMeshError):
    """Wire envelope is JSON but params are missing or mistyped."""

    code = "BadRequest"


class UnknownMethod(GridMeshError):
    code = "UnknownMethod"


# --- importer -----------------------------------------------------------

class NoAdapter(GridMeshError):
    code = "NoAdapter"

    def __init__(self, extension: str):
        self.extension = extension
        super().__init__(f"no adapter for {extension!r}")


class BadEncoding(GridMeshError):
    code = "BadEncoding"


class UnbalancedQuote(GridMeshError):
    code = "UnbalancedQuote"

    def __init__(self, line_no: int):
        self.line_no = line_no
        super().__init__(f"line {line_no}")


class EmbeddedNewline(GridMeshError):
    code = "EmbeddedNewline"

    def __init__(self, line_no: int):
        self.line_no = line_no
        super().__init__(f"line {line_no}")


class TooManyColumns(GridMeshError):
    code = "TooManyColumns"


class TooManyRows(GridMeshError):
    code = "TooManyRows"


# --- autopilot ----------------------------------------------------------

class InsufficientData(GridMeshError):
    code = "InsufficientData"


class BadJobSpec(GridMeshError):
    code = "BadJobSpec"


class NoSuchJob(GridMeshError):
    code = "NoSuchJob"


# --- templates ----------------------------------------------------------

class NoSuchTemplate(GridMeshError):
    code = "NoSuchTemplate"


# --- sync-client --------------------------------------------------------

class ConnectFailed(GridMeshError):
    code = "ConnectFailed"


def error_by_code(code: str, message: str = "") -> GridMeshError:
    """Rebuild a typed error from its wire code (client side)."""
    cls = _BY_CODE.get(code)
    if cls is None:
        err = GridMeshError(message or code)
        err.code = code
        return err
    if cls in (MalformedLine, UnbalancedQuote, EmbeddedNewline):
        return cls(0, message) if cls is MalformedLine else cls(0)
    if cls is FormulaSyntaxError:
        return cls(0, message)
    if cls is NoAdapter:
        return cls(message)
    return cls(message)


def _collect() -> dict[str, type]:
    out: dict[str, type] = {}
    for obj in list(globals().values()):
        if isinstance(obj, type) and issubclass(obj, GridMeshError):
            out[obj.code] = obj
    return out


_BY_CODE = _collect()
