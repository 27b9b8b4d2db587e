## import standard libraries
from typing import Any, Dict, List, Optional

class CtxMeshError(Exception):
    """Base of every typed failure a ctxmesh service reports.

    The wire form is {"error": code, "detail": detail}, sent with HTTP 400.
    """
    code : str = "CtxMeshError"

    def __init__(self, detail:Any = None):
        super().__init__(f"{self.code}: {detail}" if detail is not None else self.code)
        self.detail = detail

    def ToWire(self) -> Dict[str, Any]:
        return {"error": self.code, "detail": self.detail}

class MalformedJson(CtxMeshError):
    code = "MalformedJson"

class InvariantViolation(CtxMeshError):
    code = "InvariantViolation"

    def __init__(self, field:str, reason:Optional[str] = None):
        super().__init__(field if reason is None else f"{field}: {reason}")
        self.field = field

class SynonymCollision(CtxMeshError):
    code = "SynonymCollision"

class ValidationFailed(CtxMeshError):
    code = "ValidationFailed"

    def __init__(self, missing:List[str], type_mismatches:List[str]):
        super().__init__({"missing": missing, "typeMismatches": type_mismatches})
        self.missing = missing
        self.type_mismatches = type_mismatches

class InvalidSubscription(CtxMeshError):
    code = "InvalidSubscription"

class UnknownSubscription(CtxMeshError):
    code = "UnknownSubscription"

class UnknownRegistration(CtxMeshError):
    code = "UnknownRegistration"

class UnknownPath(CtxMeshError):
    code = "UnknownPath"

class DeliveryFailed(CtxMeshError):
    code = "DeliveryFailed"

class EndpointUnreachable(CtxMeshError):
    code = "EndpointUnreachable"

class EndpointTimeout(EndpointUnreachable):
    code = "EndpointTimeout"

class ParentUnreachable(CtxMeshError):
    code = "ParentUnreachable"

class UnknownDevice(CtxMeshError):
    code = "UnknownDevice"

class StorageFull(CtxMeshError):
    code = "StorageFull"

class NonNumericSeries(CtxMeshError):
    code = "NonNumericSeries"

class NoCapacity(CtxMeshError):
    code = "NoCapacity"

class UnsatisfiableInput(CtxMeshError):
    code = "UnsatisfiableInput"

class InvalidTopology(CtxMeshError):
    code = "InvalidTopology"

class UnknownOperator(CtxMeshError):
    code = "UnknownOperator"

class ScriptError(CtxMeshError):
    code = "ScriptError"

    def __init__(self, message:str, line:Optional[int] = None, path:Optional[str] = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if path:
            where.append(path)
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.line = line
        self.path = path

class RemoteError(CtxMeshError):
    """A peer answered 400; carries the peer's error code."""
    code = "RemoteError"

    def __init__(self, remote_code:str, detail:Any = None):
        super().__init__(detail)
        self.remote_code = remote_code

    def ToWire(self) -> Dict[str, Any]:
        return {"error": self.remote_code, "detail": self.detail}

class UsageError(CtxMeshError):
    """Bad command line; the CLI exits with status 2."""
    code = "UsageError"

class ArchiveMismatch(CtxMeshError):
    """The archive holds fewer rows for a day than were sent to it."""
    code = "ArchiveMismatch"
