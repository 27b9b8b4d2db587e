## import standard libraries
import hashlib
from typing import Any, Literal, Optional, Tuple

## pip module imports
from pydantic import model_validator

# import local files
from schemas.ContextCodec import ContextCodec
from schemas.ContextTypes import EntityRef, Metadatum, WireModel
from schemas.Errors import InvariantViolation

AGGREGATE_FNS = ("avg", "min", "max", "count", "last")

class TimeSeriesRecord(WireModel):
    entity    : EntityRef
    attribute : str
    value     : Any = None
    metadata  : Tuple[Metadatum, ...] = ()
    t         : int

    @property
    def SeriesKey(self) -> Tuple[str, str, str]:
        return (self.entity.id, self.entity.type, self.attribute)

    @property
    def DedupKey(self) -> str:
        """Digest of (id, type, attribute, t, canonical value); metadata does not take part."""
        ident = [self.entity.id, self.entity.type, self.attribute, self.t, self.value]
        return hashlib.sha256(ContextCodec.CanonicalBytes(ident)).hexdigest()

class RawQuery(WireModel):
    entity    : EntityRef
    attribute : str
    t0        : int
    t1        : int
    limit     : Optional[int] = None
    order     : Literal["asc", "desc"] = "asc"

    @model_validator(mode="after")
    def check_invariants(self) -> "RawQuery":
        if self.entity.is_pattern:
            raise InvariantViolation("entity", "history is kept per concrete entity")
        if self.limit is not None and self.limit < 0:
            raise InvariantViolation("limit", "negative")
        return self

class AggregateQuery(WireModel):
    entity     : EntityRef
    attribute  : str
    t0         : int
    t1         : int
    resolution : int
    fn         : Literal["avg", "min", "max", "count", "last"]

    @model_validator(mode="after")
    def check_invariants(self) -> "AggregateQuery":
        if self.entity.is_pattern:
            raise InvariantViolation("entity", "history is kept per concrete entity")
        if self.t0 >= self.t1:
            raise InvariantViolation("t1", "range must satisfy t0 < t1")
        if self.resolution <= 0:
            raise InvariantViolation("resolution", "must be positive")
        return self

class AggregateBucket(WireModel):
    bucket : int
    value  : Any
