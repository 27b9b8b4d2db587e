## import standard libraries
import math
import re
from typing import Any, Dict, List, Literal, Optional, Tuple

## pip module imports
from pydantic import BaseModel, ConfigDict, Field, SerializerFunctionWrapHandler, field_validator, model_serializer, model_validator
from pydantic.alias_generators import to_camel

# import local files
from schemas.Errors import InvariantViolation

TIMESTAMP_METADATUM = "timestamp"
UNIT_METADATUM      = "unit"
LOCATION_ATTRIBUTE  = "location"
ANY_TYPE            = "*"

_WHITESPACE = re.compile(r"\s")
# canonical JSON carries integers exactly only within IEEE-754 double precision
MAX_SAFE_INTEGER = 2 ** 53 - 1

class WireModel(BaseModel):
    """Immutable value with camelCase wire aliases.

    Validators raise InvariantViolation directly, so an instance that exists
    always satisfies its invariants.
    """
    model_config = ConfigDict(frozen=True, populate_by_name=True, extra="forbid",
                              alias_generator=to_camel, arbitrary_types_allowed=True)

    @model_serializer(mode="wrap")
    def drop_none_fields(self, handler:SerializerFunctionWrapHandler) -> Dict[str, Any]:
        # only this model's own None fields; a null inside a value stays
        return {k: v for k, v in handler(self).items() if v is not None}

    def ToWire(self) -> Dict[str, Any]:
        return self.model_dump(mode="json", by_alias=True)

def _check_json_value(value:Any, where:str) -> None:
    """Reject values canonical JSON cannot carry: non-finite floats, integers beyond 2**53 - 1."""
    if isinstance(value, bool) or value is None or isinstance(value, str):
        return
    if isinstance(value, int):
        if abs(value) > MAX_SAFE_INTEGER:
            raise InvariantViolation(where, f"integer {value} is outside +/-(2**53 - 1)")
    elif isinstance(value, float):
        if not math.isfinite(value):
            raise InvariantViolation(where, f"non-finite number {value}")
    elif isinstance(value, (list, tuple)):
        for item in value:
            _check_json_value(item, where)
    elif isinstance(value, dict):
        for key, item in value.items():
            if not isinstance(key, str):
                raise InvariantViolation(where, f"object key {key!r} is not a string")
            _check_json_value(item, where)

class EntityRef(WireModel):
    id         : str
    type       : str
    is_pattern : bool = False

    @model_validator(mode="after")
    def check_invariants(self) -> "EntityRef":
        if not self.id:
            raise InvariantViolation("id", "empty")
        if not self.type:
            raise InvariantViolation("type", "empty")
        if _WHITESPACE.search(self.id):
            raise InvariantViolation("id", "contains whitespace")
        if _WHITESPACE.search(self.type):
            raise InvariantViolation("type", "contains whitespace")
        if self.is_pattern:
            try:
                re.compile(self.id)
            except re.error as err:
                raise InvariantViolation("id", f"bad pattern: {err}")
        return self

    def Matches(self, entity_id:str, entity_type:str) -> bool:
        """True when a literal (entity_id, entity_type) falls under this ref."""
        if self.type != ANY_TYPE and self.type != entity_type:
            return False
        if self.is_pattern:
            return _compiled(self.id).fullmatch(entity_id) is not None
        return self.id == entity_id

    def Intersects(self, other:"EntityRef") -> bool:
        """Conservative overlap test between two refs, either of which may be a pattern."""
        if self.type != ANY_TYPE and other.type != ANY_TYPE and self.type != other.type:
            return False
        if not self.is_pattern and not other.is_pattern:
            return self.id == other.id
        if not other.is_pattern:
            return _compiled(self.id).fullmatch(other.id) is not None
        if not self.is_pattern:
            return _compiled(other.id).fullmatch(self.id) is not None
        return True

_PATTERN_CACHE : Dict[str, "re.Pattern[str]"] = {}

def _compiled(pattern:str) -> "re.Pattern[str]":
    compiled = _PATTERN_CACHE.get(pattern)
    if compiled is None:
        compiled = re.compile(pattern)
        _PATTERN_CACHE[pattern] = compiled
    return compiled

class Metadatum(WireModel):
    name  : str
    type  : str
    value : Any = None

    @field_validator("name")
    @classmethod
    def check_name(cls, v:str) -> str:
        if not v:
            raise InvariantViolation("metadata.name", "empty")
        return v

    @model_validator(mode="after")
    def check_value(self) -> "Metadatum":
        _check_json_value(self.value, f"metadata.{self.name}")
        return self

class ContextAttribute(WireModel):
    name     : str
    type     : str
    value    : Any = None
    metadata : Tuple[Metadatum, ...] = ()

    @model_validator(mode="after")
    def check_invariants(self) -> "ContextAttribute":
        if not self.name:
            raise InvariantViolation("name", "empty")
        _check_json_value(self.value, self.name)
        seen = set()
        for md in self.metadata:
            if md.name in seen:
                raise InvariantViolation("metadata", f"duplicate metadatum '{md.name}' on '{self.name}'")
            seen.add(md.name)
            if md.name == TIMESTAMP_METADATUM and not _is_epoch_ms(md.value):
                raise InvariantViolation("metadata", f"timestamp of '{self.name}' is not epoch milliseconds")
        return self

    def FindMetadatum(self, name:str) -> Optional[Metadatum]:
        for md in self.metadata:
            if md.name == name:
                return md
        return None

    @property
    def Timestamp(self) -> Optional[int]:
        md = self.FindMetadatum(TIMESTAMP_METADATUM)
        return int(md.value) if md is not None else None

def _is_epoch_ms(value:Any) -> bool:
    if isinstance(value, bool):
        return False
    if isinstance(value, int):
        return True
    return isinstance(value, float) and value.is_integer()

class ContextElement(WireModel):
    entity     : EntityRef
    attributes : Tuple[ContextAttribute, ...] = ()

    @model_validator(mode="after")
    def check_invariants(self) -> "ContextElement":
        if self.entity.is_pattern:
            raise InvariantViolation("isPattern", "an element names a concrete entity")
        seen = set()
        for attr in self.attributes:
            if attr.name in seen:
                raise InvariantViolation("attributes", f"duplicate attribute '{attr.name}'")
            seen.add(attr.name)
        return self

    @property
    def Key(self) -> Tuple[str, str]:
        return (self.entity.id, self.entity.type)

    def Attribute(self, name:str) -> Optional[ContextAttribute]:
        for attr in self.attributes:
            if attr.name == name:
                return attr
        return None

    def Project(self, attribute_filter:List[str]) -> "ContextElement":
        """Keep only the filtered attributes; an empty filter keeps all."""
        if not attribute_filter:
            return self
        wanted = set(attribute_filter)
        return ContextElement(entity=self.entity, attributes=tuple(a for a in self.attributes if a.name in wanted))

class Scope(WireModel):
    kind      : Literal["geo_box", "string_match"]
    min_lat   : Optional[float] = None
    min_lon   : Optional[float] = None
    max_lat   : Optional[float] = None
    max_lon   : Optional[float] = None
    target    : Optional[str] = None
    substring : Optional[str] = None

    @model_validator(mode="after")
    def check_invariants(self) -> "Scope":
        if self.kind == "geo_box":
            corners = [self.min_lat, self.min_lon, self.max_lat, self.max_lon]
            if any(c is None for c in corners):
                raise InvariantViolation("scope", "geo_box needs minLat, minLon, maxLat, maxLon")
            if self.min_lat > self.max_lat or self.min_lon > self.max_lon:
                raise InvariantViolation("scope", "geo_box min exceeds max")
            if not (-90 <= self.min_lat <= 90 and -90 <= self.max_lat <= 90):
                raise InvariantViolation("scope", "latitude outside [-90,90]")
            if not (-180 <= self.min_lon <= 180 and -180 <= self.max_lon <= 180):
                raise InvariantViolation("scope", "longitude outside [-180,180]")
        else:
            if not self.target or self.substring is None:
                raise InvariantViolation("scope", "string_match needs target and substring")
        return self

    @staticmethod
    def GeoBox(min_lat:float, min_lon:float, max_lat:float, max_lon:float) -> "Scope":
        return Scope(kind="geo_box", min_lat=min_lat, min_lon=min_lon, max_lat=max_lat, max_lon=max_lon)

    @staticmethod
    def StringMatch(target:str, substring:str) -> "Scope":
        return Scope(kind="string_match", target=target, substring=substring)

class RequiredAttribute(WireModel):
    name : str
    type : str

class DataModel(WireModel):
    name                : str
    required_attributes : Tuple[RequiredAttribute, ...] = ()
    synonyms            : Dict[str, str] = Field(default_factory=dict)

    @model_validator(mode="after")
    def check_invariants(self) -> "DataModel":
        if not self.name:
            raise InvariantViolation("name", "empty")
        for raw, canonical in self.synonyms.items():
            if canonical in self.synonyms:
                raise InvariantViolation("synonyms", f"'{raw}' maps to synonym key '{canonical}'")
        for req in self.required_attributes:
            if req.name in self.synonyms:
                raise InvariantViolation("requiredAttributes", f"'{req.name}' is a synonym, not a canonical name")
        return self

class ValidationReport(WireModel):
    missing         : Tuple[str, ...] = ()
    type_mismatches : Tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.missing and not self.type_mismatches
