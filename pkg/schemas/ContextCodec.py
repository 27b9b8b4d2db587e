## import standard libraries
import json
from typing import Any, Dict, List, Type, TypeVar, Union

## pip module imports
import rfc8785
from pydantic import BaseModel, ValidationError

# import local files
from schemas.ContextTypes import ContextElement, EntityRef, Scope
from schemas.Errors import InvariantViolation, MalformedJson

ModelT = TypeVar("ModelT", bound=BaseModel)

def _reject_constant(name:str) -> Any:
    raise MalformedJson(f"non-finite number {name}")

class ContextCodec:
    """Canonical JSON codec for everything that crosses a ctxmesh wire.

    Canonical form is RFC 8785: lexicographically sorted keys, no insignificant
    whitespace, shortest number form. Equal values give byte-identical output.
    """

    @staticmethod
    def CanonicalBytes(obj:Any) -> bytes:
        try:
            return rfc8785.dumps(obj)
        except (rfc8785.CanonicalizationError, TypeError, ValueError) as err:
            raise MalformedJson(f"value cannot be canonicalized: {err}")

    @staticmethod
    def ParseJson(raw:Union[bytes, str]) -> Any:
        try:
            return json.loads(raw, parse_constant=_reject_constant)
        except json.JSONDecodeError as err:
            raise MalformedJson(f"line {err.lineno} column {err.colno}: {err.msg}")
        except UnicodeDecodeError as err:
            raise MalformedJson(f"not UTF-8: {err}")

    @staticmethod
    def FromWire(model:Type[ModelT], data:Any) -> ModelT:
        """Build a typed value from decoded JSON, mapping schema failures to InvariantViolation."""
        if not isinstance(data, dict):
            raise InvariantViolation(model.__name__, "expected a JSON object")
        try:
            return model.model_validate(data)
        except ValidationError as err:
            first = err.errors()[0]
            names = [str(part) for part in first.get("loc", ()) if isinstance(part, str)]
            field = names[-1] if names else model.__name__
            raise InvariantViolation(field, first.get("msg", "invalid"))

    @staticmethod
    def ListFromWire(model:Type[ModelT], data:Any, field:str) -> List[ModelT]:
        if data is None:
            return []
        if not isinstance(data, list):
            raise InvariantViolation(field, "expected a JSON array")
        return [ContextCodec.FromWire(model, item) for item in data]

    @staticmethod
    def EncodeElement(e:ContextElement) -> bytes:
        return ContextCodec.CanonicalBytes(e.ToWire())

    @staticmethod
    def DecodeElement(raw:Union[bytes, str]) -> ContextElement:
        return ContextCodec.FromWire(ContextElement, ContextCodec.ParseJson(raw))

    @staticmethod
    def ElementsToWire(elements:List[ContextElement]) -> List[Dict[str, Any]]:
        return [e.ToWire() for e in elements]

    @staticmethod
    def EntitiesFromWire(data:Any) -> List[EntityRef]:
        return ContextCodec.ListFromWire(EntityRef, data, "entities")

    @staticmethod
    def ScopesFromWire(data:Any) -> List[Scope]:
        return ContextCodec.ListFromWire(Scope, data, "scopes")

    @staticmethod
    def StringList(data:Any, field:str) -> List[str]:
        if data is None:
            return []
        if not isinstance(data, list) or not all(isinstance(item, str) for item in data):
            raise InvariantViolation(field, "expected an array of strings")
        return list(data)
