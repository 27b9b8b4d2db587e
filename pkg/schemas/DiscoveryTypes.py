## import standard libraries
from typing import Optional, Tuple

## pip module imports
from pydantic import Field, model_validator

# import local files
from schemas.ContextTypes import EntityRef, Scope, WireModel
from schemas.Errors import InvariantViolation

class AttributeDecl(WireModel):
    name : str
    type : str

class Registration(WireModel):
    """Who can serve what: entity patterns and attributes at a providing endpoint, with scope metadata.

    thing_refs names the virtual entities a sensor resource observes, which is how
    discovery separates things from the sensors observing them.
    """
    id                 : Optional[str] = None
    patterns           : Tuple[EntityRef, ...] = Field(default=(), alias="entities")
    attributes         : Tuple[AttributeDecl, ...] = ()
    providing_endpoint : str
    scope_meta         : Tuple[Scope, ...] = ()
    thing_refs         : Tuple[EntityRef, ...] = ()
    expires            : Optional[int] = None

    @model_validator(mode="after")
    def check_invariants(self) -> "Registration":
        if not self.providing_endpoint:
            raise InvariantViolation("providingEndpoint", "empty")
        return self

    @property
    def AttributeNames(self) -> Tuple[str, ...]:
        return tuple(a.name for a in self.attributes)

class AvailabilitySubscription(WireModel):
    id              : Optional[str] = None
    patterns        : Tuple[EntityRef, ...] = Field(default=(), alias="entities")
    attributes      : Tuple[str, ...] = ()
    scopes          : Tuple[Scope, ...] = ()
    notify_endpoint : str
    expires         : Optional[int] = None

    @model_validator(mode="after")
    def check_invariants(self) -> "AvailabilitySubscription":
        if not self.patterns:
            raise InvariantViolation("entities", "at least one entity pattern")
        if not self.notify_endpoint:
            raise InvariantViolation("notifyEndpoint", "empty")
        return self

class AvailabilityNotification(WireModel):
    subscription_id : str
    registrations   : Tuple[Registration, ...] = ()
    removed         : Tuple[str, ...] = ()
