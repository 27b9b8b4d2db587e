## import standard libraries
from dataclasses import dataclass, field
from typing import List, Literal, Optional, Tuple

## pip module imports
from pydantic import Field, model_validator

# import local files
from interfaces.ClockInterface import TimerHandle
from schemas.ContextTypes import ContextElement, EntityRef, Scope, WireModel
from schemas.Errors import InvariantViolation

POLICY_DROP          = "drop"
POLICY_AGGREGATE_SET = "aggregateSet"
POLICY_AGGREGATE_FN  = "aggregateFn"

AGGREGATION_NONE = "none"
AGGREGATION_SET  = "set"

class Subscription(WireModel):
    """A standing request; on the wire (subscribeContext) it is sent without id."""
    id              : Optional[str] = None
    patterns        : Tuple[EntityRef, ...] = Field(default=(), alias="entities")
    attributes      : Tuple[str, ...] = ()
    scopes          : Tuple[Scope, ...] = ()
    notify_endpoint : str
    throttling      : int = 0
    policy          : Literal["drop", "aggregateSet", "aggregateFn"] = POLICY_DROP
    aggregate_fn    : Optional[Literal["avg", "min", "max", "last"]] = None
    expires         : Optional[int] = None

    @model_validator(mode="after")
    def check_invariants(self) -> "Subscription":
        if not self.patterns:
            raise InvariantViolation("entities", "at least one entity pattern")
        if not self.notify_endpoint:
            raise InvariantViolation("notifyEndpoint", "empty")
        if self.throttling < 0:
            raise InvariantViolation("throttling", "negative")
        if self.policy == POLICY_AGGREGATE_FN and self.aggregate_fn is None:
            raise InvariantViolation("aggregateFn", "required by policy aggregateFn")
        return self

    def MatchesEntity(self, entity_id:str, entity_type:str) -> bool:
        return any(p.Matches(entity_id, entity_type) for p in self.patterns)

    def Touches(self, attribute_names:List[str]) -> bool:
        return not self.attributes or any(name in self.attributes for name in attribute_names)

class Notification(WireModel):
    subscription_id : str
    elements        : Tuple[ContextElement, ...] = ()
    aggregation     : str = AGGREGATION_NONE
    emitted_at      : int = 0
    initial         : bool = False

@dataclass
class ThrottleState:
    """Per-subscription gate state. The buffer stays empty under the drop policy."""
    last_emit : Optional[int] = None
    buffer    : List[Tuple[ContextElement, int]] = field(default_factory=list)
    timer_due : Optional[int] = None
    timer     : Optional[TimerHandle] = None
