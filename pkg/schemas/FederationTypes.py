## import standard libraries
from typing import Literal, Optional

## pip module imports
from pydantic import model_validator

# import local files
from schemas.ContextTypes import WireModel
from schemas.Errors import InvariantViolation

# 1 vehicle / in-thing, 2 edge / roadside unit, 3 site cloud, 4 global
LEVEL_VEHICLE = 1
LEVEL_EDGE    = 2
LEVEL_SITE    = 3
LEVEL_GLOBAL  = 4

class FederationNode(WireModel):
    node_id          : str
    level            : int
    local_broker     : Optional[str] = None
    discovery        : Optional[str] = None
    parent_discovery : Optional[str] = None

    @model_validator(mode="after")
    def check_invariants(self) -> "FederationNode":
        if not LEVEL_VEHICLE <= self.level <= LEVEL_GLOBAL:
            raise InvariantViolation("level", f"{self.level} outside 1..4")
        if self.level == LEVEL_GLOBAL and self.parent_discovery:
            raise InvariantViolation("parentDiscovery", "a level 4 node has no parent")
        return self

class MergePolicy(WireModel):
    """Conflict resolution over candidate attribute values from several providers."""
    conflict  : Literal["latestTimestamp"] = "latestTimestamp"
    tie_break : Literal["smallestEndpoint"] = "smallestEndpoint"
