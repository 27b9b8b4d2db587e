## import standard libraries
import re
from typing import Any, Dict, List, Literal, Optional, Tuple

## pip module imports
from pydantic import Field, model_validator

# import local files
from schemas.ContextTypes import EntityRef, Scope, WireModel
from schemas.Errors import InvalidTopology, InvariantViolation

TIER_CLOUD = "cloud"
TIER_EDGE  = "edge"

GRANULARITY_SINGLE    = "single"
GRANULARITY_PER_SCOPE = "perScope"

# task and instance names end up in relay paths
_NAME = re.compile(r"^[A-Za-z0-9_.-]+$")

class StreamSelector(WireModel):
    """Which streams feed one task input: an entity type, narrowed by scopes."""
    entity_type : str
    scopes      : Tuple[Scope, ...] = ()
    shuffle_key : Optional[str] = None

    @model_validator(mode="after")
    def check_invariants(self) -> "StreamSelector":
        if not self.entity_type:
            raise InvariantViolation("entityType", "empty")
        return self

    @property
    def Pattern(self) -> EntityRef:
        return EntityRef(id=".*", type=self.entity_type, is_pattern=True)

class TaskSpec(WireModel):
    name        : str
    operator    : str
    inputs      : Tuple[StreamSelector, ...]
    output      : str
    granularity : Literal["single", "perScope"] = GRANULARITY_SINGLE
    params      : Dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode="after")
    def check_invariants(self) -> "TaskSpec":
        if not _NAME.match(self.name or ""):
            raise InvalidTopology(f"task name '{self.name}' must be letters, digits, '_', '.' or '-'")
        if not self.inputs:
            raise InvalidTopology(f"task '{self.name}' has no inputs")
        if not self.output:
            raise InvalidTopology(f"task '{self.name}' has no output type")
        if self.output in self.InputTypes:
            raise InvalidTopology(f"task '{self.name}' consumes its own output type '{self.output}'")
        return self

    @property
    def InputTypes(self) -> List[str]:
        return [i.entity_type for i in self.inputs]

    @property
    def OutputPattern(self) -> EntityRef:
        return EntityRef(id=".*", type=self.output, is_pattern=True)

    @property
    def DeclaredScopes(self) -> List[Scope]:
        """Distinct scopes across inputs, in declaration order."""
        found : List[Scope] = []
        for selector in self.inputs:
            for scope in selector.scopes:
                if scope not in found:
                    found.append(scope)
        return found

class TaskTopology(WireModel):
    name  : str
    tasks : Tuple[TaskSpec, ...]

    @model_validator(mode="after")
    def check_invariants(self) -> "TaskTopology":
        names = [t.name for t in self.tasks]
        if len(set(names)) != len(names):
            raise InvalidTopology(f"duplicate task names in '{self.name}'")
        return self

    def Producers(self, entity_type:str) -> List[TaskSpec]:
        return [t for t in self.tasks if t.output == entity_type]

class WorkerNode(WireModel):
    id       : str
    tier     : Literal["cloud", "edge"]
    endpoint : str
    scopes   : Tuple[Scope, ...] = ()
    capacity : int = 1

    @model_validator(mode="after")
    def check_invariants(self) -> "WorkerNode":
        if not self.id:
            raise InvariantViolation("id", "empty")
        if self.capacity < 1:
            raise InvariantViolation("capacity", "must be at least 1")
        return self

class TaskInstance(WireModel):
    """One placed copy of a task; inputs are already narrowed to the instance's scope."""
    instance_id : str
    task        : TaskSpec
    worker_id   : str
    scope       : Optional[Scope] = None
    inputs      : Tuple[StreamSelector, ...]

class DeploymentPlan(WireModel):
    topology  : str
    instances : Tuple[TaskInstance, ...] = ()

    def OnWorker(self, worker_id:str) -> List[TaskInstance]:
        return [i for i in self.instances if i.worker_id == worker_id]
