## import standard libraries
from typing import Any, List, Literal, Optional, Tuple

## pip module imports
from pydantic import ConfigDict
from pydantic.alias_generators import to_camel

# import local files
from schemas.AgentTypes import DeviceMapping
from schemas.ContextTypes import Scope, WireModel

NODE_KINDS = ("broker", "discovery", "federation", "agent", "history", "worker", "orchestrator", "consumer")

ACTIONS = ("publish", "ingest", "register", "subscribe", "unsubscribe", "subscribeAvailability", "query",
           "discover", "attach", "submit", "partition", "delay", "advance")
ASSERTIONS = ("expectNotification", "expectQueryResult", "expectHistory", "expectBinding", "expectStatistic")

class ScenarioNode(WireModel):
    """One node to boot. Node references (localBroker, discovery, ...) name other nodes by id."""
    id               : str
    kind             : Literal["broker", "discovery", "federation", "agent", "history", "worker", "orchestrator", "consumer"]
    level            : Optional[int] = None
    local_broker     : Optional[str] = None
    discovery        : Optional[str] = None
    parent_discovery : Optional[str] = None
    broker           : Optional[str] = None
    mapping          : Optional[DeviceMapping] = None
    tier             : Literal["cloud", "edge"] = "cloud"
    scopes           : Tuple[Scope, ...] = ()
    capacity         : int = 1
    # history only: entity types to record from `broker`
    record           : Tuple[str, ...] = ()
    throttling       : int = 0
    policy           : str = "drop"

    @property
    def References(self) -> List[Tuple[str, str]]:
        named = [("localBroker", self.local_broker), ("discovery", self.discovery),
                 ("parentDiscovery", self.parent_discovery), ("broker", self.broker)]
        return [(field, ref) for field, ref in named if ref is not None]

class ScenarioStep(WireModel):
    """A timed action or assertion; every key besides at/do/node is kind-specific and read through Arg."""
    model_config = ConfigDict(frozen=True, populate_by_name=True, extra="allow", alias_generator=to_camel)

    at   : int = 0
    do   : str
    node : Optional[str] = None

    def Arg(self, name:str, default:Any = None) -> Any:
        return (self.model_extra or {}).get(name, default)

    @property
    def IsAssertion(self) -> bool:
        return self.do in ASSERTIONS

class ScenarioScript(WireModel):
    name    : str = "scenario"
    start   : int = 0
    nodes   : Tuple[ScenarioNode, ...] = ()
    actions : Tuple[ScenarioStep, ...] = ()

class AssertionResult(WireModel):
    index  : int
    kind   : str
    passed : bool
    detail : str = ""
    line   : Optional[int] = None

class ScenarioReport(WireModel):
    scenario   : str
    passed     : bool
    assertions : Tuple[AssertionResult, ...] = ()
    events     : Tuple[str, ...] = ()

    def Text(self) -> str:
        """Human-readable rendering: verdict, one line per assertion, then the event count."""
        passed = sum(1 for a in self.assertions if a.passed)
        lines = [f"scenario {self.scenario}: {'PASS' if self.passed else 'FAIL'} ({passed}/{len(self.assertions)} assertions)"]
        for a in self.assertions:
            where = f" line {a.line}" if a.line is not None else ""
            lines.append(f"  [{'pass' if a.passed else 'FAIL'}] #{a.index} {a.kind}{where}: {a.detail}")
        lines.append(f"  {len(self.events)} event(s) logged")
        return "\n".join(lines) + "\n"
