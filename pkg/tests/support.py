## import standard libraries
from typing import Any, Dict, List, Optional

# import local files
from interfaces.ClockInterface import SimClock
from interfaces.NetworkInterface import NetworkInterface
from interfaces.SimNetwork import SimNetwork
from schemas.ContextTypes import TIMESTAMP_METADATUM, ContextAttribute, ContextElement, EntityRef, Metadatum
from schemas.Errors import EndpointUnreachable

def attr(name:str, value:Any, type_:str = "Number", t:Optional[int] = None) -> ContextAttribute:
    metadata = (Metadatum(name=TIMESTAMP_METADATUM, type="Integer", value=t),) if t is not None else ()
    return ContextAttribute(name=name, type=type_, value=value, metadata=metadata)

def element(entity_id:str, entity_type:str, *attributes:ContextAttribute) -> ContextElement:
    return ContextElement(entity=EntityRef(id=entity_id, type=entity_type), attributes=tuple(attributes))

def pattern(entity_type:str = "*", entity_id:str = ".*") -> EntityRef:
    return EntityRef(id=entity_id, type=entity_type, is_pattern=True)

def value_of(raw_element:Dict[str, Any], name:str) -> Any:
    for a in raw_element.get("attributes", []):
        if a["name"] == name:
            return a.get("value")
    return None

class World:
    """One simulated clock and network, with nodes attached as sim://<id>."""

    def __init__(self, start_ms:int = 0):
        self.events  : List[str] = []
        self.clock   = SimClock(start_ms=start_ms)
        self.network = SimNetwork(self.clock, recorder=self.events.append)

    def Add(self, service:Any) -> Any:
        self.network.Attach(service)
        return service

    @staticmethod
    def Ep(node_id:str) -> str:
        return SimNetwork.EndpointFor(node_id)

    def Post(self, node_id:str, path:str, body:Dict[str, Any]) -> Dict[str, Any]:
        return self.network.Post(self.Ep(node_id) + path, body)

class ScriptedNetwork(NetworkInterface):
    """Records every call; urls listed in `failing` raise EndpointUnreachable that many more times."""

    def __init__(self, clock:SimClock):
        super().__init__(config={})
        self.clock   = clock
        self.calls   : List[tuple] = []
        self.failing : Dict[str, int] = {}
        self.errors  : Dict[str, Exception] = {}
        self.Open()

    def _open(self) -> bool:
        return True

    def _close(self) -> bool:
        return True

    def Post(self, url, body, headers=None, timeout_ms=None):
        self.calls.append((self.clock.Now(), url, body))
        if url in self.errors:
            raise self.errors[url]
        if self.failing.get(url, 0) != 0:
            self.failing[url] -= 1
            raise EndpointUnreachable(url)
        return {"status": "ok"}
