## import standard libraries
import logging
from typing import Any, Callable, Dict, List, Optional, Set
from urllib.parse import urlsplit

# import local files
from interfaces.ClockInterface import ClockInterface
from interfaces.NetworkInterface import NODE_HEADER, NetworkInterface
from schemas.ContextCodec import ContextCodec
from schemas.Errors import CtxMeshError, EndpointTimeout, EndpointUnreachable, RemoteError
from utils import Logger

SIM_SCHEME = "sim"

class SimNetwork(NetworkInterface):
    """In-memory network of WireService nodes addressed as sim://<node-id>.

    Calls are delivered in issue order. Bodies are round-tripped through the
    canonical codec both ways, so a node sees exactly what it would see on HTTP.
    Scripted faults: a partitioned node can neither send nor receive until the
    partition ends; a delayed node answers within its delay, which exceeds a
    caller's timeout when the delay is at least that timeout.
    """

    # *** BUILT-INS ***
    def __init__(self, clock:ClockInterface, recorder:Optional[Callable[[str], None]] = None):
        super().__init__(config={})
        self._clock      = clock
        self._nodes      : Dict[str, Any] = {}
        self._partitions : Dict[str, int] = {}
        self._delays     : Dict[str, int] = {}
        self._recorder   = recorder
        self.Open()

    # *** IMPLEMENT ABSTRACT FUNCTIONS ***

    def _open(self) -> bool:
        return True

    def _close(self) -> bool:
        return True

    # *** PUBLIC STATICS ***

    @staticmethod
    def EndpointFor(node_id:str) -> str:
        return f"{SIM_SCHEME}://{node_id}"

    # *** PUBLIC METHODS ***

    def Attach(self, service:Any) -> None:
        """Make a WireService reachable at its sim:// endpoint."""
        node = urlsplit(service.endpoint).netloc
        self._nodes[node] = service

    def Detach(self, node_id:str) -> None:
        self._nodes.pop(node_id, None)

    def Node(self, node_id:str) -> Any:
        return self._nodes[node_id]

    def Nodes(self) -> List[str]:
        return sorted(self._nodes)

    def Partition(self, nodes:List[str], duration_ms:int) -> None:
        until = self._clock.Now() + duration_ms
        for node in nodes:
            self._partitions[node] = max(until, self._partitions.get(node, 0))
        self._Record(f"partition {','.join(sorted(nodes))} until {until}")

    def SetDelay(self, node:str, delay_ms:int) -> None:
        self._delays[node] = delay_ms

    def IsPartitioned(self, node:Optional[str]) -> bool:
        if node is None:
            return False
        until = self._partitions.get(node)
        return until is not None and self._clock.Now() < until

    def Post(self, url:str, body:Dict[str, Any], headers:Optional[Dict[str, str]] = None,
             timeout_ms:Optional[int] = None) -> Dict[str, Any]:
        parts  = urlsplit(url)
        target = parts.netloc
        source = (headers or {}).get(NODE_HEADER, "client")
        path   = parts.path or "/"
        if parts.scheme != SIM_SCHEME or target not in self._nodes:
            self._Record(f"{source}->{target} {path} unreachable")
            raise EndpointUnreachable(url)
        if self.IsPartitioned(target) or self.IsPartitioned(source):
            self._Record(f"{source}->{target} {path} partitioned")
            raise EndpointUnreachable(f"{url} (partitioned)")
        delay = self._delays.get(target, 0)
        if timeout_ms is not None and delay >= timeout_ms:
            self._Record(f"{source}->{target} {path} timeout")
            raise EndpointTimeout(f"{url} (delay {delay}ms >= {timeout_ms}ms)")
        wire_body = ContextCodec.ParseJson(ContextCodec.CanonicalBytes(body))
        try:
            response = self._nodes[target].Handle(path, wire_body, dict(headers or {}))
        except CtxMeshError as err:
            wire = err.ToWire()
            self._Record(f"{source}->{target} {path} error {wire['error']}")
            Logger.Log(f"{target} rejected {path}: {err}", logging.DEBUG)
            raise RemoteError(wire["error"], wire["detail"])
        self._Record(f"{source}->{target} {path} ok")
        return ContextCodec.ParseJson(ContextCodec.CanonicalBytes(response))

    # *** PRIVATE METHODS ***

    def _Record(self, line:str) -> None:
        if self._recorder is not None:
            self._recorder(f"t={self._clock.Now()} {line}")
