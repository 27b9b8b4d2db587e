## import standard libraries
import abc
import logging
import threading
from typing import Any, Callable, Dict, NamedTuple, Optional

# import local files
from interfaces.ClockInterface import ClockInterface
from interfaces.NetworkInterface import NODE_HEADER, NetworkInterface
from schemas.Errors import UnknownPath
from utils import Logger

class WireRequest(NamedTuple):
    path    : str
    tail    : str
    body    : Dict[str, Any]
    headers : Dict[str, str]

    def Header(self, name:str) -> Optional[str]:
        """Case-insensitive header lookup (HTTP servers lower-case header names)."""
        wanted = name.lower()
        for key, value in self.headers.items():
            if key.lower() == wanted:
                return value
        return None

Handler = Callable[[WireRequest], Dict[str, Any]]

class WireService(abc.ABC):
    """A node reachable over the wire: a route table of POST handlers over decoded JSON bodies.

    The same table is mounted on FastAPI in serve mode and called in-process by
    SimNetwork, so every interaction goes through the public wire surface.
    Routes ending in "/" match by prefix; the rest of the path is the request tail.
    """

    # *** ABSTRACTS ***

    @abc.abstractmethod
    def Routes(self) -> Dict[str, Handler]:
        pass

    # *** BUILT-INS ***

    def __init__(self, node_id:str, endpoint:str, network:NetworkInterface, clock:ClockInterface):
        self.node_id  : str = node_id
        self.endpoint : str = endpoint.rstrip("/")
        self._network : NetworkInterface = network
        self._clock   : ClockInterface = clock
        self._lock    = threading.RLock()

    # *** PUBLIC METHODS ***

    def Handle(self, path:str, body:Dict[str, Any], headers:Optional[Dict[str, str]] = None) -> Dict[str, Any]:
        routes = self.Routes()
        handler = routes.get(path)
        tail = ""
        if handler is None:
            prefixes = sorted((p for p in routes if p.endswith("/") and path.startswith(p)), key=len, reverse=True)
            if not prefixes:
                raise UnknownPath(path)
            handler = routes[prefixes[0]]
            tail = path[len(prefixes[0]):]
        Logger.Log(f"{self.node_id} <- {path}", logging.DEBUG)
        return handler(WireRequest(path=path, tail=tail, body=body, headers=dict(headers or {})))

    def Url(self, path:str) -> str:
        return NetworkInterface.Join(self.endpoint, path)

    def Post(self, endpoint:str, path:str, body:Dict[str, Any], headers:Optional[Dict[str, str]] = None,
             timeout_ms:Optional[int] = None) -> Dict[str, Any]:
        send = {NODE_HEADER: self.node_id}
        send.update(headers or {})
        return self._network.Post(NetworkInterface.Join(endpoint, path), body, send, timeout_ms)

    def Shutdown(self) -> None:
        """Stop background timers; services holding any override this."""
        pass

    @property
    def Clock(self) -> ClockInterface:
        return self._clock

    @property
    def Network(self) -> NetworkInterface:
        return self._network
