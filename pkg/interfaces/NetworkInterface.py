## import standard libraries
import abc
from typing import Any, Dict, List, NamedTuple, Optional, Union

# import local files
from interfaces.Interface import Interface
from schemas.Errors import CtxMeshError

NODE_HEADER  = "X-Node-Id"
TRACE_HEADER = "X-Fed-Trace"

class Call(NamedTuple):
    url     : str
    body    : Dict[str, Any]
    headers : Dict[str, str] = {}

class NetworkInterface(Interface):
    """Request/response transport for canonical JSON bodies.

    Post raises EndpointUnreachable / EndpointTimeout when the peer cannot be
    reached and RemoteError when the peer answers with an error body.
    """

    # *** ABSTRACTS ***

    @abc.abstractmethod
    def Post(self, url:str, body:Dict[str, Any], headers:Optional[Dict[str, str]] = None,
             timeout_ms:Optional[int] = None) -> Dict[str, Any]:
        pass

    # *** PUBLIC METHODS ***

    def Gather(self, calls:List[Call], timeout_ms:Optional[int] = None) -> List[Union[Dict[str, Any], CtxMeshError]]:
        """Issue every call and wait for all of them; failures come back in place of responses."""
        results : List[Union[Dict[str, Any], CtxMeshError]] = []
        for call in calls:
            try:
                results.append(self.Post(call.url, call.body, call.headers, timeout_ms))
            except CtxMeshError as err:
                results.append(err)
        return results

    @staticmethod
    def Join(endpoint:str, path:str) -> str:
        return endpoint.rstrip("/") + "/" + path.lstrip("/")
