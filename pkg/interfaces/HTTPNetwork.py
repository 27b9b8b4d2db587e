## import standard libraries
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Dict, List, Optional, Union

## pip module imports
import requests

# import local files
from interfaces.NetworkInterface import NODE_HEADER, Call, NetworkInterface
from schemas.ContextCodec import ContextCodec
from schemas.Errors import CtxMeshError, EndpointTimeout, EndpointUnreachable, RemoteError
from utils import Logger

class HTTPNetwork(NetworkInterface):
    """Real HTTP transport: POST canonical JSON with requests, fan out on a thread pool."""
    DEFAULT_TIMEOUT_MS = 10000

    # *** BUILT-INS ***
    def __init__(self, config:Optional[Dict[str, Any]] = None, node_id:Optional[str] = None, max_workers:int = 16):
        super().__init__(config=config or {})
        self._node_id  = node_id
        self._session  : Optional[requests.Session] = None
        self._pool     = ThreadPoolExecutor(max_workers=max_workers, thread_name_prefix="ctxmesh-fanout")
        self.Open()

    # *** IMPLEMENT ABSTRACT FUNCTIONS ***

    def _open(self) -> bool:
        self._session = requests.Session()
        return True

    def _close(self) -> bool:
        if self._session is not None:
            self._session.close()
            self._session = None
        self._pool.shutdown(wait=False)
        return True

    def Post(self, url:str, body:Dict[str, Any], headers:Optional[Dict[str, str]] = None,
             timeout_ms:Optional[int] = None) -> Dict[str, Any]:
        send_headers = {"Content-Type": "application/json"}
        if self._node_id:
            send_headers[NODE_HEADER] = self._node_id
        send_headers.update(headers or {})
        timeout = (timeout_ms or HTTPNetwork.DEFAULT_TIMEOUT_MS) / 1000.0
        session = self._session or requests.Session()
        Logger.Log(f"POST {url}", logging.DEBUG)
        try:
            response = session.post(url, data=ContextCodec.CanonicalBytes(body), headers=send_headers, timeout=timeout)
        except requests.exceptions.Timeout as err:
            raise EndpointTimeout(f"{url}: {err}")
        except requests.exceptions.RequestException as err:
            raise EndpointUnreachable(f"{url}: {err}")
        if response.status_code == 400:
            payload = ContextCodec.ParseJson(response.content)
            raise RemoteError(payload.get("error", "Unknown"), payload.get("detail"))
        if response.status_code != 200:
            raise EndpointUnreachable(f"{url}: HTTP {response.status_code}")
        return ContextCodec.ParseJson(response.content) if response.content else {}

    def Gather(self, calls:List[Call], timeout_ms:Optional[int] = None) -> List[Union[Dict[str, Any], CtxMeshError]]:
        def one(call:Call) -> Union[Dict[str, Any], CtxMeshError]:
            try:
                return self.Post(call.url, call.body, call.headers, timeout_ms)
            except CtxMeshError as err:
                return err
        # map keeps call order, and waiting on it is the join barrier
        return list(self._pool.map(one, calls))
