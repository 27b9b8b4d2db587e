## import standard libraries
import logging
from typing import Any, Dict, List, Optional

# import local files
from interfaces.ClockInterface import ClockInterface
from interfaces.NetworkInterface import NetworkInterface
from services.WireService import Handler, WireRequest, WireService
from utils import Logger

class NotificationRecorder(WireService):
    """Consumer node: accepts notifications at /v1/notify[/<label>] and keeps them in arrival order."""

    def __init__(self, node_id:str, endpoint:str, network:NetworkInterface, clock:ClockInterface):
        super().__init__(node_id=node_id, endpoint=endpoint, network=network, clock=clock)
        self._received : List[Dict[str, Any]] = []

    def Routes(self) -> Dict[str, Handler]:
        return {
            "/v1/notify"     : self._HandleNotify,
            "/v1/notify/"    : self._HandleNotify,
            "/v1/received"   : lambda req: {"notifications": self.Received()},
            "/v1/statistics" : lambda req: {"received": len(self._received)},
        }

    def Received(self, label:Optional[str] = None) -> List[Dict[str, Any]]:
        with self._lock:
            return [r for r in self._received if label is None or r["label"] == label]

    def _HandleNotify(self, req:WireRequest) -> Dict[str, Any]:
        with self._lock:
            self._received.append({"at": self._clock.Now(), "label": req.tail, "body": req.body})
        Logger.Log(f"{self.node_id}: notification #{len(self._received)} on '{req.tail}'", logging.DEBUG)
        return {"status": "ok"}
