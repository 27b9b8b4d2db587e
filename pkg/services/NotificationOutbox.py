## import standard libraries
import logging
import threading
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Deque, Dict, List, Optional

# import local files
from config.config import settings as default_settings
from interfaces.ClockInterface import ClockInterface
from interfaces.NetworkInterface import NODE_HEADER, NetworkInterface
from schemas.Errors import CtxMeshError, DeliveryFailed, RemoteError
from utils import Logger

STATUS_PENDING = "pending"
STATUS_OK      = "ok"
STATUS_FAILED  = "failed"

@dataclass
class DeliveryTicket:
    url      : str
    body     : Dict[str, Any]
    status   : str = STATUS_PENDING
    attempts : int = 0
    error    : Optional[CtxMeshError] = None
    response : Optional[Dict[str, Any]] = None

@dataclass
class _Lane:
    queue     : Deque[DeliveryTicket] = field(default_factory=deque)
    in_flight : bool = False

class NotificationOutbox:
    """At-least-once POST delivery, FIFO per key, retries on the injected clock.

    At most one ticket per key is in flight, so a later body never overtakes an
    earlier one that is still being retried. After the last attempt a ticket
    fails with DeliveryFailed, is logged and dropped, and the lane moves on.
    A peer answering with an error body is not retried.
    """

    def __init__(self, node_id:str, network:NetworkInterface, clock:ClockInterface,
                 delivery_config:Optional[Dict[str, Any]] = None,
                 on_done:Optional[Callable[[str, DeliveryTicket], None]] = None):
        cfg = delivery_config or default_settings["DELIVERY_CONFIG"]
        self._node_id    = node_id
        self._network    = network
        self._clock      = clock
        self._attempts   : int = int(cfg["ATTEMPTS"])
        self._backoff_ms : List[int] = list(cfg["BACKOFF_MS"])
        self._on_done    = on_done
        self._lanes      : Dict[str, _Lane] = {}
        self._lock       = threading.RLock()
        self.delivered   : int = 0
        self.failed      : int = 0

    def Deliver(self, key:str, url:str, body:Dict[str, Any]) -> DeliveryTicket:
        """Queue one body for url behind everything already queued under key."""
        ticket = DeliveryTicket(url=url, body=body)
        with self._lock:
            lane = self._lanes.setdefault(key, _Lane())
            lane.queue.append(ticket)
            if not lane.in_flight:
                lane.in_flight = True
                self._clock.Schedule(0, lambda: self._Attempt(key))
        return ticket

    def Pending(self, key:Optional[str] = None) -> int:
        with self._lock:
            if key is not None:
                lane = self._lanes.get(key)
                return len(lane.queue) if lane else 0
            return sum(len(lane.queue) for lane in self._lanes.values())

    def Keys(self) -> List[str]:
        """Keys with queued or in-flight deliveries; a lane is dropped once it drains."""
        with self._lock:
            return sorted(self._lanes)

    def BackoffFor(self, attempt:int) -> int:
        """Delay before attempt number `attempt` (2-based); the last entry repeats."""
        return self._backoff_ms[min(attempt - 2, len(self._backoff_ms) - 1)]

    def _Attempt(self, key:str) -> None:
        with self._lock:
            lane = self._lanes.get(key)
            if lane is None or not lane.queue:
                self._lanes.pop(key, None)
                return
            ticket = lane.queue[0]
        ticket.attempts += 1
        try:
            ticket.response = self._network.Post(ticket.url, ticket.body, {NODE_HEADER: self._node_id})
        except CtxMeshError as err:
            ticket.error = err
            permanent = isinstance(err, RemoteError)
            if not permanent and ticket.attempts < self._attempts:
                delay = self.BackoffFor(ticket.attempts + 1)
                Logger.Log(f"Delivery to {ticket.url} failed (attempt {ticket.attempts}/{self._attempts}), retry in {delay}ms: {err}", logging.WARNING)
                self._clock.Schedule(delay, lambda: self._Attempt(key))
                return
            ticket.status = STATUS_FAILED
            ticket.error = DeliveryFailed(f"{ticket.url} after {ticket.attempts} attempt(s): {err}")
            self.failed += 1
            Logger.Log(f"Dropping delivery to {ticket.url}: {ticket.error}", logging.ERROR)
        else:
            ticket.status = STATUS_OK
            ticket.error = None
            self.delivered += 1
        self._Finish(key, ticket)

    def _Finish(self, key:str, ticket:DeliveryTicket) -> None:
        with self._lock:
            lane = self._lanes[key]
            lane.queue.popleft()
            if lane.queue:
                self._clock.Schedule(0, lambda: self._Attempt(key))
            else:
                del self._lanes[key]
        if self._on_done is not None:
            self._on_done(key, ticket)
