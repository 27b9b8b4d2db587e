## import standard libraries
import itertools
import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Set

# import local files
from interfaces.ClockInterface import TimerHandle
from schemas.BrokerTypes import Subscription
from schemas.ContextCodec import ContextCodec
from schemas.ContextTypes import ContextElement, EntityRef, Scope
from schemas.DiscoveryTypes import AvailabilitySubscription, Registration
from schemas.Errors import CtxMeshError
from utils import Logger

@dataclass
class _Link:
    endpoint        : str
    upstream_id     : str
    forward_initial : bool

class StreamBinder:
    """Relays one selector's data from every providing endpoint discovery knows of.

    Holds an unthrottled data subscription at each provider plus one availability
    subscription at discovery, so providers registering later are attached and
    expired ones detached. Notifications come back to the owner under
    <relay_prefix>/<n> (data) and <relay_prefix>/availability; the owner's
    prefix route hands them to OnData and OnAvailability.
    """
    AVAILABILITY = "availability"

    def __init__(self, owner:Any, discovery:Optional[str], relay_prefix:str, patterns:List[EntityRef],
                 attributes:List[str], scopes:List[Scope], expires:Optional[int] = None,
                 fixed:Optional[List[str]] = None, skip:Optional[Set[str]] = None,
                 headers:Optional[Dict[str, str]] = None, retry_ms:Optional[List[int]] = None):
        self._owner        = owner
        self._discovery    = discovery
        self._relay_prefix = relay_prefix.rstrip("/")
        self._patterns     = list(patterns)
        self._attributes   = list(attributes)
        self._scopes       = list(scopes)
        self._expires      = expires
        self._fixed        = list(fixed or [])
        self._skip         = set(skip or ())
        self._headers      = dict(headers or {})
        self._retry_ms     = list(retry_ms or [1000, 5000, 30000])
        self._links        : Dict[str, _Link] = {}
        self._relay_keys   : Dict[str, str] = {}
        self._reg_endpoint : Dict[str, str] = {}
        self._counter      = itertools.count(1)
        self._avail_id     : Optional[str] = None
        self._retry        : Optional[TimerHandle] = None
        self._failures     = 0
        self._closed       = False
        self.unreached     : List[str] = []

    # *** PUBLIC METHODS ***

    def Start(self) -> None:
        for endpoint in self._fixed:
            self.Attach(endpoint, forward_initial=False)
        self._BindDiscovery(initial=True)

    def Attach(self, endpoint:str, forward_initial:bool) -> bool:
        if self._closed or endpoint in self._skip:
            return False
        if endpoint in self._links:
            return True
        relay_key = str(next(self._counter))
        sub = Subscription(patterns=tuple(self._patterns), attributes=tuple(self._attributes), scopes=tuple(self._scopes),
                           notify_endpoint=self._owner.Url(f"{self._relay_prefix}/{relay_key}"), expires=self._expires)
        try:
            reply = self._owner.Post(endpoint, "/v1/subscribeContext", sub.ToWire(), self._headers)
        except CtxMeshError as err:
            Logger.Log(f"{self._owner.node_id}: cannot subscribe at {endpoint}: {err}", logging.WARNING)
            if endpoint not in self.unreached:
                self.unreached.append(endpoint)
            return False
        if endpoint in self.unreached:
            self.unreached.remove(endpoint)
        self._links[endpoint] = _Link(endpoint=endpoint, upstream_id=reply["subscriptionId"], forward_initial=forward_initial)
        self._relay_keys[relay_key] = endpoint
        Logger.Log(f"{self._owner.node_id}: bound {endpoint} ({reply['subscriptionId']}) -> {self._relay_prefix}/{relay_key}", logging.DEBUG)
        return True

    def Detach(self, endpoint:str) -> None:
        link = self._links.pop(endpoint, None)
        if link is None:
            return
        self._relay_keys = {k: v for k, v in self._relay_keys.items() if v != endpoint}
        try:
            self._owner.Post(endpoint, "/v1/unsubscribeContext", {"id": link.upstream_id})
        except CtxMeshError as err:
            Logger.Log(f"{self._owner.node_id}: unsubscribe at {endpoint} failed: {err}", logging.DEBUG)
        Logger.Log(f"{self._owner.node_id}: detached {endpoint}", logging.INFO)

    def OnAvailability(self, body:Dict[str, Any]) -> None:
        for raw in body.get("registrations", []):
            reg = ContextCodec.FromWire(Registration, raw)
            self._reg_endpoint[reg.id] = reg.providing_endpoint
            self.Attach(reg.providing_endpoint, forward_initial=True)
        for reg_id in body.get("removed", []):
            endpoint = self._reg_endpoint.pop(reg_id, None)
            if endpoint is not None and endpoint not in self._reg_endpoint.values() and endpoint not in self._fixed:
                self.Detach(endpoint)

    def OnData(self, relay_key:str, body:Dict[str, Any]) -> List[ContextElement]:
        """Elements of one inbound provider notification, or [] for unknown links and skipped initial snapshots."""
        endpoint = self._relay_keys.get(relay_key)
        if endpoint is None:
            return []
        if body.get("initial", False) and not self._links[endpoint].forward_initial:
            return []
        return ContextCodec.ListFromWire(ContextElement, body.get("elements"), "elements")

    def Endpoints(self) -> List[str]:
        return sorted(self._links)

    def Close(self) -> None:
        self._closed = True
        if self._retry is not None:
            self._retry.Cancel()
        if self._avail_id is not None and self._discovery is not None:
            try:
                self._owner.Post(self._discovery, "/v1/unsubscribeContextAvailability", {"id": self._avail_id})
            except CtxMeshError as err:
                Logger.Log(f"{self._owner.node_id}: availability unsubscribe failed: {err}", logging.DEBUG)
        for endpoint in list(self._links):
            self.Detach(endpoint)

    # *** PRIVATE METHODS ***

    def _BindDiscovery(self, initial:bool = False) -> None:
        self._retry = None
        if self._closed or self._discovery is None:
            return
        query = {
            "entities"   : [p.ToWire() for p in self._patterns],
            "attributes" : self._attributes,
            "scopes"     : [s.ToWire() for s in self._scopes],
        }
        try:
            found = self._owner.Post(self._discovery, "/v1/discoverContextAvailability", query)
            for raw in found.get("registrations", []):
                reg = ContextCodec.FromWire(Registration, raw)
                self._reg_endpoint[reg.id] = reg.providing_endpoint
                self.Attach(reg.providing_endpoint, forward_initial=not initial)
            if self._avail_id is None:
                watch = AvailabilitySubscription(patterns=tuple(self._patterns), attributes=tuple(self._attributes),
                                                 scopes=tuple(self._scopes), expires=self._expires,
                                                 notify_endpoint=self._owner.Url(f"{self._relay_prefix}/{StreamBinder.AVAILABILITY}"))
                self._avail_id = self._owner.Post(self._discovery, "/v1/subscribeContextAvailability", watch.ToWire())["subscriptionId"]
        except CtxMeshError as err:
            delay = self._retry_ms[min(self._failures, len(self._retry_ms) - 1)]
            self._failures += 1
            if self._discovery not in self.unreached:
                self.unreached.append(self._discovery)
            Logger.Log(f"{self._owner.node_id}: discovery {self._discovery} unavailable ({err}), binding pending, retry in {delay}ms", logging.WARNING)
            self._retry = self._owner.Clock.Schedule(delay, self._BindDiscovery)
            return
        self._failures = 0
        if self._discovery in self.unreached:
            self.unreached.remove(self._discovery)
