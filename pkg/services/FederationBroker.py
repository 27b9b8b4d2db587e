## import standard libraries
import itertools
import logging
from typing import Any, Dict, List, Optional, Set, Tuple

# import local files
from config.config import settings as default_settings
from interfaces.ClockInterface import ClockInterface
from interfaces.NetworkInterface import NODE_HEADER, TRACE_HEADER, Call, NetworkInterface
from schemas.BrokerTypes import Subscription
from schemas.ContextCodec import ContextCodec
from schemas.ContextTypes import ANY_TYPE, ContextAttribute, ContextElement, EntityRef, Scope
from schemas.DiscoveryTypes import AvailabilitySubscription, Registration
from schemas.Errors import CtxMeshError, InvalidSubscription, InvariantViolation, UnknownSubscription
from schemas.FederationTypes import LEVEL_GLOBAL, FederationNode, MergePolicy
from services.NotificationOutbox import NotificationOutbox
from services.RegistrationKeeper import RegistrationKeeper
from services.StreamBinder import StreamBinder
from services.SubscriptionEngine import SubscriptionEngine
from services.WireService import Handler, WireRequest, WireService
from utils import Logger

ANY_ENTITY = EntityRef(id=".*", type=ANY_TYPE, is_pattern=True)

class FederationBroker(WireService):
    """Federation point: the broker API, answered by fanning out to every provider discovery knows of.

    Queries merge the local broker's answer with the providers' answers; subscriptions
    relay every provider's stream through this node's own throttle gates, so a
    consumer sees one coherent stream. Nodes compose into levels by attaching to a
    parent discovery with one summarized registration that points back here.
    """

    # *** BUILT-INS ***
    def __init__(self, node:FederationNode, endpoint:str, network:NetworkInterface, clock:ClockInterface,
                 config:Optional[Dict[str, Any]] = None):
        super().__init__(node_id=node.node_id, endpoint=endpoint, network=network, clock=clock)
        self.node       : FederationNode = node
        self._config    = config or default_settings
        fed_config      = self._config.get("FEDERATION_CONFIG", {})
        self._timeout   = int(fed_config.get("PROVIDER_TIMEOUT_MS", 2000))
        self._reg_expiry= int(fed_config.get("REGISTRATION_EXPIRY_MS", 60000))
        self._retry_ms  = list(fed_config.get("PARENT_RETRY_MS", [1000, 5000, 30000]))
        self._prefix    = self._config.get("BROKER_CONFIG", {}).get("SUBSCRIPTION_PREFIX", "s")
        self._sub_ids   = itertools.count(1)
        self.outbox     = NotificationOutbox(node.node_id, network, clock, self._config.get("DELIVERY_CONFIG"))
        self.engine     = SubscriptionEngine(node.node_id, clock, self.outbox, self._lock)
        self._binders   : Dict[str, StreamBinder] = {}
        self._parent    : Optional[RegistrationKeeper] = None
        self._watching  = False
        self._known_types    : Set[str] = set()
        self._known_patterns : Set[Tuple[str, str, bool]] = set()
        self.queries         : int = 0
        self.partial_queries : int = 0
        self.relayed         : int = 0

    # *** PUBLIC STATICS ***

    @staticmethod
    def MergeElements(groups:Dict[str, List[ContextElement]], p:Optional[MergePolicy] = None) -> List[ContextElement]:
        """Merge per-provider results into one element per (id, type).

        Per attribute, the candidate with the latest "timestamp" metadatum wins (missing
        counts as 0); equal timestamps go to the lexicographically smallest providing
        endpoint. Attributes keep the order of their first appearance, scanning
        providers in endpoint order; elements come out ordered by (type, id).

        :param groups: Elements returned by each provider, keyed by providing endpoint.
        :type groups: Dict[str, List[ContextElement]]
        :param p: The merge policy; only the default policy exists.
        :type p: Optional[MergePolicy]
        :return: The merged elements.
        :rtype: List[ContextElement]
        """
        _policy = p or MergePolicy()
        entities : Dict[Tuple[str, str], EntityRef] = {}
        winners  : Dict[Tuple[str, str], Dict[str, Tuple[int, ContextAttribute]]] = {}
        for endpoint in sorted(groups):
            for element in groups[endpoint]:
                entities.setdefault(element.Key, element.entity)
                attrs = winners.setdefault(element.Key, {})
                for attr in element.attributes:
                    stamp = attr.Timestamp or 0
                    current = attrs.get(attr.name)
                    # strictly later only: an earlier endpoint keeps a tie
                    if current is None or stamp > current[0]:
                        attrs[attr.name] = (stamp, attr)
        merged = []
        for key in sorted(winners, key=lambda k: (k[1], k[0])):
            merged.append(ContextElement(entity=entities[key], attributes=tuple(a for _stamp, a in winners[key].values())))
        return merged

    # *** PUBLIC METHODS ***

    def Routes(self) -> Dict[str, Handler]:
        return {
            "/v1/updateContext"      : self._HandleUpdate,
            "/v1/queryContext"       : self._HandleQuery,
            "/v1/subscribeContext"   : self._HandleSubscribe,
            "/v1/unsubscribeContext" : self._HandleUnsubscribe,
            "/v1/listSubscriptions"  : lambda req: {"subscriptions": [s.id for s in self.engine.Subscriptions()]},
            "/v1/attachParent"       : self._HandleAttach,
            "/v1/statistics"         : lambda req: self.Statistics(),
            "/v1/relay/"             : self._HandleRelay,
            "/v1/watch/"             : self._HandleWatch,
        }

    def FederatedQuery(self, patterns:List[EntityRef], attributes:List[str], scopes:List[Scope],
                       trace:Optional[List[str]] = None) -> Tuple[List[ContextElement], List[str]]:
        """Query the local broker and every discovered provider, then merge.

        :param trace: Node ids the request already passed through; a node finding itself answers local-only.
        :return: The merged elements, and the endpoints that could not be reached (empty when complete).
        """
        trace = list(trace or [])
        visited = self.node_id in trace
        body = {
            "entities"   : [p.ToWire() for p in patterns],
            "attributes" : list(attributes),
            "scopes"     : [s.ToWire() for s in scopes],
        }
        groups  : Dict[str, List[ContextElement]] = {}
        partial : Set[str] = set()
        local = self.node.local_broker
        if local:
            try:
                reply = self.Post(local, "/v1/queryContext", body, timeout_ms=self._timeout)
                groups[local] = ContextCodec.ListFromWire(ContextElement, reply.get("elements"), "elements")
            except CtxMeshError as err:
                Logger.Log(f"{self.node_id}: local broker {local} unavailable: {err}", logging.WARNING)
                partial.add(local)
        if not visited and self.node.discovery:
            endpoints : List[str] = []
            try:
                found = self.Post(self.node.discovery, "/v1/discoverContextAvailability", body, timeout_ms=self._timeout)
                endpoints = sorted({r["providingEndpoint"] for r in found.get("registrations", [])} - {self.endpoint, local})
            except CtxMeshError as err:
                Logger.Log(f"{self.node_id}: discovery {self.node.discovery} unavailable, answering local-only: {err}", logging.WARNING)
                partial.add(self.node.discovery)
            headers = {NODE_HEADER: self.node_id, TRACE_HEADER: ",".join(trace + [self.node_id])}
            calls = [Call(url=NetworkInterface.Join(ep, "/v1/queryContext"), body=body, headers=headers) for ep in endpoints]
            for endpoint, result in zip(endpoints, self._network.Gather(calls, self._timeout)):
                if isinstance(result, CtxMeshError):
                    Logger.Log(f"{self.node_id}: provider {endpoint} skipped: {result}", logging.WARNING)
                    partial.add(endpoint)
                    continue
                groups[endpoint] = ContextCodec.ListFromWire(ContextElement, result.get("elements"), "elements")
                partial.update(result.get("partial", []))
        self.queries += 1
        if partial:
            self.partial_queries += 1
        return FederationBroker.MergeElements(groups), sorted(partial)

    def FederatedSubscribe(self, sub:Subscription, trace:Optional[List[str]] = None) -> str:
        trace = list(trace or [])
        if sub.expires is not None and sub.expires <= self._clock.Now():
            raise InvalidSubscription(f"expires {sub.expires} is not in the future")
        visited = self.node_id in trace
        with self._lock:
            sub_id = f"{self._prefix}-{next(self._sub_ids)}"
            sub = sub.model_copy(update={"id": sub_id})
            self.engine.Add(sub)
        binder = StreamBinder(self, None if visited else self.node.discovery, f"/v1/relay/{sub_id}",
                              list(sub.patterns), list(sub.attributes), list(sub.scopes), expires=sub.expires,
                              fixed=[self.node.local_broker] if self.node.local_broker else [],
                              skip={self.endpoint}, headers={TRACE_HEADER: ",".join(trace + [self.node_id])},
                              retry_ms=self._retry_ms)
        self._binders[sub_id] = binder
        binder.Start()
        initial, _partial = self.FederatedQuery(list(sub.patterns), list(sub.attributes), list(sub.scopes), trace)
        self.engine.EmitInitial(sub_id, initial)
        Logger.Log(f"{self.node_id}: federated subscription {sub_id} over {len(binder.Endpoints())} provider(s)", logging.INFO)
        return sub_id

    def UnsubscribeContext(self, sub_id:str) -> None:
        if not self.engine.Remove(sub_id):
            raise UnknownSubscription(sub_id)
        binder = self._binders.pop(sub_id, None)
        if binder is not None:
            binder.Close()

    def UpdateContext(self, body:Dict[str, Any]) -> Dict[str, Any]:
        if not self.node.local_broker:
            raise InvariantViolation("localBroker", f"{self.node_id} (level {self.node.level}) holds no store")
        return self.Post(self.node.local_broker, "/v1/updateContext", body)

    def AttachParent(self, parent_discovery:str) -> bool:
        """Register this node at a parent discovery and keep the registration alive.

        :return: True when the parent accepted the first registration; False means deferred (retried in the background).
        """
        if self.node.level == LEVEL_GLOBAL:
            raise InvariantViolation("parentDiscovery", "a level 4 node has no parent")
        if not parent_discovery:
            raise InvariantViolation("parentDiscovery", "empty")
        if self._parent is not None:
            self._parent.Stop()
        self.node = self.node.model_copy(update={"parent_discovery": parent_discovery})
        self._parent = RegistrationKeeper(self, parent_discovery, self._reg_expiry, self._retry_ms, self._Summary)
        attached = self._parent.Refresh()
        self._StartWatches()
        Logger.Log(f"{self.node_id}: attach to {parent_discovery} {'done' if attached else 'deferred'}", logging.INFO)
        return attached

    def Statistics(self) -> Dict[str, Any]:
        stats = {
            "level"          : self.node.level,
            "subscriptions"  : len(self.engine.Subscriptions()),
            "queries"        : self.queries,
            "partialQueries" : self.partial_queries,
            "relayed"        : self.relayed,
            "notifications"  : self.engine.emitted,
            "dropped"        : self.engine.dropped,
        }
        if self._parent is not None and self._parent.reg_id is not None:
            stats["parentRegistration"] = self._parent.reg_id
        return stats

    def Shutdown(self) -> None:
        self.engine.Shutdown()
        if self._parent is not None:
            self._parent.Stop()

    # *** PRIVATE METHODS ***

    def _Summary(self) -> Optional[Registration]:
        """Union of this node's discovery registration patterns plus one pattern per locally stored type."""
        patterns : Dict[Tuple[str, str, bool], EntityRef] = {}
        query = {"entities": [ANY_ENTITY.ToWire()], "attributes": [], "scopes": []}
        if self.node.discovery:
            try:
                found = self.Post(self.node.discovery, "/v1/discoverContextAvailability", query)
                for raw in found.get("registrations", []):
                    for p in ContextCodec.FromWire(Registration, raw).patterns:
                        patterns[(p.type, p.id, p.is_pattern)] = p
            except CtxMeshError as err:
                Logger.Log(f"{self.node_id}: summary without discovery contents: {err}", logging.WARNING)
        if self.node.local_broker:
            try:
                found = self.Post(self.node.local_broker, "/v1/queryContext", query)
                for raw in found.get("elements", []):
                    entity_type = raw["entity"]["type"]
                    patterns[(entity_type, ".*", True)] = EntityRef(id=".*", type=entity_type, is_pattern=True)
            except CtxMeshError as err:
                Logger.Log(f"{self.node_id}: summary without local types: {err}", logging.WARNING)
        self._known_patterns = set(patterns)
        self._known_types = {key[0] for key in patterns if key[1] == ".*"}
        if not patterns:
            return None
        return Registration(patterns=tuple(patterns[k] for k in sorted(patterns)), providing_endpoint=self.endpoint)

    def _StartWatches(self) -> None:
        """Watch the local broker for new types and the local discovery for new registrations."""
        if self._watching:
            return
        self._watching = True
        if self.node.local_broker:
            watch = Subscription(patterns=(ANY_ENTITY,), notify_endpoint=self.Url("/v1/watch/types"))
            try:
                self.Post(self.node.local_broker, "/v1/subscribeContext", watch.ToWire())
            except CtxMeshError as err:
                Logger.Log(f"{self.node_id}: type watch not set: {err}", logging.WARNING)
        if self.node.discovery:
            watch = AvailabilitySubscription(patterns=(ANY_ENTITY,), notify_endpoint=self.Url("/v1/watch/registrations"))
            try:
                self.Post(self.node.discovery, "/v1/subscribeContextAvailability", watch.ToWire())
            except CtxMeshError as err:
                Logger.Log(f"{self.node_id}: registration watch not set: {err}", logging.WARNING)

    def _HandleUpdate(self, req:WireRequest) -> Dict[str, Any]:
        return self.UpdateContext(req.body)

    def _HandleQuery(self, req:WireRequest) -> Dict[str, Any]:
        patterns = ContextCodec.EntitiesFromWire(req.body.get("entities"))
        attributes = ContextCodec.StringList(req.body.get("attributes"), "attributes")
        scopes = ContextCodec.ScopesFromWire(req.body.get("scopes"))
        elements, partial = self.FederatedQuery(patterns, attributes, scopes, _trace(req))
        reply : Dict[str, Any] = {"elements": ContextCodec.ElementsToWire(elements)}
        if partial:
            reply["partial"] = partial
        return reply

    def _HandleSubscribe(self, req:WireRequest) -> Dict[str, Any]:
        body = {k: v for k, v in req.body.items() if k != "id"}
        try:
            sub = ContextCodec.FromWire(Subscription, body)
        except InvariantViolation as err:
            raise InvalidSubscription(str(err.detail))
        return {"subscriptionId": self.FederatedSubscribe(sub, _trace(req))}

    def _HandleUnsubscribe(self, req:WireRequest) -> Dict[str, Any]:
        sub_id = req.body.get("id")
        if not isinstance(sub_id, str):
            raise InvariantViolation("id", "expected a subscription id")
        self.UnsubscribeContext(sub_id)
        return {"status": "ok"}

    def _HandleAttach(self, req:WireRequest) -> Dict[str, Any]:
        parent = req.body.get("parentDiscovery")
        if not isinstance(parent, str):
            raise InvariantViolation("parentDiscovery", "expected a discovery endpoint")
        return {"status": "ok" if self.AttachParent(parent) else "deferred"}

    def _HandleRelay(self, req:WireRequest) -> Dict[str, Any]:
        sub_id, _, relay_key = req.tail.rpartition("/")
        binder = self._binders.get(sub_id)
        if binder is None:
            return {"status": "ignored"}
        if relay_key == StreamBinder.AVAILABILITY:
            binder.OnAvailability(req.body)
            return {"status": "ok"}
        sub = self.engine.Get(sub_id)
        if sub is None or self.engine.PurgeIfExpired(sub_id):
            self._binders.pop(sub_id, None)
            binder.Close()
            return {"status": "ignored"}
        for element in binder.OnData(relay_key, req.body):
            self.relayed += 1
            self.engine.Offer(sub_id, element.Project(list(sub.attributes)))
        return {"status": "ok"}

    def _HandleWatch(self, req:WireRequest) -> Dict[str, Any]:
        if self._parent is None:
            return {"status": "ignored"}
        changed = False
        if req.tail == "types":
            for raw in req.body.get("elements", []):
                changed = changed or raw["entity"]["type"] not in self._known_types
        elif req.tail == "registrations":
            for raw in req.body.get("registrations", []):
                for p in ContextCodec.FromWire(Registration, raw).patterns:
                    changed = changed or (p.type, p.id, p.is_pattern) not in self._known_patterns
        if changed:
            Logger.Log(f"{self.node_id}: local contents grew, refreshing registration at {self._parent.discovery}", logging.DEBUG)
            self._parent.Refresh()
        return {"status": "ok"}

def _trace(req:WireRequest) -> List[str]:
    raw = req.Header(TRACE_HEADER)
    return [node for node in raw.split(",") if node] if raw else []
