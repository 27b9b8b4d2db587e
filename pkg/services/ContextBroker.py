## import standard libraries
import itertools
import logging
from typing import Any, Dict, List, Optional, Tuple

# import local files
from config.config import settings as default_settings
from interfaces.ClockInterface import ClockInterface
from interfaces.NetworkInterface import NetworkInterface
from schemas.BrokerTypes import Subscription
from schemas.ContextCodec import ContextCodec
from schemas.ContextTypes import ContextAttribute, ContextElement, EntityRef, Scope
from schemas.Errors import CtxMeshError, InvalidSubscription, InvariantViolation, UnknownSubscription
from services.NotificationOutbox import NotificationOutbox
from services.ScopeMatcher import ScopeMatcher
from services.SubscriptionEngine import SubscriptionEngine
from services.WireService import Handler, WireRequest, WireService
from utils import Logger

EntityKey = Tuple[str, str]

class ContextBroker(WireService):
    """Single-node context broker: latest value per (entity, attribute), queries, throttled subscriptions.

    Updates, queries and timer fires are serialized on the node lock; notification
    delivery runs through the outbox and never holds up an update.
    """

    # *** BUILT-INS ***
    def __init__(self, node_id:str, endpoint:str, network:NetworkInterface, clock:ClockInterface,
                 config:Optional[Dict[str, Any]] = None):
        super().__init__(node_id=node_id, endpoint=endpoint, network=network, clock=clock)
        self._config    = config or default_settings
        self._store     : Dict[EntityKey, ContextElement] = {}
        # logical update time of every stored (entity, attribute)
        self._attr_time : Dict[Tuple[EntityKey, str], int] = {}
        self._tick      = itertools.count(1)
        self._sub_ids   = itertools.count(1)
        self._prefix    = self._config.get("BROKER_CONFIG", {}).get("SUBSCRIPTION_PREFIX", "s")
        self.outbox     = NotificationOutbox(node_id, network, clock, self._config.get("DELIVERY_CONFIG"))
        self.engine     = SubscriptionEngine(node_id, clock, self.outbox, self._lock)
        self.updates    : int = 0

    # *** PUBLIC METHODS ***

    def Routes(self) -> Dict[str, Handler]:
        return {
            "/v1/updateContext"      : self._HandleUpdate,
            "/v1/queryContext"       : self._HandleQuery,
            "/v1/subscribeContext"   : self._HandleSubscribe,
            "/v1/unsubscribeContext" : self._HandleUnsubscribe,
            "/v1/listSubscriptions"  : lambda req: {"subscriptions": [s.id for s in self.engine.Subscriptions()]},
            "/v1/statistics"         : lambda req: self.Statistics(),
        }

    def UpdateContext(self, elements:List[ContextElement]) -> List[Dict[str, Any]]:
        """Merge each element into the store attribute by attribute and feed matching subscriptions.

        :param elements: Decoded elements.
        :type elements: List[ContextElement]
        :return: One status per element, in order.
        :rtype: List[Dict[str, Any]]
        """
        statuses = []
        for element in elements:
            self._Apply(element)
            statuses.append({"status": "ok"})
        return statuses

    def QueryContext(self, patterns:List[EntityRef], attribute_filter:List[str], scopes:List[Scope]) -> List[ContextElement]:
        with self._lock:
            matched = []
            for key in sorted(self._store, key=lambda k: (k[1], k[0])):
                element = self._store[key]
                if not any(p.Matches(key[0], key[1]) for p in patterns):
                    continue
                if not ScopeMatcher.ElementMatchesAll(scopes, element):
                    continue
                projected = element.Project(attribute_filter)
                if attribute_filter and not projected.attributes:
                    continue
                matched.append(projected)
            return matched

    def SubscribeContext(self, sub:Subscription) -> str:
        with self._lock:
            if sub.expires is not None and sub.expires <= self._clock.Now():
                raise InvalidSubscription(f"expires {sub.expires} is not in the future")
            sub_id = f"{self._prefix}-{next(self._sub_ids)}"
            sub = sub.model_copy(update={"id": sub_id})
            self.engine.Add(sub)
            initial = self.QueryContext(list(sub.patterns), list(sub.attributes), list(sub.scopes))
            self.engine.EmitInitial(sub_id, initial)
            Logger.Log(f"{self.node_id}: subscription {sub_id} -> {sub.notify_endpoint} (throttling {sub.throttling}ms, {sub.policy})", logging.INFO)
            return sub_id

    def UnsubscribeContext(self, sub_id:str) -> None:
        with self._lock:
            if not self.engine.Remove(sub_id):
                raise UnknownSubscription(sub_id)
            Logger.Log(f"{self.node_id}: subscription {sub_id} removed", logging.INFO)

    def AttributeTime(self, entity_id:str, entity_type:str, attribute:str) -> Optional[int]:
        return self._attr_time.get(((entity_id, entity_type), attribute))

    def Statistics(self) -> Dict[str, Any]:
        return {
            "entities"      : len(self._store),
            "updates"       : self.updates,
            "subscriptions" : len(self.engine.Subscriptions()),
            "notifications" : self.engine.emitted,
            "dropped"       : self.engine.dropped,
            "delivered"     : self.outbox.delivered,
            "failed"        : self.outbox.failed,
        }

    def Shutdown(self) -> None:
        self.engine.Shutdown()

    # *** PRIVATE METHODS ***

    def _Apply(self, element:ContextElement) -> None:
        with self._lock:
            key = element.Key
            tick = next(self._tick)
            stored = self._store.get(key)
            merged : Dict[str, ContextAttribute] = {a.name: a for a in stored.attributes} if stored else {}
            for attr in element.attributes:
                merged[attr.name] = attr
                self._attr_time[(key, attr.name)] = tick
            current = ContextElement(entity=element.entity, attributes=tuple(merged.values()))
            self._store[key] = current
            self.updates += 1
            touched = [a.name for a in element.attributes]
            for sub in self.engine.Subscriptions():
                if not sub.MatchesEntity(key[0], key[1]) or not sub.Touches(touched):
                    continue
                if not ScopeMatcher.ElementMatchesAll(list(sub.scopes), current):
                    continue
                self.engine.Offer(sub.id, current.Project(list(sub.attributes)))

    def _HandleUpdate(self, req:WireRequest) -> Dict[str, Any]:
        raw = req.body.get("elements")
        if not isinstance(raw, list):
            raise InvariantViolation("elements", "expected a JSON array")
        statuses = []
        for item in raw:
            try:
                element = ContextCodec.FromWire(ContextElement, item)
            except CtxMeshError as err:
                statuses.append({"status": "error", **err.ToWire()})
                continue
            statuses.extend(self.UpdateContext([element]))
        return {"statuses": statuses}

    def _HandleQuery(self, req:WireRequest) -> Dict[str, Any]:
        patterns = ContextCodec.EntitiesFromWire(req.body.get("entities"))
        attributes = ContextCodec.StringList(req.body.get("attributes"), "attributes")
        scopes = ContextCodec.ScopesFromWire(req.body.get("scopes"))
        return {"elements": ContextCodec.ElementsToWire(self.QueryContext(patterns, attributes, scopes))}

    def _HandleSubscribe(self, req:WireRequest) -> Dict[str, Any]:
        body = {k: v for k, v in req.body.items() if k != "id"}
        try:
            sub = ContextCodec.FromWire(Subscription, body)
        except InvariantViolation as err:
            raise InvalidSubscription(str(err.detail))
        return {"subscriptionId": self.SubscribeContext(sub)}

    def _HandleUnsubscribe(self, req:WireRequest) -> Dict[str, Any]:
        sub_id = req.body.get("id")
        if not isinstance(sub_id, str):
            raise InvariantViolation("id", "expected a subscription id")
        self.UnsubscribeContext(sub_id)
        return {"status": "ok"}
