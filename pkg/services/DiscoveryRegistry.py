## import standard libraries
import itertools
import logging
from typing import Any, Dict, List, Optional

# import local files
from config.config import settings as default_settings
from interfaces.ClockInterface import ClockInterface, TimerHandle
from interfaces.NetworkInterface import NetworkInterface
from schemas.ContextCodec import ContextCodec
from schemas.ContextTypes import EntityRef, Scope
from schemas.DiscoveryTypes import AvailabilityNotification, AvailabilitySubscription, Registration
from schemas.Errors import InvariantViolation, UnknownRegistration, UnknownSubscription
from services.NotificationOutbox import NotificationOutbox
from services.ScopeMatcher import ScopeMatcher
from services.WireService import Handler, WireRequest, WireService
from utils import Logger

def _seq(item_id:str) -> int:
    return int(item_id.rsplit("-", 1)[1])

class DiscoveryRegistry(WireService):
    """Registry of context availability with expiry, renewal and availability subscriptions.

    Registrations live until their expiry time on the node clock; renewing one
    (registering again under its id) replaces it. Each register, renew or expiry
    event sends one availability notification to every active subscription it
    concerns, FIFO per subscription.
    """

    # *** BUILT-INS ***
    def __init__(self, node_id:str, endpoint:str, network:NetworkInterface, clock:ClockInterface,
                 config:Optional[Dict[str, Any]] = None):
        super().__init__(node_id=node_id, endpoint=endpoint, network=network, clock=clock)
        self._config         = config or default_settings
        self._default_expiry = int(self._config.get("DISCOVERY_CONFIG", {}).get("DEFAULT_EXPIRY_MS", 3600000))
        self._registrations  : Dict[str, Registration] = {}
        self._timers         : Dict[str, TimerHandle] = {}
        self._subscriptions  : Dict[str, AvailabilitySubscription] = {}
        self._reg_ids        = itertools.count(1)
        self._sub_ids        = itertools.count(1)
        self.outbox          = NotificationOutbox(node_id, network, clock, self._config.get("DELIVERY_CONFIG"))
        self.notifications   : int = 0

    # *** PUBLIC METHODS ***

    def Routes(self) -> Dict[str, Handler]:
        return {
            "/v1/registerContext"                  : self._HandleRegister,
            "/v1/discoverContextAvailability"      : self._HandleDiscover,
            "/v1/subscribeContextAvailability"     : self._HandleSubscribe,
            "/v1/unsubscribeContextAvailability"   : self._HandleUnsubscribe,
            "/v1/resolveThing"                     : self._HandleResolve,
            "/v1/statistics"                       : lambda req: self.Statistics(),
        }

    def RegisterContext(self, r:Registration) -> str:
        """Store a registration, or renew the one named by r.id.

        :param r: The registration; expires defaults to now + DEFAULT_EXPIRY_MS.
        :type r: Registration
        :raises InvariantViolation: expires is not after the registration time.
        :raises UnknownRegistration: r.id names no live registration.
        :return: The registration id.
        :rtype: str
        """
        with self._lock:
            now = self._clock.Now()
            expires = r.expires if r.expires is not None else now + self._default_expiry
            if expires <= now:
                raise InvariantViolation("expires", f"{expires} is not after {now}")
            previous = None
            if r.id is not None:
                previous = self._registrations.get(r.id)
                if previous is None:
                    raise UnknownRegistration(r.id)
                reg_id = r.id
                self._timers.pop(reg_id).Cancel()
            else:
                reg_id = f"r-{next(self._reg_ids)}"
            stored = r.model_copy(update={"id": reg_id, "expires": expires})
            self._registrations[reg_id] = stored
            self._timers[reg_id] = self._clock.ScheduleAt(expires, lambda: self._Expire(reg_id, expires))
            Logger.Log(f"{self.node_id}: {'renewed' if previous else 'registered'} {reg_id} -> {stored.providing_endpoint} until {expires}", logging.DEBUG)
            for sub in self._ActiveSubscriptions():
                if self.Matches(stored, list(sub.patterns), list(sub.attributes), list(sub.scopes)):
                    self._Notify(sub, registrations=[stored])
                elif previous is not None and self.Matches(previous, list(sub.patterns), list(sub.attributes), list(sub.scopes)):
                    self._Notify(sub, removed=[reg_id])
            return reg_id

    def DiscoverContextAvailability(self, patterns:List[EntityRef], attributes:List[str], scopes:List[Scope]) -> List[Registration]:
        with self._lock:
            now = self._clock.Now()
            return [r for r in self._Ordered()
                    if r.expires > now and self.Matches(r, patterns, attributes, scopes)]

    def SubscribeContextAvailability(self, s:AvailabilitySubscription) -> str:
        with self._lock:
            if s.expires is not None and s.expires <= self._clock.Now():
                raise InvariantViolation("expires", "not in the future")
            sub_id = f"as-{next(self._sub_ids)}"
            sub = s.model_copy(update={"id": sub_id})
            self._subscriptions[sub_id] = sub
            current = self.DiscoverContextAvailability(list(sub.patterns), list(sub.attributes), list(sub.scopes))
            self._Notify(sub, registrations=current)
            return sub_id

    def UnsubscribeContextAvailability(self, sub_id:str) -> None:
        with self._lock:
            if self._subscriptions.pop(sub_id, None) is None:
                raise UnknownSubscription(sub_id)

    def ResolveThing(self, thing:EntityRef) -> List[Registration]:
        if thing.is_pattern:
            raise InvariantViolation("isPattern", "a thing is a concrete entity")
        with self._lock:
            now = self._clock.Now()
            return [r for r in self._Ordered()
                    if r.expires > now and any(ref.Matches(thing.id, thing.type) for ref in r.thing_refs)]

    def Statistics(self) -> Dict[str, Any]:
        return {
            "registrations" : len(self._registrations),
            "subscriptions" : len(self._subscriptions),
            "notifications" : self.notifications,
            "delivered"     : self.outbox.delivered,
            "failed"        : self.outbox.failed,
        }

    def Shutdown(self) -> None:
        with self._lock:
            for timer in self._timers.values():
                timer.Cancel()

    @staticmethod
    def Matches(r:Registration, patterns:List[EntityRef], attributes:List[str], scopes:List[Scope]) -> bool:
        """Query match: some pattern pair intersects, attribute sets intersect (empty is a wildcard), every scope is admitted."""
        if not any(q.Intersects(p) for q in patterns for p in r.patterns):
            return False
        names = r.AttributeNames
        if attributes and names and not set(attributes) & set(names):
            return False
        return all(ScopeMatcher.MetadataSatisfies(s, list(r.scope_meta)) for s in scopes)

    # *** PRIVATE METHODS ***

    def _Ordered(self) -> List[Registration]:
        return [self._registrations[k] for k in sorted(self._registrations, key=_seq)]

    def _ActiveSubscriptions(self) -> List[AvailabilitySubscription]:
        now = self._clock.Now()
        for sub_id in [k for k, s in self._subscriptions.items() if s.expires is not None and s.expires <= now]:
            Logger.Log(f"{self.node_id}: availability subscription {sub_id} expired", logging.INFO)
            del self._subscriptions[sub_id]
        return [self._subscriptions[k] for k in sorted(self._subscriptions, key=_seq)]

    def _Expire(self, reg_id:str, expires:int) -> None:
        with self._lock:
            reg = self._registrations.get(reg_id)
            if reg is None or reg.expires != expires:
                return
            del self._registrations[reg_id]
            self._timers.pop(reg_id, None)
            Logger.Log(f"{self.node_id}: registration {reg_id} ({reg.providing_endpoint}) expired", logging.INFO)
            for sub in self._ActiveSubscriptions():
                if self.Matches(reg, list(sub.patterns), list(sub.attributes), list(sub.scopes)):
                    self._Notify(sub, removed=[reg_id])

    def _Notify(self, sub:AvailabilitySubscription, registrations:Optional[List[Registration]] = None,
                removed:Optional[List[str]] = None) -> None:
        body = AvailabilityNotification(subscription_id=sub.id, registrations=tuple(registrations or ()),
                                        removed=tuple(removed or ())).ToWire()
        self.notifications += 1
        self.outbox.Deliver(sub.id, sub.notify_endpoint, body)

    def _HandleRegister(self, req:WireRequest) -> Dict[str, Any]:
        return {"registrationId": self.RegisterContext(ContextCodec.FromWire(Registration, req.body))}

    def _HandleDiscover(self, req:WireRequest) -> Dict[str, Any]:
        patterns = ContextCodec.EntitiesFromWire(req.body.get("entities"))
        attributes = ContextCodec.StringList(req.body.get("attributes"), "attributes")
        scopes = ContextCodec.ScopesFromWire(req.body.get("scopes"))
        found = self.DiscoverContextAvailability(patterns, attributes, scopes)
        return {"registrations": [r.ToWire() for r in found]}

    def _HandleSubscribe(self, req:WireRequest) -> Dict[str, Any]:
        body = {k: v for k, v in req.body.items() if k != "id"}
        return {"subscriptionId": self.SubscribeContextAvailability(ContextCodec.FromWire(AvailabilitySubscription, body))}

    def _HandleUnsubscribe(self, req:WireRequest) -> Dict[str, Any]:
        sub_id = req.body.get("id")
        if not isinstance(sub_id, str):
            raise InvariantViolation("id", "expected a subscription id")
        self.UnsubscribeContextAvailability(sub_id)
        return {"status": "ok"}

    def _HandleResolve(self, req:WireRequest) -> Dict[str, Any]:
        thing = ContextCodec.FromWire(EntityRef, req.body.get("entity"))
        return {"registrations": [r.ToWire() for r in self.ResolveThing(thing)]}
