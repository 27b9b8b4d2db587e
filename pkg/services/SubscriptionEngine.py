## import standard libraries
import logging
import threading
from dataclasses import dataclass
from typing import Dict, List, Optional

# import local files
from interfaces.ClockInterface import ClockInterface
from schemas.BrokerTypes import AGGREGATION_NONE, Notification, Subscription, ThrottleState
from schemas.ContextTypes import ContextElement
from services.NotificationOutbox import NotificationOutbox
from services.ThrottleGate import GateResult, ThrottleGate
from utils import Logger

@dataclass
class SubscriptionEntry:
    sub   : Subscription
    state : ThrottleState

class SubscriptionEngine:
    """Active subscriptions of one node: throttle gates, aggregation timers, delivery.

    Shared by the plain broker and the federation point, so both emit the same
    notification stream for the same subscription parameters.
    """

    def __init__(self, node_id:str, clock:ClockInterface, outbox:NotificationOutbox, lock:threading.RLock):
        self._node_id = node_id
        self._clock   = clock
        self._outbox  = outbox
        self._lock    = lock
        self._entries : Dict[str, SubscriptionEntry] = {}
        self.emitted  : int = 0
        self.dropped  : int = 0

    # *** PUBLIC METHODS ***

    def Add(self, sub:Subscription) -> None:
        with self._lock:
            self._entries[sub.id] = SubscriptionEntry(sub=sub, state=ThrottleState())

    def Has(self, sub_id:str) -> bool:
        return sub_id in self._entries

    def Get(self, sub_id:str) -> Optional[Subscription]:
        entry = self._entries.get(sub_id)
        return entry.sub if entry else None

    def State(self, sub_id:str) -> Optional[ThrottleState]:
        entry = self._entries.get(sub_id)
        return entry.state if entry else None

    def Subscriptions(self) -> List[Subscription]:
        return [entry.sub for entry in self._entries.values()]

    def EmitInitial(self, sub_id:str, elements:List[ContextElement]) -> None:
        with self._lock:
            entry = self._entries[sub_id]
            entry.state.last_emit = self._clock.Now()
            self._Send(entry, elements, AGGREGATION_NONE, initial=True)

    def Offer(self, sub_id:str, snapshot:ContextElement) -> Optional[GateResult]:
        """Feed one matching snapshot through the subscription's gate; None if the subscription is gone."""
        with self._lock:
            if self.PurgeIfExpired(sub_id):
                return None
            entry = self._entries.get(sub_id)
            if entry is None:
                return None
            now = self._clock.Now()
            result = ThrottleGate.Gate(entry.state, entry.sub, snapshot, now)
            if result == GateResult.EMIT_NOW:
                self._Send(entry, [snapshot], AGGREGATION_NONE)
            elif result == GateResult.DROPPED:
                self.dropped += 1
                Logger.Log(f"{self._node_id}: throttled out an event for {sub_id} at {now}", logging.DEBUG)
            elif entry.state.timer is None and entry.state.timer_due is not None:
                entry.state.timer = self._clock.ScheduleAt(entry.state.timer_due, lambda: self._OnTimer(sub_id))
            return result

    def Remove(self, sub_id:str) -> bool:
        """Drop a subscription, flushing anything buffered as one final notification."""
        with self._lock:
            entry = self._entries.pop(sub_id, None)
            if entry is None:
                return False
            flushed = ThrottleGate.Drain(entry.state, entry.sub)
            if flushed is not None:
                elements, aggregation = flushed
                self._Send(entry, elements, aggregation)
            return True

    def PurgeIfExpired(self, sub_id:str) -> bool:
        with self._lock:
            entry = self._entries.get(sub_id)
            if entry is None or entry.sub.expires is None or self._clock.Now() < entry.sub.expires:
                return False
            Logger.Log(f"{self._node_id}: subscription {sub_id} expired at {entry.sub.expires}", logging.INFO)
            self.Remove(sub_id)
            return True

    def Shutdown(self) -> None:
        with self._lock:
            for entry in self._entries.values():
                if entry.state.timer is not None:
                    entry.state.timer.Cancel()

    # *** PRIVATE METHODS ***

    def _OnTimer(self, sub_id:str) -> None:
        with self._lock:
            entry = self._entries.get(sub_id)
            if entry is None:
                return
            fired = ThrottleGate.Fire(entry.state, entry.sub, self._clock.Now())
            if fired is not None:
                elements, aggregation = fired
                self._Send(entry, elements, aggregation)
            self.PurgeIfExpired(sub_id)

    def _Send(self, entry:SubscriptionEntry, elements:List[ContextElement], aggregation:str, initial:bool = False) -> None:
        notification = Notification(subscription_id=entry.sub.id, elements=tuple(elements), aggregation=aggregation,
                                    emitted_at=self._clock.Now(), initial=initial)
        self.emitted += 1
        self._outbox.Deliver(entry.sub.id, entry.sub.notify_endpoint, notification.ToWire())
