## import standard libraries
import statistics
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

# import local files
from schemas.BrokerTypes import AGGREGATION_SET, POLICY_AGGREGATE_FN, POLICY_DROP, Subscription, ThrottleState
from schemas.ContextTypes import ContextAttribute, ContextElement

class GateResult(Enum):
    EMIT_NOW = "emit-now"
    BUFFERED = "buffered"
    DROPPED  = "dropped"

def _is_number(value:Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)

_FNS = {
    "avg"  : statistics.fmean,
    "min"  : min,
    "max"  : max,
    "last" : lambda values: values[-1],
}

class ThrottleGate:
    """The per-subscription throttling state machine.

    Windows are anchored at the last emission: an event arriving at least one
    throttling period after it (with nothing buffered) goes out at once;
    anything else is dropped (drop policy) or buffered until
    last_emit + throttling (aggregate policies). Callers own the timer; Gate
    only records when it is due.
    """

    @staticmethod
    def Gate(st:ThrottleState, s:Subscription, ev:ContextElement, now:int) -> GateResult:
        """Decide what happens to one matching snapshot.

        :param st: The subscription's gate state; updated in place.
        :type st: ThrottleState
        :param s: The subscription (throttling, policy).
        :type s: Subscription
        :param ev: The matching element snapshot.
        :type ev: ContextElement
        :param now: Event time in ms.
        :type now: int
        :return: EMIT_NOW (caller notifies ev), BUFFERED (timer due at st.timer_due) or DROPPED.
        :rtype: GateResult
        """
        if s.throttling == 0:
            st.last_emit = now
            return GateResult.EMIT_NOW
        window_open = st.last_emit is None or now - st.last_emit >= s.throttling
        if s.policy == POLICY_DROP:
            if window_open:
                st.last_emit = now
                return GateResult.EMIT_NOW
            return GateResult.DROPPED
        if window_open and not st.buffer:
            st.last_emit = now
            return GateResult.EMIT_NOW
        st.buffer.append((ev, now))
        if st.timer_due is None:
            # last_emit is set here: an open window with a non-empty buffer cannot occur without one
            st.timer_due = (st.last_emit if st.last_emit is not None else now) + s.throttling
        return GateResult.BUFFERED

    @staticmethod
    def Fire(st:ThrottleState, s:Subscription, fire_time:int) -> Optional[Tuple[List[ContextElement], str]]:
        """Timer expiry: aggregate and clear the buffer.

        :return: (elements, aggregation) to notify, or None when the buffer was empty.
        """
        st.timer_due = None
        st.timer = None
        if not st.buffer:
            return None
        snapshots = [snapshot for snapshot, _arrival in st.buffer]
        st.buffer = []
        st.last_emit = fire_time
        return ThrottleGate.Aggregate(snapshots, s)

    @staticmethod
    def Drain(st:ThrottleState, s:Subscription) -> Optional[Tuple[List[ContextElement], str]]:
        """Take whatever is buffered without touching last_emit (final flush on removal)."""
        if st.timer is not None:
            st.timer.Cancel()
        st.timer = None
        st.timer_due = None
        if not st.buffer:
            return None
        snapshots = [snapshot for snapshot, _arrival in st.buffer]
        st.buffer = []
        return ThrottleGate.Aggregate(snapshots, s)

    @staticmethod
    def Aggregate(snapshots:List[ContextElement], s:Subscription) -> Tuple[List[ContextElement], str]:
        if s.policy != POLICY_AGGREGATE_FN:
            return list(snapshots), AGGREGATION_SET
        fn_name = s.aggregate_fn or "last"
        # one synthetic element per (entity, attribute), in first-arrival order
        series : Dict[Tuple[Tuple[str, str], str], List[ContextAttribute]] = {}
        entities = {}
        for snapshot in snapshots:
            entities[snapshot.Key] = snapshot.entity
            for attr in snapshot.attributes:
                series.setdefault((snapshot.Key, attr.name), []).append(attr)
        fell_back = False
        elements : List[ContextElement] = []
        for (key, _name), attrs in series.items():
            values = [a.value for a in attrs]
            last = attrs[-1]
            if fn_name != "last" and all(_is_number(v) for v in values):
                value = _FNS[fn_name](values)
            else:
                fell_back = fell_back or fn_name != "last"
                value = last.value
            elements.append(ContextElement(entity=entities[key], attributes=(last.model_copy(update={"value": value}),)))
        return elements, ("last" if fell_back else fn_name)
