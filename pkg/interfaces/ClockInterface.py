## import standard libraries
import abc
import logging
import threading
import time
from typing import Callable, Optional

## pip module imports
import simpy

# import local files
from schemas.Errors import CtxMeshError
from utils import Logger

class TimerHandle:
    """Cancellable reference to one scheduled callback."""

    def __init__(self, due:int):
        self.due       : int = due
        self.cancelled : bool = False
        self._timer    : Optional[threading.Timer] = None

    def Cancel(self) -> None:
        self.cancelled = True
        if self._timer is not None:
            self._timer.cancel()

class ClockInterface(abc.ABC):
    """Time source plus timer scheduling, in epoch milliseconds."""

    @abc.abstractmethod
    def Now(self) -> int:
        pass

    @abc.abstractmethod
    def Schedule(self, delay_ms:int, fn:Callable[[], None]) -> TimerHandle:
        pass

    def ScheduleAt(self, due:int, fn:Callable[[], None]) -> TimerHandle:
        return self.Schedule(max(0, due - self.Now()), fn)

    @staticmethod
    def _guarded(handle:TimerHandle, fn:Callable[[], None]) -> Callable[[], None]:
        def run() -> None:
            if handle.cancelled:
                return
            try:
                fn()
            except CtxMeshError as err:
                Logger.Log(f"Timer callback due at {handle.due} failed: {err}", logging.ERROR)
        return run

class SimClock(ClockInterface):
    """Simulated clock on a simpy Environment; time moves only when advanced.

    Callbacks due at the same instant run in scheduling order, so a run is a
    pure function of the calls made against the clock.
    """
    MAX_DRAIN_STEPS = 5_000_000

    def __init__(self, start_ms:int = 0):
        self._env = simpy.Environment(initial_time=start_ms)

    def Now(self) -> int:
        return int(self._env.now)

    def Schedule(self, delay_ms:int, fn:Callable[[], None]) -> TimerHandle:
        delay = max(0, int(delay_ms))
        handle = TimerHandle(due=self.Now() + delay)
        run = ClockInterface._guarded(handle, fn)
        event = self._env.timeout(delay)
        event.callbacks.append(lambda _event: run())
        return handle

    def Pending(self) -> bool:
        return self._env.peek() != float("inf")

    def NextDue(self) -> Optional[int]:
        due = self._env.peek()
        return None if due == float("inf") else int(due)

    def Drain(self) -> None:
        """Run every callback due now, including ones they schedule for now."""
        steps = 0
        while self._env.peek() <= self._env.now:
            self._env.step()
            steps += 1
            if steps > SimClock.MAX_DRAIN_STEPS:
                raise RuntimeError(f"clock did not quiesce at t={self.Now()}")

    def AdvanceTo(self, t:int) -> None:
        if t < self.Now():
            raise ValueError(f"time never decreases: now={self.Now()} target={t}")
        self.Drain()
        if t > self.Now():
            self._env.run(until=t)
        self.Drain()

    def Advance(self, delta_ms:int) -> None:
        self.AdvanceTo(self.Now() + delta_ms)

    def RunUntilIdle(self, horizon_ms:int) -> None:
        """Advance through pending timers, but never past now + horizon_ms."""
        limit = self.Now() + horizon_ms
        due = self.NextDue()
        while due is not None and due <= limit:
            self.AdvanceTo(due)
            due = self.NextDue()
        self.AdvanceTo(limit)

class WallClock(ClockInterface):
    """Real time; each timer runs on its own daemon thread."""

    def Now(self) -> int:
        return int(time.time() * 1000)

    def Schedule(self, delay_ms:int, fn:Callable[[], None]) -> TimerHandle:
        delay = max(0, int(delay_ms))
        handle = TimerHandle(due=self.Now() + delay)
        timer = threading.Timer(delay / 1000.0, ClockInterface._guarded(handle, fn))
        timer.daemon = True
        handle._timer = timer
        timer.start()
        return handle
