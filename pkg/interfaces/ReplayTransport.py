## import standard libraries
import logging
from pathlib import Path
from typing import Any, Dict, List

# import local files
from interfaces.ClockInterface import ClockInterface, TimerHandle
from interfaces.TransportInterface import MessageSink, TransportInterface
from schemas.AgentTypes import DeviceMessage
from schemas.ContextCodec import ContextCodec
from schemas.Errors import CtxMeshError
from utils import Logger

class ReplayTransport(TransportInterface):
    """Replays a file of device messages on the clock, keeping their embedded spacing.

    A message with ts is delivered (ts - first ts) / speed after Open; messages
    without ts follow the one before them immediately.
    """

    def __init__(self, config:Dict[str, Any], sink:MessageSink, clock:ClockInterface):
        """
        :param config: {"PATH": replay file, "SPEED": factor (default 1.0)}.
        """
        super().__init__(config=config, sink=sink)
        self._clock  = clock
        self._timers : List[TimerHandle] = []
        self.scheduled : int = 0

    def _open(self) -> bool:
        path = Path(self._config["PATH"])
        speed = float(self._config.get("SPEED", 1.0))
        if speed <= 0:
            raise ValueError(f"replay speed must be positive, got {speed}")
        first_ts = None
        offset = 0
        for number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            try:
                ts = ContextCodec.FromWire(DeviceMessage, ContextCodec.ParseJson(line)).ts
            except CtxMeshError as err:
                self.malformed += 1
                Logger.Log(f"{self.Describe()} line {number}: {err}", logging.WARNING)
                continue
            if ts is not None:
                first_ts = ts if first_ts is None else first_ts
                offset = max(offset, int((ts - first_ts) / speed))
            self._timers.append(self._clock.Schedule(offset, lambda raw=line: self._Line(raw)))
            self.scheduled += 1
        Logger.Log(f"Replaying {self.scheduled} message(s) from {path} at speed {speed}", logging.INFO)
        return True

    def _close(self) -> bool:
        for timer in self._timers:
            timer.Cancel()
        self._timers = []
        return True

    def Describe(self) -> str:
        return f"replay:{self._config.get('PATH')}"
