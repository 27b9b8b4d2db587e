## import standard libraries
import abc
import logging
from typing import Any, Callable, Dict, Optional, Union

# import local files
from interfaces.Interface import Interface
from schemas.AgentTypes import DeviceMessage
from schemas.ContextCodec import ContextCodec
from schemas.Errors import CtxMeshError
from utils import Logger

MessageSink = Callable[[DeviceMessage], None]

class TransportInterface(Interface):
    """A southbound source of device messages, one JSON document per line.

    Open starts delivering to the sink given at construction; a line that does not
    decode is logged and counted, and the transport keeps going.
    """

    def __init__(self, config:Dict[str, Any], sink:MessageSink):
        super().__init__(config=config)
        self._sink     = sink
        self.received  : int = 0
        self.malformed : int = 0

    # *** ABSTRACTS ***

    @abc.abstractmethod
    def Describe(self) -> str:
        pass

    # *** PROTECTED METHODS ***

    def _Line(self, line:Union[bytes, str], origin:Optional[str] = None) -> None:
        if not line.strip():
            return
        try:
            msg = ContextCodec.FromWire(DeviceMessage, ContextCodec.ParseJson(line))
        except CtxMeshError as err:
            self.malformed += 1
            Logger.Log(f"{self.Describe()}: bad message{' from ' + origin if origin else ''}: {err}", logging.WARNING)
            return
        self.received += 1
        self._sink(msg)
