## import standard libraries
import abc
from typing import Any, Dict

# import local files

class Interface(abc.ABC):
    """Base of every outward boundary (network, storage sink, archive).

    Subclasses implement _open/_close; callers use Open/Close or a with-block.
    """

    # *** ABSTRACTS ***

    @abc.abstractmethod
    def _open(self) -> bool:
        pass

    @abc.abstractmethod
    def _close(self) -> bool:
        pass

    # *** BUILT-INS ***

    def __init__(self, config:Dict[str,Any]):
        self._config  : Dict[str, Any] = config
        self._is_open : bool = False

    def __enter__(self) -> "Interface":
        self.Open()
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        self.Close()

    # *** PUBLIC METHODS ***

    def Open(self, force_reopen:bool = False) -> bool:
        if force_reopen and self._is_open:
            self.Close()
        if not self._is_open:
            self._is_open = self._open()
        return self._is_open

    def IsOpen(self) -> bool:
        return self._is_open

    def Close(self) -> bool:
        if self._is_open:
            closed = self._close()
            self._is_open = not closed
            return closed
        return True
