## import standard libraries
import logging
import socketserver
import threading
from typing import Any, Dict, Optional

# import local files
from interfaces.TransportInterface import MessageSink, TransportInterface
from utils import Logger

class _LineHandler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        transport : "TCPTransport" = self.server.transport
        origin = f"{self.client_address[0]}:{self.client_address[1]}"
        for line in self.rfile:
            transport._Line(line, origin)

class _Server(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads      = True

class TCPTransport(TransportInterface):
    """Newline-delimited JSON device messages over TCP, one reader thread per connection."""

    def __init__(self, config:Dict[str, Any], sink:MessageSink):
        """
        :param config: {"HOST": ..., "PORT": ...}; port 0 picks a free port.
        """
        super().__init__(config=config, sink=sink)
        self._server : Optional[_Server] = None
        self._thread : Optional[threading.Thread] = None

    def _open(self) -> bool:
        self._server = _Server((self._config.get("HOST", "0.0.0.0"), int(self._config.get("PORT", 0))), _LineHandler)
        self._server.transport = self
        self._thread = threading.Thread(target=self._server.serve_forever, name="ctxmesh-tcp", daemon=True)
        self._thread.start()
        Logger.Log(f"Listening for device messages on {self.Describe()}", logging.INFO)
        return True

    def _close(self) -> bool:
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
            self._server = None
        return True

    @property
    def Port(self) -> Optional[int]:
        return self._server.server_address[1] if self._server is not None else None

    def Describe(self) -> str:
        return f"tcp://{self._config.get('HOST', '0.0.0.0')}:{self.Port or self._config.get('PORT', 0)}"
