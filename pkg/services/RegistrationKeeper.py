## import standard libraries
import logging
from typing import Any, Callable, List, Optional

# import local files
from interfaces.ClockInterface import TimerHandle
from schemas.DiscoveryTypes import Registration
from schemas.Errors import CtxMeshError, ParentUnreachable, RemoteError
from utils import Logger

class RegistrationKeeper:
    """Keeps one registration alive at a discovery endpoint.

    Registers, then renews every expiry/2 under the assigned id. A discovery that
    no longer knows the id gets a fresh registration; an unreachable one is
    retried on the retry schedule while the owner keeps working.
    """

    def __init__(self, owner:Any, discovery:str, expiry_ms:int, retry_ms:List[int],
                 build:Callable[[], Optional[Registration]]):
        """
        :param owner: The WireService posting the registration (its clock and network are used).
        :param discovery: Discovery endpoint to register at.
        :param expiry_ms: Lifetime of each registration or renewal.
        :param retry_ms: Delays between failed attempts; the last entry repeats.
        :param build: Produces the current registration content, or None when there is nothing to register yet.
        """
        self._owner     = owner
        self.discovery  = discovery
        self._expiry_ms = expiry_ms
        self._retry_ms  = list(retry_ms)
        self._build     = build
        self._failures  = 0
        self._timer     : Optional[TimerHandle] = None
        self._stopped   = False
        self.reg_id     : Optional[str] = None
        self.last_error : Optional[CtxMeshError] = None

    def Refresh(self) -> bool:
        """Register (or renew) now and reschedule; True when the discovery accepted it."""
        if self._stopped:
            return False
        if self._timer is not None:
            self._timer.Cancel()
            self._timer = None
        clock = self._owner.Clock
        reg = self._build()
        if reg is None:
            self._timer = clock.Schedule(self._expiry_ms // 2, self.Refresh)
            return True
        reg = reg.model_copy(update={"id": self.reg_id, "expires": clock.Now() + self._expiry_ms})
        try:
            reply = self._owner.Post(self.discovery, "/v1/registerContext", reg.ToWire())
        except RemoteError as err:
            if err.remote_code == "UnknownRegistration" and self.reg_id is not None:
                Logger.Log(f"{self._owner.node_id}: {self.discovery} forgot {self.reg_id}, registering afresh", logging.INFO)
                self.reg_id = None
                return self.Refresh()
            return self._Failed(err)
        except CtxMeshError as err:
            return self._Failed(err)
        self.reg_id = reply.get("registrationId", self.reg_id)
        self._failures = 0
        self.last_error = None
        self._timer = clock.Schedule(self._expiry_ms // 2, self.Refresh)
        return True

    def Stop(self) -> None:
        self._stopped = True
        if self._timer is not None:
            self._timer.Cancel()
            self._timer = None

    def _Failed(self, err:CtxMeshError) -> bool:
        delay = self._retry_ms[min(self._failures, len(self._retry_ms) - 1)]
        self._failures += 1
        self.last_error = ParentUnreachable(f"{self.discovery}: {err}")
        Logger.Log(f"{self._owner.node_id}: registration at {self.discovery} failed ({err}), retry in {delay}ms", logging.WARNING)
        self._timer = self._owner.Clock.Schedule(delay, self.Refresh)
        return False
