## import standard libraries
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

# import local files
from config.config import settings as default_settings
from interfaces.ClockInterface import ClockInterface
from interfaces.NetworkInterface import NetworkInterface
from schemas.ContextCodec import ContextCodec
from schemas.ContextTypes import ContextElement
from schemas.DiscoveryTypes import Registration
from schemas.Errors import CtxMeshError, InvariantViolation, NoCapacity, UnknownSubscription
from schemas.OrchestratorTypes import TaskInstance, WorkerNode
from services import Operators
from services.NotificationOutbox import NotificationOutbox
from services.RegistrationKeeper import RegistrationKeeper
from services.StreamBinder import StreamBinder
from services.WireService import Handler, WireRequest, WireService
from utils import Logger

INPUT_PREFIX = "/v1/input/"

@dataclass
class _TaskRun:
    instance : TaskInstance
    operator : Operators.Operator
    binders  : List[StreamBinder] = field(default_factory=list)
    keeper   : Optional[RegistrationKeeper] = None
    inputs   : int = 0
    outputs  : int = 0
    restarts : int = 0
    failed   : int = 0

class WorkerDaemon(WireService):
    """Runs deployed task instances in-process.

    Each task input is bound through a StreamBinder to every stream discovery
    knows for its selector; outputs go to the worker's local broker and the
    output type is registered there as a generated stream. An operator that
    raises is rebuilt and fed the latest values of its inputs again.
    """

    # *** BUILT-INS ***
    def __init__(self, worker:WorkerNode, network:NetworkInterface, clock:ClockInterface, broker:str,
                 discovery:Optional[str] = None, config:Optional[Dict[str, Any]] = None):
        super().__init__(node_id=worker.id, endpoint=worker.endpoint, network=network, clock=clock)
        self._config    = config or default_settings
        worker_cfg      = self._config.get("WORKER_CONFIG", default_settings["WORKER_CONFIG"])
        self._expiry_ms = int(worker_cfg["REGISTRATION_EXPIRY_MS"])
        self._retry_ms  = list(worker_cfg["RETRY_MS"])
        self.worker     = worker
        self.broker     = broker
        self.discovery  = discovery
        self.outbox     = NotificationOutbox(worker.id, network, clock, self._config.get("DELIVERY_CONFIG"))
        self._runs      : Dict[str, _TaskRun] = {}

    # *** PUBLIC METHODS ***

    def Routes(self) -> Dict[str, Handler]:
        return {
            "/v1/deployTask"   : self._HandleDeploy,
            "/v1/undeployTask" : self._HandleUndeploy,
            "/v1/bindings"     : lambda req: {"bindings": self.Bindings()},
            "/v1/statistics"   : lambda req: self.Statistics(),
            INPUT_PREFIX       : self._HandleInput,
        }

    def DeployTask(self, instance:TaskInstance) -> None:
        """Start one task instance: register its generated stream, then bind every input.

        :raises NoCapacity: The worker already runs `capacity` instances.
        :raises UnknownOperator: The operator is not in the registry.
        """
        with self._lock:
            iid = instance.instance_id
            if iid in self._runs:
                Logger.Log(f"{self.node_id}: {iid} already deployed", logging.DEBUG)
                return
            if len(self._runs) >= self.worker.capacity:
                raise NoCapacity(f"{self.node_id} runs {len(self._runs)} of {self.worker.capacity} task(s)")
            run = _TaskRun(instance=instance, operator=self._NewOperator(instance))
            self._runs[iid] = run
            if self.discovery is not None:
                run.keeper = RegistrationKeeper(owner=self, discovery=self.discovery, expiry_ms=self._expiry_ms,
                                                retry_ms=self._retry_ms, build=lambda: self._GeneratedStream(instance))
                run.keeper.Refresh()
            for index, selector in enumerate(instance.inputs):
                binder = StreamBinder(owner=self, discovery=self.discovery, relay_prefix=f"{INPUT_PREFIX}{iid}/{index}",
                                      patterns=[selector.Pattern], attributes=[], scopes=list(selector.scopes),
                                      fixed=None if self.discovery is not None else [self.broker],
                                      retry_ms=self._retry_ms)
                run.binders.append(binder)
                binder.Start()
            Logger.Log(f"{self.node_id}: deployed {iid} ({instance.task.operator} -> {instance.task.output})", logging.INFO)

    def UndeployTask(self, iid:str) -> None:
        with self._lock:
            run = self._runs.pop(iid, None)
            if run is None:
                raise InvariantViolation("instanceId", f"'{iid}' is not deployed here")
            self._Stop(run)
            Logger.Log(f"{self.node_id}: undeployed {iid}", logging.INFO)

    def Bindings(self) -> Dict[str, Dict[str, List[str]]]:
        """Providing endpoints currently bound, per instance and input index."""
        with self._lock:
            return {iid: {str(i): b.Endpoints() for i, b in enumerate(run.binders)} for iid, run in sorted(self._runs.items())}

    def Statistics(self) -> Dict[str, Any]:
        with self._lock:
            runs = list(self._runs.values())
            return {
                "tasks"     : len(runs),
                "capacity"  : self.worker.capacity,
                "inputs"    : sum(r.inputs for r in runs),
                "outputs"   : sum(r.outputs for r in runs),
                "restarts"  : sum(r.restarts for r in runs),
                "failed"    : sum(r.failed for r in runs),
                "delivered" : self.outbox.delivered,
            }

    def Shutdown(self) -> None:
        with self._lock:
            for run in self._runs.values():
                self._Stop(run)
            self._runs.clear()

    # *** PRIVATE METHODS ***

    @staticmethod
    def _NewOperator(instance:TaskInstance) -> Operators.Operator:
        return Operators.Build(instance.task.operator, instance.instance_id, instance.task.output, instance.task.params)

    def _GeneratedStream(self, instance:TaskInstance) -> Registration:
        return Registration(patterns=(instance.task.OutputPattern,),
                            providing_endpoint=self.broker,
                            scope_meta=(instance.scope,) if instance.scope is not None else ())

    def _Stop(self, run:_TaskRun) -> None:
        for binder in run.binders:
            binder.Close()
        if run.keeper is not None:
            run.keeper.Stop()

    def _Feed(self, run:_TaskRun, element:ContextElement, replay:bool = False) -> None:
        stamps = [a.Timestamp for a in element.attributes if a.Timestamp is not None]
        t = max(stamps) if stamps else self._clock.Now()
        run.inputs += 1
        try:
            outputs = run.operator.OnElement(element, t)
        except Exception as err:
            run.failed += 1
            Logger.Log(f"{self.node_id}: {run.instance.instance_id} failed on {element.entity.id}: {type(err).__name__} {err}", logging.ERROR)
            if not replay:
                self._Restart(run)
            return
        self._Publish(run, outputs)

    def _Restart(self, run:_TaskRun) -> None:
        run.restarts += 1
        run.operator = self._NewOperator(run.instance)
        Logger.Log(f"{self.node_id}: restarted {run.instance.instance_id} (restart {run.restarts}), replaying latest inputs", logging.WARNING)
        for selector, binder in zip(run.instance.inputs, run.binders):
            query = {"entities": [selector.Pattern.ToWire()], "scopes": [s.ToWire() for s in selector.scopes]}
            for endpoint in binder.Endpoints():
                try:
                    found = self.Post(endpoint, "/v1/queryContext", query)
                except CtxMeshError as err:
                    Logger.Log(f"{self.node_id}: replay query at {endpoint} failed: {err}", logging.WARNING)
                    continue
                for element in ContextCodec.ListFromWire(ContextElement, found.get("elements"), "elements"):
                    self._Feed(run, element, replay=True)

    def _Publish(self, run:_TaskRun, outputs:List[ContextElement]) -> None:
        if not outputs:
            return
        run.outputs += len(outputs)
        self.outbox.Deliver(run.instance.instance_id, NetworkInterface.Join(self.broker, "/v1/updateContext"),
                            {"elements": ContextCodec.ElementsToWire(outputs)})

    def _HandleDeploy(self, req:WireRequest) -> Dict[str, Any]:
        instance = ContextCodec.FromWire(TaskInstance, req.body.get("instance"))
        self.DeployTask(instance)
        return {"status": "ok", "instanceId": instance.instance_id}

    def _HandleUndeploy(self, req:WireRequest) -> Dict[str, Any]:
        iid = req.body.get("instanceId")
        if not isinstance(iid, str):
            raise InvariantViolation("instanceId", "expected a string")
        self.UndeployTask(iid)
        return {"status": "ok"}

    def _HandleInput(self, req:WireRequest) -> Dict[str, Any]:
        parts = req.tail.split("/")
        if len(parts) != 3 or not parts[1].isdigit():
            raise InvariantViolation("path", f"bad input route '{req.path}'")
        iid, index, key = parts[0], int(parts[1]), parts[2]
        with self._lock:
            run = self._runs.get(iid)
            if run is None or index >= len(run.binders):
                raise UnknownSubscription(f"{iid}/{index}")
            binder = run.binders[index]
            if key == StreamBinder.AVAILABILITY:
                binder.OnAvailability(req.body)
                return {"status": "ok"}
            for element in binder.OnData(key, req.body):
                self._Feed(run, element)
        return {"status": "ok"}
