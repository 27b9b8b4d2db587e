## import standard libraries
import graphlib
import logging
from typing import Any, Dict, List, Optional, Tuple

# import local files
from config.config import settings as default_settings
from interfaces.ClockInterface import ClockInterface
from interfaces.NetworkInterface import NetworkInterface
from schemas.ContextCodec import ContextCodec
from schemas.ContextTypes import Scope
from schemas.Errors import (EndpointUnreachable, InvalidTopology, NoCapacity,
                            UnknownOperator, UnsatisfiableInput)
from schemas.OrchestratorTypes import (GRANULARITY_PER_SCOPE, TIER_CLOUD, TIER_EDGE, DeploymentPlan, StreamSelector,
                                       TaskInstance, TaskSpec, TaskTopology, WorkerNode)
from services import Operators
from services.ScopeMatcher import ScopeMatcher
from services.WireService import Handler, WireRequest, WireService
from utils import Logger

class Orchestrator(WireService):
    """Turns a task topology into placed task instances and deploys them onto worker daemons."""

    # *** BUILT-INS ***
    def __init__(self, node_id:str, endpoint:str, network:NetworkInterface, clock:ClockInterface,
                 discovery:Optional[str] = None, config:Optional[Dict[str, Any]] = None):
        super().__init__(node_id=node_id, endpoint=endpoint, network=network, clock=clock)
        self._config    = config or default_settings
        orch_cfg        = self._config.get("ORCHESTRATOR_CONFIG", default_settings["ORCHESTRATOR_CONFIG"])
        self._retry_ms  = list(orch_cfg["DEPLOY_RETRY_MS"])
        self.discovery  = discovery
        self.plans      : Dict[str, DeploymentPlan] = {}
        self.deployed   : int = 0
        self.pending    : Dict[str, int] = {}

    # *** PUBLIC METHODS ***

    def Routes(self) -> Dict[str, Handler]:
        return {
            "/v1/submitTopology" : self._HandleSubmit,
            "/v1/plans"          : lambda req: {"plans": [p.ToWire() for _name, p in sorted(self.plans.items())]},
            "/v1/statistics"     : lambda req: self.Statistics(),
        }

    @staticmethod
    def Order(topology:TaskTopology) -> List[TaskSpec]:
        """Tasks with every producer before its consumers; ties keep declaration order.

        :raises InvalidTopology: The output-to-input type edges form a cycle.
        """
        index = {t.name: i for i, t in enumerate(topology.tasks)}
        graph = {t.name: {p.name for input_type in t.InputTypes for p in topology.Producers(input_type)} for t in topology.tasks}
        sorter = graphlib.TopologicalSorter(graph)
        try:
            sorter.prepare()
        except graphlib.CycleError as err:
            raise InvalidTopology(f"topology '{topology.name}' has a cycle: {' -> '.join(err.args[1])}")
        ordered : List[TaskSpec] = []
        while sorter.is_active():
            ready = sorted(sorter.get_ready(), key=lambda name: index[name])
            for name in ready:
                ordered.append(topology.tasks[index[name]])
                sorter.done(name)
        return ordered

    @staticmethod
    def Expand(task:TaskSpec) -> List[Tuple[str, Optional[Scope], List[Scope], Tuple[StreamSelector, ...]]]:
        """Instances of one task as (instance id, instance scope, scopes to cover, narrowed inputs).

        perScope makes one instance per distinct declared scope, and each scoped input
        selector is narrowed to that one scope; unscoped inputs are shared. A task
        without declared scopes always gets a single instance.
        """
        scopes = task.DeclaredScopes
        if task.granularity != GRANULARITY_PER_SCOPE or not scopes:
            return [(task.name, None, scopes, task.inputs)]
        expanded = []
        for k, scope in enumerate(scopes, start=1):
            inputs = tuple(s.model_copy(update={"scopes": (scope,)}) if s.scopes else s for s in task.inputs)
            expanded.append((f"{task.name}-{k}", scope, [scope], inputs))
        return expanded

    @staticmethod
    def Place(required:List[Scope], workers:List[WorkerNode], load:Dict[str, int]) -> Optional[WorkerNode]:
        """Edge worker whose served scopes cover every required scope, else a cloud worker; least loaded, then lowest id."""
        free = [w for w in workers if load.get(w.id, 0) < w.capacity]
        edge = [w for w in free if w.tier == TIER_EDGE and required
                and all(any(ScopeMatcher.Covers(served, need) for served in w.scopes) for need in required)]
        candidates = edge or [w for w in free if w.tier == TIER_CLOUD]
        if not candidates:
            return None
        return min(candidates, key=lambda w: (load.get(w.id, 0), w.id))

    def Plan(self, topology:TaskTopology, workers:List[WorkerNode]) -> DeploymentPlan:
        """Validate a topology and place every task instance, without deploying anything.

        :raises InvalidTopology: Cyclic type edges or duplicate worker ids.
        :raises UnknownOperator: A task names an operator missing from the registry.
        :raises UnsatisfiableInput: An input type is produced by no task and known to no discovery registration.
        :raises NoCapacity: Some instance fits on no worker.
        """
        if not workers:
            raise NoCapacity("no workers offered")
        if len({w.id for w in workers}) != len(workers):
            raise InvalidTopology("duplicate worker ids")
        for task in topology.tasks:
            if not Operators.IsRegistered(task.operator):
                raise UnknownOperator(f"{task.operator} (task '{task.name}')")
        ordered = Orchestrator.Order(topology)
        for task in ordered:
            for input_type in task.InputTypes:
                if not topology.Producers(input_type) and not self._Discoverable(input_type):
                    raise UnsatisfiableInput(f"task '{task.name}' input type '{input_type}' has no source")
        load : Dict[str, int] = {}
        instances : List[TaskInstance] = []
        for task in ordered:
            for iid, scope, required, inputs in Orchestrator.Expand(task):
                worker = Orchestrator.Place(required, workers, load)
                if worker is None:
                    raise NoCapacity(f"no worker can take '{iid}'")
                load[worker.id] = load.get(worker.id, 0) + 1
                instances.append(TaskInstance(instance_id=iid, task=task, worker_id=worker.id, scope=scope, inputs=inputs))
        return DeploymentPlan(topology=topology.name, instances=tuple(instances))

    def SubmitTopology(self, topology:TaskTopology, workers:List[WorkerNode]) -> DeploymentPlan:
        """Plan, then deploy instances producer-first; unreachable workers are retried on the deploy schedule."""
        plan = self.Plan(topology, workers)
        self.plans[topology.name] = plan
        endpoints = {w.id: w.endpoint for w in workers}
        for instance in plan.instances:
            self._Deploy(endpoints[instance.worker_id], instance)
        Logger.Log(f"{self.node_id}: topology '{topology.name}' placed as {len(plan.instances)} instance(s)", logging.INFO)
        return plan

    def Statistics(self) -> Dict[str, Any]:
        return {
            "plans"     : len(self.plans),
            "instances" : sum(len(p.instances) for p in self.plans.values()),
            "deployed"  : self.deployed,
            "pending"   : len(self.pending),
        }

    # *** PRIVATE METHODS ***

    def _Discoverable(self, entity_type:str) -> bool:
        if self.discovery is None:
            Logger.Log(f"{self.node_id}: no discovery configured, assuming '{entity_type}' will be provided", logging.DEBUG)
            return True
        selector = StreamSelector(entity_type=entity_type)
        try:
            found = self.Post(self.discovery, "/v1/discoverContextAvailability", {"entities": [selector.Pattern.ToWire()]})
        except EndpointUnreachable as err:
            Logger.Log(f"{self.node_id}: cannot check '{entity_type}' at {self.discovery}: {err}", logging.WARNING)
            return True
        return bool(found.get("registrations"))

    def _Deploy(self, endpoint:str, instance:TaskInstance) -> None:
        iid = instance.instance_id
        try:
            self.Post(endpoint, "/v1/deployTask", {"instance": instance.ToWire()})
        except EndpointUnreachable as err:
            failures = self.pending.get(iid, 0)
            delay = self._retry_ms[min(failures, len(self._retry_ms) - 1)]
            self.pending[iid] = failures + 1
            Logger.Log(f"{self.node_id}: worker {instance.worker_id} unreachable for {iid} ({err}), retry in {delay}ms", logging.WARNING)
            self._clock.Schedule(delay, lambda: self._Deploy(endpoint, instance))
            return
        self.pending.pop(iid, None)
        self.deployed += 1
        Logger.Log(f"{self.node_id}: {iid} running on {instance.worker_id}", logging.DEBUG)

    def _HandleSubmit(self, req:WireRequest) -> Dict[str, Any]:
        topology = ContextCodec.FromWire(TaskTopology, req.body.get("topology"))
        workers = ContextCodec.ListFromWire(WorkerNode, req.body.get("workers"), "workers")
        return {"plan": self.SubmitTopology(topology, workers).ToWire()}
