## import standard libraries
import copy
import json
import logging
import math
import os
import re
import tempfile
from pathlib import Path
from typing import Any, Dict, List, NamedTuple, Optional, Tuple

# import local files
from config.config import settings as default_settings
from interfaces.ClockInterface import SimClock
from interfaces.NetworkInterface import NODE_HEADER
from interfaces.SimNetwork import SimNetwork
from schemas.ContextCodec import ContextCodec
from schemas.ContextTypes import DataModel
from schemas.Errors import CtxMeshError, RemoteError, ScriptError
from schemas.FederationTypes import FederationNode
from schemas.OrchestratorTypes import WorkerNode
from schemas.ScenarioTypes import ACTIONS, ASSERTIONS, AssertionResult, ScenarioNode, ScenarioReport, ScenarioScript, ScenarioStep
from services.ContextBroker import ContextBroker
from services.DiscoveryRegistry import DiscoveryRegistry
from services.FederationBroker import FederationBroker
from services.Harmonizer import Harmonizer
from services.HistoryService import HistoryService
from services.IoTAgent import IoTAgent
from services.NotificationRecorder import NotificationRecorder
from services.Orchestrator import Orchestrator
from services.WireService import WireService
from services.WorkerDaemon import WorkerDaemon
from utils import Logger

HARNESS = "harness"

# which node kinds each node reference may name
_REFERENCE_KINDS = {
    "localBroker"     : ("broker",),
    "discovery"       : ("discovery",),
    "parentDiscovery" : ("discovery",),
    "broker"          : ("broker", "federation"),
}
_NODELESS = ("partition", "advance")

class LoadedScript(NamedTuple):
    script     : ScenarioScript
    node_lines : List[Optional[int]]
    step_lines : List[Optional[int]]
    base_dir   : Optional[Path]

def _element_lines(text:str, key:str) -> List[int]:
    """1-based line of each element of the top-level array under key."""
    match = re.search(r'"%s"\s*:\s*\[' % re.escape(key), text)
    if match is None:
        return []
    decoder = json.JSONDecoder()
    lines : List[int] = []
    idx = match.end()
    try:
        while True:
            while idx < len(text) and text[idx] in " \t\r\n,":
                idx += 1
            if idx >= len(text) or text[idx] == "]":
                return lines
            lines.append(text.count("\n", 0, idx) + 1)
            _value, idx = decoder.raw_decode(text, idx)
    except json.JSONDecodeError:
        return lines

def _same(expected:Any, actual:Any) -> bool:
    if isinstance(expected, bool) or isinstance(actual, bool):
        return expected is actual
    if isinstance(expected, (int, float)) and isinstance(actual, (int, float)):
        return math.isclose(expected, actual, rel_tol=1e-9, abs_tol=1e-12)
    if isinstance(expected, list) and isinstance(actual, list):
        return len(expected) == len(actual) and all(_same(e, a) for e, a in zip(expected, actual))
    if isinstance(expected, dict) and isinstance(actual, dict):
        return expected.keys() == actual.keys() and all(_same(v, actual[k]) for k, v in expected.items())
    return expected == actual

def _code(err:CtxMeshError) -> str:
    return err.remote_code if isinstance(err, RemoteError) else err.code

def _attribute(raw_element:Dict[str, Any], name:str) -> Optional[Dict[str, Any]]:
    for attr in raw_element.get("attributes", []):
        if attr.get("name") == name:
            return attr
    return None

class ScenarioRunner:
    """Boots a scenario's nodes on one simulated clock and network, plays its steps, and reports.

    Every step goes through the nodes' wire routes, so a scenario sees exactly what
    remote clients would. Before each assertion the clock is drained, so every
    delivery due by then has happened. Two runs of one script log identical events.
    """

    def __init__(self, config:Optional[Dict[str, Any]] = None, models:Optional[Dict[str, DataModel]] = None):
        self._config = config or default_settings
        self._models = models

    # *** PUBLIC METHODS ***

    @staticmethod
    def Load(path:str) -> LoadedScript:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as err:
            raise ScriptError(f"cannot read scenario: {err}", path=path)
        return ScenarioRunner.Parse(text, base_dir=Path(path).parent)

    @staticmethod
    def Parse(text:str, base_dir:Optional[Path] = None) -> LoadedScript:
        """Decode and check a scenario document.

        :raises ScriptError: Bad JSON, a bad node or step, an undeclared node reference or a step scheduled in the past; carries the line.
        """
        try:
            doc = json.loads(text) if text.strip() else {}
        except json.JSONDecodeError as err:
            raise ScriptError(err.msg, line=err.lineno)
        if not isinstance(doc, dict):
            raise ScriptError("a scenario is a JSON object", line=1)
        node_lines = _element_lines(text, "nodes")
        step_lines = _element_lines(text, "actions")
        line_of = lambda lines, i: lines[i] if i < len(lines) else None

        nodes : List[ScenarioNode] = []
        for i, raw in enumerate(doc.get("nodes", [])):
            try:
                nodes.append(ContextCodec.FromWire(ScenarioNode, raw))
            except CtxMeshError as err:
                raise ScriptError(str(err.detail), line=line_of(node_lines, i), path=f"nodes[{i}]")
        kinds = {}
        for i, node in enumerate(nodes):
            if node.id in kinds:
                raise ScriptError(f"node '{node.id}' declared twice", line=line_of(node_lines, i), path=f"nodes[{i}]")
            kinds[node.id] = node.kind
        for i, node in enumerate(nodes):
            where = {"line": line_of(node_lines, i), "path": f"nodes[{i}]"}
            for field, ref in node.References:
                if kinds.get(ref) not in _REFERENCE_KINDS[field]:
                    raise ScriptError(f"{field} '{ref}' is not a declared {' or '.join(_REFERENCE_KINDS[field])} node", **where)
            if node.kind == "federation" and node.level is None:
                raise ScriptError("a federation node needs a level", **where)
            if node.kind in ("agent", "worker") and node.broker is None:
                raise ScriptError(f"an {node.kind} node needs a broker", **where)
            if node.kind == "agent" and node.mapping is None:
                raise ScriptError("an agent node needs a mapping", **where)
            if node.record and node.broker is None:
                raise ScriptError("recording history needs a broker", **where)

        steps : List[ScenarioStep] = []
        floor = 0
        for i, raw in enumerate(doc.get("actions", [])):
            where = {"line": line_of(step_lines, i), "path": f"actions[{i}]"}
            try:
                step = ContextCodec.FromWire(ScenarioStep, raw)
            except CtxMeshError as err:
                raise ScriptError(str(err.detail), **where)
            if step.do not in ACTIONS and step.do not in ASSERTIONS:
                raise ScriptError(f"unknown action '{step.do}'", **where)
            if step.at < floor:
                raise ScriptError(f"at={step.at} is before the clock ({floor})", **where)
            floor = step.at
            if step.do == "advance":
                floor += int(step.Arg("ms", 0))
            referenced = [] if step.do in _NODELESS else [step.node]
            referenced += list(step.Arg("nodes", [])) if step.do == "partition" else []
            referenced += [step.Arg("parent")] if step.do == "attach" else []
            referenced += list(step.Arg("workers", [])) if step.do == "submit" else []
            for ref in referenced:
                if ref not in kinds:
                    raise ScriptError(f"node '{ref}' is not declared", **where)
            steps.append(step)
        script = ScenarioScript(name=str(doc.get("name", "scenario")), start=int(doc.get("start", 0)),
                                nodes=tuple(nodes), actions=tuple(steps))
        return LoadedScript(script=script, node_lines=node_lines, step_lines=step_lines, base_dir=base_dir)

    def Run(self, loaded:LoadedScript) -> ScenarioReport:
        script = loaded.script
        self._loaded   = loaded
        self._events   : List[str] = []
        self._clock    = SimClock(start_ms=script.start)
        self._network  = SimNetwork(self._clock, recorder=self._events.append)
        self._nodes    : Dict[str, ScenarioNode] = {n.id: n for n in script.nodes}
        self._services : Dict[str, WireService] = {}
        self._labels   : Dict[str, Tuple[str, str]] = {}
        results : List[AssertionResult] = []
        with tempfile.TemporaryDirectory(prefix="ctxmesh-scenario-") as data_root:
            try:
                for node in script.nodes:
                    self._Boot(node, data_root)
                for node in script.nodes:
                    self._Start(node)
                self._clock.Drain()
                for i, step in enumerate(script.actions):
                    self._clock.AdvanceTo(script.start + step.at)
                    result = self._Play(i, step)
                    if result is not None:
                        results.append(result)
                self._clock.Drain()
            finally:
                for service in self._services.values():
                    service.Shutdown()
        report = ScenarioReport(scenario=script.name, passed=all(r.passed for r in results),
                                assertions=tuple(results), events=tuple(self._events))
        Logger.Log(f"Scenario {script.name}: {'PASS' if report.passed else 'FAIL'}", logging.INFO)
        return report

    # *** PRIVATE METHODS ***

    def _Endpoint(self, node_id:str) -> str:
        return SimNetwork.EndpointFor(node_id)

    def _Ref(self, node_id:Optional[str]) -> Optional[str]:
        return self._Endpoint(node_id) if node_id is not None else None

    def _Boot(self, node:ScenarioNode, data_root:str) -> None:
        ep, net, clock = self._Endpoint(node.id), self._network, self._clock
        if node.kind == "broker":
            service = ContextBroker(node.id, ep, net, clock, self._config)
        elif node.kind == "discovery":
            service = DiscoveryRegistry(node.id, ep, net, clock, self._config)
        elif node.kind == "federation":
            fed = FederationNode(node_id=node.id, level=node.level, local_broker=self._Ref(node.local_broker),
                                 discovery=self._Ref(node.discovery))
            service = FederationBroker(fed, ep, net, clock, self._config)
        elif node.kind == "agent":
            service = IoTAgent(node.id, ep, net, clock, node.mapping, self._Models(), broker=self._Ref(node.broker),
                               discovery=self._Ref(node.discovery), config=self._config)
        elif node.kind == "history":
            config = copy.deepcopy(self._config)
            config["HISTORY_CONFIG"]["SINK"] = "SEGMENT_LOG"
            config["HISTORY_CONFIG"]["DATA_DIR"] = os.path.join(data_root, node.id)
            service = HistoryService(node.id, ep, net, clock, config=config)
        elif node.kind == "worker":
            worker = WorkerNode(id=node.id, tier=node.tier, endpoint=ep, scopes=node.scopes, capacity=node.capacity)
            service = WorkerDaemon(worker, net, clock, broker=self._Ref(node.broker), discovery=self._Ref(node.discovery),
                                   config=self._config)
        elif node.kind == "orchestrator":
            service = Orchestrator(node.id, ep, net, clock, discovery=self._Ref(node.discovery), config=self._config)
        else:
            service = NotificationRecorder(node.id, ep, net, clock)
        self._services[node.id] = service
        net.Attach(service)

    def _Start(self, node:ScenarioNode) -> None:
        service = self._services[node.id]
        if isinstance(service, IoTAgent):
            service.Start()
        elif isinstance(service, FederationBroker) and node.parent_discovery is not None:
            service.AttachParent(self._Endpoint(node.parent_discovery))
        elif isinstance(service, HistoryService):
            for entity_type in node.record:
                service.SubscribeTo(self._Endpoint(node.broker), entity_type, node.throttling, node.policy)

    def _Models(self) -> Dict[str, DataModel]:
        if self._models is None:
            self._models = Harmonizer.LoadModels(self._config.get("MODELS_DIR"))
        return self._models

    def _Post(self, node_id:str, path:str, body:Dict[str, Any]) -> Dict[str, Any]:
        return self._network.Post(self._Endpoint(node_id) + path, body, {NODE_HEADER: HARNESS})

    def _Play(self, i:int, step:ScenarioStep) -> Optional[AssertionResult]:
        now = self._clock.Now()
        line = self._loaded.step_lines[i] if i < len(self._loaded.step_lines) else None
        if step.IsAssertion:
            self._clock.Drain()
            try:
                passed, detail = self._Check(step)
            except CtxMeshError as err:
                passed, detail = False, f"{_code(err)}: {err.detail}"
            self._events.append(f"t={now} assert[{i}] {step.do} {'pass' if passed else 'fail'}")
            return AssertionResult(index=i, kind=step.do, passed=passed, detail=detail, line=line)
        expected = step.Arg("expectError")
        try:
            summary = self._Act(step)
        except CtxMeshError as err:
            code = _code(err)
            self._events.append(f"t={now} action[{i}] {step.do} error {code}")
            if expected == code:
                return AssertionResult(index=i, kind=step.do, passed=True, detail=f"rejected with {code}", line=line)
            return AssertionResult(index=i, kind=step.do, passed=False, detail=f"{code}: {err.detail}", line=line)
        self._events.append(f"t={now} action[{i}] {step.do} {summary}".rstrip())
        if expected is not None:
            return AssertionResult(index=i, kind=step.do, passed=False, detail=f"expected {expected}, got success", line=line)
        return None

    def _ResolveNotify(self, body:Dict[str, Any]) -> Dict[str, Any]:
        body = dict(body)
        target = body.get("notifyEndpoint")
        if isinstance(target, str) and "://" not in target:
            head, _, label = target.partition("/")
            if head in self._nodes:
                body["notifyEndpoint"] = self._Endpoint(head) + "/v1/notify" + (f"/{label}" if label else "")
        return body

    def _Act(self, step:ScenarioStep) -> str:
        node = step.node
        if step.do == "publish":
            reply = self._Post(node, "/v1/updateContext", {"elements": step.Arg("elements", [])})
            for status in reply.get("statuses", []):
                if status.get("status") != "ok":
                    raise RemoteError(status.get("error", "InvariantViolation"), status.get("detail"))
            return f"{node} {len(reply.get('statuses', []))} element(s)"
        if step.do == "ingest":
            reply = self._Post(node, "/v1/ingest", {"messages": step.Arg("messages", [])})
            return f"{node} accepted {reply.get('accepted')}"
        if step.do == "register":
            body = dict(step.Arg("registration", {}))
            if body.get("providingEndpoint") in self._nodes:
                body["providingEndpoint"] = self._Endpoint(body["providingEndpoint"])
            reg_id = self._Post(node, "/v1/registerContext", body)["registrationId"]
            self._Label(step, node, reg_id)
            return f"{node} {reg_id}"
        if step.do in ("subscribe", "subscribeAvailability"):
            path = "/v1/subscribeContext" if step.do == "subscribe" else "/v1/subscribeContextAvailability"
            sub_id = self._Post(node, path, self._ResolveNotify(step.Arg("subscription", {})))["subscriptionId"]
            self._Label(step, node, sub_id)
            return f"{node} {sub_id}"
        if step.do == "unsubscribe":
            ref = step.Arg("ref")
            if ref not in self._labels:
                raise ScriptError(f"no subscription labelled '{ref}'")
            target, sub_id = self._labels[ref]
            self._Post(target, "/v1/unsubscribeContext", {"id": sub_id})
            return f"{target} {sub_id}"
        if step.do == "query":
            reply = self._Post(node, "/v1/queryContext", self._QueryBody(step))
            ids = [e["entity"]["id"] for e in reply.get("elements", [])]
            return f"{node} [{','.join(ids)}]" + (f" partial={','.join(reply['partial'])}" if reply.get("partial") else "")
        if step.do == "discover":
            reply = self._Post(node, "/v1/discoverContextAvailability", self._QueryBody(step))
            return f"{node} [{','.join(r['id'] for r in reply.get('registrations', []))}]"
        if step.do == "attach":
            reply = self._Post(node, "/v1/attachParent", {"parentDiscovery": self._Endpoint(step.Arg("parent"))})
            return f"{node} -> {step.Arg('parent')} {reply.get('status')}"
        if step.do == "submit":
            workers = [self._WorkerWire(w) for w in step.Arg("workers", [])]
            reply = self._Post(node, "/v1/submitTopology", {"topology": self._Topology(step), "workers": workers})
            placed = [f"{i['instanceId']}@{i['workerId']}" for i in reply["plan"].get("instances", [])]
            return f"{node} {' '.join(placed)}"
        if step.do == "partition":
            self._network.Partition(list(step.Arg("nodes", [])), int(step.Arg("duration", 0)))
            return ",".join(step.Arg("nodes", []))
        if step.do == "delay":
            self._network.SetDelay(node, int(step.Arg("ms", 0)))
            return f"{node} {step.Arg('ms', 0)}ms"
        self._clock.Advance(int(step.Arg("ms", 0)))
        return f"{step.Arg('ms', 0)}ms"

    def _Label(self, step:ScenarioStep, node:str, item_id:str) -> None:
        label = step.Arg("as")
        if label is not None:
            self._labels[label] = (node, item_id)

    @staticmethod
    def _QueryBody(step:ScenarioStep) -> Dict[str, Any]:
        return {"entities": step.Arg("entities", []), "attributes": step.Arg("attributes", []), "scopes": step.Arg("scopes", [])}

    def _WorkerWire(self, node_id:str) -> Dict[str, Any]:
        node = self._nodes[node_id]
        return WorkerNode(id=node.id, tier=node.tier, endpoint=self._Endpoint(node.id), scopes=node.scopes,
                          capacity=node.capacity).ToWire()

    def _Topology(self, step:ScenarioStep) -> Dict[str, Any]:
        inline = step.Arg("topology")
        if inline is not None:
            return inline
        name = step.Arg("topologyFile")
        if name is None:
            raise ScriptError("submit needs topology or topologyFile")
        path = Path(name) if self._loaded.base_dir is None else self._loaded.base_dir / name
        try:
            return ContextCodec.ParseJson(path.read_bytes())
        except OSError as err:
            raise ScriptError(f"cannot read topology: {err}", path=str(path))

    # *** ASSERTIONS ***

    def _Check(self, step:ScenarioStep) -> Tuple[bool, str]:
        if step.do == "expectNotification":
            return self._CheckNotification(step)
        if step.do == "expectQueryResult":
            return self._CheckQuery(step)
        if step.do == "expectHistory":
            return self._CheckHistory(step)
        if step.do == "expectBinding":
            return self._CheckBinding(step)
        return self._CheckStatistic(step)

    @staticmethod
    def _Counted(step:ScenarioStep, count:int) -> Tuple[bool, str]:
        if step.Arg("count") is not None:
            return count == step.Arg("count"), f"count {count}, expected {step.Arg('count')}"
        low, high = step.Arg("minCount", 1), step.Arg("maxCount")
        ok = count >= low and (high is None or count <= high)
        return ok, f"count {count}, expected {low}..{high if high is not None else ''}"

    def _CheckNotification(self, step:ScenarioStep) -> Tuple[bool, str]:
        label, entity_id, entity_type = step.Arg("label"), step.Arg("entity"), step.Arg("type")
        attribute, include_initial = step.Arg("attribute"), step.Arg("includeInitial", False)
        values : List[Any] = []
        for received in self._Post(step.node, "/v1/received", {})["notifications"]:
            body = received["body"]
            if label is not None and received["label"] != label:
                continue
            if body.get("initial", False) and not include_initial:
                continue
            for element in body.get("elements", []):
                if entity_id is not None and element["entity"]["id"] != entity_id:
                    continue
                if entity_type is not None and element["entity"]["type"] != entity_type:
                    continue
                if attribute is None:
                    values.append(element["entity"]["id"])
                    continue
                attr = _attribute(element, attribute)
                if attr is not None:
                    values.append(attr.get("value"))
        if step.Arg("values") is not None:
            return _same(step.Arg("values"), values), f"values {values}, expected {step.Arg('values')}"
        return ScenarioRunner._Counted(step, len(values))

    def _CheckQuery(self, step:ScenarioStep) -> Tuple[bool, str]:
        reply = self._Post(step.node, "/v1/queryContext", self._QueryBody(step))
        elements = reply.get("elements", [])
        ids = [e["entity"]["id"] for e in elements]
        failures : List[str] = []
        if step.Arg("ids") is not None and ids != step.Arg("ids"):
            failures.append(f"ids {ids}, expected {step.Arg('ids')}")
        if step.Arg("count") is not None and len(ids) != step.Arg("count"):
            failures.append(f"count {len(ids)}, expected {step.Arg('count')}")
        for entity_id, attrs in (step.Arg("values") or {}).items():
            element = next((e for e in elements if e["entity"]["id"] == entity_id), None)
            if element is None:
                failures.append(f"{entity_id} missing")
                continue
            for name, value in attrs.items():
                attr = _attribute(element, name)
                if attr is None or not _same(value, attr.get("value")):
                    failures.append(f"{entity_id}.{name} = {attr.get('value') if attr else None}, expected {value}")
        partial = reply.get("partial", [])
        wanted = step.Arg("partial")
        if isinstance(wanted, bool) and bool(partial) != wanted:
            failures.append(f"partial {partial}, expected {'some' if wanted else 'none'}")
        if isinstance(wanted, list) and partial != sorted(self._Endpoint(n) if n in self._nodes else n for n in wanted):
            failures.append(f"partial {partial}, expected {wanted}")
        return not failures, "; ".join(failures) or f"{len(ids)} element(s) as expected"

    def _CheckHistory(self, step:ScenarioStep) -> Tuple[bool, str]:
        query = {"entity": step.Arg("entity"), "attribute": step.Arg("attribute"),
                 "t0": step.Arg("t0", 0), "t1": step.Arg("t1", self._clock.Now() + 1)}
        aggregate = step.Arg("aggregate")
        if aggregate is not None:
            query.update({"resolution": aggregate.get("resolution"), "fn": aggregate.get("fn")})
            buckets = self._Post(step.node, "/v1/history/aggregate", query)["buckets"]
            expected = step.Arg("buckets", [])
            return _same(expected, buckets), f"buckets {buckets}, expected {expected}"
        records = self._Post(step.node, "/v1/history/raw", query)["records"]
        values = [r.get("value") for r in records]
        if step.Arg("values") is not None:
            return _same(step.Arg("values"), values), f"values {values}, expected {step.Arg('values')}"
        return ScenarioRunner._Counted(step, len(values))

    def _CheckBinding(self, step:ScenarioStep) -> Tuple[bool, str]:
        bindings = self._Post(step.node, "/v1/bindings", {})["bindings"]
        bound = bindings.get(step.Arg("instance"), {}).get(str(step.Arg("input", 0)))
        if bound is None:
            return False, f"no binding for {step.Arg('instance')} input {step.Arg('input', 0)}"
        if step.Arg("endpoints") is not None:
            expected = sorted(self._Endpoint(n) if n in self._nodes else n for n in step.Arg("endpoints"))
            return bound == expected, f"bound {bound}, expected {expected}"
        return ScenarioRunner._Counted(step, len(bound))

    def _CheckStatistic(self, step:ScenarioStep) -> Tuple[bool, str]:
        stats = self._Post(step.node, "/v1/statistics", {})
        key = step.Arg("key")
        value = stats.get(key)
        if step.Arg("value") is not None:
            return _same(step.Arg("value"), value), f"{key} = {value}, expected {step.Arg('value')}"
        low, high = step.Arg("min"), step.Arg("max")
        ok = value is not None and (low is None or value >= low) and (high is None or value <= high)
        return ok, f"{key} = {value}, expected {low if low is not None else ''}..{high if high is not None else ''}"
