# Standard module imports
import copy
import logging
import sys
from argparse import ArgumentParser, Namespace
from pathlib import Path
from typing import Any, Dict, List, NoReturn, Optional, Tuple

# Local module imports
from config.config import settings as script_settings
from interfaces.BigQueryInterface import BigQueryInterface
from interfaces.ClockInterface import WallClock
from interfaces.HTTPNetwork import HTTPNetwork
from interfaces.NetworkInterface import NetworkInterface
from interfaces.ReplayTransport import ReplayTransport
from interfaces.TCPTransport import TCPTransport
from schemas.AgentTypes import DeviceMapping
from schemas.BrokerTypes import POLICY_DROP
from schemas.ContextCodec import ContextCodec
from schemas.ContextTypes import EntityRef, Scope
from schemas.Errors import CtxMeshError, ScriptError, UsageError
from schemas.FederationTypes import FederationNode
from schemas.OrchestratorTypes import WorkerNode
from services.ContextBroker import ContextBroker
from services.DiscoveryRegistry import DiscoveryRegistry
from services.FederationBroker import FederationBroker
from services.Harmonizer import Harmonizer
from services.HistoryArchiver import HistoryArchiver
from services.HistoryService import HistoryService
from services.IoTAgent import IoTAgent
from services.Orchestrator import Orchestrator
from services.ScenarioRunner import ScenarioRunner
from services.ServiceServer import Serve
from services.WorkerDaemon import WorkerDaemon
from utils import Logger

EXIT_OK      = 0
EXIT_FAILED  = 1
EXIT_USAGE   = 2

class _Parser(ArgumentParser):
    """argparse that raises instead of exiting, so main() owns the exit status."""

    def error(self, message:str) -> NoReturn:
        raise UsageError(f"{self.prog}: {message}")

def _listen(value:str) -> Tuple[str, int]:
    host, _, port = value.rpartition(":")
    if not host or not port.isdigit():
        raise UsageError(f"--listen expects host:port, got '{value}'")
    return host, int(port)

def _json_arg(value:str) -> Any:
    """A flag value that is either inline JSON or the path of a JSON file."""
    try:
        path = Path(value)
        raw = path.read_bytes() if path.is_file() else value
    except OSError:
        raw = value
    try:
        return ContextCodec.ParseJson(raw)
    except CtxMeshError as err:
        raise UsageError(f"'{value}' is neither a JSON file nor inline JSON: {err.detail}")

def _actions(sub:Any, name:str, summary:str) -> Any:
    return sub.add_parser(name, help=summary).add_subparsers(dest="action", required=True, parser_class=_Parser)

def _serve(actions:Any, name:str) -> ArgumentParser:
    serve = actions.add_parser("serve", help=f"run a {name} node over HTTP")
    serve.add_argument("--listen", type=str, default="127.0.0.1:8080", help="host:port to bind.")
    serve.add_argument("--node-id", type=str, default=name, help="Node id used in logs and trace headers.")
    serve.add_argument("--advertise", type=str, default=None,
                       help="Public base URL of this node, if it differs from http://<listen>.")
    return serve

def BuildParser() -> ArgumentParser:
    parser = _Parser(prog="ctxmesh", description="Federated context brokering: serve nodes, query them, run scenarios.")
    parser.add_argument("--log", type=str, default=None, help="Log level: error, warning, info or debug.")
    parser.add_argument("--models-dir", type=str, default=None, help="Directory of data model JSON files.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    _serve(_actions(sub, "broker", "context broker"), "broker")
    _serve(_actions(sub, "discovery", "discovery registry"), "discovery")

    fed = _serve(_actions(sub, "federate", "federation broker"), "federate")
    fed.add_argument("--level", type=int, required=True, help="1 vehicle, 2 edge, 3 site, 4 global.")
    fed.add_argument("--local-broker", type=str, default=None)
    fed.add_argument("--discovery", type=str, default=None)
    fed.add_argument("--parent-discovery", type=str, default=None)

    agent = _serve(_actions(sub, "agent", "IoT agent"), "agent")
    agent.add_argument("--mapping", type=str, required=True, help="Device mapping JSON file.")
    agent.add_argument("--broker", type=str, required=True)
    agent.add_argument("--discovery", type=str, default=None)
    agent.add_argument("--tcp-listen", type=str, default=None, help="host:port for newline-delimited JSON device messages.")
    agent.add_argument("--replay", type=str, default=None, help="File of device messages to replay.")
    agent.add_argument("--speed", type=float, default=1.0, help="Replay speed factor.")

    history_actions = _actions(sub, "history", "historical sink")
    history = _serve(history_actions, "history")
    history.add_argument("--sink", type=str.upper, choices=["SEGMENT_LOG", "MYSQL"], default=None)
    history.add_argument("--data-dir", type=str, default=None)
    history.add_argument("--broker", type=str, default=None, help="Broker to subscribe to at startup.")
    history.add_argument("--type", type=str, action="append", default=[], help="Entity type to record (repeatable).")
    archive = history_actions.add_parser("archive", help="copy finished days of history to BigQuery")
    archive.add_argument("--sink", type=str.upper, choices=["SEGMENT_LOG", "MYSQL"], default=None)
    archive.add_argument("--data-dir", type=str, default=None)
    archive.add_argument("-m", "--max-days", type=int, default=100, help="The maximum number of days to archive.")

    worker = _serve(_actions(sub, "worker", "worker daemon"), "worker")
    worker.add_argument("--id", type=str, required=True)
    worker.add_argument("--tier", type=str, choices=["cloud", "edge"], default="cloud")
    worker.add_argument("--scopes", type=str, default="[]", help="Served scopes, inline JSON or a file.")
    worker.add_argument("--capacity", type=int, default=1)
    worker.add_argument("--broker", type=str, required=True)
    worker.add_argument("--discovery", type=str, default=None)

    orch_actions = _actions(sub, "orchestrator", "task orchestrator")
    _serve(orch_actions, "orchestrator").add_argument("--discovery", type=str, default=None)
    submit = orch_actions.add_parser("submit", help="submit a topology")
    submit.add_argument("--orchestrator", type=str, required=True, help="Orchestrator base URL.")
    submit.add_argument("--topology", type=str, required=True)
    submit.add_argument("--workers", type=str, required=True)

    publish = sub.add_parser("publish", help="send elements to a broker")
    publish.add_argument("--broker", type=str, required=True)
    publish.add_argument("--elements", type=str, required=True, help="A JSON list of elements, inline or a file.")

    query = sub.add_parser("query", help="query a broker or federation node")
    query.add_argument("--broker", type=str, required=True)
    query.add_argument("--type", type=str, default="*")
    query.add_argument("--id", type=str, default=".*")
    query.add_argument("--attr", type=str, action="append", default=[])
    query.add_argument("--scope", type=str, action="append", default=[], help="A scope as JSON (repeatable).")

    subscribe = sub.add_parser("subscribe", help="create a subscription")
    subscribe.add_argument("--broker", type=str, required=True)
    subscribe.add_argument("--type", type=str, required=True)
    subscribe.add_argument("--id", type=str, default=".*")
    subscribe.add_argument("--attr", type=str, action="append", default=[])
    subscribe.add_argument("--notify", type=str, required=True)
    subscribe.add_argument("--throttling", type=int, default=0)
    subscribe.add_argument("--policy", type=str, choices=["drop", "aggregateSet", "aggregateFn"], default=POLICY_DROP)
    subscribe.add_argument("--fn", type=str, choices=["avg", "min", "max", "last"], default=None)

    discover = sub.add_parser("discover", help="ask a discovery registry who provides a type")
    discover.add_argument("--discovery", type=str, required=True)
    discover.add_argument("--type", type=str, default="*")
    discover.add_argument("--id", type=str, default=".*")

    scenario_actions = _actions(sub, "scenario", "deterministic scenarios")
    run = scenario_actions.add_parser("run", help="run a scenario script on the simulated clock")
    run.add_argument("--script", type=str, required=True)
    run.add_argument("--json", action="store_true", help="Print the report as canonical JSON instead of text.")
    run.add_argument("--report", type=str, default=None, help="Also write the JSON report to this file.")
    return parser

def _emit(payload:Any) -> None:
    sys.stdout.write(ContextCodec.CanonicalBytes(payload).decode("utf-8") + "\n")

def _pattern(entity_id:str, entity_type:str) -> Dict[str, Any]:
    return EntityRef(id=entity_id, type=entity_type, is_pattern=entity_id == ".*" or entity_type == "*").ToWire()

def _endpoint(args:Namespace) -> Tuple[str, int, str]:
    host, port = _listen(args.listen)
    return host, port, (args.advertise or f"http://{host}:{port}").rstrip("/")

def _models(args:Namespace, settings:Dict[str, Any]):
    return Harmonizer.LoadModels(args.models_dir or settings.get("MODELS_DIR"))

def _history_config(args:Namespace, settings:Dict[str, Any]) -> Dict[str, Any]:
    config = copy.deepcopy(settings)
    if args.sink:
        config["HISTORY_CONFIG"]["SINK"] = args.sink
    if args.data_dir:
        config["HISTORY_CONFIG"]["DATA_DIR"] = args.data_dir
    return config

def _Serve(args:Namespace, settings:Dict[str, Any]) -> int:
    host, port, endpoint = _endpoint(args)
    node_id = args.id if args.command == "worker" else args.node_id
    clock, network = WallClock(), HTTPNetwork(node_id=node_id)
    transports = []
    if args.command == "broker":
        service = ContextBroker(node_id, endpoint, network, clock, settings)
    elif args.command == "discovery":
        service = DiscoveryRegistry(node_id, endpoint, network, clock, settings)
    elif args.command == "federate":
        node = FederationNode(node_id=node_id, level=args.level, local_broker=args.local_broker, discovery=args.discovery)
        service = FederationBroker(node, endpoint, network, clock, settings)
        if args.parent_discovery:
            service.AttachParent(args.parent_discovery)
    elif args.command == "agent":
        mapping = ContextCodec.FromWire(DeviceMapping, _json_arg(args.mapping))
        service = IoTAgent(node_id, endpoint, network, clock, mapping, _models(args, settings), broker=args.broker,
                           discovery=args.discovery, config=settings)
        service.Start()
        if args.tcp_listen:
            tcp_host, tcp_port = _listen(args.tcp_listen)
            transports.append(TCPTransport({"HOST": tcp_host, "PORT": tcp_port}, service.Enqueue))
        if args.replay:
            transports.append(ReplayTransport({"PATH": args.replay, "SPEED": args.speed}, service.Enqueue, clock))
        for transport in transports:
            transport.Open()
    elif args.command == "history":
        service = HistoryService(node_id, endpoint, network, clock, config=_history_config(args, settings))
        if args.type and not args.broker:
            raise UsageError("--type needs --broker")
        for entity_type in args.type:
            service.SubscribeTo(args.broker, entity_type)
    elif args.command == "worker":
        scopes = ContextCodec.ListFromWire(Scope, _json_arg(args.scopes), "scopes")
        worker = WorkerNode(id=node_id, tier=args.tier, endpoint=endpoint, scopes=tuple(scopes), capacity=args.capacity)
        service = WorkerDaemon(worker, network, clock, broker=args.broker, discovery=args.discovery, config=settings)
    else:
        service = Orchestrator(node_id, endpoint, network, clock, discovery=args.discovery, config=settings)
    try:
        Serve(service, host, port, log_level=str(settings["DEBUG_LEVEL"]).lower())
    finally:
        for transport in transports:
            transport.Close()
        network.Close()
    return EXIT_OK

def _Archive(args:Namespace, settings:Dict[str, Any]) -> int:
    history_cfg = _history_config(args, settings)["HISTORY_CONFIG"]
    Logger.Log(f"Begin history archive job, up to {args.max_days} days.", logging.INFO)
    with HistoryService.SinkFor(history_cfg) as sink, BigQueryInterface(history_cfg["BIGQUERY_CONFIG"]) as bq:
        numDaysSynced = HistoryArchiver(sink, bq, WallClock()).SyncAll(maxDaysToSync=args.max_days)
    Logger.Log(f"Successfully archived {numDaysSynced} / {args.max_days} days of history to BigQuery", logging.INFO)
    Logger.Log("End history archive job", logging.INFO)
    _emit({"archivedDays": numDaysSynced})
    return EXIT_OK

def _Client(args:Namespace, network:NetworkInterface) -> int:
    if args.command == "publish":
        elements = _json_arg(args.elements)
        reply = network.Post(NetworkInterface.Join(args.broker, "/v1/updateContext"),
                             {"elements": elements if isinstance(elements, list) else [elements]})
        _emit(reply)
        return EXIT_OK if all(s.get("status") == "ok" for s in reply.get("statuses", [])) else EXIT_FAILED
    if args.command == "query":
        scopes = [_json_arg(s) for s in args.scope]
        reply = network.Post(NetworkInterface.Join(args.broker, "/v1/queryContext"),
                             {"entities": [_pattern(args.id, args.type)], "attributes": args.attr, "scopes": scopes})
        _emit(reply.get("elements", []))
        if reply.get("partial"):
            sys.stderr.write(f"partial answer, unreachable: {', '.join(reply['partial'])}\n")
        return EXIT_OK
    if args.command == "subscribe":
        body = {"entities": [_pattern(args.id, args.type)], "attributes": args.attr, "notifyEndpoint": args.notify,
                "throttling": args.throttling, "policy": args.policy}
        if args.fn:
            body["aggregateFn"] = args.fn
        _emit(network.Post(NetworkInterface.Join(args.broker, "/v1/subscribeContext"), body))
        return EXIT_OK
    if args.command == "discover":
        reply = network.Post(NetworkInterface.Join(args.discovery, "/v1/discoverContextAvailability"),
                             {"entities": [_pattern(args.id, args.type)]})
        _emit(reply.get("registrations", []))
        return EXIT_OK
    # orchestrator submit
    body = {"topology": _json_arg(args.topology), "workers": _json_arg(args.workers)}
    _emit(network.Post(NetworkInterface.Join(args.orchestrator, "/v1/submitTopology"), body))
    return EXIT_OK

def _Scenario(args:Namespace, settings:Dict[str, Any]) -> int:
    loaded = ScenarioRunner.Load(args.script)
    report = ScenarioRunner(settings).Run(loaded)
    if args.report:
        Path(args.report).write_bytes(ContextCodec.CanonicalBytes(report.ToWire()))
    if args.json:
        _emit(report.ToWire())
    else:
        sys.stdout.write(report.Text())
    return EXIT_OK if report.passed else EXIT_FAILED

def main(argv:Optional[List[str]] = None, network:Optional[NetworkInterface] = None) -> int:
    """Run one CLI command and return its exit status.

    :param argv: Arguments without the program name; defaults to sys.argv[1:].
    :param network: Transport for the one-shot client commands; defaults to HTTP.
    :return: 0 on success, 1 on a failed command or scenario, 2 on a usage or script error.
    """
    try:
        args = BuildParser().parse_args(argv)
    except UsageError as err:
        sys.stderr.write(f"{err.detail}\n")
        return EXIT_USAGE
    settings = copy.deepcopy(script_settings)
    if args.log:
        Logger.SetLevel(args.log)
        settings["DEBUG_LEVEL"] = args.log.upper()
    if args.models_dir:
        settings["MODELS_DIR"] = args.models_dir
    try:
        if args.command == "scenario":
            return _Scenario(args, settings)
        if args.command == "history" and args.action == "archive":
            return _Archive(args, settings)
        if getattr(args, "action", None) == "serve":
            return _Serve(args, settings)
        owned = network is None
        network = network or HTTPNetwork(node_id="cli")
        try:
            return _Client(args, network)
        finally:
            if owned:
                network.Close()
    except (UsageError, ScriptError) as err:
        sys.stderr.write(f"{err}\n")
        return EXIT_USAGE
    except CtxMeshError as err:
        sys.stderr.write(f"{err}\n")
        Logger.Log(f"{args.command} failed: {err}", logging.ERROR)
        return EXIT_FAILED

if __name__ == "__main__":
    sys.exit(main())
