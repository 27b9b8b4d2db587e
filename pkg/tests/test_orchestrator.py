import random
import unittest
from typing import List

from schemas.ContextTypes import ContextElement, Scope
from schemas.DiscoveryTypes import Registration
from schemas.Errors import InvalidTopology, InvariantViolation, NoCapacity, UnknownOperator, UnsatisfiableInput
from schemas.OrchestratorTypes import StreamSelector, TaskInstance, TaskSpec, TaskTopology, WorkerNode
from services import Operators
from services.ContextBroker import ContextBroker
from services.DiscoveryRegistry import DiscoveryRegistry
from services.Orchestrator import Orchestrator
from services.WorkerDaemon import WorkerDaemon
from tests.support import World, attr, element, pattern, value_of

TURIN = Scope.GeoBox(45.0, 7.6, 45.1, 7.7)
MILAN = Scope.GeoBox(45.4, 9.1, 45.5, 9.2)

@Operators.operator("explode")
class Explode(Operators.Operator):
    def OnElement(self, element:ContextElement, t:int) -> List[ContextElement]:
        raise RuntimeError(f"cannot digest {element.entity.id}")

def task(name, inputs, output, operator="threshold_detect", **kwargs) -> TaskSpec:
    selectors = tuple(i if isinstance(i, StreamSelector) else StreamSelector(entity_type=i) for i in inputs)
    kwargs.setdefault("params", {"attribute": "value", "threshold": 10})
    return TaskSpec(name=name, operator=operator, inputs=selectors, output=output, **kwargs)

def worker(worker_id, tier="cloud", scopes=(), capacity=4) -> WorkerNode:
    return WorkerNode(id=worker_id, tier=tier, endpoint=World.Ep(worker_id), scopes=tuple(scopes), capacity=capacity)

class TopologyTest(unittest.TestCase):
    def test_order_puts_producers_first(self):
        topology = TaskTopology(name="t", tasks=(task("report", ["Alarm"], "Report"), task("detect", ["Sensor"], "Alarm"),
                                                 task("other", ["Sensor"], "Other")))
        self.assertEqual([t.name for t in Orchestrator.Order(topology)], ["detect", "other", "report"])

    def test_cycles_and_self_input_are_rejected(self):
        with self.assertRaises(InvalidTopology):
            Orchestrator.Order(TaskTopology(name="t", tasks=(task("a", ["X"], "Y"), task("b", ["Y"], "X"))))
        with self.assertRaises(InvalidTopology):
            task("loop", ["Sensor", "Alarm"], "Alarm")
        with self.assertRaises(InvalidTopology):
            TaskTopology(name="t", tasks=(task("a", ["X"], "Y"), task("a", ["X"], "Z")))
        with self.assertRaises(InvalidTopology):
            task("bad name", ["X"], "Y")

    def test_expand_per_scope(self):
        spec = task("detect", [StreamSelector(entity_type="Sensor", scopes=(TURIN, MILAN)), "Config"], "Alarm",
                    granularity="perScope")
        expanded = Orchestrator.Expand(spec)
        self.assertEqual([(iid, scope) for iid, scope, _req, _inputs in expanded], [("detect-1", TURIN), ("detect-2", MILAN)])
        inputs = expanded[1][3]
        self.assertEqual(inputs[0].scopes, (MILAN,))
        self.assertEqual(inputs[1].scopes, ())
        self.assertEqual(len(Orchestrator.Expand(task("plain", ["Sensor"], "Alarm", granularity="perScope"))), 1)

class PlanTest(unittest.TestCase):
    def setUp(self):
        self.world = World()
        self.orchestrator = self.world.Add(Orchestrator("o1", World.Ep("o1"), self.world.network, self.world.clock))

    def test_edge_worker_covering_scope_wins(self):
        spec = task("detect", [StreamSelector(entity_type="Sensor", scopes=(TURIN, MILAN))], "Alarm", granularity="perScope")
        workers = [worker("cloud-1"), worker("edge-turin", "edge", [Scope.GeoBox(44.9, 7.5, 45.2, 7.8)]), worker("edge-far", "edge", [MILAN], capacity=1)]
        plan = self.orchestrator.Plan(TaskTopology(name="t", tasks=(spec,)), workers)
        self.assertEqual([(i.instance_id, i.worker_id) for i in plan.instances],
                         [("detect-1", "edge-turin"), ("detect-2", "edge-far")])
        plan = self.orchestrator.Plan(TaskTopology(name="t", tasks=(spec,)), workers[:2])
        self.assertEqual([i.worker_id for i in plan.instances], ["edge-turin", "cloud-1"])

    def test_unscoped_tasks_go_to_cloud_least_loaded(self):
        tasks = tuple(task(f"t{k}", ["Sensor"], f"Out{k}") for k in range(4))
        workers = [worker("c2", capacity=2), worker("c1", capacity=2), worker("e1", "edge", [TURIN])]
        plan = self.orchestrator.Plan(TaskTopology(name="t", tasks=tasks), workers)
        self.assertEqual([i.worker_id for i in plan.instances], ["c1", "c2", "c1", "c2"])

    def test_placement_ignores_worker_order(self):
        rng = random.Random(9)
        spec = task("detect", [StreamSelector(entity_type="Sensor", scopes=(TURIN, MILAN))], "Alarm", granularity="perScope")
        topology = TaskTopology(name="t", tasks=(spec, task("count", ["Alarm"], "Count")))
        workers = [worker("c1"), worker("c2"), worker("e1", "edge", [TURIN], capacity=1), worker("e2", "edge", [TURIN, MILAN])]
        expected = self.orchestrator.Plan(topology, workers).ToWire()
        for _ in range(10):
            rng.shuffle(workers)
            self.assertEqual(self.orchestrator.Plan(topology, workers).ToWire(), expected)

    def test_capacity_and_operator_errors(self):
        topology = TaskTopology(name="t", tasks=(task("a", ["X"], "Y"), task("b", ["Y"], "Z")))
        with self.assertRaises(NoCapacity):
            self.orchestrator.Plan(topology, [worker("c1", capacity=1)])
        with self.assertRaises(NoCapacity):
            self.orchestrator.Plan(topology, [])
        with self.assertRaises(NoCapacity):
            self.orchestrator.Plan(topology, [worker("e1", "edge", [TURIN])])
        with self.assertRaises(InvalidTopology):
            self.orchestrator.Plan(topology, [worker("c1"), worker("c1")])
        with self.assertRaises(UnknownOperator):
            self.orchestrator.Plan(TaskTopology(name="t", tasks=(task("a", ["X"], "Y", operator="nope"),)), [worker("c1")])

    def test_inputs_must_have_a_source(self):
        registry = self.world.Add(DiscoveryRegistry("d1", World.Ep("d1"), self.world.network, self.world.clock))
        orchestrator = self.world.Add(Orchestrator("o2", World.Ep("o2"), self.world.network, self.world.clock, discovery=World.Ep("d1")))
        topology = TaskTopology(name="t", tasks=(task("a", ["Sensor"], "Alarm"), task("b", ["Alarm"], "Report")))
        with self.assertRaises(UnsatisfiableInput):
            orchestrator.Plan(topology, [worker("c1")])
        registry.RegisterContext(Registration(patterns=(pattern("Sensor"),), providing_endpoint="sim://b1"))
        self.assertEqual(len(orchestrator.Plan(topology, [worker("c1")]).instances), 2)

class OperatorsTest(unittest.TestCase):
    def _feed(self, op, values, entity_type="Sensor", name="value"):
        out = []
        for t, value in values:
            out.extend(op.OnElement(element("S1", entity_type, attr(name, value, t=t)), t))
        return out

    def test_registry(self):
        self.assertTrue({"threshold_detect", "window_avg", "setpoint"} <= set(Operators.Registered()))
        with self.assertRaises(UnknownOperator):
            Operators.Build("nope", "i", "Out", {})
        with self.assertRaises(InvariantViolation):
            Operators.Build("threshold_detect", "i", "Alarm", {"attribute": "value"})

    def test_threshold_alarms_once_per_crossing(self):
        op = Operators.Build("threshold_detect", "i", "Alarm", {"attribute": "value", "threshold": 10})
        alarms = self._feed(op, enumerate([5, 12, 13, 4, 11]))
        self.assertEqual([a.Attribute("value").value for a in alarms], [12, 11])
        self.assertEqual([a.Attribute("crossings").value for a in alarms], [1, 2])
        self.assertEqual((alarms[0].entity.id, alarms[0].entity.type), ("S1:alarm", "Alarm"))
        self.assertEqual(alarms[1].Attribute("value").Timestamp, 4)

    def test_window_average(self):
        op = Operators.Build("window_avg", "i", "Avg", {"attribute": "value", "window": 1000})
        out = self._feed(op, [(0, 10), (500, 20), (1000, 30), (2500, 40)])
        self.assertEqual([o.Attribute("value").value for o in out], [10, 15, 25, 40])
        self.assertEqual([o.Attribute("samples").value for o in out], [1, 2, 2, 1])
        with self.assertRaises(InvariantViolation):
            Operators.Build("window_avg", "i", "Avg", {"attribute": "value", "window": 0})

    def test_setpoint(self):
        self.assertAlmostEqual(Operators.Setpoint.Target(100, 0.3), 70)
        self.assertEqual(Operators.Setpoint.Target(100, 1.0), 0)
        self.assertEqual(Operators.Setpoint.Target(100, -0.5), 100)
        op = Operators.Build("setpoint", "i", "Setpoint", {"forecastAttribute": "rain", "scale": 10, "buffers": {"B1": 100},
                                                          "bufferType": "WaterBuffer"})
        self.assertEqual(self._feed(op, [(0, 50)], entity_type="WaterBuffer", name="level"), [])
        first = self._feed(op, [(1, 3)], name="rain")
        self.assertEqual([(o.entity.id, round(o.Attribute("target").value, 6)) for o in first], [("B1:setpoint", 70.0)])
        added = op.OnElement(element("B2", "WaterBuffer", attr("capacity", 50)), 2)
        self.assertEqual(round(added[0].Attribute("target").value, 6), 35.0)
        flooded = self._feed(op, [(3, 25)], name="rain")
        self.assertEqual([o.Attribute("target").value for o in flooded], [0, 0])

class WorkerDaemonTest(unittest.TestCase):
    def setUp(self):
        self.world = World()
        net, clock = self.world.network, self.world.clock
        self.broker = self.world.Add(ContextBroker("b1", World.Ep("b1"), net, clock))
        self.node = worker("w1", capacity=2)
        self.daemon = self.world.Add(WorkerDaemon(self.node, net, clock, broker=World.Ep("b1")))

    def _instance(self, iid="detect", operator="threshold_detect") -> TaskInstance:
        spec = task(iid, ["Sensor"], "Alarm", operator=operator)
        return TaskInstance(instance_id=iid, task=spec, worker_id="w1", inputs=spec.inputs)

    def _publish(self, t, value):
        self.world.clock.AdvanceTo(t)
        self.world.Post("b1", "/v1/updateContext", {"elements": [element("S1", "Sensor", attr("value", value, t=t)).ToWire()]})
        self.world.clock.Drain()

    def test_alarms_flow_back_to_broker(self):
        self.world.Post("w1", "/v1/deployTask", {"instance": self._instance().ToWire()})
        self.assertEqual(self.daemon.Bindings(), {"detect": {"0": [World.Ep("b1")]}})
        for t, value in enumerate([5, 12, 13, 4, 11], start=1):
            self._publish(t * 100, value)
        found = self.world.Post("b1", "/v1/queryContext", {"entities": [pattern("Alarm").ToWire()]})["elements"]
        self.assertEqual([(e["entity"]["id"], value_of(e, "value"), value_of(e, "crossings")) for e in found], [("S1:alarm", 11, 2)])
        stats = self.daemon.Statistics()
        self.assertEqual((stats["tasks"], stats["inputs"], stats["outputs"], stats["delivered"]), (1, 5, 2, 2))

    def test_capacity_and_redeploy(self):
        self.daemon.DeployTask(self._instance("a"))
        self.daemon.DeployTask(self._instance("a"))
        self.daemon.DeployTask(self._instance("b"))
        with self.assertRaises(NoCapacity):
            self.daemon.DeployTask(self._instance("c"))
        self.daemon.UndeployTask("a")
        self.assertEqual(sorted(self.daemon.Bindings()), ["b"])
        self.assertEqual(self.broker.Statistics()["subscriptions"], 1)
        with self.assertRaises(InvariantViolation):
            self.daemon.UndeployTask("a")

    def test_failing_operator_restarts_once_and_replays(self):
        self.daemon.DeployTask(self._instance("boom", operator="explode"))
        self._publish(100, 1)
        stats = self.daemon.Statistics()
        self.assertEqual((stats["restarts"], stats["failed"], stats["inputs"]), (1, 2, 2))

    def test_submit_deploys_and_retries_unreachable_workers(self):
        orchestrator = self.world.Add(Orchestrator("o1", World.Ep("o1"), self.world.network, self.world.clock))
        topology = TaskTopology(name="t", tasks=(task("detect", ["Sensor"], "Alarm"), task("late", ["Alarm"], "Report")))
        reply = self.world.Post("o1", "/v1/submitTopology", {"topology": topology.ToWire(),
                                                            "workers": [self.node.ToWire(), worker("w2", capacity=1).ToWire()]})
        self.assertEqual([i["workerId"] for i in reply["plan"]["instances"]], ["w1", "w2"])
        self.assertEqual(orchestrator.Statistics()["pending"], 1)
        self.world.Add(WorkerDaemon(worker("w2", capacity=1), self.world.network, self.world.clock, broker=World.Ep("b1")))
        self.world.clock.AdvanceTo(1000)
        self.assertEqual(orchestrator.Statistics(), {"plans": 1, "instances": 2, "deployed": 2, "pending": 0})

class WorkerWithDiscoveryTest(unittest.TestCase):
    def test_generated_stream_is_registered_and_bound(self):
        world = World()
        net, clock = world.network, world.clock
        registry = world.Add(DiscoveryRegistry("d1", World.Ep("d1"), net, clock))
        world.Add(ContextBroker("b1", World.Ep("b1"), net, clock))
        world.Add(ContextBroker("b2", World.Ep("b2"), net, clock))
        registry.RegisterContext(Registration(patterns=(pattern("Sensor"),), providing_endpoint=World.Ep("b2")))
        daemon = world.Add(WorkerDaemon(worker("w1"), net, clock, broker=World.Ep("b1"), discovery=World.Ep("d1")))
        spec = task("detect", [StreamSelector(entity_type="Sensor", scopes=(TURIN,))], "Alarm")
        daemon.DeployTask(TaskInstance(instance_id="detect-1", task=spec, worker_id="w1", scope=TURIN, inputs=spec.inputs))
        self.assertEqual(daemon.Bindings(), {"detect-1": {"0": [World.Ep("b2")]}})
        generated = registry.DiscoverContextAvailability([pattern("Alarm")], [], [])
        self.assertEqual([(r.providing_endpoint, r.scope_meta) for r in generated], [(World.Ep("b1"), (TURIN,))])

if __name__ == '__main__':
    unittest.main()
