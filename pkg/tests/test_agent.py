import tempfile
import unittest
from pathlib import Path

from config.config import settings
from interfaces.ClockInterface import SimClock
from interfaces.ReplayTransport import ReplayTransport
from schemas.AgentTypes import DeviceEntry, DeviceMapping, DeviceMessage, FieldMapping
from schemas.ContextTypes import ContextAttribute, DataModel, EntityRef, RequiredAttribute
from schemas.Errors import InvariantViolation, UnknownDevice, ValidationFailed
from services.ContextBroker import ContextBroker
from services.DiscoveryRegistry import DiscoveryRegistry
from services.IoTAgent import IoTAgent
from tests.support import World, pattern, value_of

WEATHER = DataModel(name="WeatherObserved",
                    required_attributes=(RequiredAttribute(name="temperature", type="Number"),
                                         RequiredAttribute(name="location", type="geo:point")),
                    synonyms={"temp": "temperature", "posizione": "location"})
MODELS = {WEATHER.name: WEATHER}
ROOM = EntityRef(id="Room:1", type="Room")

def _mapping(**overrides) -> DeviceMapping:
    station = {
        "entity_id"         : "Weather:1",
        "entity_type"       : "WeatherObserved",
        "model"             : "WeatherObserved",
        "fields"            : {"t": FieldMapping(attribute="temperature", type="Number", unit="CEL")},
        "static_attributes" : (ContextAttribute(name="posizione", type="geo:point", value=[45.07, 7.68]),),
        "observes"          : (ROOM,),
    }
    station.update(overrides)
    return DeviceMapping(devices={"ws-1": DeviceEntry(**station)})

class TranslateTest(unittest.TestCase):
    def test_maps_harmonizes_and_stamps(self):
        msg = DeviceMessage(device="ws-1", ts=5000, fields={"t": 21.5, "battery": 80})
        element, dropped = IoTAgent.Translate(msg, _mapping(), MODELS, arrival_ms=9999)
        self.assertEqual(element.entity, EntityRef(id="Weather:1", type="WeatherObserved"))
        self.assertEqual([a.name for a in element.attributes], ["temperature", "location"])
        temperature = element.Attribute("temperature")
        self.assertEqual(temperature.value, 21.5)
        self.assertEqual(temperature.Timestamp, 5000)
        self.assertEqual(temperature.FindMetadatum("unit").value, "CEL")
        self.assertEqual(list(element.Attribute("location").value), [45.07, 7.68])
        self.assertEqual(dropped, ["battery"])

    def test_timestamp_sources(self):
        element, _dropped = IoTAgent.Translate(DeviceMessage(device="ws-1", fields={"t": 1}), _mapping(), MODELS, arrival_ms=777)
        self.assertEqual(element.Attribute("temperature").Timestamp, 777)
        mapping = _mapping(timestamp_field="when")
        msg = DeviceMessage(device="ws-1", ts=5000, fields={"t": 1, "when": 1234})
        element, dropped = IoTAgent.Translate(msg, mapping, MODELS, arrival_ms=777)
        self.assertEqual(element.Attribute("temperature").Timestamp, 1234)
        self.assertEqual(dropped, [])
        with self.assertRaises(InvariantViolation):
            IoTAgent.Translate(DeviceMessage(device="ws-1", fields={"t": 1, "when": "noon"}), mapping, MODELS, arrival_ms=0)

    def test_rejections(self):
        with self.assertRaises(UnknownDevice):
            IoTAgent.Translate(DeviceMessage(device="nope"), _mapping(), MODELS, arrival_ms=0)
        with self.assertRaises(ValidationFailed) as ctx:
            IoTAgent.Translate(DeviceMessage(device="ws-1", fields={"other": 1}), _mapping(), MODELS, arrival_ms=0)
        self.assertEqual(ctx.exception.missing, ["temperature"])
        text = _mapping(fields={"t": FieldMapping(attribute="temperature", type="Text")})
        with self.assertRaises(ValidationFailed) as ctx:
            IoTAgent.Translate(DeviceMessage(device="ws-1", fields={"t": "warm"}), text, MODELS, arrival_ms=0)
        self.assertEqual(ctx.exception.type_mismatches, ["temperature"])
        with self.assertRaises(InvariantViolation):
            IoTAgent.Translate(DeviceMessage(device="ws-1", fields={"t": [1, 2]}), _mapping(), MODELS, arrival_ms=0)

    def test_mapping_must_use_canonical_names(self):
        _mapping().CheckCanonical(MODELS)
        with self.assertRaises(InvariantViolation):
            _mapping(fields={"t": FieldMapping(attribute="temp", type="Number")}).CheckCanonical(MODELS)
        with self.assertRaises(InvariantViolation):
            _mapping(model="Unknown").CheckCanonical(MODELS)
        with self.assertRaises(InvariantViolation):
            DeviceEntry(entity_id="", entity_type="WeatherObserved")

class IoTAgentTest(unittest.TestCase):
    def setUp(self):
        self.world = World()
        net, clock = self.world.network, self.world.clock
        self.broker = self.world.Add(ContextBroker("b1", World.Ep("b1"), net, clock))
        self.registry = self.world.Add(DiscoveryRegistry("d1", World.Ep("d1"), net, clock))

    def _agent(self, config=None, discovery=None) -> IoTAgent:
        agent = IoTAgent("a1", World.Ep("a1"), self.world.network, self.world.clock, _mapping(), MODELS,
                         broker=World.Ep("b1"), discovery=discovery, config=config)
        return self.world.Add(agent)

    def test_ingest_reaches_broker(self):
        agent = self._agent()
        reply = self.world.Post("a1", "/v1/ingest", {"messages": [
            {"device": "ws-1", "ts": 5000, "fields": {"t": 21.5, "battery": 3}},
            {"device": "ghost", "fields": {"t": 1}},
        ]})
        self.assertEqual(reply, {"accepted": 2})
        self.world.clock.Drain()
        found = self.broker.QueryContext([pattern("WeatherObserved")], [], [])
        self.assertEqual([e.entity.id for e in found], ["Weather:1"])
        self.assertEqual(found[0].Attribute("temperature").value, 21.5)
        stats = agent.Statistics()
        self.assertEqual((stats["received"], stats["translated"], stats["delivered"]), (2, 1, 1))
        self.assertEqual((stats["failed"], stats["unmappedFields"], stats["queued"]), (1, 1, 0))

    def test_overflow_drops_oldest(self):
        agent = self._agent(config=dict(settings, AGENT_CONFIG={"QUEUE_LIMIT": 2}))
        for value in (1, 2, 3):
            agent.Enqueue(DeviceMessage(device="ws-1", ts=1000 + value, fields={"t": value}))
        self.assertEqual(agent.Pending(), 2)
        self.world.clock.Drain()
        stats = agent.Statistics()
        self.assertEqual((stats["droppedOverflow"], stats["delivered"]), (1, 2))
        found = self.world.Post("b1", "/v1/queryContext", {"entities": [pattern().ToWire()]})["elements"]
        self.assertEqual(value_of(found[0], "temperature"), 3)

    def test_unreachable_broker_backs_up_into_bounded_queue(self):
        config = dict(settings, AGENT_CONFIG={"QUEUE_LIMIT": 2})
        agent = self.world.Add(IoTAgent("a2", World.Ep("a2"), self.world.network, self.world.clock, _mapping(), MODELS,
                                        broker="sim://gone", config=config))
        for value in range(50):
            agent.Enqueue(DeviceMessage(device="ws-1", ts=1000 + value, fields={"t": value}))
            self.world.clock.Drain()
        self.assertLessEqual(agent.Pending() + agent.outbox.Pending(), 2)
        self.assertEqual(agent.Statistics()["droppedOverflow"], 48)
        self.assertEqual(agent.Statistics()["inFlight"], 1)

    def test_device_waits_for_its_previous_delivery(self):
        agent = self._agent()
        for value in (1, 2):
            agent.Enqueue(DeviceMessage(device="ws-1", ts=1000 + value, fields={"t": value}))
        self.world.network.Partition(["b1"], 500)
        self.world.clock.Drain()
        self.assertEqual((agent.Pending(), agent.outbox.Pending()), (1, 1))
        self.world.clock.AdvanceTo(2000)
        self.assertEqual((agent.Pending(), agent.outbox.Keys()), (0, []))
        self.assertEqual(agent.Statistics()["delivered"], 2)
        found = self.broker.QueryContext([pattern("WeatherObserved")], [], [])
        self.assertEqual(found[0].Attribute("temperature").value, 2)

    def test_start_registers_devices_with_broker_as_provider(self):
        agent = self._agent(discovery=World.Ep("d1"))
        agent.Start()
        found = self.registry.DiscoverContextAvailability([pattern("WeatherObserved")], [], [])
        self.assertEqual([r.providing_endpoint for r in found], [World.Ep("b1")])
        self.assertIn("temperature", [d.name for d in found[0].attributes])
        self.assertEqual([r.id for r in self.registry.ResolveThing(ROOM)], [found[0].id])
        agent.Shutdown()

class ReplayTransportTest(unittest.TestCase):
    LINES = [
        '{"device": "ws-1", "ts": 1000, "fields": {"t": 1}}',
        'not json',
        '{"device": "ws-1", "ts": 3000, "fields": {"t": 2}}',
        '{"device": "ws-1", "fields": {"t": 3}}',
        '{"device": "ws-1", "ts": 2000, "fields": {"t": 4}}',
    ]

    def setUp(self):
        self.clock = SimClock(0)
        self.seen = []
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        self.path = Path(tmp.name) / "replay.jsonl"
        self.path.write_text("\n".join(self.LINES) + "\n", encoding="utf-8")

    def _transport(self, speed) -> ReplayTransport:
        return ReplayTransport({"PATH": str(self.path), "SPEED": speed}, self._Sink, self.clock)

    def _Sink(self, msg:DeviceMessage) -> None:
        self.seen.append((self.clock.Now(), msg.fields["t"]))

    def test_replays_at_speed(self):
        transport = self._transport(2)
        self.assertTrue(transport.Open())
        self.assertEqual((transport.scheduled, transport.malformed), (4, 1))
        self.clock.AdvanceTo(999)
        self.assertEqual(self.seen, [(0, 1)])
        self.clock.AdvanceTo(1000)
        self.assertEqual(self.seen, [(0, 1), (1000, 2), (1000, 3), (1000, 4)])
        self.assertEqual(transport.received, 4)

    def test_close_cancels_pending(self):
        transport = self._transport(1)
        transport.Open()
        self.clock.Drain()
        transport.Close()
        self.clock.AdvanceTo(5000)
        self.assertEqual(self.seen, [(0, 1)])

    def test_speed_must_be_positive(self):
        with self.assertRaises(ValueError):
            self._transport(0).Open()

if __name__ == '__main__':
    unittest.main()
