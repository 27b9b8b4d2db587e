import random
import re
import unittest

from schemas.ContextTypes import EntityRef, Scope
from schemas.DiscoveryTypes import AttributeDecl, AvailabilitySubscription, Registration
from schemas.Errors import InvariantViolation, UnknownRegistration
from services.DiscoveryRegistry import DiscoveryRegistry
from services.NotificationRecorder import NotificationRecorder
from tests.support import World, pattern

TYPES = ["Car", "Bike", "Room"]

def _brute_intersects(a:EntityRef, b:EntityRef) -> bool:
    if "*" not in (a.type, b.type) and a.type != b.type:
        return False
    if a.is_pattern and b.is_pattern:
        return True
    if a.is_pattern:
        return re.fullmatch(a.id, b.id) is not None
    if b.is_pattern:
        return re.fullmatch(b.id, a.id) is not None
    return a.id == b.id

def _brute_match(reg:Registration, patterns, attributes) -> bool:
    names = [d.name for d in reg.attributes]
    attrs_ok = not attributes or not names or any(a in names for a in attributes)
    return attrs_ok and any(_brute_intersects(q, p) for q in patterns for p in reg.patterns)

def _random_ref(rng:random.Random) -> EntityRef:
    entity_type = rng.choice(TYPES + ["*"])
    if rng.random() < 0.4:
        return EntityRef(id=rng.choice([".*", "A.*", "B.*"]), type=entity_type, is_pattern=True)
    return EntityRef(id=rng.choice(["A1", "A2", "B1"]), type=entity_type if entity_type != "*" else "Car")

class DiscoveryRegistryTest(unittest.TestCase):
    def setUp(self):
        self.world = World()
        self.registry = self.world.Add(DiscoveryRegistry("d1", World.Ep("d1"), self.world.network, self.world.clock))
        self.watcher = self.world.Add(NotificationRecorder("c1", World.Ep("c1"), self.world.network, self.world.clock))

    def _register(self, entity_id="Car:1", entity_type="Car", endpoint="sim://b1", **kwargs):
        reg = Registration(patterns=(EntityRef(id=entity_id, type=entity_type),), providing_endpoint=endpoint, **kwargs)
        return self.world.Post("d1", "/v1/registerContext", reg.ToWire())["registrationId"]

    def _discover(self, *patterns, attributes=(), scopes=()):
        return self.registry.DiscoverContextAvailability(list(patterns), list(attributes), list(scopes))

    def test_register_and_discover(self):
        self.assertEqual(self._register(), "r-1")
        self.assertEqual(self._register("Bike:1", "Bike", "sim://b2"), "r-2")
        found = self._discover(pattern("Car"))
        self.assertEqual([r.providing_endpoint for r in found], ["sim://b1"])
        self.assertEqual(found[0].expires, 3600000)
        self.assertEqual([r.id for r in self._discover(pattern())], ["r-1", "r-2"])

    def test_matching_against_brute_force(self):
        rng = random.Random(3)
        for i in range(40):
            attrs = tuple(AttributeDecl(name=n, type="Number") for n in rng.sample(["speed", "temp", "fuel"], rng.randint(0, 2)))
            refs = tuple(_random_ref(rng) for _ in range(rng.randint(1, 2)))
            self.registry.RegisterContext(Registration(patterns=refs, attributes=attrs, providing_endpoint=f"sim://p{i}"))
        every = self._discover(pattern())
        self.assertEqual(len(every), 40)
        for _ in range(200):
            patterns = [_random_ref(rng) for _ in range(rng.randint(1, 2))]
            attributes = rng.sample(["speed", "temp", "fuel", "other"], rng.randint(0, 2))
            expected = [r.id for r in every if _brute_match(r, patterns, attributes)]
            self.assertEqual([r.id for r in self._discover(*patterns, attributes=attributes)], expected)

    def test_scope_metadata(self):
        self._register(endpoint="sim://turin", scope_meta=(Scope.GeoBox(45.0, 7.6, 45.1, 7.7),))
        self._register(endpoint="sim://anywhere")
        near = self._discover(pattern("Car"), scopes=[Scope.GeoBox(45.05, 7.65, 45.2, 7.8)])
        far = self._discover(pattern("Car"), scopes=[Scope.GeoBox(10, 10, 11, 11)])
        self.assertEqual([r.providing_endpoint for r in near], ["sim://turin", "sim://anywhere"])
        self.assertEqual([r.providing_endpoint for r in far], ["sim://anywhere"])

    def test_expiry_and_renewal(self):
        reg_id = self._register(expires=1000)
        self.world.clock.AdvanceTo(500)
        reg = Registration(id=reg_id, patterns=(EntityRef(id="Car:1", type="Car"),), providing_endpoint="sim://b1", expires=2000)
        self.assertEqual(self.registry.RegisterContext(reg), reg_id)
        self.world.clock.AdvanceTo(1500)
        self.assertEqual(len(self._discover(pattern())), 1)
        self.world.clock.AdvanceTo(2000)
        self.assertEqual(self._discover(pattern()), [])
        self.assertEqual(self.registry.Statistics()["registrations"], 0)

    def test_register_errors(self):
        with self.assertRaises(UnknownRegistration):
            self.registry.RegisterContext(Registration(id="r-9", patterns=(pattern(),), providing_endpoint="sim://b1"))
        with self.assertRaises(InvariantViolation):
            self.registry.RegisterContext(Registration(patterns=(pattern(),), providing_endpoint="sim://b1", expires=0))
        with self.assertRaises(InvariantViolation):
            Registration(patterns=(pattern(),), providing_endpoint="")

    def test_availability_subscription(self):
        self._register()
        sub = AvailabilitySubscription(patterns=(pattern("Car"),), notify_endpoint=World.Ep("c1") + "/v1/notify/cars")
        self.world.Post("d1", "/v1/subscribeContextAvailability", sub.ToWire())
        self._register("Bike:1", "Bike", "sim://b2")
        reg_id = self._register("Car:2", "Car", "sim://b3", expires=1000)
        self.world.clock.AdvanceTo(1000)
        bodies = [r["body"] for r in self.watcher.Received("cars")]
        self.assertEqual([[r["providingEndpoint"] for r in b.get("registrations", [])] for b in bodies],
                         [["sim://b1"], ["sim://b3"], []])
        self.assertEqual(bodies[2]["removed"], [reg_id])

    def test_resolve_thing(self):
        room = EntityRef(id="Room:1", type="Room")
        self._register("Sensor:1", "TemperatureSensor", "sim://b1", thing_refs=(room,))
        self._register("Sensor:2", "TemperatureSensor", "sim://b2")
        found = self.world.Post("d1", "/v1/resolveThing", {"entity": room.ToWire()})["registrations"]
        self.assertEqual([r["providingEndpoint"] for r in found], ["sim://b1"])
        with self.assertRaises(InvariantViolation):
            self.registry.ResolveThing(pattern("Room"))

if __name__ == '__main__':
    unittest.main()
