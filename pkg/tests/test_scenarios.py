import json
import unittest
from pathlib import Path

from schemas.Errors import ScriptError
from services.ScenarioRunner import ScenarioRunner

ROOT = Path(__file__).resolve().parent.parent
SCENARIOS = ROOT / "scenarios"

ROOMS = '''{
  "name": "rooms",
  "nodes": [
    {"id": "b1", "kind": "broker"},
    {"id": "c1", "kind": "consumer"}
  ],
  "actions": [
    {"at": 0, "do": "subscribe", "node": "b1", "as": "s",
     "subscription": {"entities": [{"id": "Room:1", "type": "Room"}], "notifyEndpoint": "c1/rooms"}},
    {"at": 100, "do": "publish", "node": "b1",
     "elements": [{"entity": {"id": "Room:1", "type": "Room"}, "attributes": [{"name": "t", "type": "Number", "value": 21}]}]},
    {"at": 200, "do": "expectNotification", "node": "c1", "label": "rooms", "attribute": "t", "values": [21]},
    {"at": 300, "do": "publish", "node": "b1", "elements": [{"entity": {"id": "", "type": "Room"}}], "expectError": "InvariantViolation"},
    {"at": 400, "do": "expectQueryResult", "node": "b1", "entities": [{"id": ".*", "type": "Room", "isPattern": true}], "ids": ["Room:1"]},
    {"at": 500, "do": "unsubscribe", "node": "b1", "ref": "s"},
    {"at": 600, "do": "expectStatistic", "node": "b1", "key": "subscriptions", "value": 0}
  ]
}'''

def _steps(*actions:str) -> str:
    return '{\n  "nodes": [\n    {"id": "b1", "kind": "broker"}\n  ],\n  "actions": [\n    ' + ",\n    ".join(actions) + "\n  ]\n}"

class ScenarioFilesTest(unittest.TestCase):
    def _run(self, name:str):
        return ScenarioRunner().Run(ScenarioRunner.Load(str(SCENARIOS / name)))

    def test_bundled_scenarios_pass(self):
        for name in ("waterproof.json", "synchronicity.json", "autopilot.json"):
            with self.subTest(scenario=name):
                report = self._run(name)
                self.assertTrue(report.passed, report.Text())
                self.assertTrue(report.assertions)

    def test_runs_are_deterministic(self):
        first, second = self._run("waterproof.json"), self._run("waterproof.json")
        self.assertEqual(first.events, second.events)
        self.assertTrue(first.events)

    def test_missing_file(self):
        with self.assertRaises(ScriptError):
            ScenarioRunner.Load(str(SCENARIOS / "nope.json"))

class ScenarioRunnerTest(unittest.TestCase):
    def test_empty_script_passes(self):
        report = ScenarioRunner().Run(ScenarioRunner.Parse(""))
        self.assertTrue(report.passed)
        self.assertEqual(report.events, ())

    def test_inline_scenario(self):
        report = ScenarioRunner().Run(ScenarioRunner.Parse(ROOMS))
        self.assertTrue(report.passed, report.Text())
        self.assertEqual([a.kind for a in report.assertions],
                         ["expectNotification", "publish", "expectQueryResult", "expectStatistic"])
        self.assertTrue(report.Text().startswith("scenario rooms: PASS"))
        self.assertTrue(any("error InvariantViolation" in e for e in report.events))

    def test_failed_assertion_is_reported_with_line(self):
        text = _steps('{"at": 0, "do": "expectQueryResult", "node": "b1", "entities": [{"id": ".*", "type": "*", "isPattern": true}], "ids": ["Nope"]}')
        report = ScenarioRunner().Run(ScenarioRunner.Parse(text))
        self.assertFalse(report.passed)
        self.assertEqual(report.assertions[0].line, 6)
        self.assertIn("[FAIL]", report.Text())
        self.assertTrue(report.Text().startswith("scenario scenario: FAIL"))

    def test_unexpected_success_fails(self):
        text = _steps('{"at": 0, "do": "publish", "node": "b1", "elements": [], "expectError": "InvariantViolation"}')
        report = ScenarioRunner().Run(ScenarioRunner.Parse(text))
        self.assertFalse(report.passed)
        self.assertIn("got success", report.assertions[0].detail)

    def test_report_wire_form(self):
        report = ScenarioRunner().Run(ScenarioRunner.Parse(ROOMS))
        wire = report.ToWire()
        self.assertEqual(wire["scenario"], "rooms")
        self.assertTrue(wire["passed"])
        self.assertEqual(json.loads(json.dumps(wire))["assertions"][0]["kind"], "expectNotification")

class ParseErrorsTest(unittest.TestCase):
    def _error(self, text:str) -> ScriptError:
        with self.assertRaises(ScriptError) as ctx:
            ScenarioRunner.Parse(text)
        return ctx.exception

    def test_unknown_action(self):
        err = self._error(_steps('{"at": 0, "do": "query", "node": "b1"}', '{"at": 10, "do": "explode", "node": "b1"}'))
        self.assertEqual((err.line, err.path), (7, "actions[1]"))

    def test_undeclared_node(self):
        err = self._error(_steps('{"at": 0, "do": "query", "node": "b9"}'))
        self.assertEqual((err.line, err.path), (6, "actions[0]"))
        err = self._error(_steps('{"at": 0, "do": "partition", "nodes": ["b1", "b7"], "duration": 10}'))
        self.assertEqual(err.path, "actions[0]")

    def test_step_in_the_past(self):
        err = self._error(_steps('{"at": 100, "do": "query", "node": "b1"}', '{"at": 50, "do": "query", "node": "b1"}'))
        self.assertEqual(err.path, "actions[1]")
        err = self._error(_steps('{"at": 0, "do": "advance", "ms": 500}', '{"at": 100, "do": "query", "node": "b1"}'))
        self.assertEqual((err.line, err.path), (7, "actions[1]"))

    def test_bad_json(self):
        err = self._error('{\n  "nodes": [\n    {"id": "b1",, "kind": "broker"}\n  ]\n}')
        self.assertEqual(err.line, 3)
        self.assertEqual(self._error("[1, 2]").line, 1)

    def test_bad_nodes(self):
        text = '{\n  "nodes": [\n    {"id": "d1", "kind": "discovery"},\n    {"id": "f1", "kind": "federation", "level": 3, "localBroker": "d1"}\n  ]\n}'
        err = self._error(text)
        self.assertEqual((err.line, err.path), (4, "nodes[1]"))
        err = self._error('{"nodes": [{"id": "b1", "kind": "broker"}, {"id": "b1", "kind": "broker"}]}')
        self.assertEqual(err.path, "nodes[1]")
        err = self._error('{"nodes": [{"id": "f1", "kind": "federation"}]}')
        self.assertEqual(err.path, "nodes[0]")
        err = self._error('{"nodes": [{"id": "x", "kind": "teapot"}]}')
        self.assertEqual(err.path, "nodes[0]")

if __name__ == '__main__':
    unittest.main()
