import io
import json
import tempfile
import unittest
from contextlib import redirect_stderr, redirect_stdout
from pathlib import Path

from main import main
from services.ContextBroker import ContextBroker
from tests.support import World

ROOT = Path(__file__).resolve().parent.parent
WATERPROOF = str(ROOT / "scenarios" / "waterproof.json")

class MainTest(unittest.TestCase):
    def setUp(self):
        self.world = World()
        self.world.Add(ContextBroker("b1", World.Ep("b1"), self.world.network, self.world.clock))

    def _main(self, *argv:str, network=None):
        out, err = io.StringIO(), io.StringIO()
        with redirect_stdout(out), redirect_stderr(err):
            status = main(list(argv), network=network if network is not None else self.world.network)
        return status, out.getvalue(), err.getvalue()

    def test_query_empty_broker(self):
        status, out, _err = self._main("query", "--broker", World.Ep("b1"))
        self.assertEqual(status, 0)
        self.assertEqual(out, "[]\n")

    def test_publish_then_query(self):
        room = '[{"entity": {"id": "Room:1", "type": "Room"}, "attributes": [{"name": "t", "type": "Number", "value": 20}]}]'
        status, out, _err = self._main("publish", "--broker", World.Ep("b1"), "--elements", room)
        self.assertEqual(status, 0)
        self.assertEqual(json.loads(out), {"statuses": [{"status": "ok"}]})
        status, out, _err = self._main("query", "--broker", World.Ep("b1"), "--type", "Room")
        self.assertEqual(status, 0)
        self.assertEqual([e["entity"]["id"] for e in json.loads(out)], ["Room:1"])

    def test_rejected_element_fails(self):
        status, out, _err = self._main("publish", "--broker", World.Ep("b1"), "--elements", '{"entity": {"id": "", "type": "Room"}}')
        self.assertEqual(status, 1)
        self.assertEqual(json.loads(out)["statuses"][0]["status"], "error")

    def test_unreachable_broker(self):
        status, _out, err = self._main("query", "--broker", "sim://nobody")
        self.assertEqual(status, 1)
        self.assertTrue(err)

    def test_usage_errors(self):
        self.assertEqual(self._main("query", "--broker", World.Ep("b1"), "--bogus")[0], 2)
        self.assertEqual(self._main()[0], 2)
        self.assertEqual(self._main("scenario")[0], 2)
        self.assertEqual(self._main("publish", "--broker", World.Ep("b1"), "--elements", "{not json")[0], 2)

    def test_scenario_run(self):
        status, out, _err = self._main("scenario", "run", "--script", WATERPROOF)
        self.assertEqual(status, 0)
        self.assertTrue(out.startswith("scenario waterproof: PASS"))

    def test_scenario_json_and_report(self):
        with tempfile.TemporaryDirectory() as tmp:
            report_path = Path(tmp) / "report.json"
            status, out, _err = self._main("scenario", "run", "--script", WATERPROOF, "--json", "--report", str(report_path))
            self.assertEqual(status, 0)
            self.assertTrue(json.loads(out)["passed"])
            self.assertEqual(json.loads(report_path.read_text(encoding="utf-8")), json.loads(out))

    def test_missing_script(self):
        status, _out, err = self._main("scenario", "run", "--script", str(ROOT / "scenarios" / "missing.json"))
        self.assertEqual(status, 2)
        self.assertIn("cannot read scenario", err)

if __name__ == '__main__':
    unittest.main()
