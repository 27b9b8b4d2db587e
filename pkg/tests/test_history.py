import random
import statistics
import struct
import tempfile
import unittest
from datetime import date
from pathlib import Path
from unittest import mock

from interfaces.ClockInterface import SimClock
from interfaces.MySQLInterface import SQL, MySQLInterface
from interfaces.SegmentLogSink import SegmentLogSink
from schemas.BrokerTypes import Notification
from schemas.ContextTypes import EntityRef, Metadatum
from schemas.Errors import ArchiveMismatch, InvariantViolation, NonNumericSeries, StorageFull
from schemas.HistoryTypes import AggregateQuery, RawQuery, TimeSeriesRecord
from services.ContextBroker import ContextBroker
from services.HistoryArchiver import HistoryArchiver
from services.HistoryService import HistoryService
from tests.support import World, attr, element

DAY_MS = 24 * 60 * 60 * 1000
ROOM = EntityRef(id="Room:1", type="Room")

def rec(t:int, value=1, attribute:str = "t", entity:EntityRef = ROOM, metadata=()) -> TimeSeriesRecord:
    return TimeSeriesRecord(entity=entity, attribute=attribute, value=value, metadata=tuple(metadata), t=t)

class SinkCase(unittest.TestCase):
    def setUp(self):
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        self.dir = Path(tmp.name)

    def _sink(self, **overrides) -> SegmentLogSink:
        config = {"DATA_DIR": str(self.dir), "SEGMENT_MAX_BYTES": 1 << 20, "MAX_BYTES": 1 << 24}
        config.update(overrides)
        sink = SegmentLogSink(config)
        sink.Open()
        return sink

    def _segments(self):
        return sorted(self.dir.glob("*/segment-*.log"))

class SegmentLogSinkTest(SinkCase):
    def test_append_dedups_and_scans_in_time_order(self):
        sink = self._sink()
        self.assertEqual(sink.Append([rec(300, 3), rec(100, 1), rec(200, 2)]), 3)
        self.assertEqual(sink.Append([rec(100, 1), rec(400, 4), rec(400, 4)]), 1)
        # metadata does not make a record distinct
        stamped = rec(100, 1, metadata=(Metadatum(name="unit", type="string", value="CEL"),))
        self.assertEqual(sink.Append([stamped]), 0)
        self.assertEqual(sink.Count(), 4)
        self.assertEqual([r.t for r in sink.Scan("Room:1", "Room", "t", 100, 400)], [100, 200, 300])
        self.assertEqual(sink.Scan("Room:1", "Room", "h", 0, 1000), [])

    def test_reopen_rebuilds_index(self):
        sink = self._sink()
        sink.Append([rec(t, t // 100) for t in (100, 200, 300)])
        sink.Close()
        reopened = self._sink()
        self.assertEqual(reopened.Count(), 3)
        self.assertEqual([r.value for r in reopened.Scan("Room:1", "Room", "t", 0, 1000)], [1, 2, 3])
        self.assertEqual(reopened.Append([rec(200, 2)]), 0)

    def test_torn_tail_is_truncated(self):
        sink = self._sink()
        sink.Append([rec(100), rec(200)])
        segment = self._segments()[0]
        clean_size = segment.stat().st_size
        with open(segment, "ab") as handle:
            handle.write(b"\x00\x00\x01\x00{\"attri")
        reopened = self._sink()
        self.assertEqual(reopened.Count(), 2)
        self.assertEqual(segment.stat().st_size, clean_size)
        self.assertEqual(reopened.Append([rec(300)]), 1)
        self.assertEqual(self._sink().Count(), 3)

    def test_corrupt_frame_is_skipped_not_truncated(self):
        sink = self._sink()
        sink.Append([rec(100, 1), rec(200, 2), rec(300, 3)])
        segment = self._segments()[0]
        data = bytearray(segment.read_bytes())
        (first,) = struct.unpack_from(">I", data, 0)
        second = 8 + first
        data[second + 8 + 5] ^= 0xFF
        segment.write_bytes(bytes(data))
        reopened = self._sink()
        self.assertEqual(reopened.corrupt_frames, 1)
        self.assertEqual([r.value for r in reopened.Scan("Room:1", "Room", "t", 0, 1000)], [1, 3])
        self.assertEqual(segment.stat().st_size, len(data))

    def test_partial_failure_is_retried_without_duplicates(self):
        sink = self._sink()
        hall = EntityRef(id="Hall:1", type="Hall")
        batch = [rec(100, 1), rec(100, 2, entity=hall)]
        write = sink._Write

        def failing_write(entity_type, payloads):
            if entity_type == "Hall":
                raise OSError("disk full")
            write(entity_type, payloads)

        with mock.patch.object(sink, "_Write", side_effect=failing_write):
            with self.assertRaises(OSError):
                sink.Append(batch)
        self.assertEqual(sink.Count(), 1)
        self.assertEqual(sink.Append(batch), 1)
        self.assertEqual(self._sink().Count(), 2)

    def test_storage_full_writes_nothing(self):
        sink = self._sink(MAX_BYTES=50)
        with self.assertRaises(StorageFull):
            sink.Append([rec(100)])
        self.assertEqual(sink.Count(), 0)
        self.assertEqual(self._segments(), [])
        self.assertEqual(sink.Append([]), 0)

    def test_segments_roll_over(self):
        sink = self._sink(SEGMENT_MAX_BYTES=200)
        for t in range(10):
            sink.Append([rec(t * 10, t)])
        sink.Append([rec(1000 + t, t) for t in range(5)])
        self.assertGreater(len(self._segments()), 1)
        self.assertTrue(all(s.stat().st_size <= 200 for s in self._segments()))
        self.assertEqual(self._sink().Count(), 15)

    def test_days_and_archive_marks(self):
        sink = self._sink()
        sink.Append([rec(DAY_MS + 5), rec(10), rec(20), rec(2 * DAY_MS)])
        self.assertEqual(sink.OldestUnarchivedDay(before=date(1970, 1, 3)), date(1970, 1, 1))
        self.assertEqual(sink.CountOn(date(1970, 1, 1)), 2)
        self.assertEqual([r.t for r in sink.RecordsOn(date(1970, 1, 1))], [10, 20])
        sink.MarkArchived(date(1970, 1, 1))
        self.assertEqual(self._sink().OldestUnarchivedDay(before=date(1970, 1, 3)), date(1970, 1, 2))
        sink.MarkArchived(date(1970, 1, 2))
        self.assertIsNone(sink.OldestUnarchivedDay(before=date(1970, 1, 3)))

class HistoryServiceTest(SinkCase):
    def setUp(self):
        super().setUp()
        self.world = World()
        self.history = self.world.Add(HistoryService("h1", World.Ep("h1"), self.world.network, self.world.clock,
                                                     sink=self._sink()))

    def test_ingest_uses_timestamp_or_arrival(self):
        self.world.clock.AdvanceTo(5000)
        n = Notification(subscription_id="s-1", elements=(element("Room:1", "Room", attr("t", 20, t=1000), attr("h", 40)),))
        self.assertEqual(self.history.IngestNotification(n), 2)
        self.assertEqual(self.history.IngestNotification(n), 0)
        self.assertEqual([r.t for r in self.history.sink.Scan("Room:1", "Room", "h", 0, 10000)], [5000])
        self.assertEqual(self.history.Statistics(), {"notifications": 2, "records": 2, "written": 2, "duplicates": 2})

    def test_raw_query_order_and_limit(self):
        self.history.sink.Append([rec(t, t) for t in (100, 200, 300, 400)])
        asc = self.history.QueryRaw(RawQuery(entity=ROOM, attribute="t", t0=100, t1=400))
        self.assertEqual([r.t for r in asc], [100, 200, 300])
        desc = self.history.QueryRaw(RawQuery(entity=ROOM, attribute="t", t0=0, t1=1000, order="desc", limit=2))
        self.assertEqual([r.t for r in desc], [400, 300])
        with self.assertRaises(InvariantViolation):
            RawQuery(entity=EntityRef(id=".*", type="Room", is_pattern=True), attribute="t", t0=0, t1=1)

    def test_aggregate_matches_brute_fold(self):
        rng = random.Random(5)
        times = sorted(rng.sample(range(10000), 60))
        values = [rng.randint(-20, 40) for _ in times]
        self.history.sink.Append([rec(t, v) for t, v in zip(times, values)])
        buckets = {}
        for t, v in zip(times, values):
            if 1000 <= t < 9000:
                buckets.setdefault(1000 + ((t - 1000) // 1500) * 1500, []).append(v)
        folds = {"avg": statistics.fmean, "min": min, "max": max, "count": len, "last": lambda vs: vs[-1]}
        for fn, fold in folds.items():
            q = AggregateQuery(entity=ROOM, attribute="t", t0=1000, t1=9000, resolution=1500, fn=fn)
            got = self.history.QueryAggregate(q)
            self.assertEqual([b.bucket for b in got], sorted(buckets))
            for b in got:
                self.assertAlmostEqual(b.value, fold(buckets[b.bucket]), msg=f"{fn} @ {b.bucket}")

    def test_aggregate_rejects_text_unless_counting(self):
        self.history.sink.Append([rec(100, "open"), rec(200, 3)])
        q = {"entity": ROOM, "attribute": "t", "t0": 0, "t1": 1000, "resolution": 1000}
        with self.assertRaises(NonNumericSeries):
            self.history.QueryAggregate(AggregateQuery(fn="avg", **q))
        self.assertEqual(self.history.QueryAggregate(AggregateQuery(fn="count", **q))[0].value, 2)
        self.assertEqual(self.history.QueryAggregate(AggregateQuery(entity=ROOM, attribute="x", t0=0, t1=10, resolution=5, fn="avg")), [])

    def test_aggregate_query_invariants(self):
        with self.assertRaises(InvariantViolation):
            AggregateQuery(entity=ROOM, attribute="t", t0=10, t1=10, resolution=1, fn="avg")
        with self.assertRaises(InvariantViolation):
            AggregateQuery(entity=ROOM, attribute="t", t0=0, t1=10, resolution=0, fn="avg")
        with self.assertRaises(InvariantViolation):
            HistoryService.SinkFor({"SINK": "TAPE"})

    def test_records_broker_stream(self):
        self.world.Add(ContextBroker("b1", World.Ep("b1"), self.world.network, self.world.clock))
        self.history.SubscribeTo(World.Ep("b1"), "Room")
        for t, value in ((1000, 20), (2000, 21), (3000, 22)):
            self.world.clock.AdvanceTo(t)
            self.world.Post("b1", "/v1/updateContext", {"elements": [element("Room:1", "Room", attr("t", value, t=t)).ToWire()]})
        self.world.clock.Drain()
        reply = self.world.Post("h1", "/v1/history/raw", {"entity": ROOM.ToWire(), "attribute": "t", "t0": 0, "t1": 10000})
        self.assertEqual([r["value"] for r in reply["records"]], [20, 21, 22])
        reply = self.world.Post("h1", "/v1/history/aggregate", {"entity": ROOM.ToWire(), "attribute": "t", "t0": 0,
                                                                "t1": 10000, "resolution": 10000, "fn": "avg"})
        self.assertEqual(reply["buckets"], [{"bucket": 0, "value": 21}])

class MySQLInterfaceTest(unittest.TestCase):
    CONFIG = {"DB_HOST": "db", "DB_PORT": 3306, "DB_NAME": "history", "DB_USER": "u", "DB_PW": "p"}

    def setUp(self):
        self.db = mock.MagicMock()
        self.cursor = self.db.cursor.return_value
        patcher = mock.patch("interfaces.MySQLInterface.SQL.ConnectDB", return_value=(None, self.db))
        self.connect = patcher.start()
        self.addCleanup(patcher.stop)

    def test_open_creates_table(self):
        sink = MySQLInterface(self.CONFIG)
        self.assertTrue(sink.Open())
        self.assertIn("CREATE TABLE IF NOT EXISTS history_records", self.cursor.execute.call_args_list[0].args[0])

    def test_append_inserts_ignoring_duplicates(self):
        sink = MySQLInterface(self.CONFIG)
        sink.Open()
        self.cursor.rowcount = 1
        records = [rec(100, 20), rec(100, 20)]
        self.assertEqual(sink.Append(records), 1)
        sql, rows = self.cursor.executemany.call_args.args
        self.assertTrue(sql.startswith("INSERT IGNORE INTO history_records"))
        self.assertEqual(rows[0][:5], ("Room:1", "Room", "t", 100, "20"))
        self.assertEqual(rows[0][6], records[0].DedupKey)
        self.db.commit.assert_called()

    def test_scan_decodes_rows(self):
        sink = MySQLInterface(self.CONFIG)
        sink.Open()
        self.cursor.fetchall.return_value = [("Room:1", "Room", "t", 100, "20.5", '[{"name":"unit","type":"string","value":"CEL"}]', "k")]
        found = sink.Scan("Room:1", "Room", "t", 0, 1000)
        self.assertEqual((found[0].t, found[0].value, found[0].metadata[0].value), (100, 20.5, "CEL"))
        self.assertEqual(self.cursor.execute.call_args.args[1], ("Room:1", "Room", "t", 0, 1000))

    def test_failed_connection(self):
        self.connect.return_value = (None, None)
        sink = MySQLInterface(self.CONFIG)
        self.assertFalse(sink.Open())
        with self.assertRaises(StorageFull):
            sink.Append([rec(1)])

class ConnectDBTest(unittest.TestCase):
    DB = {"DB_HOST": "db", "DB_PORT": "3306", "DB_NAME": "history", "DB_USER": "u", "DB_PW": "p"}

    @mock.patch("interfaces.MySQLInterface.connection.MySQLConnection")
    def test_direct(self, conn_cls):
        tunnel, db = SQL.ConnectDB(self.DB)
        self.assertIsNone(tunnel)
        self.assertIs(db, conn_cls.return_value)
        self.assertEqual(conn_cls.call_args.kwargs["port"], 3306)

    @mock.patch("interfaces.MySQLInterface.connection.MySQLConnection", side_effect=RuntimeError("refused"))
    def test_direct_failure(self, _conn_cls):
        self.assertEqual(SQL.ConnectDB(self.DB), (None, None))

    @mock.patch("interfaces.MySQLInterface.connection.MySQLConnection")
    @mock.patch("interfaces.MySQLInterface.sshtunnel.SSHTunnelForwarder")
    def test_through_tunnel(self, forwarder, conn_cls):
        forwarder.return_value.local_bind_port = 40000
        tunnel, db = SQL.ConnectDB(self.DB, {"SSH_HOST": "jump", "SSH_USER": "me", "SSH_PW": "pw"})
        self.assertIs(tunnel, forwarder.return_value)
        self.assertIs(db, conn_cls.return_value)
        self.assertEqual((conn_cls.call_args.kwargs["host"], conn_cls.call_args.kwargs["port"]), ("127.0.0.1", 40000))
        forwarder.return_value.start.assert_called_once()

class HistoryArchiverTest(SinkCase):
    def setUp(self):
        super().setUp()
        self.sink = self._sink()
        self.sink.Append([rec(10, 1), rec(20, 2), rec(DAY_MS + 1, 3), rec(2 * DAY_MS + 1, 4)])
        self.tables = {}
        self.bigquery = mock.MagicMock()
        self.bigquery.TableIdFor.side_effect = lambda suffix: f"proj.ctx.history_{suffix}"
        self.bigquery.TableExists.side_effect = lambda table: table in self.tables
        self.bigquery.CreateTable.side_effect = lambda table, schema: self.tables.setdefault(table, [])
        self.bigquery.GetTableCount.side_effect = lambda table: len(self.tables.get(table, []))
        self.bigquery.InsertRows.side_effect = lambda table, rows, row_ids: self.tables[table].extend(rows) or []
        self.clock = SimClock(start_ms=2 * DAY_MS + 500)

    def test_archives_completed_days_only(self):
        archiver = HistoryArchiver(self.sink, self.bigquery, self.clock)
        self.assertEqual(archiver.SyncAll(), 2)
        self.assertEqual(sorted(self.tables), ["proj.ctx.history_19700101", "proj.ctx.history_19700102"])
        self.assertEqual([row["value"] for row in self.tables["proj.ctx.history_19700101"]], ["1", "2"])
        self.assertEqual(self.tables["proj.ctx.history_19700102"][0]["t"], "1970-01-02T00:00:00.001000+00:00")
        self.assertEqual(archiver.SyncAll(), 0)

    def test_respects_day_limit(self):
        archiver = HistoryArchiver(self.sink, self.bigquery, self.clock)
        self.assertEqual(archiver.SyncAll(maxDaysToSync=1), 1)
        self.assertEqual(self.sink.OldestUnarchivedDay(before=date(1970, 1, 3)), date(1970, 1, 2))

    def test_short_count_leaves_day_unarchived(self):
        self.bigquery.GetTableCount.side_effect = lambda table: 0
        with self.assertRaises(ArchiveMismatch):
            HistoryArchiver(self.sink, self.bigquery, self.clock).SyncAll()
        self.assertEqual(self.sink.OldestUnarchivedDay(before=date(1970, 1, 3)), date(1970, 1, 1))

if __name__ == '__main__':
    unittest.main()
