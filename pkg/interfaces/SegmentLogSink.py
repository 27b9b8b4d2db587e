## import standard libraries
import bisect
import itertools
import json
import logging
import os
import struct
import threading
import zlib
from datetime import date, datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Set, Tuple
from urllib.parse import quote

# import local files
from interfaces.SinkInterface import SinkInterface
from schemas.ContextCodec import ContextCodec
from schemas.Errors import CtxMeshError, StorageFull
from schemas.HistoryTypes import TimeSeriesRecord
from utils import Logger

# payload length, crc32 of the payload
_FRAME = struct.Struct(">II")
_SEGMENT_GLOB = "segment-*.log"
_ARCHIVED_FILE = "archived.json"

def _day_of(t:int) -> date:
    return datetime.fromtimestamp(t / 1000, tz=timezone.utc).date()

class SegmentLogSink(SinkInterface):
    """Append-only segmented log per entity type, with an in-memory index rebuilt on Open.

    Layout: <DATA_DIR>/<url-quoted entity type>/segment-NNNNNN.log. Each record is a
    4-byte big-endian length and a 4-byte CRC-32 followed by that many bytes of
    canonical JSON. A file is fsync'd before Append returns. A final record cut short
    by a crash was never acknowledged; Open truncates it away. A complete frame that
    fails its checksum is skipped and counted, and the frames after it are kept.
    """

    # *** BUILT-INS ***
    def __init__(self, config:Dict[str, Any]):
        """
        :param config: DATA_DIR, SEGMENT_MAX_BYTES, MAX_BYTES.
        """
        super().__init__(config=config)
        self._dir         = Path(config.get("DATA_DIR", "./history-data"))
        self._segment_max = int(config.get("SEGMENT_MAX_BYTES", 8 * 1024 * 1024))
        self._max_bytes   = int(config.get("MAX_BYTES", 1024 * 1024 * 1024))
        self._write_lock  = threading.Lock()
        self._reset()

    # *** IMPLEMENT ABSTRACT FUNCTIONS ***

    def _open(self) -> bool:
        self._reset()
        self._dir.mkdir(parents=True, exist_ok=True)
        for type_dir in sorted(p for p in self._dir.iterdir() if p.is_dir()):
            for segment in sorted(type_dir.glob(_SEGMENT_GLOB)):
                self._Recover(segment)
        archived = self._dir / _ARCHIVED_FILE
        if archived.exists():
            self._archived = {date.fromisoformat(d) for d in json.loads(archived.read_text(encoding="utf-8"))}
        Logger.Log(f"History store {self._dir}: {len(self._keys)} record(s) in {len(self._series)} series", logging.INFO)
        return True

    def _close(self) -> bool:
        return True

    def Append(self, records:List[TimeSeriesRecord]) -> int:
        with self._write_lock:
            fresh : List[Tuple[TimeSeriesRecord, str, bytes]] = []
            batch_keys : Set[str] = set()
            for record in records:
                key = record.DedupKey
                if key in self._keys or key in batch_keys:
                    continue
                batch_keys.add(key)
                fresh.append((record, key, ContextCodec.CanonicalBytes(record.ToWire())))
            size = sum(_FRAME.size + len(payload) for _r, _k, payload in fresh)
            if self._bytes + size > self._max_bytes:
                raise StorageFull(f"{self._bytes + size} bytes would exceed the {self._max_bytes} byte cap")
            by_type : Dict[str, List[Tuple[TimeSeriesRecord, str, bytes]]] = {}
            for item in fresh:
                by_type.setdefault(item[0].entity.type, []).append(item)
            # each type is indexed once its segment is fsync'd; if a later type fails,
            # the retried batch skips the written ones by dedup key
            for entity_type, items in by_type.items():
                self._Write(entity_type, [payload for _r, _k, payload in items])
                for record, key, payload in items:
                    self._Index(record, key, _FRAME.size + len(payload))
            return len(fresh)

    def Scan(self, entity_id:str, entity_type:str, attribute:str, t0:int, t1:int) -> List[TimeSeriesRecord]:
        series = self._series.get((entity_id, entity_type, attribute), [])
        lo = bisect.bisect_left(series, (t0, -1))
        hi = bisect.bisect_left(series, (t1, -1))
        return [self._records[seq] for _t, seq in series[lo:hi]]

    def Count(self) -> int:
        return len(self._keys)

    @property
    def SizeBytes(self) -> int:
        return self._bytes

    def OldestUnarchivedDay(self, before:date) -> Optional[date]:
        days = [d for d in self._days if d < before and d not in self._archived]
        return min(days) if days else None

    def RecordsOn(self, day:date) -> Iterator[TimeSeriesRecord]:
        on_day = [(r.t, seq) for seq, r in self._records.items() if _day_of(r.t) == day]
        for _t, seq in sorted(on_day):
            yield self._records[seq]

    def CountOn(self, day:date) -> int:
        return self._days.get(day, 0)

    def MarkArchived(self, day:date) -> None:
        self._archived.add(day)
        target = self._dir / _ARCHIVED_FILE
        scratch = target.with_suffix(".tmp")
        scratch.write_text(json.dumps(sorted(d.isoformat() for d in self._archived)), encoding="utf-8")
        os.replace(scratch, target)

    # *** PRIVATE METHODS ***

    def _reset(self) -> None:
        self._series   : Dict[Tuple[str, str, str], List[Tuple[int, int]]] = {}
        self._records  : Dict[int, TimeSeriesRecord] = {}
        self._keys     : Set[str] = set()
        self._days     : Dict[date, int] = {}
        self._archived : Set[date] = set()
        self._bytes    = 0
        self._seq      = itertools.count()
        self._current  : Dict[str, Tuple[Path, int]] = {}
        self.corrupt_frames = 0

    def _Index(self, record:TimeSeriesRecord, key:str, framed_size:int) -> None:
        seq = next(self._seq)
        self._records[seq] = record
        bisect.insort(self._series.setdefault(record.SeriesKey, []), (record.t, seq))
        self._keys.add(key)
        day = _day_of(record.t)
        self._days[day] = self._days.get(day, 0) + 1
        self._bytes += framed_size

    def _Write(self, entity_type:str, payloads:List[bytes]) -> None:
        type_dir = self._dir / quote(entity_type, safe="")
        type_dir.mkdir(parents=True, exist_ok=True)
        path, size = self._current.get(entity_type) or self._LastSegment(type_dir)
        handle = open(path, "ab")
        try:
            for payload in payloads:
                framed = _FRAME.pack(len(payload), zlib.crc32(payload)) + payload
                if size > 0 and size + len(framed) > self._segment_max:
                    handle.flush()
                    os.fsync(handle.fileno())
                    handle.close()
                    path = type_dir / f"segment-{int(path.stem.split('-')[1]) + 1:06d}.log"
                    size = 0
                    handle = open(path, "ab")
                handle.write(framed)
                size += len(framed)
            handle.flush()
            os.fsync(handle.fileno())
        finally:
            handle.close()
        self._current[entity_type] = (path, size)

    def _LastSegment(self, type_dir:Path) -> Tuple[Path, int]:
        segments = sorted(type_dir.glob(_SEGMENT_GLOB))
        if not segments:
            return type_dir / "segment-000001.log", 0
        return segments[-1], segments[-1].stat().st_size

    def _Recover(self, segment:Path) -> None:
        data = segment.read_bytes()
        offset = 0
        while offset < len(data):
            if len(data) - offset < _FRAME.size:
                break
            length, checksum = _FRAME.unpack_from(data, offset)
            end = offset + _FRAME.size + length
            if end > len(data):
                break
            payload = data[offset + _FRAME.size:end]
            try:
                if zlib.crc32(payload) != checksum:
                    raise CtxMeshError("checksum mismatch")
                record = ContextCodec.FromWire(TimeSeriesRecord, ContextCodec.ParseJson(payload))
            except CtxMeshError as err:
                self.corrupt_frames += 1
                Logger.Log(f"Skipping corrupt record at byte {offset} of {segment}: {err}", logging.WARNING)
                offset = end
                continue
            key = record.DedupKey
            if key not in self._keys:
                self._Index(record, key, end - offset)
            offset = end
        if offset < len(data):
            Logger.Log(f"Discarding {len(data) - offset} byte(s) of torn tail in {segment}", logging.WARNING)
            os.truncate(segment, offset)
