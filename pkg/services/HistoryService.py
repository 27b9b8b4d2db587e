## import standard libraries
import logging
import numbers
from typing import Any, Dict, List, Optional

## pip module imports
import pandas as pd

# import local files
from config.config import settings as default_settings
from interfaces.ClockInterface import ClockInterface
from interfaces.MySQLInterface import MySQLInterface
from interfaces.NetworkInterface import NetworkInterface
from interfaces.SegmentLogSink import SegmentLogSink
from interfaces.SinkInterface import SinkInterface
from schemas.BrokerTypes import POLICY_DROP, Notification
from schemas.ContextCodec import ContextCodec
from schemas.ContextTypes import EntityRef
from schemas.Errors import InvariantViolation, NonNumericSeries
from schemas.HistoryTypes import AggregateBucket, AggregateQuery, RawQuery, TimeSeriesRecord
from services.WireService import Handler, WireRequest, WireService
from utils import Logger

SINK_SEGMENT_LOG = "SEGMENT_LOG"
SINK_MYSQL       = "MYSQL"

# bucket folds over a pandas Series of plain python values
_FOLDS = {
    "avg"  : lambda values: sum(values) / len(values),
    "min"  : lambda values: min(values),
    "max"  : lambda values: max(values),
    "last" : lambda values: values.iloc[-1],
}

def _numeric(value:Any) -> bool:
    return isinstance(value, numbers.Real) and not isinstance(value, bool)

def _plain(value:Any) -> Any:
    # numpy scalars do not canonicalize
    return value.item() if hasattr(value, "item") else value

class HistoryService(WireService):
    """Short-term history: persists notification streams as time series and answers raw and bucketed queries."""

    # *** BUILT-INS ***
    def __init__(self, node_id:str, endpoint:str, network:NetworkInterface, clock:ClockInterface,
                 sink:Optional[SinkInterface] = None, config:Optional[Dict[str, Any]] = None):
        super().__init__(node_id=node_id, endpoint=endpoint, network=network, clock=clock)
        self._config        = config or default_settings
        history_cfg         = self._config.get("HISTORY_CONFIG", default_settings["HISTORY_CONFIG"])
        self._default_limit = int(history_cfg.get("DEFAULT_LIMIT", 1000))
        self.sink           : SinkInterface = sink or HistoryService.SinkFor(history_cfg)
        if not self.sink.IsOpen():
            self.sink.Open()
        self.notifications : int = 0
        self.written       : int = 0
        self.duplicates    : int = 0

    # *** PUBLIC METHODS ***

    @staticmethod
    def SinkFor(history_cfg:Dict[str, Any]) -> SinkInterface:
        kind = str(history_cfg.get("SINK", SINK_SEGMENT_LOG)).upper()
        if kind == SINK_MYSQL:
            return MySQLInterface(history_cfg["MYSQL_CONFIG"])
        if kind == SINK_SEGMENT_LOG:
            return SegmentLogSink(history_cfg)
        raise InvariantViolation("SINK", f"unknown history sink '{kind}'")

    def Routes(self) -> Dict[str, Handler]:
        return {
            "/v1/notify"            : self._HandleNotify,
            "/v1/history/raw"       : self._HandleRaw,
            "/v1/history/aggregate" : self._HandleAggregate,
            "/v1/statistics"        : lambda req: self.Statistics(),
        }

    def IngestNotification(self, n:Notification) -> int:
        """Persist one record per (element, attribute) and acknowledge only once durable.

        The record time is the attribute's timestamp metadatum, or the arrival time
        when the attribute carries none.

        :param n: A decoded notification; AggregateSet snapshots each contribute their own records.
        :type n: Notification
        :return: How many records were new.
        :rtype: int
        """
        arrival = self._clock.Now()
        records = []
        for element in n.elements:
            for attr in element.attributes:
                stamp = attr.Timestamp
                records.append(TimeSeriesRecord(entity=element.entity, attribute=attr.name, value=attr.value,
                                                metadata=attr.metadata, t=stamp if stamp is not None else arrival))
        with self._lock:
            written = self.sink.Append(records)
            self.notifications += 1
            self.written += written
            self.duplicates += len(records) - written
        Logger.Log(f"{self.node_id}: notification {n.subscription_id} wrote {written} of {len(records)} record(s)", logging.DEBUG)
        return written

    def QueryRaw(self, q:RawQuery) -> List[TimeSeriesRecord]:
        records = self.sink.Scan(q.entity.id, q.entity.type, q.attribute, q.t0, q.t1)
        if q.order == "desc":
            records = list(reversed(records))
        limit = self._default_limit if q.limit is None else q.limit
        return records[:limit]

    def QueryAggregate(self, q:AggregateQuery) -> List[AggregateBucket]:
        """Fold each non-empty bucket [t0 + k*resolution, t0 + (k+1)*resolution) with q.fn.

        :raises NonNumericSeries: fn is not count and some value in range is not a number.
        """
        records = self.sink.Scan(q.entity.id, q.entity.type, q.attribute, q.t0, q.t1)
        if not records:
            return []
        if q.fn != "count":
            bad = next((r for r in records if not _numeric(r.value)), None)
            if bad is not None:
                raise NonNumericSeries(f"{q.entity.id}/{q.attribute} has value {bad.value!r} at t={bad.t}")
        frame = pd.DataFrame({
            "bucket" : [q.t0 + ((r.t - q.t0) // q.resolution) * q.resolution for r in records],
            "value"  : pd.Series([r.value for r in records], dtype=object),
        })
        grouped = frame.groupby("bucket", sort=True)["value"]
        folded = grouped.size() if q.fn == "count" else grouped.apply(_FOLDS[q.fn])
        return [AggregateBucket(bucket=int(bucket), value=_plain(value)) for bucket, value in folded.items()]

    def SubscribeTo(self, broker_endpoint:str, entity_type:str, throttling:int = 0, policy:str = POLICY_DROP) -> str:
        """Create this service's own subscription for every entity of a type at a broker."""
        body = {
            "entities"       : [EntityRef(id=".*", type=entity_type, is_pattern=True).ToWire()],
            "notifyEndpoint" : self.Url("/v1/notify"),
            "throttling"     : throttling,
            "policy"         : policy,
        }
        sub_id = self.Post(broker_endpoint, "/v1/subscribeContext", body)["subscriptionId"]
        Logger.Log(f"{self.node_id}: recording {entity_type} from {broker_endpoint} as {sub_id}", logging.INFO)
        return sub_id

    def Statistics(self) -> Dict[str, Any]:
        return {
            "notifications" : self.notifications,
            "records"       : self.sink.Count(),
            "written"       : self.written,
            "duplicates"    : self.duplicates,
        }

    def Shutdown(self) -> None:
        self.sink.Close()

    # *** PRIVATE METHODS ***

    def _HandleNotify(self, req:WireRequest) -> Dict[str, Any]:
        return {"written": self.IngestNotification(ContextCodec.FromWire(Notification, req.body))}

    def _HandleRaw(self, req:WireRequest) -> Dict[str, Any]:
        q = ContextCodec.FromWire(RawQuery, req.body)
        return {"records": [r.ToWire() for r in self.QueryRaw(q)]}

    def _HandleAggregate(self, req:WireRequest) -> Dict[str, Any]:
        q = ContextCodec.FromWire(AggregateQuery, req.body)
        return {"buckets": [b.ToWire() for b in self.QueryAggregate(q)]}
