# Standard module imports
import logging
from datetime import date, datetime, timezone
from typing import Any, Dict, List, Optional

# Local module imports
from interfaces.BigQueryInterface import BigQueryInterface
from interfaces.ClockInterface import ClockInterface
from interfaces.SinkInterface import SinkInterface
from schemas import BigQueryHistoryTableSchema # column list for the archive tables, used for table creation calls
from schemas.ContextCodec import ContextCodec
from schemas.Errors import ArchiveMismatch
from schemas.HistoryTypes import TimeSeriesRecord
from utils import Logger

MAX_REQUEST_BYTES = 10000000

# This class moves completed days of history records into BigQuery
class HistoryArchiver:
    """Archive every completed day of records from the active history sink, one BigQuery table per day."""

    def __init__(self, sink:SinkInterface, bigquery:BigQueryInterface, clock:ClockInterface):
        self._sink     = sink
        self._bigquery = bigquery
        self._clock    = clock

    def SyncAll(self, maxDaysToSync:int = 100) -> int:
        """Archive as many days as allowed, oldest first.

        Only days before the current UTC day are archived, since records can still
        arrive for the current one. Steps per day:
        1. Find the oldest day with unarchived records
        2. Create its {TABLE_BASENAME}_YYYYMMDD table if needed
        3. Send the day's records in requests under the 10 MB limit
        4. Verify the table grew by at least the day's record count
        5. Mark the day archived, then go back to step 1

        :param maxDaysToSync: The maximum number of days to archive in this run, defaults to 100
        :type maxDaysToSync: int, optional
        :return: The number of days archived.
        :rtype: int
        """
        today = datetime.fromtimestamp(self._clock.Now() / 1000, tz=timezone.utc).date()
        dayToArchive = self._sink.OldestUnarchivedDay(before=today)
        if dayToArchive is None:
            Logger.Log("No history records require archiving", logging.INFO)
            return 0

        numDaysSynced = 0
        while dayToArchive is not None and numDaysSynced < maxDaysToSync:
            Logger.Log(f"Oldest unarchived history day: {dayToArchive}")
            self.SyncDate(dayToArchive)
            numDaysSynced += 1
            dayToArchive = self._sink.OldestUnarchivedDay(before=today)
        return numDaysSynced

    def SyncDate(self, dayToArchive:date) -> None:
        """Archive one day and mark it done.

        :raises ArchiveMismatch: The table holds fewer new rows than records sent; the day stays unarchived.
        """
        fqTableId = self._bigquery.TableIdFor(dayToArchive.strftime('%Y%m%d'))
        expected = self._sink.CountOn(dayToArchive)
        Logger.Log(f"Begin archiving {expected} record(s) for {dayToArchive} to BigQuery: {fqTableId}")

        numRowsBefore = 0
        if self._bigquery.TableExists(fqTableId):
            numRowsBefore = self._bigquery.GetTableCount(fqTableId)
            Logger.Log(f"For: {dayToArchive} found {numRowsBefore} existing BigQuery rows.", logging.INFO)
        else:
            self._bigquery.CreateTable(fqTableId, BigQueryHistoryTableSchema.schema)

        numRequests = 0
        numExportedRows = 0
        rows    : List[Dict[str, Any]] = []
        row_ids : List[str] = []
        estimatedRequestSize = 0
        for record in self._sink.RecordsOn(dayToArchive):
            row = HistoryArchiver.AssembleRow(record)
            rowSize = len(ContextCodec.CanonicalBytes(row))
            # The size of a single insert request must stay below 10 MB
            if rows and rowSize + estimatedRequestSize >= MAX_REQUEST_BYTES:
                self._Send(fqTableId, rows, row_ids, numRequests)
                numRequests += 1
                rows, row_ids, estimatedRequestSize = [], [], 0
            rows.append(row)
            row_ids.append(record.DedupKey)
            estimatedRequestSize += rowSize
            numExportedRows += 1
        if rows:
            self._Send(fqTableId, rows, row_ids, numRequests)
            numRequests += 1

        Logger.Log(f"{numExportedRows} history record(s) sent to {fqTableId} in {numRequests} request(s)", logging.INFO)
        numRowsAfter = self._bigquery.GetTableCount(fqTableId)
        numRowsConfirmedInserted = numRowsAfter - numRowsBefore
        if numRowsConfirmedInserted < numExportedRows:
            Logger.Log(f"Expected {numExportedRows} new rows in {fqTableId}, found {numRowsConfirmedInserted}", logging.FATAL)
            raise ArchiveMismatch(f"{fqTableId}: {numRowsConfirmedInserted} of {numExportedRows} rows")

        self._sink.MarkArchived(dayToArchive)
        Logger.Log(f"Completed archiving history for: {dayToArchive}")

    @staticmethod
    def AssembleRow(record:TimeSeriesRecord) -> Dict[str, Any]:
        """One archive table row; JSON columns travel as JSON text."""
        return {
            "entity_id"   : record.entity.id,
            "entity_type" : record.entity.type,
            "attribute"   : record.attribute,
            "t"           : datetime.fromtimestamp(record.t / 1000, tz=timezone.utc).isoformat(),
            "value"       : ContextCodec.CanonicalBytes(record.value).decode("utf-8"),
            "metadata"    : ContextCodec.CanonicalBytes([m.ToWire() for m in record.metadata]).decode("utf-8"),
            "record_key"  : record.DedupKey,
        }

    def _Send(self, fqTableId:str, rows:List[Dict[str, Any]], row_ids:List[str], numPreviousRequests:int) -> Optional[List]:
        Logger.Log(f"Sending insert request number {numPreviousRequests + 1} with {len(rows)} row(s)", logging.DEBUG)
        errors = self._bigquery.InsertRows(fqTableId, rows, row_ids)
        if errors:
            raise ArchiveMismatch(f"{fqTableId}: {len(errors)} row(s) rejected in request {numPreviousRequests + 1}")
        return errors
