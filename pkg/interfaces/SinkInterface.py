## import standard libraries
import abc
from datetime import date
from typing import Any, Dict, Iterator, List, Optional

# import local files
from interfaces.Interface import Interface
from schemas.HistoryTypes import TimeSeriesRecord

class SinkInterface(Interface):
    """Durable storage for time series records.

    Append returns only after the new records are durable, and drops records whose
    dedup key is already stored. Scan returns one series in nondecreasing t,
    records with equal t in arrival order.
    """

    def __init__(self, config:Dict[str, Any]):
        super().__init__(config=config)

    # *** ABSTRACTS ***

    @abc.abstractmethod
    def Append(self, records:List[TimeSeriesRecord]) -> int:
        """Persist records; returns how many were new.

        :raises StorageFull: The batch does not fit; nothing of it was written.
        """
        pass

    @abc.abstractmethod
    def Scan(self, entity_id:str, entity_type:str, attribute:str, t0:int, t1:int) -> List[TimeSeriesRecord]:
        pass

    @abc.abstractmethod
    def Count(self) -> int:
        pass

    # archive support

    @abc.abstractmethod
    def OldestUnarchivedDay(self, before:date) -> Optional[date]:
        pass

    @abc.abstractmethod
    def RecordsOn(self, day:date) -> Iterator[TimeSeriesRecord]:
        pass

    @abc.abstractmethod
    def CountOn(self, day:date) -> int:
        pass

    @abc.abstractmethod
    def MarkArchived(self, day:date) -> None:
        pass
