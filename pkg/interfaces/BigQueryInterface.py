import logging
import os
from typing import Any, Dict, List, Optional

## pip module imports
from google.cloud import bigquery
from google.cloud.exceptions import NotFound

## Local module imports
from interfaces.Interface import Interface
from utils import Logger

class BigQueryInterface(Interface):
    """Long-term archive of history records in date-suffixed BigQuery tables."""

    def __init__(self, config:Dict[str, Any]):
        """
        :param config: The BIGQUERY_CONFIG block (PROJECT_ID, DATASET_ID, TABLE_BASENAME, CREDENTIALS_FILEPATH).
        """
        super().__init__(config=config)
        self._client : Optional[bigquery.Client] = None

    # *** IMPLEMENT ABSTRACT FUNCTIONS ***

    def _open(self) -> bool:
        if "GITHUB_ACTIONS" not in os.environ and self._config.get("CREDENTIALS_FILEPATH"):
            os.environ["GOOGLE_APPLICATION_CREDENTIALS"] = self._config["CREDENTIALS_FILEPATH"]
        self._client = bigquery.Client(project=self._config.get("PROJECT_ID") or None)
        return True

    def _close(self) -> bool:
        if self._client is not None:
            self._client.close()
            self._client = None
        return True

    # *** PUBLIC METHODS ***

    def TableIdFor(self, day_suffix:str) -> str:
        return f"{self._config['PROJECT_ID']}.{self._config['DATASET_ID']}.{self._config['TABLE_BASENAME']}_{day_suffix}"

    def TableExists(self, fqTableId: str) -> bool:
        try:
            self._Client().get_table(fqTableId)
            return True
        except NotFound:
            return False

    def DeleteTable(self, fqTableId: str) -> None:
        self._Client().delete_table(fqTableId)
        Logger.Log("Deleted table: " + fqTableId, logging.INFO)

    def CreateTable(self, fqTableId: str, schema: Any) -> None:
        bigquery_table = bigquery.Table(fqTableId, schema)
        self._Client().create_table(bigquery_table)
        Logger.Log("Created table: " + fqTableId, logging.INFO)

    def GetTableCount(self, fqTableId: str) -> int:
        query = "SELECT COUNT(*) mycount FROM `" + fqTableId + "`"
        job = self._Client().query(query)
        for row in job:
            return int(row["mycount"]) # row values can be accessed by index [0] or field name
        return 0

    def InsertRows(self, fqTableId: str, rows: List[Dict[str, Any]], row_ids: Optional[List[str]] = None) -> List[Dict[str, Any]]:
        """Stream one batch of JSON rows; row_ids let BigQuery drop rows resent after a failure.

        :return: Per-row insert errors; empty when the whole batch was accepted.
        """
        errors = self._Client().insert_rows_json(fqTableId, rows, row_ids=row_ids)
        if errors:
            Logger.Log(f"{len(errors)} row error(s) inserting into {fqTableId}: {errors[:3]}", logging.ERROR)
        return list(errors)

    # *** PRIVATE METHODS ***

    def _Client(self) -> bigquery.Client:
        if self._client is None:
            self.Open()
        return self._client
