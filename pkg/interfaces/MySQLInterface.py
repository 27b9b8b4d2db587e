# import libraries
import logging
import traceback
from datetime import date, datetime, time, timedelta, timezone
from typing import Any, Dict, Iterator, List, Optional, Tuple

## pip module imports
import sshtunnel
from mysql.connector import connection

# import locals
from interfaces.SinkInterface import SinkInterface
from schemas.ContextCodec import ContextCodec
from schemas.ContextTypes import EntityRef, Metadatum
from schemas.Errors import StorageFull
from schemas.HistoryTypes import TimeSeriesRecord
from utils import Logger

_COLUMNS = ["entity_id", "entity_type", "attribute", "t", "value_json", "metadata_json", "record_key"]

## Dumb struct to collect data used to establish a connection to a SQL database.
class SQLLogin:
    def __init__(self, host: str, port: int, db_name: str, user: str, pword: str):
        self.host    = host
        self.port    = port
        self.db_name = db_name
        self.user    = user
        self.pword   = pword

## Dumb struct to collect data used to establish a connection over ssh.
class SSHLogin:
    def __init__(self, host: str, port: int, user: str, pword: str):
        self.host    = host
        self.port    = port
        self.user    = user
        self.pword   = pword

## @class SQL
#  Connection helpers for the relational history sink: direct, or through an ssh tunnel.
class SQL:

    @staticmethod
    def ConnectDB(db_settings:Dict[str,Any], ssh_settings:Optional[Dict[str,Any]]=None) -> Tuple[Optional[sshtunnel.SSHTunnelForwarder], Optional[connection.MySQLConnection]]:
        """
        Set up a connection to the history database, via an ssh tunnel when SSH_HOST, SSH_USER and SSH_PW are all set.

        :param db_settings: DB_HOST, DB_PORT, DB_NAME, DB_USER, DB_PW.
        :type db_settings: Dict[str,Any]
        :param ssh_settings: SSH_HOST, SSH_PORT, SSH_USER, SSH_PW, or None for a direct connection.
        :type ssh_settings: Optional[Dict[str,Any]], optional
        :return: The tunnel (None when direct) and the connection (None on failure).
        :rtype: Tuple[Optional[sshtunnel.SSHTunnelForwarder], Optional[connection.MySQLConnection]]
        """
        sql_login = SQLLogin(host=db_settings['DB_HOST'], port=int(db_settings['DB_PORT']), db_name=db_settings['DB_NAME'],
                             user=db_settings['DB_USER'], pword=db_settings['DB_PW'])
        Logger.Log("Preparing history database connection...", logging.INFO)
        if ssh_settings is not None and ssh_settings.get('SSH_HOST') and ssh_settings.get('SSH_USER') and ssh_settings.get('SSH_PW'):
            ssh_login = SSHLogin(host=ssh_settings['SSH_HOST'], port=int(ssh_settings.get('SSH_PORT', 22)),
                                 user=ssh_settings['SSH_USER'], pword=ssh_settings['SSH_PW'])
            tunnel, db_conn = SQL._connectToMySQLviaSSH(sql=sql_login, ssh=ssh_login)
        else:
            tunnel, db_conn = None, SQL._connectToMySQL(login=sql_login)
        Logger.Log("Done preparing history database connection.", logging.INFO)
        return (tunnel, db_conn)

    @staticmethod
    def _connectToMySQL(login:SQLLogin, port:Optional[int]=None) -> Optional[connection.MySQLConnection]:
        try:
            db_conn = connection.MySQLConnection(host     = login.host,    port    = port or login.port,
                                                 user     = login.user,    password= login.pword,
                                                 database = login.db_name, charset = 'utf8mb4')
            Logger.Log(f"Connected to SQL at {login.host}:{port or login.port}/{login.db_name}, {login.user}", logging.DEBUG)
            return db_conn
        except Exception as err:
            Logger.Log(f"Could not connect to the MySQL database at {login.host}:{port or login.port}/{login.db_name} as {login.user}: {type(err)} {err}", logging.ERROR)
            traceback.print_tb(err.__traceback__)
            return None

    @staticmethod
    def _connectToMySQLviaSSH(sql:SQLLogin, ssh:SSHLogin) -> Tuple[Optional[sshtunnel.SSHTunnelForwarder], Optional[connection.MySQLConnection]]:
        MAX_TRIES : int = 5
        tunnel    : Optional[sshtunnel.SSHTunnelForwarder] = None
        for tries in range(MAX_TRIES):
            if tries > 0:
                Logger.Log("Re-attempting to connect to SSH.", logging.INFO)
            try:
                tunnel = sshtunnel.SSHTunnelForwarder(
                    (ssh.host, ssh.port), ssh_username=ssh.user, ssh_password=ssh.pword,
                    remote_bind_address=(sql.host, sql.port), logger=Logger.std_logger
                )
                tunnel.start()
                Logger.Log(f"Connected to SSH at {ssh.host}:{ssh.port}, {ssh.user}", logging.DEBUG)
                break
            except Exception as err:
                Logger.Log(f"Could not connect to the SSH: {type(err)} {err}", logging.ERROR)
                tunnel = None
        if tunnel is None:
            return (None, None)
        db_conn = SQL._connectToMySQL(login=SQLLogin(host="127.0.0.1", port=sql.port, db_name=sql.db_name, user=sql.user, pword=sql.pword),
                                      port=tunnel.local_bind_port)
        if db_conn is None:
            tunnel.stop()
            return (None, None)
        return (tunnel, db_conn)

    @staticmethod
    def disconnectMySQL(db:Optional[connection.MySQLConnection], tunnel:Optional[sshtunnel.SSHTunnelForwarder]=None) -> None:
        if db is not None:
            db.close()
            Logger.Log("Closed MySQL database connection", logging.DEBUG)
        if tunnel is not None:
            tunnel.stop()
            Logger.Log("Stopped MySQL tunnel connection", logging.DEBUG)

def _day_bounds(day:date) -> Tuple[int, int]:
    start = datetime.combine(day, time.min, tzinfo=timezone.utc)
    return int(start.timestamp() * 1000), int((start + timedelta(days=1)).timestamp() * 1000)

class MySQLInterface(SinkInterface):
    """Relational history sink: one row per record, a unique record_key for dedup, a synced flag for archiving.

    INSERT IGNORE on the unique key makes re-delivered notifications a no-op; the
    commit happens before Append returns.
    """

    def __init__(self, config:Dict[str, Any]):
        """
        :param config: The MYSQL_CONFIG block (DB_*, SSH_CONFIG).
        """
        super().__init__(config=config)
        self._tunnel  : Optional[sshtunnel.SSHTunnelForwarder] = None
        self._db      : Optional[connection.MySQLConnection] = None
        self._table   : str = config.get("DB_TABLE", "history_records")

    # *** IMPLEMENT ABSTRACT FUNCTIONS ***

    def _open(self) -> bool:
        self._tunnel, self._db = SQL.ConnectDB(db_settings=self._config, ssh_settings=self._config.get("SSH_CONFIG"))
        if self._db is None:
            Logger.Log("Unable to open the MySQL history sink.", logging.ERROR)
            return False
        self._Execute(f"""CREATE TABLE IF NOT EXISTS {self._table} (
            id BIGINT AUTO_INCREMENT PRIMARY KEY,
            entity_id VARCHAR(255) NOT NULL,
            entity_type VARCHAR(255) NOT NULL,
            attribute VARCHAR(255) NOT NULL,
            t BIGINT NOT NULL,
            value_json JSON,
            metadata_json JSON NOT NULL,
            record_key CHAR(64) NOT NULL UNIQUE,
            synced TINYINT NOT NULL DEFAULT 0,
            INDEX series_idx (entity_id, entity_type, attribute, t)
        )""")
        return True

    def _close(self) -> bool:
        SQL.disconnectMySQL(self._db, self._tunnel)
        self._db, self._tunnel = None, None
        return True

    def Append(self, records:List[TimeSeriesRecord]) -> int:
        if self._db is None:
            raise StorageFull("MySQL history sink is not open")
        rows = [(r.entity.id, r.entity.type, r.attribute, r.t,
                 ContextCodec.CanonicalBytes(r.value).decode("utf-8"),
                 ContextCodec.CanonicalBytes([m.ToWire() for m in r.metadata]).decode("utf-8"),
                 r.DedupKey) for r in records]
        if not rows:
            return 0
        cursor = self._db.cursor()
        try:
            cursor.executemany(f"INSERT IGNORE INTO {self._table} ({', '.join(_COLUMNS)}) VALUES ({', '.join(['%s'] * len(_COLUMNS))})", rows)
            written = cursor.rowcount
            self._db.commit()
        finally:
            cursor.close()
        return max(written, 0)

    def Scan(self, entity_id:str, entity_type:str, attribute:str, t0:int, t1:int) -> List[TimeSeriesRecord]:
        rows = self._Query(f"SELECT {', '.join(_COLUMNS)} FROM {self._table} "
                           "WHERE entity_id = %s AND entity_type = %s AND attribute = %s AND t >= %s AND t < %s ORDER BY t, id",
                           (entity_id, entity_type, attribute, t0, t1))
        return [MySQLInterface._RowToRecord(row) for row in rows]

    def Count(self) -> int:
        return int(self._Query(f"SELECT COUNT(*) FROM {self._table}")[0][0])

    def OldestUnarchivedDay(self, before:date) -> Optional[date]:
        limit, _ = _day_bounds(before)
        rows = self._Query(f"SELECT MIN(t) FROM {self._table} WHERE synced = 0 AND t < %s", (limit,))
        if not rows or rows[0][0] is None:
            return None
        return datetime.fromtimestamp(int(rows[0][0]) / 1000, tz=timezone.utc).date()

    def RecordsOn(self, day:date) -> Iterator[TimeSeriesRecord]:
        start, end = _day_bounds(day)
        for row in self._Query(f"SELECT {', '.join(_COLUMNS)} FROM {self._table} WHERE t >= %s AND t < %s ORDER BY t, id", (start, end)):
            yield MySQLInterface._RowToRecord(row)

    def CountOn(self, day:date) -> int:
        start, end = _day_bounds(day)
        return int(self._Query(f"SELECT COUNT(*) FROM {self._table} WHERE t >= %s AND t < %s", (start, end))[0][0])

    def MarkArchived(self, day:date) -> None:
        start, end = _day_bounds(day)
        self._Execute(f"UPDATE {self._table} SET synced = 1 WHERE t >= %s AND t < %s", (start, end))

    # *** PRIVATE METHODS ***

    @staticmethod
    def _RowToRecord(row:Tuple) -> TimeSeriesRecord:
        entity_id, entity_type, attribute, t, value_json, metadata_json, _key = row
        metadata = [Metadatum.model_validate(m) for m in ContextCodec.ParseJson(metadata_json)]
        return TimeSeriesRecord(entity=EntityRef(id=entity_id, type=entity_type), attribute=attribute,
                                value=ContextCodec.ParseJson(value_json) if value_json is not None else None,
                                metadata=tuple(metadata), t=int(t))

    def _Query(self, query:str, params:Tuple = ()) -> List[Tuple]:
        if self._db is None:
            return []
        cursor = self._db.cursor()
        try:
            Logger.Log(f"Running query: {query}", logging.DEBUG)
            cursor.execute(query, params)
            return cursor.fetchall()
        finally:
            cursor.close()

    def _Execute(self, query:str, params:Tuple = ()) -> None:
        if self._db is None:
            return
        cursor = self._db.cursor()
        try:
            cursor.execute(query, params)
            self._db.commit()
        finally:
            cursor.close()
