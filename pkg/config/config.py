import os

# Default settings for every ctxmesh service.
# Copy config.py.template over this file to customize a deployment; the CLI
# flags of main.py override the values below for a single process.
settings = {
    "DEBUG_LEVEL" : "INFO",
    "LOG_FILE"    : False,
    "MODELS_DIR"  : os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "models"),
    "DELIVERY_CONFIG" : {
        "ATTEMPTS"   : 3,
        "BACKOFF_MS" : [100, 1000, 10000],
    },
    "BROKER_CONFIG" : {
        "SUBSCRIPTION_PREFIX" : "s",
    },
    "DISCOVERY_CONFIG" : {
        "DEFAULT_EXPIRY_MS" : 3600000,
    },
    "FEDERATION_CONFIG" : {
        "PROVIDER_TIMEOUT_MS"     : 2000,
        "REGISTRATION_EXPIRY_MS"  : 60000,
        "PARENT_RETRY_MS"         : [1000, 5000, 30000],
    },
    "AGENT_CONFIG" : {
        "QUEUE_LIMIT" : 10000,
    },
    "WORKER_CONFIG" : {
        "REGISTRATION_EXPIRY_MS" : 60000,
        "RETRY_MS"               : [1000, 5000, 30000],
    },
    "ORCHESTRATOR_CONFIG" : {
        "DEPLOY_RETRY_MS" : [1000, 5000, 30000],
    },
    "HISTORY_CONFIG" : {
        "SINK"              : "SEGMENT_LOG",
        "DATA_DIR"          : "./history-data",
        "SEGMENT_MAX_BYTES" : 8 * 1024 * 1024,
        "MAX_BYTES"         : 1024 * 1024 * 1024,
        "DEFAULT_LIMIT"     : 1000,
        "MYSQL_CONFIG" : {
            "DB_HOST"  : "127.0.0.1",
            "DB_PORT"  : 3306,
            "DB_NAME"  : "ctxmesh",
            "DB_TABLE" : "history_records",
            "DB_USER"  : "ctxmesh",
            "DB_PW"    : "",
            "SSH_CONFIG" : {
                "SSH_HOST" : "",
                "SSH_PORT" : 22,
                "SSH_USER" : "",
                "SSH_PW"   : "",
            },
        },
        "BIGQUERY_CONFIG" : {
            "PROJECT_ID"           : "",
            "DATASET_ID"           : "ctxmesh_history",
            "TABLE_BASENAME"       : "records",
            "CREDENTIALS_FILEPATH" : "./config/bigquery-credentials.json",
        },
    },
}

_env_level = os.environ.get("CTXMESH_LOG")
if _env_level:
    settings["DEBUG_LEVEL"] = _env_level.upper()
_env_models = os.environ.get("CTXMESH_MODELS_DIR")
if _env_models:
    settings["MODELS_DIR"] = _env_models
