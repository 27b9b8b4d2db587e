__all__ = [
    "AgentTypes",
    "BigQueryHistoryTableSchema",
    "BrokerTypes",
    "ContextCodec",
    "ContextTypes",
    "DiscoveryTypes",
    "Errors",
    "FederationTypes",
    "HistoryTypes",
    "OrchestratorTypes",
    "ScenarioTypes",
]
