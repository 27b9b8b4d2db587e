__all__ = [
    "ContextBroker",
    "DiscoveryRegistry",
    "FederationBroker",
    "Harmonizer",
    "HistoryArchiver",
    "HistoryService",
    "IoTAgent",
    "NotificationOutbox",
    "NotificationRecorder",
    "Operators",
    "Orchestrator",
    "RegistrationKeeper",
    "ScenarioRunner",
    "ScopeMatcher",
    "ServiceServer",
    "StreamBinder",
    "SubscriptionEngine",
    "ThrottleGate",
    "WireService",
    "WorkerDaemon",
]
