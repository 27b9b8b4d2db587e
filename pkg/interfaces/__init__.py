__all__ = [
    "BigQueryInterface",
    "ClockInterface",
    "HTTPNetwork",
    "Interface",
    "MySQLInterface",
    "NetworkInterface",
    "ReplayTransport",
    "SegmentLogSink",
    "SimNetwork",
    "SinkInterface",
    "TCPTransport",
    "TransportInterface",
]
