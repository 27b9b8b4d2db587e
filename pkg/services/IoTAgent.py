## import standard libraries
import logging
from collections import deque
from typing import Any, Deque, Dict, List, Optional, Tuple

# import local files
from config.config import settings as default_settings
from interfaces.ClockInterface import ClockInterface
from interfaces.NetworkInterface import NetworkInterface
from schemas.AgentTypes import DeviceEntry, DeviceMapping, DeviceMessage
from schemas.ContextCodec import ContextCodec
from schemas.ContextTypes import TIMESTAMP_METADATUM, UNIT_METADATUM, ContextAttribute, ContextElement, DataModel, EntityRef, Metadatum
from schemas.DiscoveryTypes import AttributeDecl, Registration
from schemas.Errors import CtxMeshError, InvariantViolation, UnknownDevice, ValidationFailed
from services.Harmonizer import Harmonizer
from services.NotificationOutbox import DeliveryTicket, NotificationOutbox, STATUS_OK
from services.RegistrationKeeper import RegistrationKeeper
from services.WireService import Handler, WireRequest, WireService
from utils import Logger

_SCALARS = (str, int, float, bool)

class IoTAgent(WireService):
    """Southbound adapter: device messages in, harmonized context updates out.

    Messages wait in a bounded queue (oldest dropped on overflow) and are posted to
    the broker through an outbox keyed by device, which keeps each device's updates
    in order across retries. The head message waits in the queue while its device
    still has a delivery in flight, and QUEUE_LIMIT counts both, so a slow or
    unreachable broker backs up into the queue instead of the outbox.
    """

    # *** BUILT-INS ***
    def __init__(self, node_id:str, endpoint:str, network:NetworkInterface, clock:ClockInterface,
                 mapping:DeviceMapping, models:Dict[str, DataModel], broker:str,
                 discovery:Optional[str] = None, config:Optional[Dict[str, Any]] = None):
        super().__init__(node_id=node_id, endpoint=endpoint, network=network, clock=clock)
        mapping.CheckCanonical(models)
        self._config     = config or default_settings
        self._mapping    = mapping
        self._models     = models
        self.broker      = broker
        self._discovery  = discovery
        self._limit      = int(self._config.get("AGENT_CONFIG", {}).get("QUEUE_LIMIT", 10000))
        self._queue      : Deque[Tuple[DeviceMessage, int]] = deque()
        self._pumping    = False
        self._keepers    : List[RegistrationKeeper] = []
        self.outbox      = NotificationOutbox(node_id, network, clock, self._config.get("DELIVERY_CONFIG"), on_done=self._Delivered)
        self.received         : int = 0
        self.translated       : int = 0
        self.unmapped_fields  : int = 0
        self.dropped_overflow : int = 0
        self.failed           : int = 0
        self.delivered        : int = 0

    # *** PUBLIC STATICS ***

    @staticmethod
    def Translate(msg:DeviceMessage, mapping:DeviceMapping, models:Dict[str, DataModel],
                  arrival_ms:int) -> Tuple[ContextElement, List[str]]:
        """Map one device message onto its entity, then harmonize and validate it.

        :param msg: The inbound message.
        :type msg: DeviceMessage
        :param mapping: Device mapping document.
        :type mapping: DeviceMapping
        :param models: Data models by name.
        :type models: Dict[str, DataModel]
        :param arrival_ms: Arrival time, used when the message carries no timestamp.
        :type arrival_ms: int
        :raises UnknownDevice: msg.device is not in the mapping.
        :raises ValidationFailed: The harmonized element misses or mistypes a required attribute.
        :return: The element, and the message fields dropped as unmapped.
        :rtype: Tuple[ContextElement, List[str]]
        """
        entry = mapping.devices.get(msg.device)
        if entry is None:
            raise UnknownDevice(msg.device)
        ts = IoTAgent._Timestamp(msg, entry, arrival_ms)
        attributes : List[ContextAttribute] = []
        for field_name, fm in entry.fields.items():
            if field_name not in msg.fields:
                continue
            value = msg.fields[field_name]
            if value is not None and not isinstance(value, _SCALARS):
                raise InvariantViolation(field_name, "device fields carry scalars")
            metadata = [Metadatum(name=TIMESTAMP_METADATUM, type="Integer", value=ts)]
            if fm.unit is not None:
                metadata.append(Metadatum(name=UNIT_METADATUM, type="string", value=fm.unit))
            attributes.append(ContextAttribute(name=fm.attribute, type=fm.type, value=value, metadata=tuple(metadata)))
        present = {a.name for a in attributes}
        attributes.extend(a for a in entry.static_attributes if a.name not in present)
        dropped = sorted(f for f in msg.fields if f not in entry.fields and f != entry.timestamp_field)
        element = ContextElement(entity=EntityRef(id=entry.entity_id, type=entry.entity_type), attributes=tuple(attributes))
        if entry.model is not None:
            model = models.get(entry.model)
            if model is None:
                raise InvariantViolation("model", f"unknown data model {entry.model}")
            element = Harmonizer.Harmonize(element, model)
            report = Harmonizer.Validate(element, model)
            if not report.ok:
                raise ValidationFailed(list(report.missing), list(report.type_mismatches))
        return element, dropped

    # *** PUBLIC METHODS ***

    def Routes(self) -> Dict[str, Handler]:
        return {
            "/v1/ingest"     : self._HandleIngest,
            "/v1/statistics" : lambda req: self.Statistics(),
        }

    def Start(self) -> None:
        """Register every device's entity in discovery, with the broker as providing endpoint."""
        if self._discovery is None:
            return
        fed_config = self._config.get("FEDERATION_CONFIG", {})
        for device_id in sorted(self._mapping.devices):
            keeper = RegistrationKeeper(self, self._discovery, int(fed_config.get("REGISTRATION_EXPIRY_MS", 60000)),
                                        list(fed_config.get("PARENT_RETRY_MS", [1000, 5000, 30000])),
                                        lambda entry=self._mapping.devices[device_id]: self._DeviceRegistration(entry))
            keeper.Refresh()
            self._keepers.append(keeper)

    def Enqueue(self, msg:DeviceMessage) -> None:
        with self._lock:
            self.received += 1
            self._queue.append((msg, self._clock.Now()))
            if len(self._queue) + self.outbox.Pending() > self._limit:
                old, _arrival = self._queue.popleft()
                self.dropped_overflow += 1
                Logger.Log(f"{self.node_id}: queue full ({self._limit}), dropped oldest message from {old.device}", logging.WARNING)
            if not self._pumping:
                self._pumping = True
                self._clock.Schedule(0, self._Pump)

    def Pending(self) -> int:
        """Messages not yet handed to the outbox."""
        return len(self._queue)

    def Statistics(self) -> Dict[str, Any]:
        return {
            "received"        : self.received,
            "translated"      : self.translated,
            "unmappedFields"  : self.unmapped_fields,
            "droppedOverflow" : self.dropped_overflow,
            "failed"          : self.failed,
            "delivered"       : self.delivered,
            "queued"          : len(self._queue),
            "inFlight"        : self.outbox.Pending(),
        }

    def Shutdown(self) -> None:
        for keeper in self._keepers:
            keeper.Stop()

    # *** PRIVATE METHODS ***

    @staticmethod
    def _Timestamp(msg:DeviceMessage, entry:DeviceEntry, arrival_ms:int) -> int:
        if entry.timestamp_field is not None and entry.timestamp_field in msg.fields:
            raw = msg.fields[entry.timestamp_field]
            if isinstance(raw, bool) or not isinstance(raw, int):
                raise InvariantViolation(entry.timestamp_field, "timestamp field is not epoch milliseconds")
            return raw
        return msg.ts if msg.ts is not None else arrival_ms

    def _DeviceRegistration(self, entry:DeviceEntry) -> Registration:
        decls = [AttributeDecl(name=fm.attribute, type=fm.type) for fm in entry.fields.values()]
        decls.extend(AttributeDecl(name=a.name, type=a.type) for a in entry.static_attributes)
        return Registration(patterns=(EntityRef(id=entry.entity_id, type=entry.entity_type),), attributes=tuple(decls),
                            providing_endpoint=self.broker, thing_refs=entry.observes)

    def _Pump(self) -> None:
        while True:
            with self._lock:
                if not self._queue or self.outbox.Pending(self._queue[0][0].device) > 0:
                    self._pumping = False
                    return
                msg, arrival = self._queue.popleft()
            try:
                element, dropped = IoTAgent.Translate(msg, self._mapping, self._models, arrival)
            except CtxMeshError as err:
                self.failed += 1
                Logger.Log(f"{self.node_id}: message from {msg.device} rejected: {err}", logging.WARNING)
                continue
            self.translated += 1
            if dropped:
                self.unmapped_fields += len(dropped)
                Logger.Log(f"{self.node_id}: unmapped field(s) {dropped} from {msg.device}", logging.DEBUG)
            self.outbox.Deliver(msg.device, NetworkInterface.Join(self.broker, "/v1/updateContext"),
                                {"elements": [element.ToWire()]})

    def _Delivered(self, device:str, ticket:DeliveryTicket) -> None:
        self._Resume()
        if ticket.status != STATUS_OK:
            self.failed += 1
            return
        statuses = (ticket.response or {}).get("statuses", [])
        if any(s.get("status") != "ok" for s in statuses):
            self.failed += 1
            Logger.Log(f"{self.node_id}: broker rejected an update from {device}: {statuses}", logging.WARNING)
            return
        self.delivered += 1

    def _Resume(self) -> None:
        with self._lock:
            if self._queue and not self._pumping:
                self._pumping = True
                self._clock.Schedule(0, self._Pump)

    def _HandleIngest(self, req:WireRequest) -> Dict[str, Any]:
        messages = ContextCodec.ListFromWire(DeviceMessage, req.body.get("messages"), "messages")
        for msg in messages:
            self.Enqueue(msg)
        return {"accepted": len(messages)}
