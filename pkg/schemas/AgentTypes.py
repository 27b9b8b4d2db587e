## import standard libraries
from typing import Any, Dict, Optional, Tuple

## pip module imports
from pydantic import Field, field_validator, model_validator

# import local files
from schemas.ContextTypes import ContextAttribute, DataModel, EntityRef, WireModel
from schemas.Errors import InvariantViolation

class FieldMapping(WireModel):
    attribute : str
    type      : str
    unit      : Optional[str] = None

class DeviceEntry(WireModel):
    """How one device's messages become one entity.

    timestamp_field names a message field carrying the measurement time; without
    it the message's ts is used, and without that the arrival time.
    """
    entity_id         : str
    entity_type       : str
    model             : Optional[str] = None
    fields            : Dict[str, FieldMapping] = Field(default_factory=dict)
    timestamp_field   : Optional[str] = None
    static_attributes : Tuple[ContextAttribute, ...] = ()
    observes          : Tuple[EntityRef, ...] = ()

    @model_validator(mode="after")
    def check_invariants(self) -> "DeviceEntry":
        # a concrete entity ref validates id and type
        EntityRef(id=self.entity_id, type=self.entity_type)
        return self

class DeviceMapping(WireModel):
    devices : Dict[str, DeviceEntry] = Field(default_factory=dict)

    @field_validator("devices")
    @classmethod
    def check_devices(cls, v:Dict[str, DeviceEntry]) -> Dict[str, DeviceEntry]:
        if any(not device_id for device_id in v):
            raise InvariantViolation("devices", "empty device id")
        return v

    def CheckCanonical(self, models:Dict[str, DataModel]) -> None:
        """Every mapped attribute name must be canonical under its device's data model."""
        for device_id, entry in self.devices.items():
            if entry.model is None:
                continue
            model = models.get(entry.model)
            if model is None:
                raise InvariantViolation("model", f"device {device_id} names unknown model {entry.model}")
            for f in entry.fields.values():
                if f.attribute in model.synonyms:
                    raise InvariantViolation("fields", f"device {device_id} maps to synonym '{f.attribute}' of {model.name}")

class DeviceMessage(WireModel):
    device : str
    ts     : Optional[int] = None
    fields : Dict[str, Any] = Field(default_factory=dict)

    @field_validator("device")
    @classmethod
    def check_device(cls, v:str) -> str:
        if not v:
            raise InvariantViolation("device", "empty")
        return v
