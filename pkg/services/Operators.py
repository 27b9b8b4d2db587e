## import standard libraries
import abc
from collections import deque
from typing import Any, Callable, Deque, Dict, List, Optional, Tuple, Type

# import local files
from schemas.ContextTypes import TIMESTAMP_METADATUM, ContextAttribute, ContextElement, EntityRef, Metadatum
from schemas.Errors import InvariantViolation, UnknownOperator

class Operator(abc.ABC):
    """Streaming analytics step: each input element yields zero or more output elements.

    Outputs depend only on the sequence of (element, t) pairs fed in, where t is
    the attribute timestamp or the arrival time; an operator never reads a clock.
    """

    def __init__(self, instance_id:str, output_type:str, params:Dict[str, Any]):
        self.instance_id = instance_id
        self.output_type = output_type
        self.params      = dict(params)

    @abc.abstractmethod
    def OnElement(self, element:ContextElement, t:int) -> List[ContextElement]:
        pass

    def _Param(self, name:str, default:Any = None) -> Any:
        if name in self.params:
            return self.params[name]
        if default is None:
            raise InvariantViolation(f"params.{name}", f"required by {type(self).__name__}")
        return default

_REGISTRY : Dict[str, Type[Operator]] = {}

def operator(name:str) -> Callable[[Type[Operator]], Type[Operator]]:
    """Class decorator adding an operator to the registry under name."""
    def register(cls:Type[Operator]) -> Type[Operator]:
        _REGISTRY[name] = cls
        return cls
    return register

def Registered() -> List[str]:
    return sorted(_REGISTRY)

def IsRegistered(name:str) -> bool:
    return name in _REGISTRY

def Build(name:str, instance_id:str, output_type:str, params:Dict[str, Any]) -> Operator:
    cls = _REGISTRY.get(name)
    if cls is None:
        raise UnknownOperator(name)
    return cls(instance_id=instance_id, output_type=output_type, params=params)

def _stamped(name:str, type_:str, value:Any, t:int) -> ContextAttribute:
    return ContextAttribute(name=name, type=type_, value=value,
                            metadata=(Metadatum(name=TIMESTAMP_METADATUM, type="Integer", value=t),))

def _number(element:ContextElement, attribute:str) -> Optional[float]:
    attr = element.Attribute(attribute)
    if attr is None or isinstance(attr.value, bool) or not isinstance(attr.value, (int, float)):
        return None
    return attr.value

@operator("threshold_detect")
class ThresholdDetect(Operator):
    """Alarm once per upward crossing of `threshold` by `attribute`; re-armed when the value drops below.

    params: attribute, threshold
    """

    def __init__(self, instance_id:str, output_type:str, params:Dict[str, Any]):
        super().__init__(instance_id, output_type, params)
        self._attribute = self._Param("attribute")
        self._threshold = float(self._Param("threshold"))
        self._armed     : Dict[Tuple[str, str], bool] = {}
        self._crossings : Dict[Tuple[str, str], int] = {}

    def OnElement(self, element:ContextElement, t:int) -> List[ContextElement]:
        value = _number(element, self._attribute)
        if value is None:
            return []
        key = element.Key
        if value < self._threshold:
            self._armed[key] = True
            return []
        if not self._armed.get(key, True):
            return []
        self._armed[key] = False
        self._crossings[key] = self._crossings.get(key, 0) + 1
        alarm = ContextElement(entity=EntityRef(id=f"{element.entity.id}:alarm", type=self.output_type), attributes=(
            _stamped(self._attribute, "Number", value, t),
            _stamped("source", "Text", element.entity.id, t),
            _stamped("crossings", "Integer", self._crossings[key], t),
        ))
        return [alarm]

@operator("window_avg")
class WindowAvg(Operator):
    """Rolling mean of `attribute` per source entity over the last `window` ms (t - window, t].

    params: attribute, window
    """

    def __init__(self, instance_id:str, output_type:str, params:Dict[str, Any]):
        super().__init__(instance_id, output_type, params)
        self._attribute = self._Param("attribute")
        self._window    = int(self._Param("window"))
        if self._window <= 0:
            raise InvariantViolation("params.window", "must be positive")
        self._samples   : Dict[Tuple[str, str], Deque[Tuple[int, float]]] = {}

    def OnElement(self, element:ContextElement, t:int) -> List[ContextElement]:
        value = _number(element, self._attribute)
        if value is None:
            return []
        samples = self._samples.setdefault(element.Key, deque())
        samples.append((t, value))
        newest = max(s[0] for s in samples)
        while samples and samples[0][0] <= newest - self._window:
            samples.popleft()
        mean = sum(v for _t, v in samples) / len(samples)
        return [ContextElement(entity=EntityRef(id=f"{element.entity.id}:avg", type=self.output_type), attributes=(
            _stamped(self._attribute, "Number", mean, t),
            _stamped("source", "Text", element.entity.id, t),
            _stamped("samples", "Integer", len(samples), t),
        ))]

@operator("setpoint")
class Setpoint(Operator):
    """Fill target per water buffer: clamp(capacity * (1 - forecast_ratio), 0, capacity).

    The forecast ratio is clamp(forecast value / scale, 0, 1). Buffers come from
    params["buffers"] ({id: capacity}) and from any input element of bufferType
    carrying the capacity attribute.

    params: forecastAttribute, scale (default 1), buffers, bufferType, capacityAttribute (default "capacity")
    """

    def __init__(self, instance_id:str, output_type:str, params:Dict[str, Any]):
        super().__init__(instance_id, output_type, params)
        self._forecast_attr = self._Param("forecastAttribute")
        self._scale         = float(self._Param("scale", 1))
        if self._scale <= 0:
            raise InvariantViolation("params.scale", "must be positive")
        self._buffer_type   = self.params.get("bufferType")
        self._capacity_attr = self._Param("capacityAttribute", "capacity")
        self._capacities    : Dict[str, float] = {str(k): float(v) for k, v in self.params.get("buffers", {}).items()}
        self._ratio         : Optional[float] = None

    @staticmethod
    def Target(capacity:float, forecast_ratio:float) -> float:
        return min(max(capacity * (1 - forecast_ratio), 0.0), capacity)

    def OnElement(self, element:ContextElement, t:int) -> List[ContextElement]:
        if self._buffer_type is not None and element.entity.type == self._buffer_type:
            capacity = _number(element, self._capacity_attr)
            if capacity is None:
                return []
            self._capacities[element.entity.id] = float(capacity)
            if self._ratio is None:
                return []
            return [self._Emit(element.entity.id, t)]
        value = _number(element, self._forecast_attr)
        if value is None:
            return []
        self._ratio = min(max(value / self._scale, 0.0), 1.0)
        return [self._Emit(buffer_id, t) for buffer_id in sorted(self._capacities)]

    def _Emit(self, buffer_id:str, t:int) -> ContextElement:
        capacity = self._capacities[buffer_id]
        return ContextElement(entity=EntityRef(id=f"{buffer_id}:setpoint", type=self.output_type), attributes=(
            _stamped("target", "Number", Setpoint.Target(capacity, self._ratio), t),
            _stamped("buffer", "Text", buffer_id, t),
            _stamped("forecastRatio", "Number", self._ratio, t),
        ))
