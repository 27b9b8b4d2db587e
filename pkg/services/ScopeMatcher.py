## import standard libraries
from typing import Any, List, Optional

## pip module imports
from shapely.geometry import Point, box

# import local files
from schemas.ContextCodec import ContextCodec
from schemas.ContextTypes import LOCATION_ATTRIBUTE, ContextElement, Scope

def _render(value:Any) -> str:
    if isinstance(value, str):
        return value
    return ContextCodec.CanonicalBytes(value).decode("utf-8")

def _as_point(value:Any) -> Optional[Point]:
    if not isinstance(value, list) or len(value) != 2:
        return None
    if any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value):
        return None
    lat, lon = value
    # shapely works in (x, y) = (lon, lat)
    return Point(lon, lat)

def _as_box(s:Scope):
    return box(s.min_lon, s.min_lat, s.max_lon, s.max_lat)

class ScopeMatcher:
    """Scope tests over elements, registrations and worker coverage."""

    @staticmethod
    def ElementMatches(s:Scope, e:ContextElement) -> bool:
        if s.kind == "geo_box":
            attr = e.Attribute(LOCATION_ATTRIBUTE)
            point = _as_point(attr.value) if attr is not None else None
            return point is not None and _as_box(s).covers(point)
        attr = e.Attribute(s.target)
        if attr is not None:
            return s.substring in _render(attr.value)
        for attr in e.attributes:
            md = attr.FindMetadatum(s.target)
            if md is not None and s.substring in _render(md.value):
                return True
        return False

    @staticmethod
    def ElementMatchesAll(scopes:List[Scope], e:ContextElement) -> bool:
        return all(ScopeMatcher.ElementMatches(s, e) for s in scopes)

    @staticmethod
    def MetadataSatisfies(query:Scope, scope_meta:List[Scope]) -> bool:
        """Whether a provider's scope metadata admits a query scope.

        A provider that declares nothing of the query's kind (or, for string
        matches, nothing for the same target) is unconstrained and admits it.
        """
        if query.kind == "geo_box":
            boxes = [_as_box(m) for m in scope_meta if m.kind == "geo_box"]
            return not boxes or any(b.intersects(_as_box(query)) for b in boxes)
        values = [m.substring for m in scope_meta if m.kind == "string_match" and m.target == query.target]
        return not values or any(query.substring in v for v in values)

    @staticmethod
    def Covers(outer:Scope, inner:Scope) -> bool:
        """Whether a served scope covers a required scope (box containment, or equal string match)."""
        if outer.kind != inner.kind:
            return False
        if outer.kind == "geo_box":
            return _as_box(outer).covers(_as_box(inner))
        return outer.target == inner.target and outer.substring == inner.substring
