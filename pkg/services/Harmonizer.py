## import standard libraries
import logging
from pathlib import Path
from typing import Dict, List, Optional

# import local files
from schemas.ContextCodec import ContextCodec
from schemas.ContextTypes import ContextAttribute, ContextElement, DataModel, ValidationReport
from schemas.Errors import InvariantViolation, SynonymCollision
from utils import Logger

class Harmonizer:
    """Data-model harmonization: synonym renaming and required-attribute validation."""

    @staticmethod
    def Harmonize(e:ContextElement, m:DataModel) -> ContextElement:
        """Rename every attribute whose name is a synonym key of the model to its canonical name.

        Values and metadata are carried over untouched. Since no canonical name is
        itself a synonym key, applying this twice changes nothing the second time.

        :param e: The element to harmonize.
        :type e: ContextElement
        :param m: The data model holding the synonym table.
        :type m: DataModel
        :raises SynonymCollision: Renaming would leave two attributes with one name.
        :return: The harmonized element (the same object when nothing was renamed).
        :rtype: ContextElement
        """
        if not any(attr.name in m.synonyms for attr in e.attributes):
            return e
        renamed : List[ContextAttribute] = []
        seen    : Dict[str, str] = {}
        for attr in e.attributes:
            name = m.synonyms.get(attr.name, attr.name)
            if name in seen:
                raise SynonymCollision(f"'{attr.name}' and '{seen[name]}' both map to '{name}' on {e.entity.id}")
            seen[name] = attr.name
            renamed.append(attr if name == attr.name else attr.model_copy(update={"name": name}))
        return ContextElement(entity=e.entity, attributes=tuple(renamed))

    @staticmethod
    def Validate(e:ContextElement, m:DataModel) -> ValidationReport:
        missing    : List[str] = []
        mismatches : List[str] = []
        for req in m.required_attributes:
            attr = e.Attribute(req.name)
            if attr is None:
                missing.append(req.name)
            elif attr.type != req.type:
                mismatches.append(req.name)
        return ValidationReport(missing=tuple(missing), type_mismatches=tuple(mismatches))

    @staticmethod
    def LoadModels(models_dir:Optional[str]) -> Dict[str, DataModel]:
        """Load every *.json data model document in a directory, keyed by model name.

        :param models_dir: Directory to read; None or a missing directory yields no models.
        :type models_dir: Optional[str]
        :raises InvariantViolation: A document breaks the model invariants or names a model twice.
        :return: Models by name.
        :rtype: Dict[str, DataModel]
        """
        models : Dict[str, DataModel] = {}
        if models_dir is None or not Path(models_dir).is_dir():
            Logger.Log(f"No data model directory at {models_dir}, running without models.", logging.WARNING)
            return models
        for path in sorted(Path(models_dir).glob("*.json")):
            model = ContextCodec.FromWire(DataModel, ContextCodec.ParseJson(path.read_bytes()))
            if model.name in models:
                raise InvariantViolation("name", f"model {model.name} defined twice ({path.name})")
            models[model.name] = model
            Logger.Log(f"Loaded data model {model.name} from {path.name}", logging.DEBUG)
        return models
