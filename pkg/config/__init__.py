__all__ = [
	"config",
]

from . import config