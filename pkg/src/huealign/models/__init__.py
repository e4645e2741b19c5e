from .host import HostModel, build_host, load_host
from .schedule import DDIMSchedule
from .text import StubTextEncoder, TokenNotFoundError

__all__ = [
    "HostModel",
    "build_host",
    "load_host",
    "DDIMSchedule",
    "StubTextEncoder",
    "TokenNotFoundError",
]
