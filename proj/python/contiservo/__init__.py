"""Orientation-adaptive visual servoing simulator for continuum manipulators."""

import json

from ._contiservo import *  # noqa: F401,F403
from ._contiservo import _TeleopSession

__version__ = "0.1.0"


class TeleopSession:
    """Teleoperation session speaking the WebSocket JSON protocol, minus the socket."""

    def __init__(self, scenario):
        self._s = _TeleopSession(scenario)

    def send(self, message, from_driver=True):
        """Apply a message (dict or JSON text). Returns the error reply as a dict, or None."""
        text = message if isinstance(message, str) else json.dumps(message)
        reply = self._s.handle_message(text, from_driver)
        return None if reply is None else json.loads(reply)

    def tick(self):
        return json.loads(self._s.tick())

    def hello(self, role="driver"):
        return json.loads(self._s.hello(role))

    def state(self):
        return json.loads(self._s.state())
