"""Datagram command grammar between the operator console and the
controller.

One message per datagram, a single ASCII line:

    <version> <msg_type> [<object_id> <action> <sub_action>]\\n

``msg_type`` is one of CMD, STOP, PAUSE, RESUME, HOME; only CMD carries a
payload.  The grammar is strict so that parse(render(m)) == m for every
valid message and anything else is dropped by the receiver.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

from .errors import WireFormatError
from .mission import Command

VERSION = "1"
MESSAGE_TYPES = ("CMD", "STOP", "PAUSE", "RESUME", "HOME")
ACTIONS = ("move", "drink")
SUB_ACTIONS = ("left", "right", "none")
MAX_DATAGRAM_BYTES = 512

_TOKEN = re.compile(r"[A-Za-z0-9_\-]+\Z")


@dataclass(frozen=True)
class WireMessage:
    type: str
    command: Optional[Command] = None

    def __post_init__(self):
        if self.type not in MESSAGE_TYPES:
            raise WireFormatError(f"unknown message type {self.type!r}")
        if self.type == "CMD":
            if self.command is None:
                raise WireFormatError("CMD needs a command payload")
            _check_command(self.command)
        elif self.command is not None:
            raise WireFormatError(f"{self.type} takes no payload")


def _check_command(command: Command):
    if not _TOKEN.match(command.object_id):
        raise WireFormatError(f"bad object id {command.object_id!r}")
    if command.action not in ACTIONS:
        raise WireFormatError(f"bad action {command.action!r}")
    if command.sub_action not in SUB_ACTIONS:
        raise WireFormatError(f"bad sub-action {command.sub_action!r}")


def stop() -> WireMessage:
    return WireMessage("STOP")


def command_message(object_id: str, action: str, sub_action: str = "none") -> WireMessage:
    return WireMessage("CMD", Command(object_id, action, sub_action))


def render(message: WireMessage) -> str:
    if message.type == "CMD":
        c = message.command
        return f"{VERSION} CMD {c.object_id} {c.action} {c.sub_action}\n"
    return f"{VERSION} {message.type}\n"


def render_bytes(message: WireMessage) -> bytes:
    data = render(message).encode("ascii")
    if len(data) > MAX_DATAGRAM_BYTES:
        raise WireFormatError(f"rendered message is {len(data)} bytes (max {MAX_DATAGRAM_BYTES})")
    return data


def parse(datagram) -> WireMessage:
    """Strict parse of one datagram; raises WireFormatError on anything
    that is not exactly one well-formed line."""
    if isinstance(datagram, bytes):
        if len(datagram) > MAX_DATAGRAM_BYTES:
            raise WireFormatError("datagram too long")
        try:
            text = datagram.decode("ascii")
        except UnicodeDecodeError as exc:
            raise WireFormatError(f"not ASCII: {exc}") from None
    else:
        text = datagram
    if not text.endswith("\n"):
        raise WireFormatError("missing trailing newline")
    body = text[:-1]
    if "\n" in body or "\r" in body:
        raise WireFormatError("more than one line")
    fields = body.split(" ")
    if "" in fields:
        raise WireFormatError("empty field (doubled or trailing space)")
    if len(fields) < 2:
        raise WireFormatError("need at least version and message type")
    version, msg_type, *payload = fields
    if version != VERSION:
        raise WireFormatError(f"unsupported version {version!r}")
    if msg_type not in MESSAGE_TYPES:
        raise WireFormatError(f"unknown message type {msg_type!r}")
    if msg_type == "CMD":
        if len(payload) != 3:
            raise WireFormatError(f"CMD payload needs 3 fields, got {len(payload)}")
        return WireMessage("CMD", Command(payload[0], payload[1], payload[2]))
    if payload:
        raise WireFormatError(f"{msg_type} takes no payload")
    return WireMessage(msg_type)
