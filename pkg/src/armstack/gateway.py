"""Command gateway: the layered selection state machine the operator
drives, the UDP endpoints that carry wire messages to the controller,
and the status stream back to the console.

Layer flow (mirroring the four-screen interface): object selection →
action selection → (sub-action selection for "move") → control layer.
The emergency cross is available on every layer and always emits STOP.
"""

from __future__ import annotations

import json
import logging
import queue
import socket
import threading
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import wire
from .errors import InvalidSelectionError, UnknownObjectError, WireFormatError
from .mission import Command, MissionStatus

log = logging.getLogger(__name__)

LAYERS = ("object_selection", "action_selection", "subaction_selection", "control_layer")

PAUSE_ICON = "pause"
EMERGENCY_ICON = "emergency"


@dataclass(frozen=True)
class SelectionState:
    layer: str = "object_selection"
    object_id: Optional[str] = None
    action: Optional[str] = None
    sub_action: Optional[str] = None


def available_icons(state: SelectionState, objects: list[str]) -> tuple[str, ...]:
    """Icons the console shows on the current layer; the emergency cross
    is present everywhere."""
    if state.layer == "object_selection":
        return (*objects, PAUSE_ICON, EMERGENCY_ICON)
    if state.layer == "action_selection":
        return ("drink", "move", "back", PAUSE_ICON, EMERGENCY_ICON)
    if state.layer == "subaction_selection":
        return ("left", "right", EMERGENCY_ICON)
    return ("play", "stop", "home", "back", EMERGENCY_ICON)


def select(
    state: SelectionState, icon: str, objects: list[str]
) -> tuple[SelectionState, Optional[wire.WireMessage]]:
    """Apply one icon activation.  Returns the next state and the wire
    message to emit, if any.  Unknown icons raise, they never fall through
    to a silent default."""
    if icon == EMERGENCY_ICON:
        return state, wire.stop()

    if state.layer == "object_selection":
        if icon == PAUSE_ICON:
            return state, wire.WireMessage("PAUSE")
        if icon in objects:
            return replace(state, layer="action_selection", object_id=icon), None

    elif state.layer == "action_selection":
        if icon == PAUSE_ICON:
            return state, wire.WireMessage("PAUSE")
        if icon == "back":
            return SelectionState(), None
        if icon == "drink":
            next_state = replace(state, layer="control_layer", action="drink", sub_action="none")
            return next_state, wire.command_message(state.object_id, "drink")
        if icon == "move":
            return replace(state, layer="subaction_selection", action="move"), None

    elif state.layer == "subaction_selection":
        if icon in ("left", "right"):
            next_state = replace(state, layer="control_layer", sub_action=icon)
            return next_state, wire.command_message(state.object_id, "move", icon)

    elif state.layer == "control_layer":
        if icon == "play":
            return state, wire.WireMessage("RESUME")
        if icon == "stop":
            return state, wire.stop()
        if icon == "home":
            return SelectionState(), wire.WireMessage("HOME")
        if icon == "back":
            if state.action == "move":
                return replace(state, layer="subaction_selection", sub_action=None), None
            return replace(state, layer="action_selection", action=None, sub_action=None), None

    raise InvalidSelectionError(f"icon {icon!r} is not available on layer {state.layer}")


# ---------------------------------------------------------------------------
# Status stream


@dataclass
class Subscription:
    queue: "queue.Queue[Optional[str]]"
    alive: bool = True


class StatusHub:
    """Fan-out of status events to console subscribers.

    Publishing never blocks the control loop: a subscriber whose queue is
    full is disconnected (its queue gets a None sentinel) instead of
    back-pressuring the publisher.
    """

    def __init__(self, maxsize: int = 256):
        self._maxsize = maxsize
        self._subs: list[Subscription] = []
        self._lock = threading.Lock()
        self.dropped_subscribers = 0

    def subscribe(self) -> Subscription:
        sub = Subscription(queue.Queue(maxsize=self._maxsize))
        with self._lock:
            self._subs.append(sub)
        return sub

    def unsubscribe(self, sub: Subscription):
        with self._lock:
            sub.alive = False
            if sub in self._subs:
                self._subs.remove(sub)

    def publish(self, event: dict):
        text = json.dumps(event, sort_keys=True)
        with self._lock:
            for sub in list(self._subs):
                try:
                    sub.queue.put_nowait(text)
                except queue.Full:
                    sub.alive = False
                    self._subs.remove(sub)
                    self.dropped_subscribers += 1
                    try:
                        sub.queue.get_nowait()  # make room for the sentinel
                        sub.queue.put_nowait(None)
                    except (queue.Empty, queue.Full):
                        pass

    @property
    def subscriber_count(self) -> int:
        with self._lock:
            return len(self._subs)


def status_event(status: MissionStatus, clock: float, error_norm: float, active_tasks: list[str]) -> dict:
    return {
        "type": "status",
        "state": status.state,
        "phase": status.phase_index,
        "fault": status.fault,
        "clock": round(float(clock), 6),
        "error_norm": float(error_norm),
        "active_tasks": sorted(active_tasks),
    }


# ---------------------------------------------------------------------------
# UDP endpoints


class UdpCommandSender:
    def __init__(self, host: str, port: int):
        self.address = (host, port)
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)

    def send(self, message: wire.WireMessage):
        self._sock.sendto(wire.render_bytes(message), self.address)

    def close(self):
        self._sock.close()


class UdpCommandReceiver:
    """Listens for datagrams and hands parsed messages to a callback on a
    background thread.  Malformed datagrams are counted and dropped; they
    can never take the loop down."""

    def __init__(self, port: int, on_message: Callable[[wire.WireMessage], None], host: str = "127.0.0.1"):
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self._sock.bind((host, port))
        self._sock.settimeout(0.2)
        self.port = self._sock.getsockname()[1]
        self._on_message = on_message
        self.dropped = 0
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._run, name="udp-commands", daemon=True)

    def start(self) -> "UdpCommandReceiver":
        self._thread.start()
        return self

    def _run(self):
        while not self._stop.is_set():
            try:
                data, _ = self._sock.recvfrom(2048)
            except socket.timeout:
                continue
            except OSError:
                return
            try:
                message = wire.parse(data)
            except WireFormatError as exc:
                self.dropped += 1
                log.debug("dropped malformed datagram: %s", exc)
                continue
            try:
                self._on_message(message)
            except Exception:
                log.exception("command handler failed; message ignored")

    def stop(self):
        self._stop.set()
        self._thread.join(timeout=2.0)
        self._sock.close()


# ---------------------------------------------------------------------------
# Controller service (listen mode)


class ControllerService:
    """Owns the world and runs one mission at a time from gateway commands.

    Wire messages arrive on a receiver thread; CMD starts a mission when
    idle and is rejected while one runs.  STOP/PAUSE/RESUME are routed
    into the running mission's inbox; STOP while idle is a no-op, so
    duplicate stops are idempotent.
    """

    def __init__(self, chain, layout, params, hub: Optional[StatusHub] = None,
                 seed: int = 0, pace: Optional[float] = None, status_every: int = 10):
        from .world import initial_world

        self.chain = chain
        self.params = params
        self.hub = hub or StatusHub()
        self.world = initial_world(layout)
        self.pace = pace
        self.status_every = max(1, status_every)
        self._rng = np.random.default_rng(seed)
        self._commands: "queue.Queue[wire.WireMessage]" = queue.Queue()
        self._mission_inbox: Optional[queue.SimpleQueue] = None
        self._running = False
        self._lock = threading.Lock()
        self.rejected_commands = 0
        self.results = []

    # -- receiver-thread side

    def handle_message(self, message: wire.WireMessage):
        with self._lock:
            running = self._running
            inbox = self._mission_inbox
        if message.type == "CMD":
            if running:
                self.rejected_commands += 1
                self.hub.publish(
                    {"type": "rejected", "reason": "mission already running",
                     "command": wire.render(message).strip()}
                )
            else:
                self._commands.put(message)
        elif message.type in ("STOP", "PAUSE", "RESUME"):
            if inbox is not None:
                inbox.put(message.type.lower())
        elif message.type == "HOME":
            self.hub.publish({"type": "home"})

    # -- control-loop side

    def run_once(self, command: Command) -> "MissionStatus":
        from .mission import compile_mission, run_mission
        from .world import SimConfig, perceive

        perception = perceive(self.world, SimConfig(noise=self.params.noise), self._rng)
        try:
            script = compile_mission(command, self.world, perception, self.params)
        except (UnknownObjectError, ValueError) as exc:
            self.rejected_commands += 1
            self.hub.publish({"type": "rejected", "reason": str(exc)})
            return MissionStatus(state="failed", fault=str(exc))

        inbox: queue.SimpleQueue = queue.SimpleQueue()
        with self._lock:
            self._mission_inbox = inbox
            self._running = True
        tick_counter = {"n": 0}
        last_state = {"state": None}

        def observer(status, world, diag):
            tick_counter["n"] += 1
            changed = status.state != last_state["state"]
            if changed or tick_counter["n"] % self.status_every == 0:
                last_state["state"] = status.state
                error_norm = 0.0
                active = []
                if diag is not None:
                    error_norm = float(np.linalg.norm(diag.error.get("goal_pose", np.zeros(1))))
                    active = list(diag.sides)
                self.hub.publish(status_event(status, world.clock, error_norm, active))
            if self.pace:
                time.sleep(self.pace)

        try:
            result = run_mission(
                script, self.world, self.chain, self.params,
                inbox=inbox, rng=self._rng, observer=observer,
            )
        finally:
            with self._lock:
                self._mission_inbox = None
                self._running = False
        self.world = result.world
        self.results.append((command, result))
        self.hub.publish(
            status_event(result.status, result.world.clock,
                         result.final_position_error, [])
        )
        return result.status

    def serve(self, shutdown: threading.Event):
        """Block until shutdown, running queued commands as they arrive."""
        while not shutdown.is_set():
            try:
                message = self._commands.get(timeout=0.1)
            except queue.Empty:
                continue
            self.run_once(message.command)

    @property
    def object_ids(self) -> list[str]:
        return sorted(self.world.objects)
