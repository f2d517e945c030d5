"""Console-facing endpoint: one bidirectional WebSocket per operator
carrying selection inputs inbound and status events outbound.

Each connection owns its own selection state machine; accepted selections
that produce a wire message are sent to the controller over UDP, so the
console exercises the same wire path a remote GUI would.
"""

from __future__ import annotations

import asyncio
import json
import logging
import queue
import threading
from typing import Callable, Optional

from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from . import wire
from .errors import InvalidSelectionError
from .gateway import SelectionState, StatusHub, available_icons, select

log = logging.getLogger(__name__)


def create_console_app(
    hub: StatusHub,
    objects: Callable[[], list[str]],
    send_message: Callable[[wire.WireMessage], None],
) -> FastAPI:
    app = FastAPI(title="armstack console gateway")

    @app.get("/world")
    def world_summary():
        return {"objects": objects()}

    @app.websocket("/ws")
    async def console_socket(websocket: WebSocket):
        await websocket.accept()
        state = SelectionState()
        sub = hub.subscribe()
        bridge: "asyncio.Queue[Optional[str]]" = asyncio.Queue()
        loop = asyncio.get_running_loop()
        stopping = threading.Event()

        def forward_status():
            while not stopping.is_set():
                try:
                    item = sub.queue.get(timeout=0.2)
                except queue.Empty:
                    continue
                loop.call_soon_threadsafe(bridge.put_nowait, item)
                if item is None:
                    return

        forwarder = threading.Thread(target=forward_status, daemon=True)
        forwarder.start()

        def view(message: Optional[wire.WireMessage] = None) -> dict:
            return {
                "layer": state.layer,
                "object_id": state.object_id,
                "action": state.action,
                "sub_action": state.sub_action,
                "icons": list(available_icons(state, objects())),
                "sent": wire.render(message).strip() if message else None,
            }

        await websocket.send_text(json.dumps({"type": "hello", **view()}, sort_keys=True))

        recv_task = asyncio.ensure_future(websocket.receive_text())
        status_task = asyncio.ensure_future(bridge.get())
        try:
            while True:
                done, _ = await asyncio.wait(
                    {recv_task, status_task}, return_when=asyncio.FIRST_COMPLETED
                )
                if recv_task in done:
                    raw = recv_task.result()  # raises WebSocketDisconnect when closed
                    reply = {"type": "error", "reason": "malformed input"}
                    try:
                        request = json.loads(raw)
                        if request.get("type") == "select":
                            state, message = select(state, str(request.get("icon")), objects())
                            if message is not None:
                                send_message(message)
                            reply = {"type": "ack", **view(message)}
                    except InvalidSelectionError as exc:
                        reply = {"type": "rejected", "reason": str(exc), **view()}
                    except json.JSONDecodeError:
                        pass
                    await websocket.send_text(json.dumps(reply, sort_keys=True))
                    recv_task = asyncio.ensure_future(websocket.receive_text())
                if status_task in done:
                    item = status_task.result()
                    if item is None:
                        await websocket.send_text(
                            json.dumps({"type": "disconnect", "reason": "subscriber overflow"})
                        )
                        break
                    await websocket.send_text(item)
                    status_task = asyncio.ensure_future(bridge.get())
        except WebSocketDisconnect:
            pass
        except Exception:
            log.exception("console socket failed")
        finally:
            stopping.set()
            hub.unsubscribe(sub)
            for task in (recv_task, status_task):
                task.cancel()

    return app
