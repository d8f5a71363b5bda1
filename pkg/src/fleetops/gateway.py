"""Wire-protocol gateway: length-prefixed JSON frames over TCP, fanning
session events out to subscribed clients and feeding validated commands
into sessions.

Frame layout: 4-byte big-endian payload length, then UTF-8 JSON. Every
connection starts with a server hello carrying the protocol version.
Malformed frames are answered with an error event echoing the offending
frame id; the connection and its sessions stay intact. The browser
console speaks the same frames over a WebSocket bridge served here too.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import socket
import struct
import threading
from dataclasses import dataclass, field
from typing import Optional

from .errors import BindFailure, ConfigError, FleetError
from .messaging import Channel
from .session import Session, SessionConfig, start_session
from .world import Scenario, parse_scenario
from . import scenes as bundled

logger = logging.getLogger(__name__)

PROTOCOL_VERSION = 1
MAX_FRAME_BYTES = 4 * 1024 * 1024
MAX_MANUAL_BYTES = 1024 * 1024

COMMAND_TYPES = (
    "start_session",
    "send_message",
    "upload_manual",
    "add_robot",
    "decide",
    "checkpoint",
    "subscribe",
    "inspect",
)


def encode_frame(payload: dict) -> bytes:
    body = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    return struct.pack(">I", len(body)) + body


def read_frame(sock: socket.socket) -> Optional[dict]:
    header = _read_exact(sock, 4)
    if header is None:
        return None
    (length,) = struct.unpack(">I", header)
    if length > MAX_FRAME_BYTES:
        raise ValueError(f"frame of {length} bytes exceeds limit")
    body = _read_exact(sock, length)
    if body is None:
        return None
    return json.loads(body.decode())


def _read_exact(sock: socket.socket, n: int) -> Optional[bytes]:
    chunks = b""
    while len(chunks) < n:
        block = sock.recv(n - len(chunks))
        if not block:
            return None
        chunks += block
    return chunks


@dataclass
class SessionHandle:
    session_id: str
    session: Session
    lock: threading.Lock = field(default_factory=threading.Lock)
    events: list[dict] = field(default_factory=list)
    subscribers: list["ClientConnection"] = field(default_factory=list)
    thread: Optional[threading.Thread] = None

    def push_event(self, event_type: str, payload: dict) -> None:
        event = {
            "type": event_type,
            "session": self.session_id,
            "seq": len(self.events) + 1,
            "payload": payload,
        }
        self.events.append(event)
        for client in list(self.subscribers):
            client.send_event(event)


class ClientConnection:
    def __init__(self, sock: socket.socket, gateway: "Gateway", transport: str = "tcp"):
        self.sock = sock
        self.gateway = gateway
        self.transport = transport
        self.send_lock = threading.Lock()
        self.alive = True

    def send(self, payload: dict) -> None:
        if not self.alive:
            return
        try:
            with self.send_lock:
                if self.transport == "ws":
                    self.sock.sendall(_ws_text_frame(
                        json.dumps(payload, sort_keys=True, separators=(",", ":"))
                    ))
                else:
                    self.sock.sendall(encode_frame(payload))
        except OSError:
            self.alive = False

    def send_event(self, event: dict) -> None:
        self.send(event)

    def close(self) -> None:
        self.alive = False
        try:
            self.sock.close()
        except OSError:
            pass


class Gateway:
    """Serves the operator protocol; owns every live session.

    Two listeners speak the same frames: a raw length-prefixed TCP port
    (headless clients, tests) and a WebSocket port for the browser
    console.
    """

    def __init__(self, host: str = "127.0.0.1", port: int = 0, ws_port: int = 0):
        try:
            self._listener = socket.create_server((host, port))
            self._ws_listener = socket.create_server((host, ws_port))
        except OSError as exc:
            raise BindFailure(f"cannot bind {host}: {exc}") from exc
        self.host, self.port = self._listener.getsockname()[:2]
        self.ws_port = self._ws_listener.getsockname()[1]
        self.sessions: dict[str, SessionHandle] = {}
        self._session_counter = 0
        self._running = False
        self._lock = threading.Lock()

    # -- lifecycle -----------------------------------------------------

    def start(self) -> None:
        self._running = True
        for listener, ws in ((self._listener, False), (self._ws_listener, True)):
            threading.Thread(
                target=self._accept_loop, args=(listener, ws), daemon=True
            ).start()

    def close(self) -> None:
        self._running = False
        for listener in (self._listener, self._ws_listener):
            try:
                listener.close()
            except OSError:
                pass

    def _accept_loop(self, listener: socket.socket, websocket: bool) -> None:
        while self._running:
            try:
                sock, _ = listener.accept()
            except OSError:
                return
            threading.Thread(
                target=self._serve_client, args=(sock, websocket), daemon=True
            ).start()

    def _serve_client(self, sock: socket.socket, websocket: bool) -> None:
        if websocket:
            if not _ws_upgrade(sock):
                try:
                    sock.close()
                except OSError:
                    pass
                return
            client = ClientConnection(sock, self, transport="ws")
        else:
            client = ClientConnection(sock, self)
        client.send({"type": "hello", "proto": PROTOCOL_VERSION})
        try:
            while client.alive:
                try:
                    if client.transport == "ws":
                        frame = _ws_read_text(sock)
                        command = json.loads(frame) if frame is not None else None
                    else:
                        command = read_frame(sock)
                except (ValueError, json.JSONDecodeError, UnicodeDecodeError) as exc:
                    client.send(
                        {"type": "error", "error": f"malformed frame: {exc}", "id": None}
                    )
                    continue
                except OSError:
                    break
                if command is None:
                    break
                self._handle_command(client, command)
        finally:
            self._drop_client(client)
            client.close()

    def _drop_client(self, client: ClientConnection) -> None:
        with self._lock:
            for handle in self.sessions.values():
                if client in handle.subscribers:
                    handle.subscribers.remove(client)

    # -- commands --------------------------------------------------------

    def _handle_command(self, client: ClientConnection, command: dict) -> None:
        frame_id = command.get("id") if isinstance(command, dict) else None
        try:
            if not isinstance(command, dict):
                raise ValueError("command frame must be a JSON object")
            ctype = command.get("type")
            if ctype not in COMMAND_TYPES:
                raise ValueError(f"unknown command type {ctype!r}")
            handler = getattr(self, f"_cmd_{ctype}")
            result = handler(client, command.get("session"), command.get("payload") or {})
            client.send({"type": "ack", "id": frame_id, **(result or {})})
        except (FleetError, ValueError, KeyError, TypeError) as exc:
            client.send(
                {
                    "type": "error",
                    "id": frame_id,
                    "error": f"{type(exc).__name__}: {exc}",
                    "echo": _safe_echo(command),
                }
            )

    def _handle(self, session_id: Optional[str]) -> SessionHandle:
        if not session_id or session_id not in self.sessions:
            raise ValueError(f"unknown session {session_id!r}")
        return self.sessions[session_id]

    def _cmd_start_session(self, client, session_id, payload) -> dict:
        scenario = self._resolve_scenario(payload)
        config_data = payload.get("config") or {}
        config_data.setdefault("mode", "full")
        config_data.setdefault("decision_policy", "interactive")
        config = SessionConfig.from_json({"seed": 0, **config_data})
        with self._lock:
            self._session_counter += 1
            new_id = f"s{self._session_counter}"
        handle = SessionHandle(session_id=new_id, session=None)  # type: ignore[arg-type]
        session = Session(
            config, scenario, event_sink=handle.push_event
        )
        handle.session = session
        self.sessions[new_id] = handle
        handle.subscribers.append(client)
        handle.thread = threading.Thread(
            target=self._run_session, args=(handle,), daemon=True
        )
        handle.thread.start()
        return {"session": new_id}

    def _resolve_scenario(self, payload: dict) -> Scenario:
        if "bundled" in payload:
            for scenario in bundled.bundled_scenes():
                if scenario.name == payload["bundled"]:
                    return scenario
            raise ValueError(f"no bundled scene named {payload['bundled']!r}")
        if "scenario" in payload:
            return parse_scenario(payload["scenario"])
        raise ValueError("start_session needs 'scenario' data or a 'bundled' name")

    def _run_session(self, handle: SessionHandle) -> None:
        try:
            while handle.session.live:
                handle.session.step_phase()
        except Exception as exc:  # surfaced to subscribers, session dead
            logger.exception("session %s crashed", handle.session_id)
            handle.push_event("error", {"error": str(exc)})
        finally:
            handle.session.drain_commands()

    def _cmd_send_message(self, client, session_id, payload) -> dict:
        handle = self._handle(session_id)
        channel_data = payload.get("channel") or {"kind": "group"}
        if channel_data.get("kind") == "direct":
            channel = Channel.direct(channel_data.get("target"))
        else:
            channel = Channel.GROUP
        acks = handle.session.submit_command(
            "human_command", payload.get("text", ""), channel
        )
        return {"acks": acks}

    def _cmd_upload_manual(self, client, session_id, payload) -> dict:
        handle = self._handle(session_id)
        text = payload.get("text", "")
        if len(text.encode()) > MAX_MANUAL_BYTES:
            raise ValueError("manual exceeds the 1 MB upload cap")
        result = handle.session.submit_command(
            "upload_manual", payload.get("agent"), text, payload.get("name", "manual")
        )
        handle.push_event("manual", result)
        return dict(result)

    def _cmd_add_robot(self, client, session_id, payload) -> dict:
        del client, payload
        self._handle(session_id)
        raise ConfigError("robots join at session start in this version")

    def _cmd_decide(self, client, session_id, payload) -> dict:
        handle = self._handle(session_id)
        decision = payload.get("decision")
        if decision not in ("yes", "no"):
            raise ValueError("decision must be exactly 'yes' or 'no'")
        handle.session.submit_decision(decision)
        return {}

    def _cmd_checkpoint(self, client, session_id, payload) -> dict:
        del client, payload
        handle = self._handle(session_id)
        if handle.session.live:
            checkpoint = handle.session.submit_command("checkpoint")
        else:
            checkpoint = handle.session.checkpoint()
        return {"checkpoint": checkpoint}

    def _cmd_subscribe(self, client, session_id, payload) -> dict:
        handle = self._handle(session_id)
        from_seq = int(payload.get("from_seq", 0))
        with self._lock:
            if client not in handle.subscribers:
                handle.subscribers.append(client)
        for event in handle.events:
            if event["seq"] > from_seq:
                client.send_event(event)
        return {"session": session_id, "replayed_from": from_seq}

    def _cmd_inspect(self, client, session_id, payload) -> dict:
        del client, payload
        handle = self._handle(session_id)
        if handle.session.live:
            info = handle.session.submit_command("inspect")
        else:
            info = handle.session.inspect()
        handle.push_event("inspect", info)
        return {"inspect": info}


def _safe_echo(command) -> Optional[dict]:
    if isinstance(command, dict):
        return {"type": command.get("type"), "id": command.get("id")}
    return None


def serve(host: str = "127.0.0.1", port: int = 0, ws_port: int = 0) -> Gateway:
    """Bind and start a gateway; returns the running instance."""
    gateway = Gateway(host, port, ws_port)
    gateway.start()
    return gateway


# -- minimal server-side WebSocket (RFC 6455, text frames only) -----------

_WS_MAGIC = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"


def _ws_accept_key(key: str) -> str:
    digest = hashlib.sha1((key + _WS_MAGIC).encode()).digest()
    return base64.b64encode(digest).decode()


def _ws_text_frame(text: str) -> bytes:
    data = text.encode()
    header = bytearray([0x81])
    n = len(data)
    if n < 126:
        header.append(n)
    elif n < 1 << 16:
        header.append(126)
        header += struct.pack(">H", n)
    else:
        header.append(127)
        header += struct.pack(">Q", n)
    return bytes(header) + data


def _ws_read_text(sock: socket.socket) -> Optional[str]:
    """Read one client frame; answers pings, returns None on close."""
    while True:
        head = _read_exact(sock, 2)
        if head is None:
            return None
        opcode = head[0] & 0x0F
        masked = head[1] & 0x80
        length = head[1] & 0x7F
        if length == 126:
            ext = _read_exact(sock, 2)
            if ext is None:
                return None
            (length,) = struct.unpack(">H", ext)
        elif length == 127:
            ext = _read_exact(sock, 8)
            if ext is None:
                return None
            (length,) = struct.unpack(">Q", ext)
        if length > MAX_FRAME_BYTES:
            raise ValueError("websocket frame too large")
        mask = _read_exact(sock, 4) if masked else b"\x00" * 4
        if mask is None:
            return None
        body = _read_exact(sock, length) if length else b""
        if body is None:
            return None
        data = bytes(b ^ mask[i % 4] for i, b in enumerate(body))
        if opcode == 0x8:  # close
            return None
        if opcode == 0x9:  # ping -> pong
            sock.sendall(b"\x8a" + bytes([len(data)]) + data)
            continue
        if opcode in (0x1, 0x2):
            return data.decode()


def _ws_handshake_response(request: str) -> Optional[bytes]:
    key = None
    for line in request.split("\r\n"):
        if line.lower().startswith("sec-websocket-key:"):
            key = line.split(":", 1)[1].strip()
    if key is None:
        return None
    return (
        "HTTP/1.1 101 Switching Protocols\r\n"
        "Upgrade: websocket\r\n"
        "Connection: Upgrade\r\n"
        f"Sec-WebSocket-Accept: {_ws_accept_key(key)}\r\n\r\n"
    ).encode()


def _ws_upgrade(sock: socket.socket) -> bool:
    request = b""
    while b"\r\n\r\n" not in request:
        block = sock.recv(4096)
        if not block:
            return False
        request += block
        if len(request) > 64 * 1024:
            return False
    response = _ws_handshake_response(request.decode(errors="replace"))
    if response is None:
        return False
    sock.sendall(response)
    return True
