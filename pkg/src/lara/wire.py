"""Binary request/response protocol over a reliable stream.

Frame layout:

    length (4B BE) || msg_type (1B) || payload

where ``length`` counts the payload and every payload starts with a 4-byte
big-endian correlation id echoed by the response. Frames above 256 MiB are
rejected before allocation. The codec is total: any byte string either
decodes to a message or raises ProtocolError, never anything else.
"""

from __future__ import annotations

import socket
import struct
import threading
from dataclasses import dataclass
from enum import IntEnum

from . import merkle, protocol
from .protocol import AuthRequest, Decision, deserialize_rl
from .verifier import (
    AuditStartInfo,
    InstallError,
    LevelInfo,
    NoRlInstalled,
    RevokedPosition,
    Verifier,
    VerifierError,
)

MAX_PAYLOAD = 256 * 1024 * 1024
HEADER_LEN = 5

T_GET_AUDIT_START = 0x01
T_GET_FILTER = 0x02
T_GET_BITS = 0x03
T_GET_SEGMENT_PROOF = 0x04
T_AUTHENTICATE = 0x05
T_INSTALL_RL = 0x06
T_AUDIT_START = 0x81
T_FILTER = 0x82
T_BITS = 0x83
T_SEGMENT_PROOF = 0x84
T_AUTH_DECISION = 0x85
T_INSTALL_ACK = 0x86
T_REVOKED_NOTICE = 0x94
T_ERROR = 0x7F


class ErrorCode(IntEnum):
    MALFORMED = 1
    UNKNOWN_TYPE = 2
    NO_RL = 3
    BAD_LEVEL = 4
    BAD_POSITION = 5
    OVERSIZE = 6
    BAD_REQUEST = 7
    INSTALL_REJECTED = 8
    INTERNAL = 9


class ProtocolError(Exception):
    pass


class RemoteError(Exception):
    """An Error frame received from the peer."""

    def __init__(self, code: int, message: str):
        super().__init__(f"remote error {code}: {message}")
        self.code = code
        self.message = message


@dataclass
class GetAuditStart:
    corr_id: int = 0


@dataclass
class AuditStart:
    seed: bytes
    epoch: int
    variant: int
    levels: tuple  # LevelInfo per level
    root: bytes | None = None
    segment_size_bits: int = 0
    leaf_count: int = 0
    root_signature: bytes | None = None
    corr_id: int = 0


@dataclass
class GetFilter:
    level: int
    corr_id: int = 0


@dataclass
class FilterMsg:
    filter_bytes: bytes
    signature: bytes
    corr_id: int = 0


@dataclass
class GetBits:
    positions: tuple
    corr_id: int = 0


@dataclass
class BitsMsg:
    bits: tuple
    corr_id: int = 0


@dataclass
class GetSegmentProof:
    position: int
    corr_id: int = 0


@dataclass
class SegmentProofMsg:
    proof: merkle.SegmentProof
    corr_id: int = 0


@dataclass
class RevokedNotice:
    corr_id: int = 0


@dataclass
class Authenticate:
    request: AuthRequest
    corr_id: int = 0


@dataclass
class AuthDecision:
    decision: Decision
    corr_id: int = 0


@dataclass
class InstallRl:
    rl_bytes: bytes
    corr_id: int = 0


@dataclass
class InstallAck:
    version: int
    corr_id: int = 0


@dataclass
class ErrorMsg:
    code: int
    message: str = ""
    corr_id: int = 0


def _encode_levels(levels) -> bytes:
    out = bytearray([len(levels)])
    for lv in levels:
        out += struct.pack(">Q", lv.n_bits) + bytes([lv.k]) + lv.salt
    return bytes(out)


def _decode_levels(body: bytes, off: int):
    if len(body) < off + 1:
        raise ProtocolError("levels block truncated")
    count = body[off]
    off += 1
    levels = []
    for _ in range(count):
        if len(body) < off + 17:
            raise ProtocolError("levels block truncated")
        (n_bits,) = struct.unpack(">Q", body[off:off + 8])
        k = body[off + 8]
        salt = body[off + 9:off + 17]
        levels.append(LevelInfo(n_bits=n_bits, k=k, salt=salt))
        off += 17
    return tuple(levels), off


def _encode_body(msg) -> tuple[int, bytes]:
    if isinstance(msg, GetAuditStart):
        return T_GET_AUDIT_START, b""
    if isinstance(msg, AuditStart):
        body = msg.seed + struct.pack(">Q", msg.epoch) + bytes([msg.variant])
        body += _encode_levels(msg.levels)
        if msg.variant == protocol.VARIANT_REDACTABLE:
            body += msg.root + struct.pack(">IQ", msg.segment_size_bits,
                                           msg.leaf_count) + msg.root_signature
        return T_AUDIT_START, body
    if isinstance(msg, GetFilter):
        return T_GET_FILTER, bytes([msg.level])
    if isinstance(msg, FilterMsg):
        return T_FILTER, (struct.pack(">I", len(msg.filter_bytes))
                          + msg.filter_bytes + msg.signature)
    if isinstance(msg, GetBits):
        body = struct.pack(">H", len(msg.positions))
        body += b"".join(struct.pack(">Q", p) for p in msg.positions)
        return T_GET_BITS, body
    if isinstance(msg, BitsMsg):
        packed = bytearray((len(msg.bits) + 7) // 8)
        for i, bit in enumerate(msg.bits):
            if bit:
                packed[i >> 3] |= 1 << (i & 7)
        return T_BITS, struct.pack(">H", len(msg.bits)) + bytes(packed)
    if isinstance(msg, GetSegmentProof):
        return T_GET_SEGMENT_PROOF, struct.pack(">Q", msg.position)
    if isinstance(msg, SegmentProofMsg):
        return T_SEGMENT_PROOF, msg.proof.encode()
    if isinstance(msg, RevokedNotice):
        return T_REVOKED_NOTICE, b""
    if isinstance(msg, Authenticate):
        return T_AUTHENTICATE, msg.request.to_bytes()
    if isinstance(msg, AuthDecision):
        return T_AUTH_DECISION, bytes([msg.decision.value])
    if isinstance(msg, InstallRl):
        return T_INSTALL_RL, msg.rl_bytes
    if isinstance(msg, InstallAck):
        return T_INSTALL_ACK, struct.pack(">Q", msg.version)
    if isinstance(msg, ErrorMsg):
        raw = msg.message.encode()
        return T_ERROR, bytes([msg.code]) + struct.pack(">H", len(raw)) + raw
    raise ProtocolError(f"cannot encode {type(msg).__name__}")


def encode_frame(msg) -> bytes:
    msg_type, body = _encode_body(msg)
    payload_len = 4 + len(body)
    if payload_len > MAX_PAYLOAD:
        raise ProtocolError("frame exceeds 256 MiB limit")
    return (struct.pack(">I", payload_len) + bytes([msg_type])
            + struct.pack(">I", msg.corr_id) + body)


def _decode_body(msg_type: int, corr_id: int, body: bytes):
    if msg_type == T_GET_AUDIT_START:
        if body:
            raise ProtocolError("GetAuditStart carries no body")
        return GetAuditStart(corr_id=corr_id)
    if msg_type == T_AUDIT_START:
        if len(body) < 41:
            raise ProtocolError("AuditStart truncated")
        seed, (epoch,) = body[:32], struct.unpack(">Q", body[32:40])
        variant = body[40]
        levels, off = _decode_levels(body, 41)
        if not levels:
            raise ProtocolError("AuditStart carries no levels")
        root = None
        seg_bits = 0
        leaf_count = 0
        root_sig = None
        if variant == protocol.VARIANT_REDACTABLE:
            if len(body) != off + 32 + 12 + 64:
                raise ProtocolError("AuditStart redactable block truncated")
            root = body[off:off + 32]
            seg_bits, leaf_count = struct.unpack(">IQ", body[off + 32:off + 44])
            root_sig = body[off + 44:off + 108]
        elif variant in (protocol.VARIANT_SINGLE, protocol.VARIANT_HBFA):
            if len(body) != off:
                raise ProtocolError("AuditStart has trailing bytes")
        else:
            raise ProtocolError("AuditStart declares unknown variant")
        return AuditStart(seed=seed, epoch=epoch, variant=variant,
                          levels=levels, root=root, segment_size_bits=seg_bits,
                          leaf_count=leaf_count, root_signature=root_sig,
                          corr_id=corr_id)
    if msg_type == T_GET_FILTER:
        if len(body) != 1:
            raise ProtocolError("GetFilter body must be one byte")
        return GetFilter(level=body[0], corr_id=corr_id)
    if msg_type == T_FILTER:
        if len(body) < 4:
            raise ProtocolError("Filter truncated")
        (blob_len,) = struct.unpack(">I", body[:4])
        if len(body) != 4 + blob_len + 64:
            raise ProtocolError("Filter length mismatch")
        return FilterMsg(filter_bytes=body[4:4 + blob_len],
                         signature=body[4 + blob_len:], corr_id=corr_id)
    if msg_type == T_GET_BITS:
        if len(body) < 2:
            raise ProtocolError("GetBits truncated")
        (count,) = struct.unpack(">H", body[:2])
        if len(body) != 2 + 8 * count:
            raise ProtocolError("GetBits length mismatch")
        positions = struct.unpack(f">{count}Q", body[2:]) if count else ()
        return GetBits(positions=positions, corr_id=corr_id)
    if msg_type == T_BITS:
        if len(body) < 2:
            raise ProtocolError("Bits truncated")
        (count,) = struct.unpack(">H", body[:2])
        packed = body[2:]
        if len(packed) != (count + 7) // 8:
            raise ProtocolError("Bits length mismatch")
        bits = tuple((packed[i >> 3] >> (i & 7)) & 1 for i in range(count))
        return BitsMsg(bits=bits, corr_id=corr_id)
    if msg_type == T_GET_SEGMENT_PROOF:
        if len(body) != 8:
            raise ProtocolError("GetSegmentProof body must be 8 bytes")
        return GetSegmentProof(position=struct.unpack(">Q", body)[0],
                               corr_id=corr_id)
    if msg_type == T_SEGMENT_PROOF:
        try:
            proof = merkle.SegmentProof.decode(body)
        except ValueError as exc:
            raise ProtocolError(f"bad segment proof: {exc}") from None
        return SegmentProofMsg(proof=proof, corr_id=corr_id)
    if msg_type == T_REVOKED_NOTICE:
        if body:
            raise ProtocolError("RevokedNotice carries no body")
        return RevokedNotice(corr_id=corr_id)
    if msg_type == T_AUTHENTICATE:
        try:
            request = AuthRequest.from_bytes(body)
        except ValueError as exc:
            raise ProtocolError(str(exc)) from None
        return Authenticate(request=request, corr_id=corr_id)
    if msg_type == T_AUTH_DECISION:
        if len(body) != 1:
            raise ProtocolError("Decision body must be one byte")
        try:
            decision = Decision(body[0])
        except ValueError:
            raise ProtocolError("unknown decision code") from None
        return AuthDecision(decision=decision, corr_id=corr_id)
    if msg_type == T_INSTALL_RL:
        return InstallRl(rl_bytes=body, corr_id=corr_id)
    if msg_type == T_INSTALL_ACK:
        if len(body) != 8:
            raise ProtocolError("InstallAck body must be 8 bytes")
        return InstallAck(version=struct.unpack(">Q", body)[0], corr_id=corr_id)
    if msg_type == T_ERROR:
        if len(body) < 3:
            raise ProtocolError("Error frame truncated")
        (msg_len,) = struct.unpack(">H", body[1:3])
        if len(body) != 3 + msg_len:
            raise ProtocolError("Error frame length mismatch")
        try:
            text = body[3:].decode()
        except UnicodeDecodeError:
            raise ProtocolError("Error frame message is not UTF-8") from None
        return ErrorMsg(code=body[0], message=text, corr_id=corr_id)
    raise ProtocolError(f"unknown message type 0x{msg_type:02x}")


def decode_frame(data: bytes):
    """Decode exactly one frame. Raises ProtocolError on anything else."""
    try:
        if len(data) < HEADER_LEN:
            raise ProtocolError("frame shorter than header")
        (payload_len,) = struct.unpack(">I", data[:4])
        if payload_len > MAX_PAYLOAD:
            raise ProtocolError("frame exceeds 256 MiB limit")
        if payload_len < 4:
            raise ProtocolError("payload cannot hold a correlation id")
        if len(data) != HEADER_LEN + payload_len:
            raise ProtocolError("frame length mismatch")
        msg_type = data[4]
        (corr_id,) = struct.unpack(">I", data[5:9])
        return _decode_body(msg_type, corr_id, data[9:])
    except ProtocolError:
        raise
    except Exception as exc:  # total decoding: wrap anything unexpected
        raise ProtocolError(f"malformed frame: {exc}") from None


# -- stream I/O --------------------------------------------------------------

def _recv_exact(sock: socket.socket, n: int) -> bytes | None:
    chunks = []
    remaining = n
    while remaining:
        chunk = sock.recv(min(remaining, 1 << 20))
        if not chunk:
            return None
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_frame(sock: socket.socket):
    """Read one frame; None on clean EOF; ProtocolError on garbage."""
    header = _recv_exact(sock, HEADER_LEN)
    if header is None:
        return None
    (payload_len,) = struct.unpack(">I", header[:4])
    if payload_len > MAX_PAYLOAD:
        raise ProtocolError("frame exceeds 256 MiB limit")
    if payload_len < 4:
        raise ProtocolError("payload cannot hold a correlation id")
    payload = _recv_exact(sock, payload_len)
    if payload is None:
        raise ProtocolError("connection closed mid-frame")
    return decode_frame(header + payload)


def write_frame(sock: socket.socket, msg) -> None:
    sock.sendall(encode_frame(msg))


# -- verifier endpoint --------------------------------------------------------

def _audit_start_msg(info: AuditStartInfo, corr_id: int) -> AuditStart:
    return AuditStart(seed=info.seed, epoch=info.epoch, variant=info.variant,
                      levels=info.levels, root=info.root,
                      segment_size_bits=info.segment_size_bits,
                      leaf_count=info.leaf_count,
                      root_signature=info.root_signature, corr_id=corr_id)


def _serve_session(sock: socket.socket, verifier: Verifier) -> None:
    """One client session: sequential request/response; audit messages are
    answered from the snapshot taken at GetAuditStart even if a new RL is
    installed mid-session."""
    snapshot = None
    try:
        while True:
            try:
                msg = read_frame(sock)
            except ProtocolError as exc:
                write_frame(sock, ErrorMsg(code=ErrorCode.MALFORMED,
                                           message=str(exc)))
                return
            if msg is None:
                return
            cid = msg.corr_id
            try:
                if isinstance(msg, GetAuditStart):
                    snapshot = verifier.snapshot()
                    write_frame(sock, _audit_start_msg(snapshot.audit_start(), cid))
                elif isinstance(msg, GetFilter):
                    snapshot = snapshot or verifier.snapshot()
                    blob, sig = snapshot.filter_at(msg.level)
                    write_frame(sock, FilterMsg(filter_bytes=blob,
                                                signature=sig, corr_id=cid))
                elif isinstance(msg, GetBits):
                    snapshot = snapshot or verifier.snapshot()
                    bits = snapshot.bits_at(msg.positions)
                    write_frame(sock, BitsMsg(bits=tuple(bits), corr_id=cid))
                elif isinstance(msg, GetSegmentProof):
                    snapshot = snapshot or verifier.snapshot()
                    try:
                        proof = snapshot.segment_proof(msg.position)
                    except RevokedPosition:
                        write_frame(sock, RevokedNotice(corr_id=cid))
                    else:
                        write_frame(sock, SegmentProofMsg(proof=proof,
                                                          corr_id=cid))
                elif isinstance(msg, Authenticate):
                    decision = verifier.check_auth(msg.request)
                    write_frame(sock, AuthDecision(decision=decision,
                                                   corr_id=cid))
                elif isinstance(msg, InstallRl):
                    try:
                        rl = deserialize_rl(msg.rl_bytes)
                    except ValueError as exc:
                        write_frame(sock, ErrorMsg(
                            code=ErrorCode.INSTALL_REJECTED,
                            message=str(exc), corr_id=cid))
                        continue
                    version = verifier.install_rl(rl)
                    write_frame(sock, InstallAck(version=version, corr_id=cid))
                else:
                    write_frame(sock, ErrorMsg(code=ErrorCode.UNKNOWN_TYPE,
                                               message="unexpected message",
                                               corr_id=cid))
            except NoRlInstalled as exc:
                write_frame(sock, ErrorMsg(code=ErrorCode.NO_RL,
                                           message=str(exc), corr_id=cid))
            except IndexError as exc:
                write_frame(sock, ErrorMsg(code=ErrorCode.BAD_POSITION,
                                           message=str(exc), corr_id=cid))
            except InstallError as exc:
                write_frame(sock, ErrorMsg(code=ErrorCode.INSTALL_REJECTED,
                                           message=str(exc), corr_id=cid))
            except VerifierError as exc:
                code = (ErrorCode.BAD_LEVEL if "level" in str(exc)
                        else ErrorCode.BAD_REQUEST)
                write_frame(sock, ErrorMsg(code=code, message=str(exc),
                                           corr_id=cid))
    except (OSError, ProtocolError):
        pass  # transport failure closes only this session
    finally:
        try:
            sock.close()
        except OSError:
            pass


def run_verifier_endpoint(verifier: Verifier, listener: socket.socket) -> None:
    """Accept loop: every connection becomes an independent session thread.
    Returns when the listener socket is closed; transport errors close only
    the affected session."""
    while True:
        try:
            conn, _ = listener.accept()
        except OSError:
            return
        threading.Thread(target=_serve_session, args=(conn, verifier),
                         daemon=True).start()


class VerifierServer:
    """Serves sessions over TCP; each connection gets its own thread."""

    def __init__(self, verifier: Verifier, host: str = "127.0.0.1",
                 port: int = 0):
        self.verifier = verifier
        self._listener = socket.create_server((host, port))
        self.address = self._listener.getsockname()
        self._accept_thread: threading.Thread | None = None

    def start(self) -> "VerifierServer":
        self._accept_thread = threading.Thread(
            target=run_verifier_endpoint, args=(self.verifier, self._listener),
            daemon=True)
        self._accept_thread.start()
        return self

    def serve_forever(self) -> None:
        if self._accept_thread is None:
            self.start()
        self._accept_thread.join()

    def stop(self) -> None:
        try:
            self._listener.close()
        except OSError:
            pass

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


class WireSession:
    """Client side of the protocol: strict request/response with fresh
    correlation ids, over any connected stream socket."""

    def __init__(self, sock: socket.socket):
        self._sock = sock
        self._next_corr = 1

    @classmethod
    def connect(cls, host: str, port: int, timeout: float = 10.0) -> "WireSession":
        return cls(socket.create_connection((host, port), timeout=timeout))

    def _request(self, msg):
        msg.corr_id = self._next_corr
        self._next_corr += 1
        write_frame(self._sock, msg)
        reply = read_frame(self._sock)
        if reply is None:
            raise ProtocolError("connection closed before response")
        if reply.corr_id != msg.corr_id:
            raise ProtocolError("correlation id mismatch")
        if isinstance(reply, ErrorMsg):
            raise RemoteError(reply.code, reply.message)
        return reply

    def audit_start(self) -> AuditStart:
        reply = self._request(GetAuditStart())
        if not isinstance(reply, AuditStart):
            raise ProtocolError("unexpected response to GetAuditStart")
        return reply

    def get_filter(self, level: int):
        reply = self._request(GetFilter(level=level))
        if not isinstance(reply, FilterMsg):
            raise ProtocolError("unexpected response to GetFilter")
        return reply.filter_bytes, reply.signature

    def get_bits(self, positions):
        reply = self._request(GetBits(positions=tuple(positions)))
        if not isinstance(reply, BitsMsg):
            raise ProtocolError("unexpected response to GetBits")
        return list(reply.bits)

    def get_segment_proof(self, position: int):
        """The proof, or None if the verifier notified that the bit is set
        (the caller should treat itself as revoked)."""
        reply = self._request(GetSegmentProof(position=position))
        if isinstance(reply, RevokedNotice):
            return None
        if not isinstance(reply, SegmentProofMsg):
            raise ProtocolError("unexpected response to GetSegmentProof")
        return reply.proof

    def authenticate(self, request: AuthRequest) -> Decision:
        reply = self._request(Authenticate(request=request))
        if not isinstance(reply, AuthDecision):
            raise ProtocolError("unexpected response to Authenticate")
        return reply.decision

    def install_rl(self, rl_bytes: bytes) -> int:
        reply = self._request(InstallRl(rl_bytes=rl_bytes))
        if not isinstance(reply, InstallAck):
            raise ProtocolError("unexpected response to InstallRl")
        return reply.version

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def loopback_session(verifier: Verifier) -> WireSession:
    """In-process session over a socketpair; the serving half runs on a
    daemon thread. Deterministic tests and loopback benchmarks use this."""
    client_sock, server_sock = socket.socketpair()
    threading.Thread(target=_serve_session, args=(server_sock, verifier),
                     daemon=True).start()
    return WireSession(client_sock)
