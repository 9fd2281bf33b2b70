"""Minimal RFC 1035 wire codec: enough DNS to sinkhole and forward over UDP.

Parses the 12-byte header, the question section, and resource records
(with compression-pointer support, which responses need). Builds queries
and synthesized responses. Anything beyond single-question UDP messages is
out of scope; the server answers multi-question queries with FORMERR.
"""

from __future__ import annotations

import socket
import struct
from dataclasses import dataclass

TYPE_A = 1
TYPE_NS = 2
TYPE_CNAME = 5
TYPE_SOA = 6
TYPE_PTR = 12
TYPE_MX = 15
TYPE_TXT = 16
TYPE_AAAA = 28
TYPE_SRV = 33
TYPE_ANY = 255

CLASS_IN = 1

RCODE_NOERROR = 0
RCODE_FORMERR = 1
RCODE_SERVFAIL = 2
RCODE_NXDOMAIN = 3

MAX_UDP_PAYLOAD = 512

_TYPE_NAMES = {
    TYPE_A: "A",
    TYPE_NS: "NS",
    TYPE_CNAME: "CNAME",
    TYPE_SOA: "SOA",
    TYPE_PTR: "PTR",
    TYPE_MX: "MX",
    TYPE_TXT: "TXT",
    TYPE_AAAA: "AAAA",
    TYPE_SRV: "SRV",
    TYPE_ANY: "ANY",
}


def type_name(qtype: int) -> str:
    return _TYPE_NAMES.get(qtype, f"TYPE{qtype}")


class WireError(ValueError):
    pass


@dataclass(frozen=True)
class Header:
    txid: int
    qr: bool
    opcode: int
    aa: bool
    tc: bool
    rd: bool
    ra: bool
    rcode: int
    qdcount: int
    ancount: int
    nscount: int
    arcount: int

    def pack(self) -> bytes:
        flags = (
            (int(self.qr) << 15)
            | ((self.opcode & 0xF) << 11)
            | (int(self.aa) << 10)
            | (int(self.tc) << 9)
            | (int(self.rd) << 8)
            | (int(self.ra) << 7)
            | (self.rcode & 0xF)
        )
        return struct.pack(
            ">HHHHHH",
            self.txid,
            flags,
            self.qdcount,
            self.ancount,
            self.nscount,
            self.arcount,
        )


@dataclass(frozen=True)
class Question:
    qname: str
    qtype: int
    qclass: int = CLASS_IN


@dataclass(frozen=True)
class ResourceRecord:
    name: str
    rtype: int
    rclass: int
    ttl: int
    rdata: bytes

    @property
    def address(self) -> str:
        """Dotted/colon text form of an A or AAAA record's rdata."""
        if self.rtype == TYPE_A and len(self.rdata) == 4:
            return socket.inet_ntop(socket.AF_INET, self.rdata)
        if self.rtype == TYPE_AAAA and len(self.rdata) == 16:
            return socket.inet_ntop(socket.AF_INET6, self.rdata)
        raise WireError(f"record type {self.rtype} has no address form")


@dataclass(frozen=True)
class Message:
    header: Header
    questions: tuple[Question, ...]
    answers: tuple[ResourceRecord, ...] = ()

    @property
    def question(self) -> Question:
        if len(self.questions) != 1:
            raise WireError(f"expected one question, found {len(self.questions)}")
        return self.questions[0]


def encode_name(name: str) -> bytes:
    out = bytearray()
    for label in name.rstrip(".").split("."):
        if not label:
            continue
        raw = label.encode("ascii")
        if len(raw) > 63:
            raise WireError(f"label too long: {label!r}")
        out.append(len(raw))
        out += raw
    if len(out) > 254:
        raise WireError(f"name too long: {name!r}")
    out.append(0)
    return bytes(out)


def decode_name(data: bytes, offset: int) -> tuple[str, int]:
    """Decode a possibly-compressed name; returns (name, next_offset)."""
    labels = []
    jumps = 0
    end = None
    pos = offset
    while True:
        if pos >= len(data):
            raise WireError("truncated name")
        length = data[pos]
        if length & 0xC0 == 0xC0:
            if pos + 1 >= len(data):
                raise WireError("truncated compression pointer")
            if end is None:
                end = pos + 2
            pos = ((length & 0x3F) << 8) | data[pos + 1]
            jumps += 1
            if jumps > 64:
                raise WireError("compression pointer loop")
            continue
        if length & 0xC0:
            raise WireError("reserved label type")
        pos += 1
        if length == 0:
            break
        if pos + length > len(data):
            raise WireError("truncated label")
        labels.append(data[pos:pos + length].decode("ascii", errors="replace"))
        pos += length
    return ".".join(labels), (end if end is not None else pos)


def parse_header(data: bytes) -> Header:
    if len(data) < 12:
        raise WireError("message shorter than DNS header")
    txid, flags, qd, an, ns, ar = struct.unpack(">HHHHHH", data[:12])
    return Header(
        txid=txid,
        qr=bool(flags & 0x8000),
        opcode=(flags >> 11) & 0xF,
        aa=bool(flags & 0x0400),
        tc=bool(flags & 0x0200),
        rd=bool(flags & 0x0100),
        ra=bool(flags & 0x0080),
        rcode=flags & 0xF,
        qdcount=qd,
        ancount=an,
        nscount=ns,
        arcount=ar,
    )


def parse_message(data: bytes) -> Message:
    header = parse_header(data)
    offset = 12
    questions = []
    for _ in range(header.qdcount):
        qname, offset = decode_name(data, offset)
        if offset + 4 > len(data):
            raise WireError("truncated question")
        qtype, qclass = struct.unpack(">HH", data[offset:offset + 4])
        offset += 4
        questions.append(Question(qname, qtype, qclass))
    answers = []
    for section_count, keep in (
        (header.ancount, True),
        (header.nscount, False),
        (header.arcount, False),
    ):
        for _ in range(section_count):
            name, offset = decode_name(data, offset)
            if offset + 10 > len(data):
                raise WireError("truncated resource record")
            rtype, rclass, ttl, rdlength = struct.unpack(
                ">HHIH", data[offset:offset + 10]
            )
            offset += 10
            if offset + rdlength > len(data):
                raise WireError("truncated rdata")
            rdata = data[offset:offset + rdlength]
            offset += rdlength
            if keep:
                answers.append(ResourceRecord(name, rtype, rclass, ttl, rdata))
    return Message(header, tuple(questions), tuple(answers))


def build_query(qname: str, qtype: int, txid: int, rd: bool = True) -> bytes:
    header = Header(
        txid=txid,
        qr=False,
        opcode=0,
        aa=False,
        tc=False,
        rd=rd,
        ra=False,
        rcode=0,
        qdcount=1,
        ancount=0,
        nscount=0,
        arcount=0,
    )
    return header.pack() + encode_name(qname) + struct.pack(">HH", qtype, CLASS_IN)


def build_response(
    query: Message,
    rcode: int = RCODE_NOERROR,
    answers: tuple[tuple[int, int, bytes], ...] = (),
) -> bytes:
    """Synthesize a response to a single-question query.

    ``answers`` entries are (rtype, ttl, rdata) for the question name; the
    name is emitted as a compression pointer to the question. QR and RA are
    set, RD copied from the query.
    """
    q = query.question
    header = Header(
        txid=query.header.txid,
        qr=True,
        opcode=query.header.opcode,
        aa=False,
        tc=False,
        rd=query.header.rd,
        ra=True,
        rcode=rcode,
        qdcount=1,
        ancount=len(answers),
        nscount=0,
        arcount=0,
    )
    out = bytearray(header.pack())
    out += encode_name(q.qname)
    out += struct.pack(">HH", q.qtype, q.qclass)
    for rtype, ttl, rdata in answers:
        out += b"\xc0\x0c"  # pointer to the question name
        out += struct.pack(">HHIH", rtype, CLASS_IN, ttl, len(rdata))
        out += rdata
    return truncate_for_udp(bytes(out))


def build_error_response(data: bytes, rcode: int) -> bytes:
    """Header-only error response echoing the transaction id of raw bytes.

    Used when the question section itself is unusable (FORMERR) or when a
    parsed reply cannot be synthesized.
    """
    header = parse_header(data[:12].ljust(12, b"\x00"))
    reply = Header(
        txid=header.txid,
        qr=True,
        opcode=header.opcode,
        aa=False,
        tc=False,
        rd=header.rd,
        ra=True,
        rcode=rcode,
        qdcount=0,
        ancount=0,
        nscount=0,
        arcount=0,
    )
    return reply.pack()


def truncate_for_udp(data: bytes, limit: int = MAX_UDP_PAYLOAD) -> bytes:
    """Clamp an oversize UDP response: keep header+question, set TC.

    Classic-DNS clients retry over TCP on TC; this server's core is UDP
    only, so the flag is the whole contract.
    """
    if len(data) <= limit:
        return data
    header = parse_header(data)
    offset = 12
    for _ in range(header.qdcount):
        _, offset = decode_name(data, offset)
        offset += 4
    flags_hdr = Header(
        txid=header.txid,
        qr=True,
        opcode=header.opcode,
        aa=header.aa,
        tc=True,
        rd=header.rd,
        ra=header.ra,
        rcode=header.rcode,
        qdcount=header.qdcount,
        ancount=0,
        nscount=0,
        arcount=0,
    )
    return flags_hdr.pack() + data[12:offset]


def a_rdata(address: str) -> bytes:
    return socket.inet_pton(socket.AF_INET, address)


def aaaa_rdata(address: str) -> bytes:
    return socket.inet_pton(socket.AF_INET6, address)


def set_txid(data: bytes, txid: int) -> bytes:
    if len(data) < 2:
        raise WireError("message too short for a transaction id")
    return struct.pack(">H", txid) + data[2:]
