"""Encrypted side storage for sensitive payload values.

Sensitive sensor data never reaches the ledger in the clear: each value is
sealed in an envelope under the tracker's public key, the envelope is written
to a content-addressed blob store, and only the 64-hex address travels in the
registration payload. Only the tracker's private key opens the envelope.

The envelope scheme is hybrid X25519 + HKDF-SHA256 + AES-256-GCM; the
content address is the SHA-256 of the serialized envelope. Both are pinned
by identifier so stored blobs stay verifiable.
"""

from __future__ import annotations

import hashlib
import os
import re
from dataclasses import dataclass
from pathlib import Path

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.x25519 import (
    X25519PrivateKey,
    X25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.hashes import SHA256
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from .codec import CodecError, decode_payload, encode_payload
from .model import IoeError, Payload

SCHEME_ID = "x25519-hkdf-sha256-aes256gcm"
HASH_ID = "sha256"

_NONCE_BYTES = 12
_PUB_BYTES = 32
_TAG_BYTES = 16

_ADDRESS_RE = re.compile(r"^[0-9a-f]{64}$")


class KeyMismatch(IoeError):
    """The supplied key does not fit the configured scheme."""


class DecryptFailure(IoeError):
    """Authenticated decryption failed; no plaintext is ever returned."""


class NotFound(IoeError):
    """No blob is stored under the requested address."""


class IntegrityError(IoeError):
    """Stored bytes no longer match their content address."""


@dataclass(frozen=True)
class ContentAddress:
    """Name of a stored blob: 64 lowercase hex chars of its SHA-256."""

    digest_hex: str

    def __post_init__(self) -> None:
        if not _ADDRESS_RE.match(self.digest_hex):
            raise ValueError(f"not a 64-hex content address: {self.digest_hex!r}")

    def __str__(self) -> str:
        return self.digest_hex

    @classmethod
    def parse(cls, text: str) -> "ContentAddress":
        return cls(text.strip().lower())


@dataclass(frozen=True)
class Envelope:
    """Encrypted payload bound to one recipient key."""

    ciphertext: bytes
    recipient_fingerprint: bytes
    scheme_id: str = SCHEME_ID

    def __post_init__(self) -> None:
        if len(self.recipient_fingerprint) != 32:
            raise ValueError("recipient fingerprint must be 32 bytes")
        if not self.scheme_id.isascii() or not 0 < len(self.scheme_id) <= 255:
            raise ValueError("bad scheme id")


def hash_name(data: bytes) -> ContentAddress:
    """Deterministic fixed-size one-way name for arbitrary bytes."""
    return ContentAddress(hashlib.sha256(data).hexdigest())


# --------------------------------------------------------------------------
# keys


def generate_keypair() -> tuple[X25519PrivateKey, X25519PublicKey]:
    private = X25519PrivateKey.generate()
    return private, private.public_key()


def keypair_from_seed(seed32: bytes) -> tuple[X25519PrivateKey, X25519PublicKey]:
    """Deterministic keypair from 32 seed bytes (simulation use)."""
    if len(seed32) != 32:
        raise KeyMismatch("key seed must be 32 bytes")
    private = X25519PrivateKey.from_private_bytes(seed32)
    return private, private.public_key()


def _raw_public(key: X25519PublicKey) -> bytes:
    return key.public_bytes(
        encoding=serialization.Encoding.Raw, format=serialization.PublicFormat.Raw
    )


def key_fingerprint(key: X25519PublicKey) -> bytes:
    return hashlib.sha256(_raw_public(key)).digest()


def _session_key(shared: bytes, eph_pub: bytes, recipient_pub: bytes) -> bytes:
    return HKDF(
        algorithm=SHA256(),
        length=32,
        salt=None,
        info=b"ioe-envelope" + eph_pub + recipient_pub,
    ).derive(shared)


# --------------------------------------------------------------------------
# envelopes


def encrypt_payload(
    p: Payload,
    recipient_public_key: X25519PublicKey,
    *,
    seed_material: bytes | None = None,
) -> Envelope:
    """Seal a payload so only the matching private key can open it.

    ``seed_material`` makes the ephemeral key and nonce deterministic for
    reproducible simulation runs; leave it unset for fresh randomness.
    """
    if not isinstance(recipient_public_key, X25519PublicKey):
        raise KeyMismatch(f"need an X25519 public key, got {type(recipient_public_key).__name__}")
    if seed_material is None:
        ephemeral = X25519PrivateKey.generate()
        nonce = os.urandom(_NONCE_BYTES)
    else:
        ephemeral = X25519PrivateKey.from_private_bytes(
            hashlib.sha256(seed_material + b"/eph").digest()
        )
        nonce = hashlib.sha256(seed_material + b"/nonce").digest()[:_NONCE_BYTES]
    eph_pub = _raw_public(ephemeral.public_key())
    recipient_pub = _raw_public(recipient_public_key)
    fingerprint = hashlib.sha256(recipient_pub).digest()
    key = _session_key(ephemeral.exchange(recipient_public_key), eph_pub, recipient_pub)
    sealed = AESGCM(key).encrypt(nonce, encode_payload(p), fingerprint)
    return Envelope(eph_pub + nonce + sealed, fingerprint)


def decrypt_payload(envelope: Envelope, private_key: X25519PrivateKey) -> Payload:
    """Open an envelope; raises ``DecryptFailure`` unless the key matches and
    the ciphertext is intact."""
    if envelope.scheme_id != SCHEME_ID:
        raise DecryptFailure(f"unsupported scheme: {envelope.scheme_id!r}")
    if not isinstance(private_key, X25519PrivateKey):
        raise KeyMismatch(f"need an X25519 private key, got {type(private_key).__name__}")
    blob = envelope.ciphertext
    if len(blob) < _PUB_BYTES + _NONCE_BYTES + _TAG_BYTES:
        raise DecryptFailure("ciphertext too short")
    if key_fingerprint(private_key.public_key()) != envelope.recipient_fingerprint:
        raise DecryptFailure("envelope addressed to a different key")
    eph_pub = blob[:_PUB_BYTES]
    nonce = blob[_PUB_BYTES : _PUB_BYTES + _NONCE_BYTES]
    sealed = blob[_PUB_BYTES + _NONCE_BYTES :]
    try:
        ephemeral = X25519PublicKey.from_public_bytes(eph_pub)
        key = _session_key(
            private_key.exchange(ephemeral), eph_pub, _raw_public(private_key.public_key())
        )
        plain = AESGCM(key).decrypt(nonce, sealed, envelope.recipient_fingerprint)
    except InvalidTag as exc:
        raise DecryptFailure("authentication failed") from exc
    except ValueError as exc:
        raise DecryptFailure(str(exc)) from exc
    try:
        return decode_payload(plain)
    except CodecError as exc:
        raise DecryptFailure(f"decrypted bytes are not a payload: {exc}") from exc


# --------------------------------------------------------------------------
# envelope serialization


def encode_envelope(e: Envelope) -> bytes:
    sid = e.scheme_id.encode("ascii")
    return (
        len(sid).to_bytes(1, "big")
        + sid
        + e.recipient_fingerprint
        + len(e.ciphertext).to_bytes(4, "big")
        + e.ciphertext
    )


def decode_envelope(data: bytes) -> Envelope:
    if len(data) < 1:
        raise IntegrityError("empty envelope")
    sid_len = data[0]
    offset = 1 + sid_len
    if len(data) < offset + 32 + 4:
        raise IntegrityError("envelope truncated")
    scheme = data[1:offset].decode("ascii", errors="replace")
    fingerprint = data[offset : offset + 32]
    ct_len = int.from_bytes(data[offset + 32 : offset + 36], "big")
    ciphertext = data[offset + 36 :]
    if len(ciphertext) != ct_len:
        raise IntegrityError("envelope ciphertext length mismatch")
    return Envelope(ciphertext, fingerprint, scheme)


# --------------------------------------------------------------------------
# blob store


class BlobStore:
    """One file per envelope under ``<root>/<first 2 hex>/<digest>``.

    Writes are write-then-rename, so concurrent writers of the same address
    are idempotent and readers never observe partial blobs.
    """

    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, address: ContentAddress) -> Path:
        return self.root / address.digest_hex[:2] / address.digest_hex

    def put(self, envelope: Envelope) -> ContentAddress:
        data = encode_envelope(envelope)
        address = hash_name(data)
        path = self._path(address)
        if path.exists():
            return address
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.parent / f".tmp-{os.getpid()}-{os.urandom(6).hex()}"
        tmp.write_bytes(data)
        os.replace(tmp, path)
        return address

    def get(self, address: ContentAddress) -> Envelope:
        path = self._path(address)
        try:
            data = path.read_bytes()
        except FileNotFoundError as exc:
            raise NotFound(f"no blob stored at {address}") from exc
        if hash_name(data) != address:
            raise IntegrityError(f"blob at {address} no longer matches its address")
        return decode_envelope(data)

    def addresses(self) -> list[ContentAddress]:
        found = []
        for sub in sorted(self.root.iterdir()):
            if not sub.is_dir():
                continue
            for f in sorted(sub.iterdir()):
                if _ADDRESS_RE.match(f.name):
                    found.append(ContentAddress(f.name))
        return found

    def verify(self) -> tuple[int, list[ContentAddress]]:
        """Recheck every stored blob; returns (ok count, bad addresses)."""
        ok, bad = 0, []
        for address in self.addresses():
            try:
                self.get(address)
                ok += 1
            except (IntegrityError, NotFound):
                bad.append(address)
        return ok, bad
