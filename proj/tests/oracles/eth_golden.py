"""Independent oracle for the legacy Ethereum transaction golden vectors.

Uses eth-account (eth_keys/coincurve) and pycryptodome; shares no code with
the C++ implementation. Re-run to regenerate the constants frozen in
tests/unit/test_eth_tx.cpp and tests/acceptance/acceptance.cpp:

    pip install eth-account pycryptodome
    python3 tests/oracles/eth_golden.py
"""
import hashlib

from Crypto.Hash import keccak
from eth_account import Account

KEY = "0x4c0883a69102937d6231471b5dbb6204fe5129617082792ae468d01a3f362318"


def keccak256(b: bytes) -> str:
    k = keccak.new(digest_bits=256)
    k.update(b)
    return k.hexdigest()


def main() -> None:
    acct = Account.from_key(KEY)
    blockhash = hashlib.sha256(b"golden-anchor").hexdigest()
    data = blockhash.encode("ascii")
    tx = {
        "nonce": 19,
        "gasPrice": 4_000_000_000,
        "gas": 55112,
        "to": acct.address,
        "value": 0,
        "data": data,
    }
    signed = acct.sign_transaction(tx)
    raw = bytes(signed.raw_transaction)
    print("address   ", acct.address.lower())
    print("blockhash ", blockhash)
    print("raw       ", raw.hex())
    print("txhash    ", keccak256(raw))
    print("v r s     ", signed.v, hex(signed.r), hex(signed.s))
    print("keccak('')", keccak256(b""))
    print("keccak(abc)", keccak256(b"abc"))
    big = bytes(range(256)) * 3
    print("keccak(0..255 x3)", keccak256(big))
    print("sha256d('')", hashlib.sha256(hashlib.sha256(b"").digest()).hexdigest())


if __name__ == "__main__":
    main()


def rfc6979_vectors() -> None:
    """Deterministic-signature vectors over sha256(message) via eth_keys."""
    from eth_keys import keys

    for secret, msg in [(1, b"Satoshi Nakamoto"), (0x4C0883A69102937D6231471B5DBB6204FE5129617082792AE468D01A3F362318, b"provchain")]:
        pk = keys.PrivateKey(secret.to_bytes(32, "big"))
        digest = hashlib.sha256(msg).digest()
        sig = pk.sign_msg_hash(digest)
        print(msg, "digest", digest.hex(), "r", hex(sig.r), "s", hex(sig.s), "v", sig.v,
              "addr", pk.public_key.to_checksum_address().lower())


if __name__ == "__main__":
    rfc6979_vectors()
