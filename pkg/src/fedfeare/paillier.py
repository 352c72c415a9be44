"""Paillier additively homomorphic encryption over Python integers.

The generator is fixed to ``g = n + 1``, so ``g^m mod n^2 = 1 + m*n`` and
encryption costs one modular exponentiation.  Every randomized operation
takes an explicit ``rng`` (anything with ``randrange``/``getrandbits``);
pass ``random.SystemRandom()`` outside of tests.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

from .errors import KeygenError, PlaintextRangeError, WrongKeyError

try:
    import gmpy2

    def powmod(base: int, exp: int, mod: int) -> int:
        return int(gmpy2.powmod(base, exp, mod))

except ImportError:  # pragma: no cover - exercised only without gmpy2
    def powmod(base: int, exp: int, mod: int) -> int:
        return pow(base, exp, mod)

MIN_KEY_BITS = 16

_SMALL_PRIMES = [p for p in range(3, 1000) if all(p % d for d in range(2, int(p ** 0.5) + 1))]


def is_probable_prime(n: int, rng, rounds: int = 40) -> bool:
    """Miller-Rabin with bases drawn from ``rng``."""
    if n < 2:
        return False
    if n in (2, 3):
        return True
    if n % 2 == 0:
        return False
    for p in _SMALL_PRIMES:
        if n == p:
            return True
        if n % p == 0:
            return False
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for _ in range(rounds):
        a = rng.randrange(2, n - 1)
        x = powmod(a, d, n)
        if x == 1 or x == n - 1:
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def random_prime(bits: int, rng) -> int:
    """Prime with exactly ``bits`` bits and its two top bits set."""
    while True:
        c = rng.getrandbits(bits) | (3 << (bits - 2)) | 1
        if is_probable_prime(c, rng):
            return c


@dataclass(frozen=True)
class PublicKey:
    n: int
    n_squared: int = field(init=False, repr=False)

    def __post_init__(self):
        if self.n <= 1 or self.n % 2 == 0:
            raise KeygenError("modulus must be odd and > 1")
        object.__setattr__(self, "n_squared", self.n * self.n)

    @property
    def g(self) -> int:
        return self.n + 1

    @property
    def key_id(self) -> str:
        return hashlib.sha256(format(self.n, "x").encode()).hexdigest()[:16]

    def to_hex(self) -> str:
        return format(self.n, "x")

    @classmethod
    def from_hex(cls, text: str) -> "PublicKey":
        return cls(int(text, 16))

    def ciphertext(self, value: int) -> "Ciphertext":
        """Bind a raw integer (e.g. one received off the wire) to this key."""
        return Ciphertext(value, self.key_id)

    def __repr__(self) -> str:
        return f"PublicKey(bits={self.n.bit_length()}, id={self.key_id})"


@dataclass(frozen=True, repr=False)
class PrivateKey:
    public_key: PublicKey
    lam: int
    mu: int

    def __repr__(self) -> str:
        return f"PrivateKey(for={self.public_key.key_id})"


@dataclass(frozen=True)
class Ciphertext:
    value: int
    key_id: str

    def to_hex(self) -> str:
        return format(self.value, "x")


def _L(x: int, n: int) -> int:
    return (x - 1) // n


def keypair_from_primes(p: int, q: int) -> tuple[PublicKey, PrivateKey]:
    if p == q:
        raise KeygenError("p and q must be distinct")
    n = p * q
    if math.gcd(n, (p - 1) * (q - 1)) != 1:
        raise KeygenError("gcd(pq, (p-1)(q-1)) != 1")
    pk = PublicKey(n)
    lam = math.lcm(p - 1, q - 1)
    try:
        mu = pow(_L(powmod(pk.g, lam, pk.n_squared), n), -1, n)
    except ValueError:
        raise KeygenError("L(g^lambda mod n^2) is not invertible mod n") from None
    return pk, PrivateKey(pk, lam, mu)


def keygen(bit_length: int, rng) -> tuple[PublicKey, PrivateKey]:
    """Generate a keypair whose modulus has ``bit_length`` bits, deterministic per ``rng`` state."""
    if bit_length < MIN_KEY_BITS:
        raise KeygenError(f"bit_length must be >= {MIN_KEY_BITS}, got {bit_length}")
    half = bit_length // 2
    while True:
        p = random_prime(half, rng)
        q = random_prime(bit_length - half, rng)
        if p == q or math.gcd(p * q, (p - 1) * (q - 1)) != 1:
            continue
        if (p * q).bit_length() == bit_length:
            return keypair_from_primes(p, q)


def _check_key(pk: PublicKey, *cts: Ciphertext) -> None:
    for c in cts:
        if c.key_id != pk.key_id:
            raise WrongKeyError("ciphertext is bound to a different key")


def random_unit(pk: PublicKey, rng) -> int:
    """Uniform r in (0, n) co-prime to n."""
    while True:
        r = rng.randrange(1, pk.n)
        if math.gcd(r, pk.n) == 1:
            return r


def encrypt(pk: PublicKey, m: int, rng=None, r: int | None = None) -> Ciphertext:
    if not 0 <= m < pk.n:
        raise PlaintextRangeError(f"plaintext must lie in [0, n), got {m}")
    if r is None:
        if rng is None:
            raise ValueError("encrypt needs rng or an explicit r")
        r = random_unit(pk, rng)
    nn = pk.n_squared
    c = (1 + m * pk.n) % nn * powmod(r, pk.n, nn) % nn
    return Ciphertext(c, pk.key_id)


def decrypt(sk: PrivateKey, pk: PublicKey, c: Ciphertext) -> int:
    if sk.public_key != pk:
        raise WrongKeyError("private key does not match public key")
    _check_key(pk, c)
    return _L(powmod(c.value, sk.lam, pk.n_squared), pk.n) * sk.mu % pk.n


def c_add(pk: PublicKey, a: Ciphertext, b: Ciphertext) -> Ciphertext:
    _check_key(pk, a, b)
    return Ciphertext(a.value * b.value % pk.n_squared, pk.key_id)


def c_scalar_mul(pk: PublicKey, a: Ciphertext, k: int) -> Ciphertext:
    _check_key(pk, a)
    if not 0 <= k < pk.n:
        raise PlaintextRangeError(f"scalar must lie in [0, n), got {k}")
    return Ciphertext(powmod(a.value, k, pk.n_squared), pk.key_id)


def c_sum(pk: PublicKey, cts) -> Ciphertext:
    """Homomorphic sum of an iterable; the empty sum is the trivial encryption of 0."""
    acc = 1
    nn = pk.n_squared
    for c in cts:
        _check_key(pk, c)
        acc = acc * c.value % nn
    return Ciphertext(acc, pk.key_id)
