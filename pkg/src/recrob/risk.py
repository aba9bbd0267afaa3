"""Exact adversarial risk of a randomized ensemble as a configuration model.

The risk of sampling member i with probability alpha_i is a weighted sum,
over classes of data points, of the worst inner product between alpha and
the class's attainable vulnerability profiles (binary vectors marking which
members a single perturbation fools). This module holds that representation
and its exact evaluation:

* :class:`ProfileSet` -- a deduplicated set of vulnerability profiles,
* :class:`ConfigurationModel` -- a finite weighted list of profile sets,
* evaluation, subgradients, canonicalization, and enumeration helpers.

All objects are treated as immutable after construction; evaluation is pure.
"""

import numpy as np

from . import kernels
from .errors import CapacityError, InvalidInputError

WEIGHT_TOL = 1e-12
ALPHA_TOL = 1e-12


def validate_alpha(alpha, m=None):
    """Validate a sampling probability vector and return it as float64.

    Entries must be nonnegative and sum to 1 within ``ALPHA_TOL``; the
    vector is returned as given (no renormalization).
    """
    arr = np.asarray(alpha, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidInputError("sampling probability must be a nonempty 1-D vector")
    if m is not None and arr.size != m:
        raise InvalidInputError(
            f"sampling probability has length {arr.size}, expected {m}"
        )
    if np.any(arr < 0.0):
        raise InvalidInputError("sampling probability entries must be >= 0")
    total = float(np.sum(arr))
    if abs(total - 1.0) > ALPHA_TOL:
        raise InvalidInputError(f"sampling probability sums to {total!r}, not 1")
    return arr


def uniform_alpha(m):
    """The equiprobable sampling vector of length m."""
    if m < 1:
        raise InvalidInputError("need at least one member")
    return np.full(m, 1.0 / m)


def basis_alpha(m, i):
    """The deterministic strategy that always picks member i (0-based)."""
    if not 0 <= i < m:
        raise InvalidInputError(f"member index {i} out of range for m={m}")
    e = np.zeros(m)
    e[i] = 1.0
    return e


def as_profile(bits, m=None):
    """Validate a single vulnerability profile and return it as uint8."""
    arr = np.asarray(bits)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidInputError("profile must be a nonempty 1-D binary vector")
    if not np.isin(arr, (0, 1)).all():
        raise InvalidInputError("profile entries must be 0 or 1")
    if m is not None and arr.size != m:
        raise InvalidInputError(f"profile has length {arr.size}, expected {m}")
    return arr.astype(np.uint8)


class ProfileSet:
    """A deduplicated set of vulnerability profiles of common length.

    Rows are stored lexicographically descending, which makes the
    first-maximum rule of the kernels pick the lexicographically largest
    maximizer. The empty set is allowed and means "no perturbation fools
    anyone" (risk contribution zero).
    """

    __slots__ = ("matrix",)

    def __init__(self, rows, m=None):
        if isinstance(rows, ProfileSet):
            mat = rows.matrix
        else:
            rows = list(rows) if not isinstance(rows, np.ndarray) else rows
            if isinstance(rows, list) and len(rows) == 0:
                if m is None:
                    raise InvalidInputError("empty profile set needs an explicit length")
                mat = np.zeros((0, m), dtype=np.uint8)
            else:
                try:
                    arr = np.asarray(rows)
                except ValueError as exc:
                    raise InvalidInputError(
                        "profiles must form a 2-D array (mixed lengths are invalid)"
                    ) from exc
                if arr.ndim != 2:
                    raise InvalidInputError(
                        "profiles must form a 2-D array (mixed lengths are invalid)"
                    )
                if arr.shape[0] and not np.isin(arr, (0, 1)).all():
                    raise InvalidInputError("profile entries must be 0 or 1")
                mat = arr.astype(np.uint8)
        if m is not None and mat.shape[1] != m:
            raise InvalidInputError(
                f"profiles have length {mat.shape[1]}, expected {m}"
            )
        if mat.shape[0]:
            mat = np.unique(mat, axis=0)[::-1]  # dedup, then lex descending
        self.matrix = np.ascontiguousarray(mat)

    @property
    def m(self):
        return self.matrix.shape[1]

    @property
    def is_empty(self):
        return self.matrix.shape[0] == 0

    def __len__(self):
        return self.matrix.shape[0]

    def __iter__(self):
        return iter(self.matrix)

    def key(self):
        """Hashable identity (tuple of profile tuples, lex descending)."""
        return tuple(tuple(int(v) for v in row) for row in self.matrix)

    def __eq__(self, other):
        return isinstance(other, ProfileSet) and self.key() == other.key()

    def __hash__(self):
        return hash((self.m, self.key()))

    def __repr__(self):
        rows = ",".join("".join(str(int(v)) for v in row) for row in self.matrix)
        return f"ProfileSet[{rows or 'empty'}]"

    def canonicalize(self):
        """Drop componentwise-dominated profiles.

        Since alpha >= 0, a profile dominated by another never attains the
        maximum alone, so the induced risk is unchanged. A sole all-zero
        profile survives (it is dominated by nothing).
        """
        mat = self.matrix
        n = mat.shape[0]
        if n <= 1:
            return self
        keep = np.ones(n, dtype=bool)
        as_int = mat.astype(np.int16)
        for i in range(n):
            diff = as_int - as_int[i]
            dominated = np.all(diff >= 0, axis=1)
            dominated[i] = False
            if dominated.any():
                keep[i] = False
        return ProfileSet(mat[keep], m=self.m)


def canonicalize_profile_set(profiles):
    """Canonical (domination-free) form of a profile set.

    Accepts a :class:`ProfileSet` or raw rows; the maximum of ``u.alpha``
    over the set is unchanged for every alpha on the simplex.
    """
    if not isinstance(profiles, ProfileSet):
        profiles = ProfileSet(profiles)
    return profiles.canonicalize()


def per_config_risk(config, alpha):
    """Worst per-sample risk of one configuration: max over profiles of u.alpha.

    The empty configuration has risk 0 for every alpha.
    """
    if not isinstance(config, ProfileSet):
        config = ProfileSet(config)
    alpha = validate_alpha(alpha, m=config.m)
    if config.is_empty:
        return 0.0
    return float(np.max(config.matrix.astype(np.float64) @ alpha))


class ConfigurationModel:
    """Finite weighted mixture of profile-set configurations.

    ``entries`` is a sequence of ``(weight, profiles)`` pairs; weights must
    be nonnegative and sum to 1 within ``WEIGHT_TOL``. Weights are then
    renormalized so their float sum is exactly 1.0 (the largest weight
    absorbs the residual ulp), which keeps save/load round-trips stable.
    """

    __slots__ = ("m", "weights", "configs", "_flat")

    def __init__(self, m, entries):
        m = int(m)
        if m < 1:
            raise InvalidInputError("model needs at least one member")
        configs = []
        weights = []
        for weight, profiles in entries:
            configs.append(profiles if isinstance(profiles, ProfileSet) else ProfileSet(profiles, m=m))
            weights.append(float(weight))
        for k, config in enumerate(configs):
            if config.m != m:
                raise InvalidInputError(
                    f"entry {k} has profile length {config.m}, expected {m}"
                )
        w = np.asarray(weights, dtype=np.float64)
        if w.size == 0:
            raise InvalidInputError("model needs at least one entry")
        if np.any(w < 0.0):
            raise InvalidInputError("entry weights must be >= 0")
        total = float(np.sum(w))
        if abs(total - 1.0) > WEIGHT_TOL:
            raise InvalidInputError(f"entry weights sum to {total!r}, not 1")
        if total != 1.0:
            w = w / total
        residual = 1.0 - float(np.sum(w))
        if residual != 0.0:
            w[int(np.argmax(w))] += residual
        self.m = m
        self.weights = w
        self.configs = tuple(configs)
        self._flat = self._flatten()

    def _flatten(self):
        kept_w = []
        blocks = []
        offsets = [0]
        for weight, config in zip(self.weights, self.configs):
            if config.is_empty:
                continue
            kept_w.append(weight)
            blocks.append(config.matrix.astype(np.float64))
            offsets.append(offsets[-1] + config.matrix.shape[0])
        if blocks:
            profiles = np.ascontiguousarray(np.vstack(blocks))
        else:
            profiles = np.zeros((0, self.m), dtype=np.float64)
        return (
            np.asarray(kept_w, dtype=np.float64),
            profiles,
            np.asarray(offsets, dtype=np.intp),
        )

    @property
    def n_entries(self):
        return len(self.configs)

    def entries(self):
        return list(zip(self.weights, self.configs))

    def risk(self, alpha):
        """Exact risk at one sampling probability."""
        alpha = validate_alpha(alpha, m=self.m)
        w, profiles, offsets = self._flat
        return float(kernels.risk_many(w, profiles, offsets, alpha[None, :])[0])

    def risk_many(self, alphas):
        """Exact risk at each row of ``alphas`` (B, m) -> (B,)."""
        alphas = np.atleast_2d(np.asarray(alphas, dtype=np.float64))
        if alphas.shape[1] != self.m:
            raise InvalidInputError(
                f"alphas have length {alphas.shape[1]}, expected {self.m}"
            )
        w, profiles, offsets = self._flat
        return kernels.risk_many(w, profiles, offsets, alphas)

    def risk_and_subgradient(self, alpha):
        """Risk and the deterministic tie-broken subgradient at alpha."""
        alpha = validate_alpha(alpha, m=self.m)
        w, profiles, offsets = self._flat
        eta, g = kernels.risk_and_subgrad(w, profiles, offsets, alpha)
        return eta, g

    def canonicalized(self):
        """Same model with every entry canonicalized (risk unchanged)."""
        return ConfigurationModel(
            self.m, [(w, c.canonicalize()) for w, c in self.entries()]
        )

    def to_dict(self):
        return {
            "M": self.m,
            "entries": [
                {
                    "weight": float(w),
                    "profiles": [[int(v) for v in row] for row in c.matrix],
                }
                for w, c in self.entries()
            ],
        }

    def __repr__(self):
        return f"ConfigurationModel(m={self.m}, entries={self.n_entries})"


def risk_eval(model, alpha):
    """Exact adversarial risk of the model at ``alpha``."""
    return model.risk(alpha)


def individual_risks(model):
    """Per-member risks: the model evaluated at each basis vector."""
    return model.risk_many(np.eye(model.m))


def model_subgradient(model, alpha):
    """One subgradient of the risk at ``alpha``.

    Equal to ``sum_k w_k u*_k`` with ``u*_k`` the lexicographically largest
    maximizer of ``u.alpha`` in entry k; deterministic for reproducible
    optimization runs.
    """
    return model.risk_and_subgradient(alpha)[1]


def configuration_from_errors(error_matrix):
    """Build the canonical profile set observed in a per-perturbation error matrix.

    Rows are per-perturbation member-error indicator vectors; the result is
    the deduplicated, domination-free set of rows. An empty matrix yields
    the empty set (risk 0).
    """
    arr = np.asarray(error_matrix)
    if arr.ndim != 2:
        raise InvalidInputError("error matrix must be 2-D (n_perturbations x members)")
    if arr.shape[0] and not np.isin(arr, (0, 1)).all():
        raise InvalidInputError("error matrix entries must be 0 or 1")
    return ProfileSet(arr.astype(np.uint8), m=arr.shape[1]).canonicalize()


ENUMERATION_MAX_MEMBERS = 4


def enumerate_reduced_configurations(m):
    """All canonical configurations of an m-member ensemble.

    These are the antichains of nonzero profiles under componentwise
    domination, plus the single zero/empty configuration; each induces a
    distinct risk function. Guarded to small m (the count grows doubly
    exponentially).
    """
    m = int(m)
    if m < 1:
        raise InvalidInputError("need at least one member")
    if m > ENUMERATION_MAX_MEMBERS:
        raise CapacityError(
            f"configuration enumeration supports m <= {ENUMERATION_MAX_MEMBERS}"
        )
    nonzero = [
        np.array([(code >> bit) & 1 for bit in range(m)], dtype=np.uint8)
        for code in range(1, 2**m)
    ]
    n = len(nonzero)
    dominated_by = [0] * n  # bitmask of strict dominators
    for i in range(n):
        for j in range(n):
            if i != j and np.all(nonzero[j] >= nonzero[i]):
                dominated_by[i] |= 1 << j
    results = [ProfileSet([], m=m)]
    for subset in range(1, 1 << n):
        ok = True
        probe = subset
        while probe:
            low = probe & -probe
            if dominated_by[low.bit_length() - 1] & subset:
                ok = False
                break
            probe ^= low
        if ok:
            rows = [nonzero[i] for i in range(n) if subset >> i & 1]
            results.append(ProfileSet(rows, m=m))
    return results


def random_model(m, rng, max_entries=6, max_profiles=3, ensure_positive_risks=False):
    """A random configuration model, for tests and verification sweeps.

    Entries get random binary profile rows (possibly none: the empty
    configuration) and Dirichlet weights. With ``ensure_positive_risks`` an
    all-ones entry is appended so every member has strictly positive risk.
    """
    k = int(rng.integers(1, max_entries + 1))
    entries = []
    for _ in range(k):
        n_prof = int(rng.integers(0, max_profiles + 1))
        rows = rng.integers(0, 2, size=(n_prof, m))
        entries.append(ProfileSet(rows, m=m))
    if ensure_positive_risks:
        entries.append(ProfileSet(np.ones((1, m), dtype=np.uint8)))
    weights = rng.dirichlet(np.ones(len(entries)))
    return ConfigurationModel(m, list(zip(weights, entries)))
