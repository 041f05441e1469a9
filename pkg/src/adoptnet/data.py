"""Data model and ingestion for candidate social networks and app-adoption logs.

Candidate networks are symmetric, non-negative, zero-diagonal weight matrices
over a fixed user universe with dense 0-based ids.  Adoption data is a binary
user x app matrix with optional install timestamps.  Loaders parse the CSV
formats described in the README and fail fast with line-numbered diagnostics.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import IO, Iterable, Sequence

import numpy as np

NETWORK_KINDS = ("weighted", "binary")
SYMMETRIZE_MODES = ("sum", "max", "strict")
NORMALIZE_MODES = ("none", "max", "total")


class DataFormatError(ValueError):
    """An input stream violates the expected format (message carries the line number)."""


class EmptyDataError(ValueError):
    """An operation that needs at least one adoption got an all-zero matrix."""


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class CandidateNetwork:
    """One candidate social network over the shared user universe.

    weights must be square, symmetric, non-negative with a zero diagonal;
    binary networks additionally restrict weights to {0, 1}.  The weight
    matrix is frozen after construction.
    """

    num_users: int
    weights: np.ndarray
    name: str = ""
    kind: str = "weighted"

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (self.num_users, self.num_users):
            raise ValueError(
                f"network {self.name!r}: weight matrix shape {w.shape} does not match "
                f"num_users={self.num_users}"
            )
        if self.kind not in NETWORK_KINDS:
            raise ValueError(f"network {self.name!r}: unknown kind {self.kind!r}")
        if not np.all(np.isfinite(w)):
            raise ValueError(f"network {self.name!r}: non-finite weight")
        if np.any(w < 0):
            raise ValueError(f"network {self.name!r}: negative weight")
        if np.any(np.diagonal(w) != 0):
            raise ValueError(f"network {self.name!r}: non-zero diagonal (self-loop)")
        if not np.array_equal(w, w.T):
            raise ValueError(f"network {self.name!r}: weight matrix is not symmetric")
        if self.kind == "binary" and not np.all((w == 0) | (w == 1)):
            raise ValueError(f"network {self.name!r}: binary network with weight outside {{0, 1}}")
        object.__setattr__(self, "weights", _freeze(w))

    @property
    def num_edges(self) -> int:
        return int(np.count_nonzero(np.triu(self.weights, k=1)))


@dataclass(frozen=True)
class AdoptionMatrix:
    """Binary user x app adoption matrix with optional install timestamps.

    installed is (num_users, num_apps) bool; install_times is float with NaN
    where no timestamp was recorded.  Timestamps may exist only on installed
    cells.  Instances are frozen after construction.
    """

    num_users: int
    num_apps: int
    installed: np.ndarray
    install_times: np.ndarray | None = None
    app_labels: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        x = np.asarray(self.installed, dtype=bool)
        if x.shape != (self.num_users, self.num_apps):
            raise ValueError(
                f"adoption matrix shape {x.shape} does not match "
                f"({self.num_users}, {self.num_apps})"
            )
        object.__setattr__(self, "installed", _freeze(x))
        if self.install_times is not None:
            t = np.asarray(self.install_times, dtype=float)
            if t.shape != x.shape:
                raise ValueError("install_times shape does not match installed")
            if np.any(np.isfinite(t) & ~x):
                raise ValueError("timestamp present on a cell that is not installed")
            object.__setattr__(self, "install_times", _freeze(t))
        labels = tuple(self.app_labels) if self.app_labels else tuple(
            f"app{j}" for j in range(self.num_apps)
        )
        if len(labels) != self.num_apps:
            raise ValueError("app_labels length does not match num_apps")
        object.__setattr__(self, "app_labels", labels)

    @property
    def has_timestamps(self) -> bool:
        """True when every installed cell carries a timestamp."""
        if self.install_times is None:
            return False
        return bool(np.all(np.isfinite(self.install_times[self.installed])))

    def adopters_of(self, app: int) -> np.ndarray:
        return np.flatnonzero(self.installed[:, app])

    def counts_per_app(self) -> np.ndarray:
        return self.installed.sum(axis=0)

    def counts_per_user(self) -> np.ndarray:
        return self.installed.sum(axis=1)


@dataclass(frozen=True)
class NetworkStack:
    """The candidate networks fed to the model, plus the optional popularity channel.

    popularity, when present, is a per-app non-negative vector (typically the
    install counts visible to the training run).
    """

    networks: tuple[CandidateNetwork, ...]
    popularity: np.ndarray | None = None

    def __post_init__(self) -> None:
        nets = tuple(self.networks)
        if not nets:
            raise ValueError("a stack needs at least one network")
        users = {g.num_users for g in nets}
        if len(users) != 1:
            raise ValueError(f"networks disagree on the user universe: {sorted(users)}")
        object.__setattr__(self, "networks", nets)
        if self.popularity is not None:
            c = np.asarray(self.popularity, dtype=float)
            if c.ndim != 1:
                raise ValueError("popularity must be a per-app vector")
            if np.any(~np.isfinite(c)) or np.any(c < 0):
                raise ValueError("popularity values must be finite and non-negative")
            object.__setattr__(self, "popularity", _freeze(c))

    @property
    def num_networks(self) -> int:
        return len(self.networks)

    @property
    def num_users(self) -> int:
        return self.networks[0].num_users


@dataclass(frozen=True)
class DatasetStats:
    """Adoption summary: degree histograms and the exponential activity rate."""

    num_users: int
    num_apps: int
    users_per_app: dict[int, int]
    apps_per_user: dict[int, int]
    mean_apps_per_user: float
    exp_rate: float

    def to_json(self) -> str:
        payload = {
            "num_users": self.num_users,
            "num_apps": self.num_apps,
            "users_per_app": [[int(k), int(v)] for k, v in sorted(self.users_per_app.items())],
            "apps_per_user": [[int(k), int(v)] for k, v in sorted(self.apps_per_user.items())],
            "mean_apps_per_user": self.mean_apps_per_user,
            "exp_rate": self.exp_rate,
        }
        return json.dumps(payload, indent=2, sort_keys=True)


def _lines(text: str | IO[str] | Iterable[str]) -> Iterable[tuple[int, str]]:
    if hasattr(text, "read"):
        text = text.read()  # type: ignore[union-attr]
    if isinstance(text, str):
        text = text.splitlines()
    for lineno, raw in enumerate(text, start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line


def _parse_user_id(token: str, num_users: int, lineno: int, what: str) -> int:
    try:
        value = int(token)
    except ValueError:
        raise DataFormatError(f"line {lineno}: {what} {token!r} is not an integer") from None
    if not 0 <= value < num_users:
        raise DataFormatError(
            f"line {lineno}: {what} {value} out of range [0, {num_users})"
        )
    return value


def load_network_edge_list(
    text: str | IO[str] | Iterable[str],
    num_users: int,
    kind: str = "weighted",
    symmetrize: str = "sum",
    name: str = "",
) -> CandidateNetwork:
    """Parse a `src,dst,weight` edge list into a CandidateNetwork.

    The weight field may be omitted (defaults to 1.0); `#` starts a comment.
    Ids are dense and 0-based.  Under ``sum`` the two directions accumulate,
    under ``max`` the larger entry wins, and ``strict`` requires the input to
    be given symmetrically and rejects any one-sided or conflicting pair.
    Self-loops, negative weights and out-of-range ids are rejected with the
    offending line number.
    """
    if kind not in NETWORK_KINDS:
        raise ValueError(f"unknown network kind {kind!r}")
    if symmetrize not in SYMMETRIZE_MODES:
        raise ValueError(f"unknown symmetrize mode {symmetrize!r}")
    directed = np.zeros((num_users, num_users), dtype=float)
    seen_line: dict[tuple[int, int], int] = {}
    for lineno, line in _lines(text):
        parts = [p.strip() for p in line.split(",")]
        if len(parts) not in (2, 3):
            raise DataFormatError(
                f"line {lineno}: expected `src,dst[,weight]`, got {line!r}"
            )
        src = _parse_user_id(parts[0], num_users, lineno, "src id")
        dst = _parse_user_id(parts[1], num_users, lineno, "dst id")
        if src == dst:
            raise DataFormatError(f"line {lineno}: self-loop on user {src}")
        if len(parts) == 3:
            try:
                weight = float(parts[2])
            except ValueError:
                raise DataFormatError(
                    f"line {lineno}: weight {parts[2]!r} is not a number"
                ) from None
        else:
            weight = 1.0
        if not math.isfinite(weight):
            raise DataFormatError(f"line {lineno}: non-finite weight")
        if weight < 0:
            raise DataFormatError(f"line {lineno}: negative weight {weight}")
        if kind == "binary" and weight not in (0.0, 1.0):
            raise DataFormatError(
                f"line {lineno}: binary network weight must be 0 or 1, got {weight}"
            )
        if symmetrize == "strict":
            if (src, dst) in seen_line:
                raise DataFormatError(
                    f"line {lineno}: duplicate edge {src},{dst} under strict mode "
                    f"(first seen on line {seen_line[(src, dst)]})"
                )
            seen_line[(src, dst)] = lineno
            directed[src, dst] = weight
        elif symmetrize == "sum":
            directed[src, dst] += weight
        else:  # max
            directed[src, dst] = max(directed[src, dst], weight)
            seen_line.setdefault((src, dst), lineno)

    if symmetrize == "strict":
        for (src, dst), lineno in sorted(seen_line.items(), key=lambda kv: kv[1]):
            if directed[dst, src] != directed[src, dst]:
                raise DataFormatError(
                    f"line {lineno}: edge {src},{dst} has no matching symmetric entry "
                    f"under strict mode"
                )
        weights = directed
    elif symmetrize == "sum":
        weights = directed + directed.T
    else:
        weights = np.maximum(directed, directed.T)

    if kind == "binary" and not np.all((weights == 0) | (weights == 1)):
        raise DataFormatError(
            "binary network: symmetrization produced a weight outside {0, 1} "
            "(use symmetrize='max' for binary edge lists)"
        )
    return CandidateNetwork(num_users=num_users, weights=weights, name=name, kind=kind)


def network_edge_lines(g: CandidateNetwork) -> list[str]:
    """Canonical edge-list serialization: one `i,j,w` line per upper-triangle edge."""
    rows, cols = np.nonzero(np.triu(g.weights, k=1))
    return [
        f"{i},{j},{float(g.weights[i, j])!r}"
        for i, j in zip(rows.tolist(), cols.tolist())
    ]


def load_adoptions(
    text: str | IO[str] | Iterable[str],
    num_users: int,
    num_apps: int,
    app_labels: Sequence[str] | None = None,
) -> AdoptionMatrix:
    """Parse `user,app[,timestamp]` lines into an AdoptionMatrix.

    Identical duplicate lines collapse to one entry; duplicates that disagree
    on the timestamp (including present-vs-absent) are rejected.  Ids are
    dense and 0-based; out-of-range ids are rejected with line numbers.
    """
    installed = np.zeros((num_users, num_apps), dtype=bool)
    times = np.full((num_users, num_apps), np.nan)
    seen: dict[tuple[int, int], tuple[float | None, int]] = {}
    any_time = False
    for lineno, line in _lines(text):
        parts = [p.strip() for p in line.split(",")]
        if len(parts) not in (2, 3):
            raise DataFormatError(
                f"line {lineno}: expected `user,app[,timestamp]`, got {line!r}"
            )
        user = _parse_user_id(parts[0], num_users, lineno, "user id")
        try:
            app = int(parts[1])
        except ValueError:
            raise DataFormatError(
                f"line {lineno}: app id {parts[1]!r} is not an integer"
            ) from None
        if not 0 <= app < num_apps:
            raise DataFormatError(
                f"line {lineno}: app id {app} out of range [0, {num_apps})"
            )
        stamp: float | None = None
        if len(parts) == 3:
            try:
                stamp = float(parts[2])
            except ValueError:
                raise DataFormatError(
                    f"line {lineno}: timestamp {parts[2]!r} is not a number"
                ) from None
            if not math.isfinite(stamp):
                raise DataFormatError(f"line {lineno}: non-finite timestamp")
        key = (user, app)
        if key in seen:
            prev_stamp, prev_line = seen[key]
            if prev_stamp != stamp:
                raise DataFormatError(
                    f"line {lineno}: duplicate entry {user},{app} conflicts with "
                    f"line {prev_line} (timestamps {prev_stamp} vs {stamp})"
                )
            continue
        seen[key] = (stamp, lineno)
        installed[user, app] = True
        if stamp is not None:
            times[user, app] = stamp
            any_time = True
    return AdoptionMatrix(
        num_users=num_users,
        num_apps=num_apps,
        installed=installed,
        install_times=times if any_time else None,
        app_labels=tuple(app_labels) if app_labels else (),
    )


def adoption_lines(m: AdoptionMatrix) -> list[str]:
    """Serialize an AdoptionMatrix back to `user,app[,timestamp]` lines."""
    out = []
    users, apps = np.nonzero(m.installed)
    for u, a in zip(users.tolist(), apps.tolist()):
        if m.install_times is not None and np.isfinite(m.install_times[u, a]):
            out.append(f"{u},{a},{float(m.install_times[u, a])!r}")
        else:
            out.append(f"{u},{a}")
    return out


def filter_min_users(
    adoptions: AdoptionMatrix, min_users: int = 2
) -> tuple[AdoptionMatrix, np.ndarray]:
    """Keep apps with at least ``min_users`` adopters, re-indexing densely.

    Returns the filtered matrix and the mapping ``kept``: new app id j came
    from original app id kept[j].
    """
    if min_users < 0:
        raise ValueError("min_users must be non-negative")
    kept = np.flatnonzero(adoptions.counts_per_app() >= min_users)
    times = None
    if adoptions.install_times is not None:
        times = adoptions.install_times[:, kept]
    return (
        AdoptionMatrix(
            num_users=adoptions.num_users,
            num_apps=int(kept.size),
            installed=adoptions.installed[:, kept],
            install_times=times,
            app_labels=tuple(adoptions.app_labels[j] for j in kept.tolist()),
        ),
        kept,
    )


def normalize_network(g: CandidateNetwork, mode: str = "max") -> CandidateNetwork:
    """Rescale weights: ``max`` divides by the largest weight, ``total`` by the sum.

    A network with no edges passes through unchanged; ``none`` is the identity.
    The result of ``total`` keeps the binary kind only if weights stay in {0, 1}.
    """
    if mode not in NORMALIZE_MODES:
        raise ValueError(f"unknown normalize mode {mode!r}")
    if mode == "none":
        return g
    denom = g.weights.max() if mode == "max" else g.weights.sum()
    if denom == 0:
        return g
    kind = g.kind
    scaled = g.weights / denom
    if kind == "binary" and not np.all((scaled == 0) | (scaled == 1)):
        kind = "weighted"
    return CandidateNetwork(num_users=g.num_users, weights=scaled, name=g.name, kind=kind)


def popularity_counts(
    adoptions: AdoptionMatrix, visible_users: Sequence[int] | np.ndarray | None = None
) -> np.ndarray:
    """Per-app install counts among ``visible_users`` (all users when None)."""
    if visible_users is None:
        return adoptions.installed.sum(axis=0).astype(float)
    visible = np.asarray(visible_users, dtype=int)
    if visible.size and (visible.min() < 0 or visible.max() >= adoptions.num_users):
        raise ValueError("visible_users contains an out-of-range id")
    return adoptions.installed[visible, :].sum(axis=0).astype(float)


def dataset_stats(adoptions: AdoptionMatrix) -> DatasetStats:
    """Degree histograms plus the exponential rate fitted to apps-per-user.

    The histograms cover every app (resp. user), including zero-count ones, so
    their total mass equals num_apps (resp. num_users).  exp_rate is the
    maximum-likelihood exponential rate 1 / mean(apps per user).
    """
    per_app = adoptions.counts_per_app()
    per_user = adoptions.counts_per_user()
    if per_user.sum() == 0:
        raise EmptyDataError("adoption matrix has no installs")
    upa = {int(k): int(v) for k, v in zip(*np.unique(per_app, return_counts=True))}
    apu = {int(k): int(v) for k, v in zip(*np.unique(per_user, return_counts=True))}
    mean = float(per_user.mean())
    return DatasetStats(
        num_users=adoptions.num_users,
        num_apps=adoptions.num_apps,
        users_per_app=upa,
        apps_per_user=apu,
        mean_apps_per_user=mean,
        exp_rate=1.0 / mean,
    )


def restrict_users(g: CandidateNetwork, users: Sequence[int] | np.ndarray) -> CandidateNetwork:
    """Induced subnetwork on ``users`` (given in the new id order)."""
    idx = np.asarray(users, dtype=int)
    return CandidateNetwork(
        num_users=int(idx.size),
        weights=g.weights[np.ix_(idx, idx)],
        name=g.name,
        kind=g.kind,
    )


def restrict_adoption_users(
    adoptions: AdoptionMatrix, users: Sequence[int] | np.ndarray
) -> AdoptionMatrix:
    """Adoption matrix restricted to ``users`` rows (new ids follow the given order)."""
    idx = np.asarray(users, dtype=int)
    times = None
    if adoptions.install_times is not None:
        times = adoptions.install_times[idx, :]
    return AdoptionMatrix(
        num_users=int(idx.size),
        num_apps=adoptions.num_apps,
        installed=adoptions.installed[idx, :],
        install_times=times,
        app_labels=adoptions.app_labels,
    )
