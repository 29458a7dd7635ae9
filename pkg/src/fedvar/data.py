"""Synthetic datasets and client partitioning.

Three ways to build a federation from a labeled pool:

* ``dirichlet_partition`` — per-class Dirichlet allocation across clients
  (small concentration => strong label shift), each client then split
  into local train/test sets;
* ``one_vs_rest_partition`` — a two-class federation where client 0 leans
  toward class 0 and everyone else toward class 1, with exact marginals;
* ``shared_pool_clients`` — clients defined as per-class weighted views of
  one shared pool, so each client's loss is exactly the marginal-weighted
  sum of per-class pool losses (useful for closed-form checks).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import dirichlet_sample
from .rng import Rng, as_generator


@dataclass
class Dataset:
    """Dense sample block: features (n, dim) float64, labels (n,) int64."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self) -> None:
        self.x = np.ascontiguousarray(self.x, dtype=np.float64)
        self.y = np.ascontiguousarray(self.y, dtype=np.int64)
        if self.x.ndim != 2 or self.y.shape != (self.x.shape[0],):
            raise ValueError(f"inconsistent dataset shapes {self.x.shape} / {self.y.shape}")

    def __len__(self) -> int:
        return self.x.shape[0]

    def subset(self, rows: np.ndarray) -> Dataset:
        return Dataset(self.x[rows], self.y[rows])


@dataclass
class LabeledPool:
    """A dataset plus its class structure."""

    data: Dataset
    n_classes: int
    class_rows: list[np.ndarray] = field(init=False)

    def __post_init__(self) -> None:
        if self.data.y.min(initial=0) < 0 or (len(self.data) and self.data.y.max() >= self.n_classes):
            raise ValueError("labels out of range")
        self.class_rows = [np.flatnonzero(self.data.y == j) for j in range(self.n_classes)]

    @property
    def in_dim(self) -> int:
        return self.data.x.shape[1]

    def __len__(self) -> int:
        return len(self.data)

    def class_marginal(self) -> np.ndarray:
        counts = np.array([rows.size for rows in self.class_rows], dtype=np.float64)
        return counts / counts.sum()


@dataclass
class ClientDataset:
    """One client's local train/test data and its share of the federation.

    ``weight`` is n_i / N (train-set share).  ``class_weights`` is set only
    in shared-pool mode, where train/test reference the shared pool and the
    client's loss is the class-weighted mean.
    """

    client_id: int
    train: Dataset
    test: Dataset
    weight: float
    class_marginal: np.ndarray
    class_weights: np.ndarray | None = None


@dataclass
class Federation:
    clients: list[ClientDataset]
    n_classes: int
    in_dim: int
    shared_pool: bool = False

    def __post_init__(self) -> None:
        ids = [c.client_id for c in self.clients]
        if ids != list(range(len(ids))):
            raise ValueError("client ids must be dense 0..n-1 in order")
        total = sum(c.weight for c in self.clients)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"client weights sum to {total}, expected 1")

    @property
    def n_clients(self) -> int:
        return len(self.clients)

    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.clients])


def make_gaussian_mixture(
    rng: Rng | np.random.Generator,
    n_classes: int,
    in_dim: int,
    per_class: int,
    separation: float,
) -> LabeledPool:
    """Balanced isotropic Gaussian mixture, one unit-variance blob per class.

    Class means sit at distance ``separation`` from the origin in random
    directions; separation 0 makes all classes indistinguishable.
    """
    if n_classes < 2:
        raise ValueError(f"need at least 2 classes, got {n_classes}")
    if per_class < 1:
        raise ValueError(f"per_class must be >= 1, got {per_class}")
    if separation < 0:
        raise ValueError(f"separation must be >= 0, got {separation}")
    gen = as_generator(rng)
    directions = gen.standard_normal((n_classes, in_dim))
    norms = np.linalg.norm(directions, axis=1, keepdims=True)
    means = separation * directions / norms
    x = np.concatenate(
        [means[j] + gen.standard_normal((per_class, in_dim)) for j in range(n_classes)]
    )
    y = np.repeat(np.arange(n_classes), per_class)
    return LabeledPool(Dataset(x, y), n_classes)


def train_test_split(
    rng: Rng | np.random.Generator, dataset: Dataset, ratio: float
) -> tuple[Dataset, Dataset]:
    """Disjoint split with |train| = round(ratio * n), clamped to leave
    at least one sample on each side."""
    n = len(dataset)
    if n < 2:
        raise ValueError(f"need at least 2 samples to split, got {n}")
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must be in (0, 1), got {ratio}")
    n_train = int(np.floor(ratio * n + 0.5))
    n_train = min(max(n_train, 1), n - 1)
    perm = as_generator(rng).permutation(n)
    return dataset.subset(np.sort(perm[:n_train])), dataset.subset(np.sort(perm[n_train:]))


def stratified_split(
    rng: Rng | np.random.Generator, pool: LabeledPool, ratio: float
) -> tuple[LabeledPool, LabeledPool]:
    """Per-class train/test split of a pool, keeping every class populated
    on both sides."""
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must be in (0, 1), got {ratio}")
    gen = as_generator(rng)
    train_rows, test_rows = [], []
    for rows in pool.class_rows:
        if rows.size < 2:
            raise ValueError("every class needs >= 2 samples for a stratified split")
        n_train = int(np.floor(ratio * rows.size + 0.5))
        n_train = min(max(n_train, 1), rows.size - 1)
        perm = gen.permutation(rows.size)
        train_rows.append(rows[np.sort(perm[:n_train])])
        test_rows.append(rows[np.sort(perm[n_train:])])
    tr = np.concatenate(train_rows)
    te = np.concatenate(test_rows)
    return (
        LabeledPool(pool.data.subset(tr), pool.n_classes),
        LabeledPool(pool.data.subset(te), pool.n_classes),
    )


def _marginal_of(y: np.ndarray, n_classes: int) -> np.ndarray:
    counts = np.bincount(y, minlength=n_classes).astype(np.float64)
    return counts / counts.sum()


def dirichlet_partition(
    rng: Rng | np.random.Generator,
    pool: LabeledPool,
    n_clients: int,
    concentration: float,
    split_ratio: float = 0.5,
) -> Federation:
    """Label-shift partition: each class's samples are divided among clients
    with Dirichlet(concentration)-drawn proportions, then each client's data
    is split into local train/test sets.

    Extreme draws can leave a client with too few samples to split; the
    whole allocation is redrawn (up to 100 times), after which leftover
    deficits are patched by moving samples from the largest clients.
    """
    if n_clients < 1:
        raise ValueError(f"n_clients must be >= 1, got {n_clients}")
    if concentration <= 0:
        raise ValueError(f"concentration must be positive, got {concentration}")
    gen = as_generator(rng)

    min_per_client = 2  # one train + one test sample
    shares: list[list[np.ndarray]] = []
    for _ in range(100):
        shares = [[] for _ in range(n_clients)]
        for rows in pool.class_rows:
            if rows.size == 0:
                continue
            props = dirichlet_sample(gen, concentration, n_clients)
            shuffled = rows[gen.permutation(rows.size)]
            cuts = np.minimum((np.cumsum(props) * rows.size).astype(np.int64), rows.size)[:-1]
            for cid, part in enumerate(np.split(shuffled, cuts)):
                shares[cid].append(part)
        sizes = [sum(p.size for p in parts) for parts in shares]
        if min(sizes) >= min_per_client:
            break
    else:
        _patch_empty_clients(shares, min_per_client)

    clients = []
    client_rows = [np.concatenate(parts) if parts else np.empty(0, dtype=np.int64) for parts in shares]
    n_total_train = 0
    splits = []
    for cid, rows in enumerate(client_rows):
        local = pool.data.subset(rows)
        train, test = train_test_split(gen, local, split_ratio)
        splits.append((train, test))
        n_total_train += len(train)
    for cid, (train, test) in enumerate(splits):
        clients.append(
            ClientDataset(
                client_id=cid,
                train=train,
                test=test,
                weight=len(train) / n_total_train,
                class_marginal=_marginal_of(train.y, pool.n_classes),
            )
        )
    return Federation(clients, pool.n_classes, pool.in_dim)


def _patch_empty_clients(shares: list[list[np.ndarray]], min_per_client: int) -> None:
    """Round-robin samples from the largest clients into deficient ones."""
    sizes = [sum(p.size for p in parts) for parts in shares]
    for cid, size in enumerate(sizes):
        while sizes[cid] < min_per_client:
            donor = int(np.argmax(sizes))
            if sizes[donor] <= min_per_client:
                raise ValueError("not enough samples to give every client a train/test pair")
            for part in shares[donor]:
                if part.size > 0:
                    shares[cid].append(part[-1:])
                    shares[donor][shares[donor].index(part)] = part[:-1]
                    break
            sizes[donor] -= 1
            sizes[cid] += 1


def shared_pool_clients(
    pool: LabeledPool,
    marginals: list[np.ndarray] | np.ndarray,
    test_pool: LabeledPool | None = None,
) -> Federation:
    """Clients as weighted views of one shared pool.

    Client i's loss is exactly sum_j marginal_i[j] * (mean loss on the
    pool's class-j samples) — an identity, not just an expectation.  All
    clients get equal federation weight 1/n.
    """
    marginals = [np.asarray(m, dtype=np.float64) for m in marginals]
    if not marginals:
        raise ValueError("need at least one client marginal")
    for m in marginals:
        if m.shape != (pool.n_classes,):
            raise ValueError(f"marginal shape {m.shape} != ({pool.n_classes},)")
        if (m < 0).any() or abs(m.sum() - 1.0) > 1e-9:
            raise ValueError(f"marginal {m} is not a probability vector")
    for j, rows in enumerate(pool.class_rows):
        if rows.size == 0 and any(m[j] > 0 for m in marginals):
            raise ValueError(f"pool has no samples of class {j} but a client weights it")
    test = (test_pool or pool).data
    if test_pool is not None and test_pool.n_classes != pool.n_classes:
        raise ValueError("test pool class count differs from train pool")
    n = len(marginals)
    clients = [
        ClientDataset(
            client_id=i,
            train=pool.data,
            test=test,
            weight=1.0 / n,
            class_marginal=m,
            class_weights=m,
        )
        for i, m in enumerate(marginals)
    ]
    return Federation(clients, pool.n_classes, pool.in_dim, shared_pool=True)


def one_vs_rest_marginals(n_clients: int, alpha: float) -> list[np.ndarray]:
    """Two-class marginals where client 0 leans toward class 0 and the rest
    toward class 1: client 0 gets (1 - alpha/2, alpha/2), others the reverse.
    alpha=1 is uniform everywhere; alpha=0 makes client 0 hold only class 0.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    if n_clients < 2:
        raise ValueError(f"need at least 2 clients, got {n_clients}")
    skewed = np.array([1.0 - alpha / 2.0, alpha / 2.0])
    return [skewed.copy()] + [skewed[::-1].copy() for _ in range(n_clients - 1)]


def one_vs_rest_partition(
    pool: LabeledPool,
    n_clients: int,
    alpha: float,
    test_pool: LabeledPool | None = None,
) -> Federation:
    """Shared-pool federation with the one-vs-rest marginal family, so the
    stored marginals are exact rather than sampled."""
    if pool.n_classes != 2:
        raise ValueError(f"requires a two-class pool, got {pool.n_classes} classes")
    return shared_pool_clients(pool, one_vs_rest_marginals(n_clients, alpha), test_pool)


# --- line-delimited text export -------------------------------------------

_FED_HEADER = "fedvar-federation-v1"


def _dump_dataset(lines: list[str], split: str, ds: Dataset, n_classes: int) -> None:
    lines.append(f"dataset {split} {len(ds)} {ds.x.shape[1]} {n_classes}")
    for row, label in zip(ds.x, ds.y):
        lines.append(" ".join([str(int(label))] + [repr(float(v)) for v in row]))


def dump_federation(federation: Federation, path: str) -> None:
    """Write the federation as line-delimited text; floats use repr, which
    round-trips exactly."""
    lines = [
        f"{_FED_HEADER} clients={federation.n_clients} "
        f"classes={federation.n_classes} dim={federation.in_dim} "
        f"shared_pool={int(federation.shared_pool)}"
    ]
    for c in federation.clients:
        marg = ",".join(repr(float(v)) for v in c.class_marginal)
        cw = (
            ",".join(repr(float(v)) for v in c.class_weights)
            if c.class_weights is not None
            else "-"
        )
        lines.append(f"client id={c.client_id} weight={float(c.weight)!r} marginal={marg} class_weights={cw}")
        _dump_dataset(lines, "train", c.train, federation.n_classes)
        _dump_dataset(lines, "test", c.test, federation.n_classes)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_dataset(lines: list[str], pos: int, split: str) -> tuple[Dataset, int]:
    head = lines[pos].split()
    if head[:2] != ["dataset", split]:
        raise ValueError(f"expected 'dataset {split}' block at line {pos + 1}")
    n, dim = int(head[2]), int(head[3])
    x = np.empty((n, dim))
    y = np.empty(n, dtype=np.int64)
    for i in range(n):
        parts = lines[pos + 1 + i].split()
        y[i] = int(parts[0])
        x[i] = [float(v) for v in parts[1:]]
    return Dataset(x, y), pos + 1 + n


def load_federation(path: str) -> Federation:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    head = lines[0].split()
    if head[0] != _FED_HEADER:
        raise ValueError(f"{path}: not a fedvar federation file")
    meta = dict(part.split("=") for part in head[1:])
    n_clients = int(meta["clients"])
    n_classes = int(meta["classes"])
    shared = bool(int(meta["shared_pool"]))
    clients = []
    pos = 1
    for _ in range(n_clients):
        fields = dict(part.split("=") for part in lines[pos].split()[1:])
        pos += 1
        train, pos = _parse_dataset(lines, pos, "train")
        test, pos = _parse_dataset(lines, pos, "test")
        cw = fields["class_weights"]
        clients.append(
            ClientDataset(
                client_id=int(fields["id"]),
                train=train,
                test=test,
                weight=float(fields["weight"]),
                class_marginal=np.array([float(v) for v in fields["marginal"].split(",")]),
                class_weights=None if cw == "-" else np.array([float(v) for v in cw.split(",")]),
            )
        )
    return Federation(clients, n_classes, int(meta["dim"]), shared_pool=shared)
