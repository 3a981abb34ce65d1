"""Kernel-spectrum entropy estimation.

Entropy of a batch of samples is measured on the eigenvalues of a
trace-normalized Gram matrix, so no density estimate is ever formed.
Joint quantities over several variables come from the Hadamard product
of their normalized kernels, and mutual / conditional mutual information
follow as sums and differences of (joint) entropies, all in bits.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .errors import (
    BandwidthDegenerate,
    DimensionMismatch,
    EigenFailure,
    NegativeSpectrum,
    NonFiniteInput,
    ZeroDiagonal,
    ZeroTrace,
)

# Eigenvalues of a unit-trace PSD matrix live in [0, 1]; symmetric solvers
# emit noise around both ends.  Values below -NEG_EIG_TOL mean the matrix
# itself is corrupt rather than merely noisy.
NEG_EIG_TOL = 1e-8


@dataclass(frozen=True)
class EntropyOrder:
    """Order parameter of the entropy family.

    The Shannon limit is approached (alpha near 1) but never evaluated at 1,
    where the 1/(1-alpha) prefactor is singular.
    """

    alpha: float = 1.01

    def __post_init__(self):
        if not np.isfinite(self.alpha) or self.alpha <= 0:
            raise ValueError(f"alpha must be a positive real, got {self.alpha}")
        if abs(self.alpha - 1.0) < 1e-6:
            raise ValueError("alpha too close to 1; use e.g. 1.01 for the Shannon-like regime")


OrderLike = Union[EntropyOrder, float]


def _as_order(order: OrderLike) -> EntropyOrder:
    return order if isinstance(order, EntropyOrder) else EntropyOrder(float(order))


@dataclass(frozen=True)
class KernelSpec:
    """How to turn raw feature samples into a Gram matrix.

    kind 'rbf' uses exp(-||x_i - x_j||^2 / (2 sigma^2)); sigma comes from
    the median heuristic when `sigma` is None.  kind 'delta' is the
    0/1 label-agreement kernel and requires a single integer column.
    """

    kind: str = "rbf"
    sigma: float | None = None  # None -> median heuristic

    def __post_init__(self):
        if self.kind not in ("rbf", "delta"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.sigma is not None and not self.sigma > 0:
            raise ValueError("fixed sigma must be positive")


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """n samples x d flattened activation values of one feature map.

    Spatial maps (H x W per sample) are flattened row-major into d = H*W
    columns before kernelization.
    """

    data: np.ndarray
    layer_id: int = 0
    feature_index: int = 0

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise ValueError(f"feature data must be 2-D, got shape {data.shape}")
        if data.shape[0] < 2 or data.shape[1] < 1:
            raise ValueError(f"need n >= 2 samples and d >= 1 columns, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise NonFiniteInput(
                f"layer {self.layer_id} feature {self.feature_index}: non-finite entries"
            )
        object.__setattr__(self, "data", data)

    @property
    def n(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True, eq=False)
class NormalizedKernel:
    """Symmetric n x n similarity matrix with unit trace and diagonal 1/n."""

    g: np.ndarray
    validate: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        g = np.asarray(self.g, dtype=np.float64)
        object.__setattr__(self, "g", g)
        if not self.validate:
            return
        n = g.shape[0]
        if g.ndim != 2 or g.shape[1] != n:
            raise DimensionMismatch(f"kernel must be square, got {g.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteInput("kernel has non-finite entries")
        if abs(np.trace(g) - 1.0) > 1e-12:
            raise ValueError(f"trace {np.trace(g)!r} != 1")
        if np.max(np.abs(np.diag(g) - 1.0 / n)) > 1e-12:
            raise ValueError("diagonal entries must equal 1/n")
        if np.max(np.abs(g - g.T)) > 1e-12:
            raise ValueError("kernel must be symmetric")

    @property
    def n(self) -> int:
        return self.g.shape[0]


@dataclass(frozen=True, eq=False)
class EigenSpectrum:
    """Descending, clamped eigenvalues of a normalized kernel."""

    eigenvalues: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "eigenvalues", np.asarray(self.eigenvalues, dtype=np.float64)
        )


def _pairwise_sq_dists(x: np.ndarray) -> np.ndarray:
    sq = np.sum(x * x, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.maximum(d2, 0.0, out=d2)
    return d2


def median_heuristic_bandwidth(x: np.ndarray) -> float:
    """Median Euclidean distance over the n(n-1)/2 sample pairs.

    Falls back to 1.0 (with a BandwidthDegenerate warning) when the median
    is zero, e.g. for a constant feature.
    """
    d2 = _pairwise_sq_dists(np.asarray(x, dtype=np.float64))
    iu = np.triu_indices(d2.shape[0], k=1)
    med = float(np.median(np.sqrt(d2[iu])))
    if med <= 0.0:
        warnings.warn("median pairwise distance is 0; using sigma = 1", BandwidthDegenerate)
        return 1.0
    return med


def build_kernel(x: FeatureMatrix, spec: KernelSpec = KernelSpec()) -> NormalizedKernel:
    """Build the unit-trace normalized kernel G of one feature.

    G_ij = (1/n) * K_ij / sqrt(K_ii * K_jj), with K the raw Gram matrix of
    `spec.kind`.  The cosine-style normalization forces diagonal 1/n, so G
    is PSD with eigenvalues in [0, 1] summing to one.
    """
    data = x.data
    n = x.n
    if spec.kind == "rbf":
        sigma = spec.sigma if spec.sigma is not None else median_heuristic_bandwidth(data)
        k = np.exp(_pairwise_sq_dists(data) / (-2.0 * sigma * sigma))
    else:  # delta
        if data.shape[1] != 1:
            raise ValueError("delta kernel requires a single column of class labels")
        labels = data[:, 0]
        if not np.all(labels == np.round(labels)):
            raise ValueError("delta kernel requires integer-valued labels")
        k = (labels[:, None] == labels[None, :]).astype(np.float64)
    diag = np.diag(k)
    if np.any(diag <= 0.0):
        # unreachable for rbf/delta; guards kernels added later
        raise ZeroDiagonal("Gram matrix has a non-positive diagonal entry")
    inv_root = 1.0 / np.sqrt(diag)
    g = (k * inv_root[:, None] * inv_root[None, :]) / n
    g = 0.5 * (g + g.T)  # kill asymmetry at the last bit
    np.fill_diagonal(g, 1.0 / n)
    return NormalizedKernel(g)


def label_kernel(labels: np.ndarray) -> NormalizedKernel:
    """Delta kernel of an integer label vector, shaped for build_kernel."""
    col = np.asarray(labels, dtype=np.float64).reshape(-1, 1)
    return build_kernel(FeatureMatrix(col), KernelSpec(kind="delta"))


def eigenspectrum(g: NormalizedKernel) -> EigenSpectrum:
    """Descending eigenvalues of G, clamped into [0, 1].

    Values in [-1e-8, 0) are solver noise and clamp to 0; anything below
    raises NegativeSpectrum because it signals a corrupt kernel.  Positive
    values under the numerical-rank floor n*eps*lambda_max are zeroed too:
    for alpha < 1 the power law would otherwise amplify pure solver noise
    into the entropy.
    """
    try:
        vals = np.linalg.eigvalsh(g.g)
    except np.linalg.LinAlgError as e:
        raise EigenFailure(str(e)) from e
    if vals[0] < -NEG_EIG_TOL:
        raise NegativeSpectrum(f"eigenvalue {vals[0]} below -{NEG_EIG_TOL}")
    vals = np.clip(vals, 0.0, 1.0)
    floor = len(vals) * np.finfo(np.float64).eps * vals[-1]
    vals[vals < floor] = 0.0
    return EigenSpectrum(vals[::-1])


def renyi_entropy(g: NormalizedKernel, order: OrderLike = 1.01) -> float:
    """Spectral entropy (1/(1-alpha)) * log2(sum_i lambda_i^alpha), in bits.

    Bounded by [0, log2 n]; 0^alpha is taken as 0 so rank-deficient kernels
    are handled for every alpha > 0.
    """
    alpha = _as_order(order).alpha
    lam = eigenspectrum(g).eigenvalues
    lam = lam[lam > 0.0]
    total = float(np.sum(lam**alpha))
    return max(np.log2(total) / (1.0 - alpha), 0.0)


def _hadamard_joint(gs: Sequence[NormalizedKernel]) -> NormalizedKernel:
    """Left-fold Hadamard product of the list, renormalized to unit trace."""
    if len(gs) == 0:
        raise ValueError("need at least one kernel")
    n = gs[0].n
    prod = gs[0].g
    for g in gs[1:]:
        if g.n != n:
            raise DimensionMismatch(f"kernel sizes differ: {g.n} vs {n}")
        prod = prod * g.g
    return normalize_product(prod)


def normalize_product(prod: np.ndarray) -> NormalizedKernel:
    """Divide an elementwise kernel product by its trace."""
    tr = float(np.trace(prod))
    if tr < 1e-300:
        raise ZeroTrace("Hadamard product trace underflowed; reduce the factor count or n")
    return NormalizedKernel(prod / tr, validate=False)


def joint_entropy(gs: Sequence[NormalizedKernel], order: OrderLike = 1.01) -> float:
    """Entropy of the trace-normalized Hadamard product of `gs`, in bits.

    A single-kernel list is a passthrough to renyi_entropy.
    """
    if len(gs) == 1:
        return renyi_entropy(gs[0], order)
    return renyi_entropy(_hadamard_joint(gs), order)


def mutual_information(
    g_y: NormalizedKernel, gs: Sequence[NormalizedKernel], order: OrderLike = 1.01
) -> float:
    """I(Y; X_1, ..., X_L) = S(Y) + S(X_1..X_L) - S(X_1..X_L, Y), in bits.

    May be slightly negative from estimation error; never NaN.
    """
    if len(gs) == 0:
        raise ValueError("need at least one kernel on the right-hand side")
    s_y = renyi_entropy(g_y, order)
    s_x = joint_entropy(gs, order)
    s_xy = joint_entropy([*gs, g_y], order)
    return s_y + s_x - s_xy


def conditional_mi(
    g_x: NormalizedKernel | Sequence[NormalizedKernel],
    g_y: NormalizedKernel,
    g_z: Sequence[NormalizedKernel],
    order: OrderLike = 1.01,
) -> float:
    """I(X; Y | Z) = S(X,Z) + S(Y,Z) - S(X,Y,Z) - S(Z), in bits.

    X may be a single kernel or a list treated jointly.  An empty Z
    degrades to plain mutual information; an empty X carries no
    information and gives 0.
    """
    xs = [g_x] if isinstance(g_x, NormalizedKernel) else list(g_x)
    zs = list(g_z)
    if not xs:
        return 0.0
    if not zs:
        return mutual_information(g_y, xs, order)
    s_xz = joint_entropy([*xs, *zs], order)
    s_yz = joint_entropy([g_y, *zs], order)
    s_xyz = joint_entropy([*xs, g_y, *zs], order)
    s_z = joint_entropy(zs, order)
    return s_xz + s_yz - s_xyz - s_z
