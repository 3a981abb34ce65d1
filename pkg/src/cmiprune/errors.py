"""Exception and warning types shared across the package."""


class CmipruneError(Exception):
    """Base class for all library errors."""


# --- kernel / entropy ---------------------------------------------------

class NonFiniteInput(CmipruneError):
    """Input data contains NaN or infinity."""


class ZeroDiagonal(CmipruneError):
    """Gram matrix has a zero diagonal entry; cosine normalization undefined."""


class EigenFailure(CmipruneError):
    """Symmetric eigensolver did not converge."""


class NegativeSpectrum(CmipruneError):
    """Eigenvalue below -1e-8: the kernel matrix is corrupt, not merely noisy."""


class DimensionMismatch(CmipruneError):
    """Matrices in one computation do not share the same sample count."""


class ZeroTrace(CmipruneError):
    """Hadamard product trace underflowed to zero; too many factors for float64."""


# --- ordering -----------------------------------------------------------

class EmptyLayer(CmipruneError):
    """A layer must contain at least one feature map."""


class ContextStrategyMismatch(CmipruneError):
    """Conditioning context inconsistent with the selected strategy."""


# --- cutoff -------------------------------------------------------------

class EvaluatorFailure(CmipruneError):
    """Trial evaluator raised or returned an out-of-range accuracy."""


class EmptyRemaining(CmipruneError):
    """Permutation step requires at least one remaining candidate feature."""


# --- orchestration / harness --------------------------------------------

class LayerCountMismatch(CmipruneError):
    """Feature dump and model disagree on the number of conv layers."""


class NoFeasibleStart(CmipruneError):
    """No layer met the accuracy target in the starting-layer search."""


class ShapeMismatch(CmipruneError):
    """Tensor shapes do not chain through the model."""


class MaskShapeMismatch(CmipruneError):
    """Keep-mask length does not match the layer's filter count."""


class LastLayerPruneAttempt(CmipruneError):
    """Actual-mode removal of final conv filters would orphan the dense head."""


class DivergenceDetected(CmipruneError):
    """Training loss became NaN."""


class PlanModelMismatch(CmipruneError):
    """Pruning plan does not describe this model."""


# --- io ------------------------------------------------------------------

class ManifestMissing(CmipruneError):
    """Feature dump directory has no manifest."""


class HeaderMismatch(CmipruneError):
    """Tensor on disk disagrees with the manifest's declared shape or dtype."""


class TruncatedTensor(CmipruneError):
    """Tensor file ends before the declared payload."""


class ChecksumMismatch(CmipruneError):
    """Tensor file content does not match the manifest checksum."""


# --- warnings -------------------------------------------------------------

class BandwidthDegenerate(UserWarning):
    """Median pairwise distance was zero; fell back to sigma = 1."""


class DegenerateVariance(UserWarning):
    """Cluster variance was zero; floored at 1e-12."""
