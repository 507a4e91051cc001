"""Exception types shared across the toolchain."""


class InferForgeError(Exception):
    """Base class for all errors raised by this package."""


class ModelPackageError(InferForgeError):
    """A model package on disk is missing, truncated, or inconsistent."""


class GraphValidationError(InferForgeError):
    """A model graph violates a structural or shape invariant.

    ``layer_index`` is the offending layer when the problem is local to one.
    """

    def __init__(self, message: str, layer_index: int | None = None):
        if layer_index is not None:
            message = f"layer {layer_index}: {message}"
        super().__init__(message)
        self.layer_index = layer_index


class QuantizationError(InferForgeError):
    """Invalid quantization parameters or inputs."""


class CalibrationRequiredError(InferForgeError):
    """An INT8 conversion was requested without a calibration dataset."""


class TargetError(InferForgeError):
    """Unknown, duplicate, or invalid target profile."""


class BundleError(InferForgeError):
    """A server or client bundle is invalid or cannot be written."""


class ProcessingSpecError(InferForgeError):
    """A pre/post-processing specification is malformed."""


class BenchError(InferForgeError):
    """Benchmark run could not be completed."""


class ServerUnreachableError(BenchError):
    """The target server did not answer the health check."""
