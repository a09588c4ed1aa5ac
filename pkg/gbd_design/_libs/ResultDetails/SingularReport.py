from typing import Optional

from on_rails import ErrorDetail

from gbd_design._libs.ExitCodes import ExitCode


class SingularReport(ErrorDetail):
    """
    Reports that a matrix expected to be symmetric positive definite is singular or indefinite.
    `pivot` is the 0-based index of the first pivot that fell at or below the tolerance.
    """

    def __init__(self, pivot: int, message: Optional[str] = None):
        self.pivot = pivot
        super().__init__(title="The matrix is not positive definite.",
                         code=ExitCode.COMPUTATION_FAILURE,
                         message=message or f"Pivot {pivot} is not positive.")
