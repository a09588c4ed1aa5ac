from typing import List, Optional

from on_rails import ErrorDetail
from pylity import String
from pylity.decorators.validate_func_params import validate_func_params
from schema import And, Or, Schema

from gbd_design._libs.ExitCodes import ExitCode


class FailResult(ErrorDetail):
    """
    Represents a handled failure that ends a command with a specific exit code.
    """

    @validate_func_params(schema=Schema({
        'code': And(int, error='The code param is required and must be an integer.'),
        'message': Or(None, And(str, lambda s: len(s.strip()) > 0,
                                error='The message must be None or non empty string')),
    }), raise_exception=True)
    def __init__(self, code: int, message: Optional[str] = None):
        super().__init__(title=f"Operation failed with code {code}.",
                         code=code, message=message)

    def __str__(self):
        result = self.title
        if not String.is_none_or_empty(self.message):
            result += f"\n{self.message}\n"
        return result


class SpecValidationFailure(FailResult):
    """
    Collects every violation found while validating a problem spec or a design file, so that all of them
    are reported at once.
    """

    def __init__(self, issues: List[str], source: Optional[str] = None):
        self.issues = list(issues)
        header = f"{source}: {len(self.issues)} problem(s) found." if source else \
            f"{len(self.issues)} problem(s) found."
        super().__init__(code=ExitCode.INPUT_ERROR,
                         message="\n".join([header] + [f"  - {issue}" for issue in self.issues]))
