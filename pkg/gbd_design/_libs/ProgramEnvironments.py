import os

from on_rails import Result, def_result
from pylity.decorators.validate_func_params import validate_func_params
from schema import And, Schema

from gbd_design._libs.ExitCodes import ExitCode
from gbd_design._libs.ResultDetails.FailResult import FailResult


class ProgramEnvironments:
    """
    Defaults read from the process environment: the reported version, where to get support, and the default
    number of search workers.
    """

    version: str
    repository: str
    bug_report: str
    default_workers: int

    @validate_func_params(schema=Schema({
        'version': And(str, len, error='The version is required string and can not be empty.'),
        'repository': And(str, len, error='The repository is required string and can not be empty.'),
        'bug_report': And(str, len, error='The bug_report is required string and can not be empty.'),
        'default_workers': And(int, lambda v: v >= 1, error='The default_workers must be a positive integer.'),
    }), raise_exception=True)
    def __init__(self, version: str, repository: str, bug_report: str, default_workers: int):
        self.version = version
        self.repository = repository
        self.bug_report = bug_report
        self.default_workers = default_workers

    @staticmethod
    @def_result()
    def get_environments() -> Result:
        """
        Returns a ProgramEnvironments object built from the GBD_DESIGN_* environment variables.
        GBD_DESIGN_WORKERS must be a positive integer when set.
        """

        workers = os.environ.get('GBD_DESIGN_WORKERS', '1').strip()
        if not workers.isdigit() or int(workers) < 1:
            return Result.fail(FailResult(code=ExitCode.INPUT_ERROR,
                                          message=f"GBD_DESIGN_WORKERS must be a positive integer, got '{workers}'."))
        return Result.ok(value=ProgramEnvironments(
            version=os.environ.get('GBD_DESIGN_VERSION', 'latest'),
            repository=os.environ.get('GBD_DESIGN_REPOSITORY', 'No Data!'),
            bug_report=os.environ.get('GBD_DESIGN_BUG_REPORT', 'No Data!'),
            default_workers=int(workers),
        ))
