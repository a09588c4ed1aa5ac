import csv
import json
import logging
import math
import os
from typing import Any, Callable, List, Optional, Sequence

from on_rails import Result, ValidationError, def_result, try_func
from pylity import String
from pylity.decorators.validate_func_params import validate_func_params
from schema import And, Or, Schema, SchemaError

from gbd_design._libs.ExitCodes import ExitCode
from gbd_design._libs.ProgramEnvironments import ProgramEnvironments
from gbd_design._libs.ResultDetails.FailResult import FailResult

SIGNIFICANT_DIGITS = 12


@def_result()
@validate_func_params(schema=Schema({
    'logger': And(logging.Logger, error='The logger is required and must be type of logging.'),
    'result': And(Result, error='The result is required and must be type of Result.'),
}))
def log_result(logger: logging.Logger, result: Result) -> Result:
    """
    Logs the final result of a command. Handled failures (FailResult) are logged as errors; any other failure
    is unexpected and is logged with a support message.

    :param logger: The logger parameter is an instance of the logging.Logger class.
    :type logger: logging.Logger

    :param result: The `result` parameter is an instance of the `Result` class
    :type result: Result
    """

    if result.success:
        if result.value is not None:
            logger.info(result if result.detail else result.value)
        return Result.ok()

    if result.detail is None:
        return Result.ok()  # No data to display

    if isinstance(result.detail, FailResult):
        logger.error(str(result.detail))
        return Result.ok()
    log_error(logger, result)
    return Result.ok()


@def_result()
@validate_func_params(schema=Schema({
    'logger': And(logging.Logger, error='The logger is required and must be type of logging.'),
    'fail_result': And(Result, lambda result: not result.success,
                       error='The fail_result is required and must be type of Result.fail()'),
}))
def log_error(logger: logging.Logger, fail_result: Result) -> Result:
    """
    Logs an unexpected failure followed by the support message.
    """

    logger.error(f"An error occurred:\n{repr(fail_result.detail)}\n")
    return get_support_message() \
        .on_success(lambda support_message:
                    logger.info(f"Please report this error to help others who use this program.\n{support_message}")
                    )


@def_result()
def get_support_message() -> Result[str]:
    return ProgramEnvironments.get_environments() \
        .on_success(lambda environments: _get_support_message(environments))


@def_result()
@validate_func_params(schema=Schema({
    'environments': And(ProgramEnvironments,
                        error='environments is required and must be an instance of `ProgramEnvironments`')
}))
def _get_support_message(environments: ProgramEnvironments) -> Result[str]:
    return Result.ok(value="Support:\n"
                           f"\tVersion: {environments.version}\n"
                           f"\tRepository: {environments.repository}\n"
                           f"\tReport Bug: {environments.bug_report}\n"
                     )


@def_result()
@validate_func_params(schema=Schema({
    'class_object': And(object, lambda param: param is not None,
                        error='The class object is required and must be an instance of a class'),
    'title': Or(None, And(str, lambda s: len(s.strip()) > 0, error='The title must be None or non-empty string'))
}))
def class_properties_to_str(class_object, title: Optional[str] = None) -> Result[str]:
    """
    The function converts the properties of a class object to a string format with an optional title.

    :param class_object: The object of the class whose properties need to be converted to a string
    :type class_object: object

    :param title: Optional heading. When given, the properties are indented below it.
    :type title: Optional[str]
    """

    has_message = not String.is_none_or_empty(title)
    result = f"{title}:\n" if has_message else ""
    tab = '\t' if has_message else ''
    for key, value in vars(class_object).items():
        result += f"{tab}{key}: {value}\n"
    return Result.ok(value=result)


@def_result()
@validate_func_params(schema=Schema({
    'validation_func': And(lambda x: callable(x), error='The validation_func is required and must be a function')
}))
def try_validation(validation_func: Callable) -> Result:
    """
    It executes the validation_func function. If an SchemaError is raised, it returns the error result
    with ValidationError. If there is an exception other than SchemaError, it returns the error details
    from the ErrorDetail type. If successful, it returns the Result of the call.

    :param validation_func: A callable that validates something with a schema.Schema and may raise SchemaError.
    For example: lambda: schema.validate(...)
    :type validation_func: Callable
    """

    result = try_func(validation_func)
    if result.success:
        return result

    if result.detail and result.detail.exception and isinstance(result.detail.exception, SchemaError):
        return Result.fail(ValidationError(message=str(result.detail.exception)))
    return result


def format_number(value: float) -> str:
    """Twelve significant digits; never prints a negative zero."""

    value = float(value) + 0.0
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return f"{value:.{SIGNIFICANT_DIGITS}g}"


def json_ready(value: Any) -> Any:
    """
    Converts numbers (numpy included) to JSON-friendly values rounded to twelve significant digits.
    Non-finite floats become strings.
    """

    if isinstance(value, dict):
        return {str(key): json_ready(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_ready(item) for item in value]
    if hasattr(value, 'tolist'):
        return json_ready(value.tolist())
    if isinstance(value, bool) or value is None or isinstance(value, str):
        return value
    if isinstance(value, int):
        return value
    if isinstance(value, float):
        if not math.isfinite(value):
            return format_number(value)
        return float(format_number(value))
    return str(value)


@def_result()
@validate_func_params(schema=Schema({
    'path': And(str, len, error='The path is required and must be a non-empty string.'),
    'data': And(lambda v: v is not None, error='The data is required.'),
}))
def write_json(path: str, data) -> Result[str]:
    return _prepare_directory(path) \
        .on_success(lambda: _write_text(path, json.dumps(json_ready(data), indent=2) + "\n"))


@def_result()
@validate_func_params(schema=Schema({
    'path': And(str, len, error='The path is required and must be a non-empty string.'),
    'header': And([str], len, error='The header must be a non-empty list of strings.'),
    'rows': And(list, error='The rows must be a list.'),
}))
def write_csv(path: str, header: List[str], rows: List[Sequence]) -> Result[str]:
    """Writes a CSV file; floats are printed with twelve significant digits."""

    def write():
        with open(path, 'w', newline='') as file:
            writer = csv.writer(file)
            writer.writerow(header)
            for row in rows:
                writer.writerow([format_number(cell) if isinstance(cell, float) else cell for cell in row])
        return Result.ok(path)

    return _prepare_directory(path).on_success(lambda: write())


def _prepare_directory(path: str) -> Result:
    directory = os.path.dirname(path)
    try:
        if directory:
            os.makedirs(directory, exist_ok=True)
    except OSError as error:
        return Result.fail(FailResult(code=ExitCode.INPUT_ERROR,
                                      message=f"Can not create the output directory '{directory}': {error}"))
    return Result.ok()


def _write_text(path: str, text: str) -> Result[str]:
    with open(path, 'w') as file:
        file.write(text)
    return Result.ok(path)
